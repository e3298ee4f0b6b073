#pragma once

#include <arpa/inet.h>
#include <csignal>
#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cctype>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <map>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "deardr/error.hpp"
#include "deardr/scorer.hpp"
#include "deardr/vocab.hpp"

namespace deardr {

struct ExternalScorerOptions {
  // Shell command (stdio transport) or "tcp://host:port" / "host:port".
  std::string target;
  std::string vocab_hash;
  int timeout_ms = 30000;
  // Opaque settings exported to a spawned scorer as DEARDR_<KEY> variables.
  std::map<std::string, std::string> passthrough;
};

/// Client side of the newline-delimited JSON scorer protocol. The scorer's
/// first line must be {"vocab_hash": "<hex>"} matching our vocabulary; each
/// request {"id","input","prefix","allowed"} is answered by
/// {"id","logprobs":{"<token id>": value}}. One request is in flight at a
/// time, so an instance must not be shared between threads.
class ExternalScorer final : public Scorer {
 public:
  explicit ExternalScorer(ExternalScorerOptions opts) : opts_(std::move(opts)) {
    // Writes to a dead scorer must surface as errors, not kill the process.
    std::signal(SIGPIPE, SIG_IGN);
    if (is_address(opts_.target)) {
      connect_tcp();
    } else {
      spawn();
    }
    try {
      handshake();
    } catch (...) {
      close_all();
      throw;
    }
  }

  ExternalScorer(const ExternalScorer&) = delete;
  ExternalScorer& operator=(const ExternalScorer&) = delete;

  ~ExternalScorer() override { close_all(); }

  std::vector<double> score(std::string_view input, std::span<const TokenId> prefix,
                            std::span<const TokenId> allowed) override {
    const std::uint64_t id = next_id_++;
    nlohmann::json req = {{"id", id},
                          {"input", input},
                          {"prefix", std::vector<TokenId>(prefix.begin(), prefix.end())},
                          {"allowed", std::vector<TokenId>(allowed.begin(), allowed.end())}};
    write_line(req.dump());
    const std::string line = read_line();
    nlohmann::json resp;
    try {
      resp = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kScorerProtocolError, std::string("unparseable response: ") + e.what());
    }
    if (!resp.contains("id") || !resp["id"].is_number_unsigned() || resp["id"].get<std::uint64_t>() != id) {
      throw Error(ErrorCode::kScorerProtocolError, "response id does not match request " + std::to_string(id));
    }
    if (!resp.contains("logprobs") || !resp["logprobs"].is_object()) {
      throw Error(ErrorCode::kScorerProtocolError, "response lacks a logprobs object");
    }
    const auto& lp = resp["logprobs"];
    std::vector<double> out;
    out.reserve(allowed.size());
    for (TokenId t : allowed) {
      auto it = lp.find(std::to_string(t));
      if (it == lp.end() || !it->is_number()) {
        throw Error(ErrorCode::kScorerProtocolError, "no score for allowed token " + std::to_string(t));
      }
      out.push_back(it->get<double>());
    }
    return out;
  }

  bool shareable() const override { return false; }

  static bool is_address(const std::string& target) {
    static const std::regex kAddr(R"(^(tcp://)?[A-Za-z0-9.\-]+:[0-9]{1,5}$)");
    return std::regex_match(target, kAddr);
  }

 private:
  void spawn() {
    int to_child[2];
    int from_child[2];
    // O_CLOEXEC so scorers spawned by other workers do not inherit these ends.
    if (pipe2(to_child, O_CLOEXEC) != 0 || pipe2(from_child, O_CLOEXEC) != 0) {
      throw Error(ErrorCode::kIoError, std::string("pipe: ") + std::strerror(errno));
    }
    pid_ = fork();
    if (pid_ < 0) throw Error(ErrorCode::kIoError, std::string("fork: ") + std::strerror(errno));
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      for (const auto& [k, v] : opts_.passthrough) {
        std::string key = "DEARDR_";
        for (char c : k) key.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
        setenv(key.c_str(), v.c_str(), 1);
      }
      execl("/bin/sh", "sh", "-c", opts_.target.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
  }

  void connect_tcp() {
    std::string addr = opts_.target;
    if (addr.rfind("tcp://", 0) == 0) addr = addr.substr(6);
    const auto colon = addr.rfind(':');
    const std::string host = addr.substr(0, colon);
    const std::string port = addr.substr(colon + 1);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (int rc = getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0) {
      throw Error(ErrorCode::kIoError, "resolve " + addr + ": " + gai_strerror(rc));
    }
    int fd = -1;
    for (auto* p = res; p != nullptr; p = p->ai_next) {
      fd = socket(p->ai_family, p->ai_socktype | SOCK_CLOEXEC, p->ai_protocol);
      if (fd < 0) continue;
      if (connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
      close(fd);
      fd = -1;
    }
    freeaddrinfo(res);
    if (fd < 0) throw Error(ErrorCode::kIoError, "cannot connect to scorer at " + addr);
    read_fd_ = fd;
    write_fd_ = fd;
  }

  void handshake() {
    const std::string line = read_line();
    nlohmann::json js;
    try {
      js = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorCode::kScorerProtocolError, "handshake is not JSON: " + line);
    }
    if (!js.is_object() || !js.contains("vocab_hash") || !js["vocab_hash"].is_string()) {
      throw Error(ErrorCode::kScorerProtocolError, "handshake lacks vocab_hash");
    }
    const auto theirs = js["vocab_hash"].get<std::string>();
    if (theirs != opts_.vocab_hash) {
      throw Error(ErrorCode::kVocabMismatch,
                  "scorer vocabulary hash " + theirs + " does not match " + opts_.vocab_hash);
    }
  }

  void write_line(const std::string& payload) {
    std::string buf = payload;
    buf.push_back('\n');
    std::size_t off = 0;
    while (off < buf.size()) {
      const ssize_t n = ::write(write_fd_, buf.data() + off, buf.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorCode::kScorerProtocolError, std::string("write to scorer failed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string read_line() {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(opts_.timeout_ms);
    for (;;) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw Error(ErrorCode::kScorerTimeout, "no reply from scorer");
      pollfd pfd{read_fd_, POLLIN, 0};
      const int rc = poll(&pfd, 1, static_cast<int>(left.count()));
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorCode::kIoError, std::string("poll: ") + std::strerror(errno));
      }
      if (rc == 0) throw Error(ErrorCode::kScorerTimeout, "no reply from scorer");
      char chunk[4096];
      const ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorCode::kIoError, std::string("read from scorer: ") + std::strerror(errno));
      }
      if (n == 0) throw Error(ErrorCode::kScorerProtocolError, "scorer closed the connection");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void close_all() {
    if (write_fd_ >= 0 && write_fd_ != read_fd_) close(write_fd_);
    if (read_fd_ >= 0) close(read_fd_);
    write_fd_ = read_fd_ = -1;
    if (pid_ > 0) {
      int status = 0;
      for (int i = 0; i < 50; ++i) {
        if (waitpid(pid_, &status, WNOHANG) != 0) {
          pid_ = -1;
          return;
        }
        usleep(10000);
      }
      kill(pid_, SIGKILL);
      waitpid(pid_, &status, 0);
      pid_ = -1;
    }
  }

  ExternalScorerOptions opts_;
  pid_t pid_ = -1;
  int read_fd_ = -1;
  int write_fd_ = -1;
  std::string buffer_;
  std::uint64_t next_id_ = 0;
};

}  // namespace deardr
