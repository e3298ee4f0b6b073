#!/usr/bin/env python3
"""Reference external scorer for `deardr retrieve --scorer external:...`.

Speaks newline-delimited JSON on stdin/stdout (or on one TCP connection with
--port). The first line sent is the vocabulary handshake; every request
{"id", "input", "prefix", "allowed"} gets {"id", "logprobs"} back.

  uniform  every allowed id gets ln(1/|allowed|)
  echo     ids whose token text appears in the input are favoured
"""

import argparse
import hashlib
import json
import math
import os
import socket
import sys


def load_vocab(path):
    with open(path, "rb") as f:
        data = f.read()
    tokens = data.decode("utf-8").split("\n")
    if tokens and tokens[-1] == "":
        tokens.pop()
    return tokens, hashlib.sha256(data).hexdigest()


def log_softmax(raw):
    m = max(raw)
    z = m + math.log(sum(math.exp(r - m) for r in raw))
    return [r - z for r in raw]


def answer(req, tokens, mode):
    allowed = req["allowed"]
    if mode == "uniform":
        raw = [0.0] * len(allowed)
    else:
        text = req["input"].lower()
        raw = []
        for t in allowed:
            tok = tokens[t] if t < len(tokens) else ""
            tok = tok.replace("▁", " ").lower()
            raw.append(2.0 if t >= 4 and tok.strip() and tok in text else 0.0)
    lp = log_softmax(raw)
    return {"id": req["id"], "logprobs": {str(t): v for t, v in zip(allowed, lp)}}


def serve(rfile, wfile, tokens, digest, mode):
    wfile.write(json.dumps({"vocab_hash": digest}) + "\n")
    wfile.flush()
    for line in rfile:
        if not line.strip():
            continue
        wfile.write(json.dumps(answer(json.loads(line), tokens, mode)) + "\n")
        wfile.flush()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--vocab", required=True)
    ap.add_argument("--mode", choices=["uniform", "echo"], default="echo")
    ap.add_argument("--wrong-hash", action="store_true", help="announce a bogus vocabulary hash")
    ap.add_argument("--port", type=int, help="serve one TCP connection instead of stdio")
    args = ap.parse_args()

    tokens, digest = load_vocab(args.vocab)
    if args.wrong_hash:
        digest = "0" * 64
    if os.environ.get("DEARDR_LEARNING_RATE"):
        print("learning-rate=" + os.environ["DEARDR_LEARNING_RATE"], file=sys.stderr)

    if args.port is None:
        serve(sys.stdin, sys.stdout, tokens, digest, args.mode)
        return
    with socket.create_server(("127.0.0.1", args.port)) as srv:
        conn, _ = srv.accept()
        with conn, conn.makefile("r", encoding="utf-8") as r, conn.makefile("w", encoding="utf-8") as w:
            serve(r, w, tokens, digest, args.mode)


if __name__ == "__main__":
    main()
