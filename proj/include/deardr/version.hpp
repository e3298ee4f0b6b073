#pragma once

namespace deardr {

inline constexpr const char* kToolName = "deardr";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace deardr
