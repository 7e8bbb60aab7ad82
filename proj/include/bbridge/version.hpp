#pragma once

namespace bbridge {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kToolName = "bbridge 0.1.0";

}  // namespace bbridge
