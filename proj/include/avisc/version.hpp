#pragma once

namespace avisc {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace avisc
