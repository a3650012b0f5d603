#pragma once

namespace sdual {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace sdual
