#pragma once

namespace qlc {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace qlc
