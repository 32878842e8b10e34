#pragma once

namespace decayscope {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace decayscope
