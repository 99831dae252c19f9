#pragma once

namespace rsvo {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace rsvo
