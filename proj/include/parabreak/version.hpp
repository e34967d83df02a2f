#pragma once

namespace parabreak {

inline constexpr const char* kToolkitVersion = "0.1.0";

}  // namespace parabreak
