#pragma once

namespace braingraph {

inline constexpr const char* kToolkitVersion = "0.1.0";

}  // namespace braingraph
