#pragma once

namespace cortrieve {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace cortrieve
