#pragma once

namespace seqal {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace seqal
