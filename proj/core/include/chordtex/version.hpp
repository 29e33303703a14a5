#pragma once

namespace chordtex {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace chordtex
