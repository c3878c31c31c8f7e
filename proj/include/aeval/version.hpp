#pragma once

namespace aeval {

inline constexpr const char* kVersion = "0.1.0";

// Bumped whenever a persisted format (index, trace) changes incompatibly.
inline constexpr int kIndexFormatVersion = 1;
inline constexpr int kTraceFormatVersion = 1;

}  // namespace aeval
