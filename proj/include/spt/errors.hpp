#pragma once

#include <stdexcept>
#include <string>

namespace spt {

// Bad experiment/task configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or corrupt on-disk artifact: bad magic, version, checksum (exit code 4).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem trouble: unreadable, unwritable, truncated (exit code 4).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite loss or gradient during optimization; the trainer aborts the
// run but still emits its record.
struct NumericAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace spt
