#pragma once

#include <stdexcept>
#include <string>

namespace opre {

/// Root of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input tensor or patch list has the wrong geometry.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A code vector cannot be encoded under the active quality setting.
class EncodingError : public Error {
 public:
  using Error::Error;
};

/// Invalid user-facing configuration (quality settings, flags, arguments).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The patch memory cannot take another patch.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure: missing file, unreadable or unwritable path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Persisted data does not decode. `section()` names the part that failed.
class CorruptionError : public Error {
 public:
  CorruptionError(std::string section, const std::string& what)
      : Error(section + ": " + what), section_(std::move(section)) {}

  const std::string& section() const noexcept { return section_; }

 private:
  std::string section_;
};

class MagicError : public CorruptionError {
 public:
  explicit MagicError(const std::string& what) : CorruptionError("magic", what) {}
};

class VersionError : public CorruptionError {
 public:
  explicit VersionError(const std::string& what) : CorruptionError("version", what) {}
};

class TruncationError : public CorruptionError {
 public:
  TruncationError(std::string section, const std::string& what)
      : CorruptionError(std::move(section), what) {}
};

/// Malformed text input (feature files).
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace opre
