#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace dsae {

enum class ErrorKind {
  Parse,
  UnsupportedFormat,
  Io,
  Shape,
  EmptyShell,
  InvalidOrder,
  InvalidDirection,
  EmptyMask,
  Underdetermined,
  BoundaryGap,
  InsufficientData,
  DegenerateSample,
  ModelMissing,
  InvalidArgument,
};

const char* to_string(ErrorKind kind);

// Single exception type for the library; `kind` carries the category and
// parse errors additionally record the byte offset of the offending field.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what,
        std::optional<std::uint64_t> offset = std::nullopt);

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<std::uint64_t> offset() const noexcept { return offset_; }

 private:
  ErrorKind kind_;
  std::optional<std::uint64_t> offset_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace dsae
