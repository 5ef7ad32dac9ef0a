#include "dsae/error.hpp"

namespace dsae {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse: return "ParseError";
    case ErrorKind::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorKind::Io: return "IoError";
    case ErrorKind::Shape: return "ShapeError";
    case ErrorKind::EmptyShell: return "EmptyShell";
    case ErrorKind::InvalidOrder: return "InvalidOrder";
    case ErrorKind::InvalidDirection: return "InvalidDirection";
    case ErrorKind::EmptyMask: return "EmptyMask";
    case ErrorKind::Underdetermined: return "Underdetermined";
    case ErrorKind::BoundaryGap: return "BoundaryGap";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::DegenerateSample: return "DegenerateSample";
    case ErrorKind::ModelMissing: return "ModelMissing";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Error";
}

static std::string decorate(ErrorKind kind, const std::string& what,
                            std::optional<std::uint64_t> offset) {
  std::string msg = std::string(to_string(kind)) + ": " + what;
  if (offset) msg += " (at byte offset " + std::to_string(*offset) + ")";
  return msg;
}

Error::Error(ErrorKind kind, const std::string& what,
             std::optional<std::uint64_t> offset)
    : std::runtime_error(decorate(kind, what, offset)),
      kind_(kind),
      offset_(offset) {}

}  // namespace dsae
