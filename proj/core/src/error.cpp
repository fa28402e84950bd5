#include "svtr/error.hpp"

namespace svtr {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kGeometry: return "geometry";
    case ErrorKind::kContract: return "contract";
    case ErrorKind::kIndex: return "index";
    case ErrorKind::kFeasibility: return "feasibility";
    case ErrorKind::kRender: return "render";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kChecksum: return "checksum";
    case ErrorKind::kCompatibility: return "compatibility";
    case ErrorKind::kDiverged: return "diverged";
    case ErrorKind::kUsage: return "usage";
  }
  return "unknown";
}

}  // namespace svtr
