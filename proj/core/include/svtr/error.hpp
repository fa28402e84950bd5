#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace svtr {

enum class ErrorKind {
  kShape,          // tensor dimensions disagree
  kGeometry,       // image/stage sizes that cannot be realized
  kContract,       // precondition violated by the caller
  kIndex,          // index out of range
  kFeasibility,    // CTC label longer than the alignment allows
  kRender,         // text does not fit the canvas
  kParse,          // malformed text input (config, labels.tsv, charset)
  kIo,             // file missing or unreadable
  kChecksum,       // checkpoint payload corrupted
  kCompatibility,  // checkpoint/config mismatch
  kDiverged,       // non-finite training loss
  kUsage,          // bad command-line input
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so the CLI can emit a
/// single machine-parsable line.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace svtr

// The message expression is only evaluated on failure.
#define SVTR_REQUIRE(cond, kind, message)           \
  do {                                              \
    if (!(cond)) ::svtr::fail((kind), (message));   \
  } while (0)
