#include "dsrefine/errors.hpp"

namespace dsrefine {

const char* to_string(ParseErrorKind kind) {
    switch (kind) {
        case ParseErrorKind::BadMagic: return "bad magic";
        case ParseErrorKind::VersionMismatch: return "version mismatch";
        case ParseErrorKind::Truncated: return "truncated payload";
        case ParseErrorKind::DimOverflow: return "dimension overflow";
        case ParseErrorKind::BadValue: return "bad value";
    }
    return "parse error";
}

ParseError::ParseError(ParseErrorKind kind, std::size_t offset, const std::string& detail)
    : std::runtime_error(std::string(to_string(kind)) + " at byte offset " + std::to_string(offset) +
                         (detail.empty() ? "" : ": " + detail)),
      kind_(kind),
      offset_(offset) {}

}  // namespace dsrefine
