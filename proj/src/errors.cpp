#include "magkey/errors.hpp"

namespace magkey {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDomain: return "domain";
    case ErrorKind::kInsufficientData: return "insufficient_data";
    case ErrorKind::kIncompleteFingerprint: return "incomplete_fingerprint";
    case ErrorKind::kAmbiguousPolarity: return "ambiguous_polarity";
    case ErrorKind::kIllConditionedAnchors: return "ill_conditioned_anchors";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kNotFound: return "not_found";
  }
  return "unknown";
}

}  // namespace magkey
