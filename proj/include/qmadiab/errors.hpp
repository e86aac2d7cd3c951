#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace qmadiab {

// Every failure mode gets its own type so callers can catch selectively;
// kind() is the stable label used in reports and CLI status columns.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define QMADIAB_ERROR_TYPE(Name)                                        \
  struct Name : Error {                                                 \
    explicit Name(const std::string& what) : Error(#Name, what) {}      \
  }

QMADIAB_ERROR_TYPE(NonFinite);
QMADIAB_ERROR_TYPE(NotHermitian);
QMADIAB_ERROR_TYPE(NotUnitary);
QMADIAB_ERROR_TYPE(NoConvergence);
QMADIAB_ERROR_TYPE(DegenerateAngles);
QMADIAB_ERROR_TYPE(FormatError);
QMADIAB_ERROR_TYPE(NonUnitarySample);
QMADIAB_ERROR_TYPE(SparseGrid);
QMADIAB_ERROR_TYPE(DomainError);
QMADIAB_ERROR_TYPE(ClusterAmbiguity);
QMADIAB_ERROR_TYPE(RankChange);
QMADIAB_ERROR_TYPE(TrackingAmbiguity);
QMADIAB_ERROR_TYPE(LabelMismatch);
QMADIAB_ERROR_TYPE(GapViolation);
QMADIAB_ERROR_TYPE(ConsistencyFailure);
QMADIAB_ERROR_TYPE(LengthMismatch);
QMADIAB_ERROR_TYPE(InsufficientPoints);
QMADIAB_ERROR_TYPE(AtFloor);
QMADIAB_ERROR_TYPE(ConfigError);

#undef QMADIAB_ERROR_TYPE

}  // namespace qmadiab
