#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hspca {

using Eigen::Dynamic;
using Index = Eigen::Index;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Dynamic, 1>;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Dynamic, Dynamic>;

/// Row-major dense matrix. Samples and basis sets store one grid element per row.
template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Dynamic, Dynamic, Eigen::RowMajor>;

/// Base of every error raised by the library. `numerical()` separates
/// assumption/numerical failures from malformed input, which the CLI maps to
/// distinct exit codes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, bool numerical = false)
      : std::runtime_error(what), numerical_(numerical) {}
  bool numerical() const noexcept { return numerical_; }

 private:
  bool numerical_;
};

#define HSPCA_DEFINE_ERROR(Name, IsNumerical)                                \
  class Name : public Error {                                                \
   public:                                                                   \
    explicit Name(const std::string& what) : Error(what, IsNumerical) {}     \
  };

// input / configuration problems
HSPCA_DEFINE_ERROR(ConformanceError, false)
HSPCA_DEFINE_ERROR(ConfigError, false)
HSPCA_DEFINE_ERROR(EmptyDomainError, false)
HSPCA_DEFINE_ERROR(CoverageError, false)
HSPCA_DEFINE_ERROR(MeshError, false)
HSPCA_DEFINE_ERROR(FormatError, false)
HSPCA_DEFINE_ERROR(SchemaError, false)
HSPCA_DEFINE_ERROR(InsufficientDataError, false)

// numerical / modelling-assumption failures
HSPCA_DEFINE_ERROR(EmptyBasisError, true)
HSPCA_DEFINE_ERROR(NondegeneracyError, true)
HSPCA_DEFINE_ERROR(NearMultiplicityError, true)
HSPCA_DEFINE_ERROR(SelectionInfeasibleError, true)
HSPCA_DEFINE_ERROR(DegenerateDesignError, true)
HSPCA_DEFINE_ERROR(ReplicateFailureError, true)
HSPCA_DEFINE_ERROR(FamilyError, true)

#undef HSPCA_DEFINE_ERROR

inline std::string shape_str(Index r, Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().allFinite();
}

}  // namespace hspca
