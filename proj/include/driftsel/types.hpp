#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

namespace driftsel {

using Real = double;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = VectorX<Real>;
using Matrix = MatrixX<Real>;

/// Sparse named-feature representation fed to the learners. Ordered so that
/// every iteration over a vector is deterministic.
using FeatureVector = std::map<std::string, Real>;

// Error hierarchy. The CLI maps these onto exit codes: config -> 2,
// data (parse/validation/import/lookup/resource) -> 3, numeric -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ImportError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class ResourceError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

inline bool is_finite(Real v) { return std::isfinite(v); }

inline void require_finite(Real v, std::string_view what) {
  if (!std::isfinite(v)) {
    throw NumericError(std::string("non-finite value for ") + std::string(what));
  }
}

inline void require_finite(const FeatureVector& x) {
  for (const auto& [name, value] : x) {
    if (!std::isfinite(value)) {
      throw NumericError("non-finite feature value: " + name);
    }
  }
}

/// FNV-1a, used to derive independent deterministic RNG substreams from a
/// base seed and a label. Stable across platforms, unlike std::hash.
inline std::uint64_t fnv1a(std::string_view bytes,
                           std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t substream_seed(std::uint64_t seed, std::string_view label) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((seed >> (8 * i)) & 0xff);
  return fnv1a(label, fnv1a(std::string_view(buf, 8)));
}

}  // namespace driftsel
