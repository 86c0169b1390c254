#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace octcast {

enum class ErrorKind {
  InvalidArgument,
  DegenerateConfiguration,
  PointAtInfinity,
  OutOfRange,
  EmptyTrajectory,
  NoCandidates,
  ShapeMismatch,
  OddDimension,
  EmptyHistory,
  UnmappedAction,
  SchemaError,
  NonFiniteLoss,
  AllTokensAblated,
  InsufficientObservations,
  EmptyPoints,
  AllZero,
  EmptyGroundTruth,
  NoVisibleGroundTruth,
  UnsupportedMode,
  UnknownId,
  ConfigError,
  IOFailure,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

const char* error_kind_name(ErrorKind kind);

uint64_t splitmix64(uint64_t x);

/// Derives an independent child seed from (seed, stream index).
uint64_t mix_seed(uint64_t seed, uint64_t stream);

// Deterministic RNG. All draw algorithms are spelled out here instead of using
// std::<...>_distribution so streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller (second value cached).
  double normal();
  /// Uniform integer in [0, n), unbiased.
  int uniform_int(int n);
  /// k distinct indices drawn from [0, n), in draw order.
  std::vector<int> distinct_indices(int n, int k);
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(uniform_int(i + 1))]);
    }
  }
  Eigen::MatrixXd normal_matrix(int rows, int cols);

 private:
  uint64_t state_[4];
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

/// Thread cap for internal parallelism; reads OCTCAST_THREADS once.
int max_threads();

/// Runs body(0..n-1) on up to max_threads() workers. Items must be
/// independent; the first exception thrown is rethrown on the caller.
void parallel_for(int n, const std::function<void(int)>& body);

inline bool nearly_equal(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace octcast
