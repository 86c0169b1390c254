#include "core/common.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

namespace octcast {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorKind::PointAtInfinity: return "PointAtInfinity";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::EmptyTrajectory: return "EmptyTrajectory";
    case ErrorKind::NoCandidates: return "NoCandidates";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::OddDimension: return "OddDimension";
    case ErrorKind::EmptyHistory: return "EmptyHistory";
    case ErrorKind::UnmappedAction: return "UnmappedAction";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::AllTokensAblated: return "AllTokensAblated";
    case ErrorKind::InsufficientObservations: return "InsufficientObservations";
    case ErrorKind::EmptyPoints: return "EmptyPoints";
    case ErrorKind::AllZero: return "AllZero";
    case ErrorKind::EmptyGroundTruth: return "EmptyGroundTruth";
    case ErrorKind::NoVisibleGroundTruth: return "NoVisibleGroundTruth";
    case ErrorKind::UnsupportedMode: return "UnsupportedMode";
    case ErrorKind::UnknownId: return "UnknownId";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IOFailure: return "IOFailure";
  }
  return "Unknown";
}

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ (0x51d3f29e84ab7c21ULL + stream));
}

// xoshiro256** seeded through splitmix64.
Rng::Rng(uint64_t seed) {
  uint64_t s = seed;
  for (auto& w : state_) {
    s = splitmix64(s);
    w = s;
  }
}

static inline uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

uint64_t Rng::next_u64() {
  const uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_normal_ = true;
  return r * std::cos(theta);
}

int Rng::uniform_int(int n) {
  if (n <= 0) fail(ErrorKind::InvalidArgument, "uniform_int: n must be positive");
  const uint64_t un = static_cast<uint64_t>(n);
  const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return static_cast<int>(x % un);
}

std::vector<int> Rng::distinct_indices(int n, int k) {
  if (k > n) fail(ErrorKind::InvalidArgument, "distinct_indices: k > n");
  std::vector<int> out;
  out.reserve(static_cast<size_t>(k));
  while (static_cast<int>(out.size()) < k) {
    const int candidate = uniform_int(n);
    bool seen = false;
    for (int v : out) seen |= (v == candidate);
    if (!seen) out.push_back(candidate);
  }
  return out;
}

Eigen::MatrixXd Rng::normal_matrix(int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = normal();
  return m;
}

int max_threads() {
  static const int cached = [] {
    const char* env = std::getenv("OCTCAST_THREADS");
    if (env != nullptr) {
      const int v = std::atoi(env);
      if (v >= 1) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
  }();
  return cached;
}

void parallel_for(int n, const std::function<void(int)>& body) {
  if (n <= 0) return;
  const int workers = std::min(n, max_threads());
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace octcast
