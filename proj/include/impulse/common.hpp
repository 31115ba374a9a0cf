#pragma once

// Shared numeric utilities: small fixed-dimension vectors, a counter-based
// Gaussian stream (so path noise is reproducible and worker-count
// independent), compensated accumulation, and a deterministic parallel map.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ic {

inline constexpr int kMaxDim = 3;

// Fixed-capacity state vector; the active dimension travels with ProblemSpec.
using Vec = std::array<double, kMaxDim>;

inline Vec vzero() { return {0.0, 0.0, 0.0}; }

inline Vec vadd(const Vec& a, const Vec& b, int n) {
  Vec r = vzero();
  for (int i = 0; i < n; ++i) r[i] = a[i] + b[i];
  return r;
}

inline Vec vsub(const Vec& a, const Vec& b, int n) {
  Vec r = vzero();
  for (int i = 0; i < n; ++i) r[i] = a[i] - b[i];
  return r;
}

inline Vec vscale(const Vec& a, double s, int n) {
  Vec r = vzero();
  for (int i = 0; i < n; ++i) r[i] = a[i] * s;
  return r;
}

inline double vdot(const Vec& a, const Vec& b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline double vnorm(const Vec& a, int n) { return std::sqrt(vdot(a, a, n)); }

inline bool vfinite(const Vec& a, int n) {
  for (int i = 0; i < n; ++i)
    if (!std::isfinite(a[i])) return false;
  return true;
}

// splitmix64: the mixing function doubles as a hash for per-path seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t id) {
  std::uint64_t s = seed ^ (0xA24BAED4963EE407ULL + (id << 1));
  return splitmix64(s);
}

// Deterministic Gaussian stream (Box-Muller over splitmix64 uniforms).
// Avoids std::normal_distribution so the byte-level output does not depend
// on the standard library implementation.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(seed) {}

  double uniform() {
    // strictly inside (0,1)
    return (static_cast<double>(splitmix64(state_) >> 11) + 0.5) * 0x1.0p-53;
  }

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Neumaier compensated sum; used for ordered reductions so results do not
// depend on the number of workers.
struct KahanSum {
  double sum = 0.0;
  double comp = 0.0;
  void add(double x) {
    double t = sum + x;
    if (std::abs(sum) >= std::abs(x))
      comp += (sum - t) + x;
    else
      comp += (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t count = 0;
};

inline MeanStderr mean_stderr(const std::vector<double>& xs) {
  MeanStderr r;
  r.count = xs.size();
  if (xs.empty()) return r;
  KahanSum s;
  for (double x : xs) s.add(x);
  r.mean = s.value() / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    KahanSum q;
    for (double x : xs) {
      double d = x - r.mean;
      q.add(d * d);
    }
    double var = q.value() / static_cast<double>(xs.size() - 1);
    r.stderr_ = std::sqrt(var / static_cast<double>(xs.size()));
  }
  return r;
}

// Static partition over [0, n); each item writes only its own slot, then the
// caller reduces in index order. Thread count never changes the result.
inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t)>& body) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  int workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (std::size_t i = static_cast<std::size_t>(w); i < n;
           i += static_cast<std::size_t>(workers))
        body(i);
    });
  }
  for (auto& t : pool) t.join();
}

class IcError : public std::runtime_error {
 public:
  explicit IcError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ic
