#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "sdha/errors.hpp"

namespace sdha {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Counter-based stream: word(c) depends only on (seed, path, c).
class CounterRng {
 public:
  CounterRng(std::uint64_t master_seed, std::uint64_t path_index)
      : key_(mix64(master_seed ^ (path_index * kGolden))) {}

  std::uint64_t word(std::uint64_t counter) const { return mix64(key_ + (counter + 1) * kGolden); }
  // [0, 1)
  double uniform(std::uint64_t counter) const { return static_cast<double>(word(counter) >> 11) * 0x1.0p-53; }
  // (0, 1]
  double uniform_pos(std::uint64_t counter) const {
    return static_cast<double>((word(counter) >> 11) + 1) * 0x1.0p-53;
  }

  // Box-Muller pair from words 2k, 2k+1
  void normal_pair(std::uint64_t k, double& z0, double& z1) const {
    const double r = std::sqrt(-2.0 * std::log(uniform_pos(2 * k)));
    const double th = 2.0 * std::numbers::pi * uniform(2 * k + 1);
    z0 = r * std::cos(th);
    z1 = r * std::sin(th);
  }
  double normal(std::uint64_t index) const {
    double a, b;
    normal_pair(index >> 1, a, b);
    return (index & 1) ? b : a;
  }

 private:
  std::uint64_t key_;
};

// Sequential view of a counter stream, for samplers that consume a variable number of draws.
class PathRng {
 public:
  PathRng(std::uint64_t seed, std::uint64_t path_index) : rng_(seed, path_index) {}
  double uniform() { return rng_.uniform(next_++); }
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double a;
    rng_.normal_pair(next_pair(), a, spare_);
    has_spare_ = true;
    return a;
  }

 private:
  // pair k reads words 2k and 2k+1; align to an even counter so uniform() never reuses them
  std::uint64_t next_pair() {
    next_ += next_ & 1;
    const std::uint64_t k = next_ / 2;
    next_ += 2;
    return k;
  }
  CounterRng rng_;
  std::uint64_t next_ = 0;
  bool has_spare_ = false;
  double spare_ = 0;
};

enum class IncrementMode { gaussian, truncated, three_point };

inline double default_truncation(double dt) { return 2.0 * std::sqrt(dt) * std::sqrt(2.0 * std::abs(std::log(dt))); }

inline double truncate_increment(double w, double A) {
  if (!(A > 0)) throw InvalidParameter("truncate_increment: A must be positive");
  if (w > A) return A;
  if (w < -A) return -A;
  return w;
}

class BrownianDriver {
 public:
  BrownianDriver(std::uint64_t master_seed, std::uint64_t path_index, int m, double dt,
                 IncrementMode mode = IncrementMode::gaussian, double A = 0)
      : rng_(master_seed, path_index), seed_(master_seed), path_(path_index), m_(m), dt_(dt), mode_(mode), A_(A) {
    if (m < 0) throw InvalidParameter("driver: negative channel count");
    if (!(dt > 0)) throw InvalidParameter("driver: dt must be positive");
    if (mode == IncrementMode::truncated && A_ == 0) A_ = default_truncation(dt);
    if (mode == IncrementMode::truncated && !(A_ > 0)) throw InvalidParameter("driver: A must be positive");
    sqrt_dt_ = std::sqrt(dt);
    three_pt_ = std::sqrt(3.0 * dt);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t path_index() const { return path_; }
  int channels() const { return m_; }
  double dt() const { return dt_; }
  IncrementMode mode() const { return mode_; }
  double truncation() const { return A_; }
  std::uint64_t step() const { return step_; }
  void seek(std::uint64_t step) { step_ = step; }

  // pure in (seed, path, step, channel)
  double increment(std::uint64_t step, int channel) const {
    const std::uint64_t idx = step * static_cast<std::uint64_t>(m_) + static_cast<std::uint64_t>(channel);
    switch (mode_) {
      case IncrementMode::three_point:
        return three_point_value(rng_.word(idx));
      case IncrementMode::truncated:
        return truncate_increment(sqrt_dt_ * rng_.normal(idx), A_);
      default:
        return sqrt_dt_ * rng_.normal(idx);
    }
  }

  void next(std::span<double> out) {
    if (out.size() != static_cast<std::size_t>(m_)) throw InvalidParameter("driver: output length != m");
    if (mode_ == IncrementMode::three_point) {
      const std::uint64_t base = step_ * static_cast<std::uint64_t>(m_);
      for (int r = 0; r < m_; ++r) out[r] = three_point_value(rng_.word(base + r));
    } else {
      // walk Box-Muller pairs so each pair is computed once
      const std::uint64_t base = step_ * static_cast<std::uint64_t>(m_);
      int r = 0;
      while (r < m_) {
        const std::uint64_t idx = base + r;
        double a, b;
        rng_.normal_pair(idx >> 1, a, b);
        if (idx & 1) {
          out[r++] = b;
        } else {
          out[r++] = a;
          if (r < m_) out[r++] = b;
        }
      }
      for (auto& w : out) {
        w *= sqrt_dt_;
        if (mode_ == IncrementMode::truncated) w = truncate_increment(w, A_);
      }
    }
    ++step_;
  }

  std::vector<double> next_increments() {
    std::vector<double> w(m_);
    next(w);
    return w;
  }

  std::vector<double> next_three_point() {
    if (mode_ != IncrementMode::three_point) throw InvalidParameter("driver: not in three_point mode");
    return next_increments();
  }

 private:
  double three_point_value(std::uint64_t w) const {
    // six equal cells of the 53-bit uniform
    const std::uint64_t cell = ((w >> 11) * 6) >> 53;
    if (cell == 0) return -three_pt_;
    if (cell == 1) return three_pt_;
    return 0.0;
  }

  CounterRng rng_;
  std::uint64_t seed_, path_;
  int m_;
  double dt_;
  IncrementMode mode_;
  double A_;
  double sqrt_dt_ = 0, three_pt_ = 0;
  std::uint64_t step_ = 0;
};

struct FinePath {
  int m = 0;
  double dt = 0;
  std::vector<double> increments;  // row k holds channels 0..m-1

  std::size_t steps() const { return m == 0 ? 0 : increments.size() / static_cast<std::size_t>(m); }
  std::span<const double> row(std::size_t k) const { return {increments.data() + k * m, static_cast<std::size_t>(m)}; }

  // left-to-right total per channel
  std::vector<double> total() const {
    std::vector<double> s(m, 0.0);
    for (std::size_t k = 0; k < steps(); ++k)
      for (int r = 0; r < m; ++r) s[r] += increments[k * m + r];
    return s;
  }
};

inline FinePath make_fine_path(BrownianDriver& driver, std::size_t K) {
  FinePath fp;
  fp.m = driver.channels();
  fp.dt = driver.dt();
  fp.increments.resize(K * fp.m);
  for (std::size_t k = 0; k < K; ++k) driver.next(std::span<double>(fp.increments.data() + k * fp.m, fp.m));
  return fp;
}

inline FinePath aggregate_path(const FinePath& fine, std::size_t factor) {
  if (factor == 0 || fine.steps() % factor != 0)
    throw InvalidParameter("aggregate_path: factor must divide the number of fine steps");
  FinePath c;
  c.m = fine.m;
  c.dt = fine.dt * static_cast<double>(factor);
  const std::size_t K = fine.steps() / factor;
  c.increments.assign(K * c.m, 0.0);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < factor; ++j)
      for (int r = 0; r < c.m; ++r) c.increments[k * c.m + r] += fine.increments[(k * factor + j) * c.m + r];
  return c;
}

}  // namespace sdha
