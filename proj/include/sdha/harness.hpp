#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "sdha/core.hpp"
#include "sdha/noise.hpp"
#include "sdha/solver.hpp"
#include "sdha/sprk.hpp"
#include "sdha/wrk.hpp"

namespace sdha {

// ---------- methods ----------

enum class NoiseKind { wiener, three_point };

template <int N>
using StepFunction = std::function<State<N>(const ForcedHamiltonianSystem<N>&, const State<N>&, double,
                                            std::span<const double>, const SolverConfig&)>;

template <int N>
struct Method {
  std::string name;
  NoiseKind noise = NoiseKind::wiener;
  // truncation threshold for Wiener increments; 0 = default from dt
  std::optional<double> truncation;
  StepFunction<N> step;
  SolverConfig solver;

  IncrementMode increment_mode() const {
    if (noise == NoiseKind::three_point) return IncrementMode::three_point;
    return truncation ? IncrementMode::truncated : IncrementMode::gaussian;
  }
};

template <int N>
Method<N> method_midpoint() {
  return {"midpoint", NoiseKind::wiener, {}, [](const auto& s, const auto& z, double dt, auto w, const auto& c) {
            return midpoint_step(s, z, dt, w, c);
          }, {}};
}

template <int N>
Method<N> method_stormer_verlet() {
  return {"stormer_verlet", NoiseKind::wiener, {},
          [](const auto& s, const auto& z, double dt, auto w, const auto& c) {
            return stormer_verlet_step(s, z, dt, w, c);
          },
          {}};
}

template <int N>
Method<N> method_dirk(double lambda) {
  return {"dirk", NoiseKind::wiener, {}, [lambda](const auto& s, const auto& z, double dt, auto w, const auto& c) {
            return dirk_step(s, lambda, z, dt, w, c);
          }, {}};
}

template <int N>
Method<N> method_heun() {
  return {"heun", NoiseKind::wiener, {}, [](const auto& s, const auto& z, double dt, auto w, const auto&) {
            return heun_step(s, z, dt, w);
          }, {}};
}

template <int N>
Method<N> method_sprk(SprkTableau t) {
  std::string name = t.name;
  return {std::move(name), NoiseKind::wiener, {},
          [t = std::move(t)](const auto& s, const auto& z, double dt, auto w, const auto& c) {
            return sprk_step(s, t, z, dt, w, c);
          },
          {}};
}

template <int N>
Method<N> method_wrk(WrkTableau t) {
  std::string name = t.name;
  return {std::move(name), NoiseKind::three_point, {},
          [t = std::move(t)](const auto& s, const auto& z, double dt, auto w, const auto& c) {
            return wrk_step(s, t, z, dt, w, c);
          },
          {}};
}

template <int N>
Method<N> method_srkw1(double lambda) {
  auto m = method_wrk<N>(srkw1_tableau(lambda));
  return m;
}

template <int N>
Method<N> method_srkw2() {
  return method_wrk<N>(srkw2_tableau());
}

template <int N>
Method<N> make_method(const std::string& id, double lambda = 0.5) {
  if (id == "midpoint") return method_midpoint<N>();
  if (id == "stormer_verlet" || id == "sv") return method_stormer_verlet<N>();
  if (id == "dirk") return method_dirk<N>(lambda);
  if (id == "heun") return method_heun<N>();
  if (id == "srkw1") return method_srkw1<N>(lambda);
  if (id == "srkw2") return method_srkw2<N>();
  throw InvalidParameter("unknown method '" + id + "'");
}

// ---------- observables and initial conditions ----------

template <int N>
struct Observable {
  std::string name;
  std::function<double(const State<N>&)> fn;
};

// initial state for a path; sampled conditions draw from their own per-path stream
template <int N>
using InitialCondition = std::function<State<N>(std::uint64_t path_index)>;

template <int N>
InitialCondition<N> fixed_initial(const State<N>& z) {
  return [z](std::uint64_t) { return z; };
}

// sampler stream is keyed away from the increment stream of the same seed
inline constexpr std::uint64_t kInitialConditionDomain = 0xD1B54A32D192ED03ULL;

template <int N, class Sampler>
InitialCondition<N> sampled_initial(std::uint64_t master_seed, Sampler sampler) {
  return [master_seed, sampler](std::uint64_t path) {
    PathRng rng(master_seed ^ kInitialConditionDomain, path);
    return sampler(rng);
  };
}

// ---------- reductions ----------

inline double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 8) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

inline double pairwise_sum(const std::vector<double>& x) { return pairwise_sum(x.data(), x.size()); }

// count / mean / sum of squared deviations; merged with Chan's update
struct Moments {
  double n = 0, mean = 0, m2 = 0;

  static Moments of(const std::vector<double>& x) {
    Moments m;
    m.n = static_cast<double>(x.size());
    if (x.empty()) return m;
    m.mean = pairwise_sum(x) / m.n;
    std::vector<double> d(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) d[i] = (x[i] - m.mean) * (x[i] - m.mean);
    m.m2 = pairwise_sum(d);
    return m;
  }
  static Moments merge(const Moments& a, const Moments& b) {
    if (a.n == 0) return b;
    if (b.n == 0) return a;
    Moments r;
    r.n = a.n + b.n;
    const double delta = b.mean - a.mean;
    r.mean = a.mean + delta * (b.n / r.n);
    r.m2 = a.m2 + b.m2 + delta * delta * (a.n * b.n / r.n);
    return r;
  }
  double sem() const { return n > 1 ? std::sqrt(m2 / (n - 1) / n) : 0.0; }
};

// fixed-topology tree over items [lo, hi)
template <class T, class Merge>
T tree_reduce(const std::vector<T>& items, std::size_t lo, std::size_t hi, Merge merge) {
  if (hi - lo == 1) return items[lo];
  const std::size_t mid = lo + (hi - lo) / 2;
  return merge(tree_reduce(items, lo, mid, merge), tree_reduce(items, mid, hi, merge));
}

inline int resolve_threads(int threads) {
  if (threads > 0) return threads;
  const unsigned hc = std::thread::hardware_concurrency();
  return hc ? static_cast<int>(hc) : 1;
}

// Runs work(block) for every block index; blocks are claimed dynamically but results are keyed by index.
template <class Work>
void parallel_blocks(std::size_t n_blocks, int threads, Work&& work) {
  const int T = std::max(1, std::min<int>(resolve_threads(threads), static_cast<int>(n_blocks)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (;;) {
      const std::size_t b = next.fetch_add(1);
      if (b >= n_blocks || failed.load()) return;
      try {
        work(b);
      } catch (...) {
        if (!failed.exchange(true)) err = std::current_exception();
        return;
      }
    }
  };
  if (T == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < T; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (err) std::rethrow_exception(err);
}

inline std::size_t steps_for(double T, double dt) {
  if (!(dt > 0) || !(T >= 0)) throw InvalidParameter("need dt > 0 and T >= 0");
  const double K = std::round(T / dt);
  if (std::abs(K * dt - T) > 1e-9 * std::max(1.0, T)) throw InvalidParameter("T is not an integer multiple of dt");
  return static_cast<std::size_t>(K);
}

// ---------- single path ----------

struct PathResult {
  // records x observables, row-major
  std::vector<double> values;
  bool failed = false;
  std::size_t failed_step = 0;
  std::string failure;
};

template <int N>
PathResult run_path(const ForcedHamiltonianSystem<N>& sys, const Method<N>& method, double dt, std::size_t K,
                    BrownianDriver& driver, const std::vector<Observable<N>>& obs, const State<N>& initial,
                    std::size_t record_stride = 1, State<N>* final_state = nullptr) {
  if (record_stride == 0) throw InvalidParameter("record_stride must be >= 1");
  if (driver.channels() != sys.dim_m()) throw InvalidParameter("driver channel count != system noise channels");
  PathResult res;
  res.values.reserve((K / record_stride + 1) * obs.size());
  auto record = [&](const State<N>& z) {
    for (const auto& o : obs) res.values.push_back(o.fn(z));
  };
  State<N> z = initial;
  record(z);
  std::vector<double> w(sys.dim_m());
  for (std::size_t k = 0; k < K; ++k) {
    driver.next(w);
    try {
      z = method.step(sys, z, dt, w, method.solver);
    } catch (const SolverFailure& e) {
      res.failed = true;
      res.failed_step = k;
      res.failure = e.what();
      return res;
    }
    if (!z.finite()) {
      res.failed = true;
      res.failed_step = k;
      res.failure = "non-finite state";
      return res;
    }
    if ((k + 1) % record_stride == 0) record(z);
  }
  if (final_state) *final_state = z;
  return res;
}

// ---------- ensembles ----------

struct EnsembleOptions {
  int threads = 0;
  std::size_t record_stride = 1;
  // store final-time values of these observable indices for every successful path (path order)
  std::vector<std::size_t> collect_final;
};

struct EnsembleSeries {
  std::vector<std::string> names;
  std::vector<double> times;
  std::vector<std::vector<double>> mean, sem;  // [time][observable]
  std::size_t n_paths = 0, n_failed = 0;
  bool degraded = false;
  std::vector<std::vector<double>> final_values;  // [collected observable][path]
  std::vector<std::size_t> failed_paths;
};

inline constexpr std::size_t kPathBlock = 256;

template <int N>
EnsembleSeries run_ensemble(const ForcedHamiltonianSystem<N>& sys, const Method<N>& method, double dt, double T,
                            std::size_t n_paths, std::uint64_t master_seed, const std::vector<Observable<N>>& obs,
                            const InitialCondition<N>& initial, const EnsembleOptions& opt = {}) {
  const std::size_t K = steps_for(T, dt);
  const std::size_t stride = opt.record_stride;
  if (stride == 0 || K % stride != 0) throw InvalidParameter("record_stride must divide the number of steps");
  if (n_paths == 0) throw InvalidParameter("n_paths must be positive");
  const std::size_t R = K / stride + 1, nobs = obs.size();
  const std::size_t n_blocks = (n_paths + kPathBlock - 1) / kPathBlock;

  struct Block {
    std::vector<Moments> stats;  // R * nobs
    std::vector<std::vector<double>> finals;
    std::vector<std::size_t> failed;
  };
  std::vector<Block> blocks(n_blocks);

  parallel_blocks(n_blocks, opt.threads, [&](std::size_t b) {
    const std::size_t lo = b * kPathBlock, hi = std::min(n_paths, lo + kPathBlock);
    std::vector<PathResult> paths;
    paths.reserve(hi - lo);
    Block& out = blocks[b];
    out.finals.assign(opt.collect_final.size(), {});
    for (std::size_t i = lo; i < hi; ++i) {
      BrownianDriver drv(master_seed, i, sys.dim_m(), dt, method.increment_mode(), method.truncation.value_or(0));
      State<N> fin;
      paths.push_back(run_path(sys, method, dt, K, drv, obs, initial(i), stride, &fin));
      if (paths.back().failed) {
        out.failed.push_back(i);
      } else {
        for (std::size_t c = 0; c < opt.collect_final.size(); ++c)
          out.finals[c].push_back(paths.back().values[(R - 1) * nobs + opt.collect_final[c]]);
      }
    }
    out.stats.resize(R * nobs);
    std::vector<double> col;
    for (std::size_t r = 0; r < R * nobs; ++r) {
      col.clear();
      for (const auto& p : paths)
        if (!p.failed) col.push_back(p.values[r]);
      out.stats[r] = Moments::of(col);
    }
  });

  EnsembleSeries es;
  for (const auto& o : obs) es.names.push_back(o.name);
  es.n_paths = n_paths;
  for (const auto& b : blocks) {
    es.n_failed += b.failed.size();
    es.failed_paths.insert(es.failed_paths.end(), b.failed.begin(), b.failed.end());
  }
  es.degraded = static_cast<double>(es.n_failed) > 0.01 * static_cast<double>(n_paths);
  es.times.resize(R);
  es.mean.assign(R, std::vector<double>(nobs));
  es.sem.assign(R, std::vector<double>(nobs));
  std::vector<Moments> per_block(n_blocks);
  for (std::size_t r = 0; r < R; ++r) {
    es.times[r] = static_cast<double>(r * stride) * dt;
    for (std::size_t o = 0; o < nobs; ++o) {
      for (std::size_t b = 0; b < n_blocks; ++b) per_block[b] = blocks[b].stats[r * nobs + o];
      const Moments m = tree_reduce(per_block, 0, n_blocks, Moments::merge);
      es.mean[r][o] = m.n > 0 ? m.mean : NAN;
      es.sem[r][o] = m.sem();
    }
  }
  es.final_values.assign(opt.collect_final.size(), {});
  for (const auto& b : blocks)
    for (std::size_t c = 0; c < opt.collect_final.size(); ++c)
      es.final_values[c].insert(es.final_values[c].end(), b.finals[c].begin(), b.finals[c].end());
  return es;
}

// ---------- convergence order ----------

struct LineFit {
  double slope = 0, intercept = 0, max_residual = 0;
};

inline LineFit fit_loglog(const std::vector<double>& dts, const std::vector<double>& errs) {
  const std::size_t n = dts.size();
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) sx += std::log(dts[i]), sy += std::log(errs[i]);
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(dts[i]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(errs[i]) - my);
  }
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  for (std::size_t i = 0; i < n; ++i)
    f.max_residual =
        std::max(f.max_residual, std::abs(std::log(errs[i]) - (f.intercept + f.slope * std::log(dts[i]))));
  return f;
}

struct OrderResult {
  double slope = 0, intercept = 0;
  std::vector<double> dts, errors, sems;
  std::size_t n_failed = 0;
  bool inconclusive = false;
};

inline void check_dt_list(const std::vector<double>& dts) {
  if (dts.size() < 4) throw InvalidParameter("order estimation needs at least 4 dt values");
  for (double d : dts)
    if (!(d > 0)) throw InvalidParameter("dt values must be positive");
}

// RMS pathwise error at T; every dt is driven by aggregations of one fine path per sample.
template <int N>
OrderResult estimate_ms_order(const ForcedHamiltonianSystem<N>& sys,
                              const std::function<State<N>(double, std::span<const double>)>& exact,
                              const Method<N>& method, std::vector<double> dts, double T, std::size_t n_paths,
                              std::uint64_t seed, const State<N>& initial, int threads = 0) {
  check_dt_list(dts);
  std::sort(dts.begin(), dts.end());
  const double fine = dts.front();
  const std::size_t Kf = steps_for(T, fine);
  std::vector<std::size_t> factors;
  for (double d : dts) {
    const double c = std::round(d / fine);
    if (std::abs(c * fine - d) > 1e-9 * d || Kf % static_cast<std::size_t>(c) != 0)
      throw InvalidParameter("every dt must be an integer multiple of the finest one and divide T");
    factors.push_back(static_cast<std::size_t>(c));
  }
  const std::size_t L = dts.size();
  const std::size_t n_blocks = (n_paths + kPathBlock - 1) / kPathBlock;
  struct Block {
    std::vector<Moments> sq;  // per level
    std::size_t failed = 0;
  };
  std::vector<Block> blocks(n_blocks);
  parallel_blocks(n_blocks, threads, [&](std::size_t b) {
    const std::size_t lo = b * kPathBlock, hi = std::min(n_paths, lo + kPathBlock);
    std::vector<std::vector<double>> sq(L);
    for (std::size_t i = lo; i < hi; ++i) {
      BrownianDriver drv(seed, i, sys.dim_m(), fine);
      const FinePath fp = make_fine_path(drv, Kf);
      const std::vector<double> W = fp.total();
      const State<N> ref = exact(T, W);
      std::vector<double> e(L);
      bool ok = true;
      for (std::size_t l = 0; l < L && ok; ++l) {
        const FinePath cp = aggregate_path(fp, factors[l]);
        State<N> z = initial;
        try {
          for (std::size_t k = 0; k < cp.steps(); ++k) z = method.step(sys, z, dts[l], cp.row(k), method.solver);
        } catch (const SolverFailure&) {
          ok = false;
        }
        if (!z.finite()) ok = false;
        e[l] = (z.z() - ref.z()).squaredNorm();
      }
      if (!ok) {
        ++blocks[b].failed;
        continue;
      }
      for (std::size_t l = 0; l < L; ++l) sq[l].push_back(e[l]);
    }
    for (std::size_t l = 0; l < L; ++l) blocks[b].sq.push_back(Moments::of(sq[l]));
  });

  OrderResult res;
  res.dts = dts;
  std::vector<Moments> per(n_blocks);
  for (const auto& b : blocks) res.n_failed += b.failed;
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t b = 0; b < n_blocks; ++b) per[b] = blocks[b].sq[l];
    const Moments m = tree_reduce(per, 0, n_blocks, Moments::merge);
    const double rms = std::sqrt(m.mean);
    if (!(rms >= 1e-12)) throw PrecisionFloor("mean-square error " + std::to_string(rms) + " below 1e-12");
    res.errors.push_back(rms);
    // delta method: sem(sqrt(X)) ~ sem(X) / (2 sqrt(X))
    res.sems.push_back(m.sem() / (2 * rms));
  }
  const LineFit f = fit_loglog(res.dts, res.errors);
  res.slope = f.slope;
  res.intercept = f.intercept;
  for (std::size_t l = 0; l < L; ++l)
    if (!(2 * res.sems[l] < res.errors[l])) res.inconclusive = true;
  return res;
}

// |E phi(z_K) - exact(T)| per dt from independent ensembles; inconclusive when any level's Monte Carlo
// error is not below half its bias.
template <int N>
OrderResult estimate_weak_order(const ForcedHamiltonianSystem<N>& sys, const Method<N>& method,
                                std::vector<double> dts, double T, std::size_t n_paths, std::uint64_t seed,
                                const std::function<double(const State<N>&)>& phi,
                                const std::function<double(double)>& exact, const InitialCondition<N>& initial,
                                int threads = 0) {
  check_dt_list(dts);
  std::sort(dts.begin(), dts.end());
  OrderResult res;
  res.dts = dts;
  const std::vector<Observable<N>> obs{{"phi", phi}};
  EnsembleOptions opt;
  opt.threads = threads;
  for (double dt : dts) {
    opt.record_stride = steps_for(T, dt);
    if (opt.record_stride == 0) opt.record_stride = 1;
    const EnsembleSeries es = run_ensemble(sys, method, dt, T, n_paths, seed, obs, initial, opt);
    res.n_failed += es.n_failed;
    res.errors.push_back(std::abs(es.mean.back()[0] - exact(T)));
    res.sems.push_back(es.sem.back()[0]);
  }
  for (std::size_t l = 0; l < dts.size(); ++l)
    if (!(2 * res.sems[l] < res.errors[l])) res.inconclusive = true;
  bool positive = true;
  for (double e : res.errors) positive = positive && e > 0;
  if (positive) {
    const LineFit f = fit_loglog(res.dts, res.errors);
    res.slope = f.slope;
    res.intercept = f.intercept;
  } else {
    res.inconclusive = true;
    res.slope = NAN;
  }
  return res;
}

// ---------- histograms ----------

struct Histogram {
  std::vector<double> edges, edges_y;  // edges_y empty for 1D
  std::vector<double> counts;          // 1D: bins; 2D: row-major [x][y]
  std::vector<double> density;
};

inline std::vector<double> uniform_edges(double lo, double hi, std::size_t bins) {
  if (!(hi > lo) || bins == 0) throw InvalidParameter("uniform_edges: need hi > lo and bins > 0");
  std::vector<double> e(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) e[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  return e;
}

inline std::ptrdiff_t find_bin(const std::vector<double>& edges, double x) {
  if (!(x >= edges.front()) || !(x <= edges.back())) return -1;
  auto it = std::upper_bound(edges.begin(), edges.end(), x);
  std::ptrdiff_t i = (it - edges.begin()) - 1;
  if (i >= static_cast<std::ptrdiff_t>(edges.size()) - 1) i = static_cast<std::ptrdiff_t>(edges.size()) - 2;
  return i;
}

inline void check_edges(const std::vector<double>& e) {
  if (e.size() < 2) throw InvalidParameter("histogram: need at least two edges");
  for (std::size_t i = 1; i < e.size(); ++i)
    if (!(e[i] > e[i - 1])) throw InvalidParameter("histogram: edges must be strictly increasing");
}

// density = count / (n_total * width); n_total counts failed paths too, so the density integrates to the
// surviving fraction
inline Histogram histogram(const std::vector<double>& samples, const std::vector<double>& edges,
                           std::size_t n_total = 0) {
  check_edges(edges);
  if (n_total == 0) n_total = samples.size();
  Histogram h;
  h.edges = edges;
  h.counts.assign(edges.size() - 1, 0);
  for (double x : samples)
    if (const auto i = find_bin(edges, x); i >= 0) h.counts[i] += 1;
  h.density.resize(h.counts.size());
  for (std::size_t i = 0; i < h.counts.size(); ++i)
    h.density[i] = n_total ? h.counts[i] / (static_cast<double>(n_total) * (edges[i + 1] - edges[i])) : 0.0;
  return h;
}

inline Histogram histogram2d(const std::vector<double>& xs, const std::vector<double>& ys,
                             const std::vector<double>& ex, const std::vector<double>& ey, std::size_t n_total = 0) {
  check_edges(ex);
  check_edges(ey);
  if (xs.size() != ys.size()) throw InvalidParameter("histogram2d: sample arrays differ in length");
  if (n_total == 0) n_total = xs.size();
  Histogram h;
  h.edges = ex;
  h.edges_y = ey;
  const std::size_t nx = ex.size() - 1, ny = ey.size() - 1;
  h.counts.assign(nx * ny, 0);
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const auto i = find_bin(ex, xs[k]), j = find_bin(ey, ys[k]);
    if (i >= 0 && j >= 0) h.counts[i * ny + j] += 1;
  }
  h.density.resize(h.counts.size());
  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t j = 0; j < ny; ++j)
      h.density[i * ny + j] =
          n_total ? h.counts[i * ny + j] / (static_cast<double>(n_total) * (ex[i + 1] - ex[i]) * (ey[j + 1] - ey[j]))
                  : 0.0;
  return h;
}

}  // namespace sdha
