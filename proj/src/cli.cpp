#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "sdha/cli.hpp"
#include "sdha/config.hpp"
#include "sdha/harness.hpp"
#include "sdha/models.hpp"
#include "sdha/structure.hpp"
#include "sdha/tableau_io.hpp"

namespace sdha::cli {

std::string fmt(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

inline std::string sci(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::scientific, 3);
  return std::string(buf, r.ptr);
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream o(path, std::ios::binary | std::ios::trunc);
  if (!o) throw Error("cannot open '" + path + "' for writing");
  o << content;
  if (!o) throw Error("write to '" + path + "' failed");
}

// ---------- config plumbing ----------

inline const std::set<std::string>& common_keys() {
  static const std::set<std::string> keys{
      "model.name",        "method.name",       "method.lambda",       "method.tableau",    "noise.truncation",
      "solver.tol",        "solver.max_iter",   "solver.fd_step",      "solver.mode",       "dt",
      "T",                 "n_paths",           "seed",                "observables",       "output",
      "record_stride",     "initial.mode",      "initial.q",           "initial.p",         "threads",
      "histogram.observable", "histogram.edges", "order.kind",         "order.dt_list",     "order.expect_min",
      "order.expect_max",  "structure.check",   "structure.points",    "structure.noise_draws",
      "structure.steps"};
  return keys;
}

inline void check_model_keys(const ConfigFile& cf, const std::string& model, const std::set<std::string>& params) {
  for (const auto& e : cf.entries()) {
    if (e.key.rfind("model.", 0) != 0 || e.key == "model.name") continue;
    if (!params.count(e.key.substr(6)))
      throw ParseError(cf.source() + ":" + std::to_string(e.line) + ": model '" + model + "' has no parameter '" +
                       e.key.substr(6) + "'");
  }
}

inline int model_dim(const ConfigFile& cf) {
  const std::string m = cf.str("model.name");
  if (m == "kubo" || m == "vdp" || m == "lb") return 1;
  if (m == "lorentz" || m == "central") return 2;
  cf.fail("model.name", "unknown model '" + m + "' (kubo, vdp, lb, lorentz, central)");
}

inline ConfigFile load_config(const std::string& path) {
  ConfigFile cf = ConfigFile::load(path);
  cf.restrict_keys(common_keys(), {"model."});
  return cf;
}

template <class T, class Fn>
T checked(const ConfigFile& cf, const std::string& key, Fn&& fn) {
  try {
    return fn();
  } catch (const InvalidParameter& e) {
    cf.fail(key, e.what());
  }
}

template <int N>
struct ModelSetup {
  ForcedHamiltonianSystem<N> sys;
  std::optional<State<N>> default_point;
  std::function<State<N>(PathRng&)> sampler;
  // pathwise solution from a given start, for mean-square order runs
  std::function<State<N>(const State<N>&, double, std::span<const double>)> exact;
  // E H(t) from a given start, for weak order runs
  std::function<double(const State<N>&, double)> mean_H;
};

template <int N>
ModelSetup<N> build_model(const ConfigFile& cf) {
  const std::string name = cf.str("model.name");
  ModelSetup<N> m;
  if constexpr (N == 1) {
    if (name == "kubo") {
      check_model_keys(cf, name, {"beta", "nu"});
      KuboParams P;
      P.beta = cf.num("model.beta", P.beta);
      P.nu = cf.num("model.nu", P.nu);
      m.sys = checked<ForcedHamiltonianSystem<1>>(cf, "model.nu", [&] { return kubo_system(P); });
      m.default_point = State<1>(Vec<1>::Constant(P.q0), Vec<1>::Constant(P.p0));
      m.exact = [P](const State<1>& z0, double t, std::span<const double> W) { return kubo_flow(P, z0, t, W[0]); };
      m.mean_H = [P](const State<1>& z0, double t) {
        KuboParams Q = P;
        Q.q0 = z0.q[0];
        Q.p0 = z0.p[0];
        return kubo_mean_energy(Q, t);
      };
    } else if (name == "vdp") {
      check_model_keys(cf, name, {"sigma", "nu"});
      const double sigma = cf.num("model.sigma", 0.05), nu = cf.num("model.nu", 0.001);
      m.sys = checked<ForcedHamiltonianSystem<1>>(cf, "model.name", [&] { return vdp_system(sigma, nu); });
      m.default_point = State<1>(Vec<1>::Constant(1.0), Vec<1>::Constant(1.0));
    } else if (name == "lb") {
      check_model_keys(cf, name, {"nu", "mu", "D", "E0", "eps", "a", "v0", "sigma"});
      VfpLbParams P;
      P.nu = cf.num("model.nu", P.nu);
      P.mu = cf.num("model.mu", P.mu);
      P.D = cf.num("model.D", P.D);
      P.E0 = cf.num("model.E0", P.E0);
      P.eps = cf.num("model.eps", P.eps);
      P.a = cf.num("model.a", P.a);
      P.v0 = cf.num("model.v0", P.v0);
      P.sigma = cf.num("model.sigma", P.sigma);
      m.sys = checked<ForcedHamiltonianSystem<1>>(cf, "model.name", [&] { return vfp_lb_system(P); });
      m.sampler = [P](PathRng& rng) { return sample_initial_lb(P, rng); };
    } else {
      cf.fail("model.name", "model '" + name + "' is not one-dimensional");
    }
  } else {
    if (name == "lorentz") {
      check_model_keys(cf, name, {"nu", "E0", "eps1", "eps2"});
      VfpLorentzParams P;
      P.nu = cf.num("model.nu", P.nu);
      P.E0 = cf.num("model.E0", P.E0);
      P.eps1 = cf.num("model.eps1", P.eps1);
      P.eps2 = cf.num("model.eps2", P.eps2);
      m.sys = checked<ForcedHamiltonianSystem<2>>(cf, "model.name", [&] { return vfp_lorentz_system(P); });
      m.sampler = [P](PathRng& rng) { return sample_initial_lorentz(P, rng); };
    } else if (name == "central") {
      check_model_keys(cf, name, {"nu", "beta"});
      const double nu = cf.num("model.nu", 0.1), beta = cf.num("model.beta", 0.3);
      m.sys = central_force_system(nu, beta);
      m.default_point = State<2>(Vec<2>(1.0, 0.0), Vec<2>(0.0, 1.0));
    } else {
      cf.fail("model.name", "model '" + name + "' is not two-dimensional");
    }
  }
  return m;
}

inline SolverConfig solver_config(const ConfigFile& cf, SolverConfig c) {
  c.tol = cf.num("solver.tol", c.tol);
  c.max_iter = static_cast<int>(cf.integer("solver.max_iter", c.max_iter));
  c.fd_jacobian_step = cf.num("solver.fd_step", c.fd_jacobian_step);
  if (cf.has("solver.mode")) {
    const std::string mode = cf.str("solver.mode");
    if (mode == "fixed_point")
      c.mode = SolverMode::fixed_point;
    else if (mode == "newton")
      c.mode = SolverMode::newton;
    else if (mode == "hybrid")
      c.mode = SolverMode::hybrid;
    else
      cf.fail("solver.mode", "unknown solver mode '" + mode + "' (fixed_point, newton, hybrid)");
  }
  try {
    c.validate();
  } catch (const InvalidParameter& e) {
    throw ParseError(cf.source() + ": " + e.what());
  }
  return c;
}

inline std::string resolve_relative(const ConfigFile& cf, const std::string& p) {
  namespace fs = std::filesystem;
  const fs::path path(p);
  if (path.is_absolute()) return p;
  const fs::path beside = fs::path(cf.source()).parent_path() / path;
  return fs::exists(beside) ? beside.string() : p;
}

template <int N>
Method<N> build_method(const ConfigFile& cf, SolverConfig solver_defaults = {}) {
  const std::string name = cf.str("method.name");
  const double lambda = cf.num("method.lambda", 0.5);
  if (cf.has("method.lambda") && name != "dirk" && name != "srkw1")
    cf.fail("method.lambda", "method.lambda only applies to dirk and srkw1");
  if (cf.has("method.tableau") && name != "sprk" && name != "wrk")
    cf.fail("method.tableau", "method.tableau only applies to sprk and wrk");
  Method<N> m;
  if (name == "sprk" || name == "wrk") {
    const std::string path = resolve_relative(cf, cf.str("method.tableau"));
    if (name == "sprk") {
      SprkTableau t = load_sprk_tableau(path);
      checked<int>(cf, "method.tableau", [&] { return t.validate(), 0; });
      m = method_sprk<N>(std::move(t));
    } else {
      WrkTableau t = load_wrk_tableau(path);
      checked<int>(cf, "method.tableau", [&] { return t.validate(), 0; });
      m = method_wrk<N>(std::move(t));
    }
  } else {
    static const std::set<std::string> known{"midpoint", "stormer_verlet", "dirk", "heun", "srkw1", "srkw2"};
    if (!known.count(name))
      cf.fail("method.name",
              "unknown method '" + name + "' (midpoint, stormer_verlet, dirk, heun, srkw1, srkw2, sprk, wrk)");
    m = make_method<N>(name, lambda);
  }
  m.solver = solver_config(cf, solver_defaults);
  if (cf.has("noise.truncation")) {
    const std::string v = cf.str("noise.truncation");
    if (v != "off" && m.noise != NoiseKind::wiener)
      cf.fail("noise.truncation", "truncation applies to Wiener increments only; '" + name + "' uses three-point noise");
    if (v == "auto") {
      m.truncation = 0.0;
    } else if (v != "off") {
      const double A = cf.num("noise.truncation");
      if (!(A > 0)) cf.fail("noise.truncation", "truncation threshold must be positive, 'auto' or 'off'");
      m.truncation = A;
    }
  }
  return m;
}

template <int N>
std::vector<Observable<N>> build_observables(const ConfigFile& cf, const ForcedHamiltonianSystem<N>& sys) {
  std::vector<std::string> names = cf.words("observables", "H");
  std::vector<std::string> ordered{"H"};
  for (const auto& n : names)
    if (std::find(ordered.begin(), ordered.end(), n) == ordered.end()) ordered.push_back(n);
  std::vector<Observable<N>> obs;
  for (const auto& n : ordered) {
    if (n == "H") {
      obs.push_back({n, sys.H});
      continue;
    }
    if (n == "J" && N == 2) {
      obs.push_back({n, [](const State<N>& z) { return momentum_map_so2(z); }});
      continue;
    }
    int comp = -1;
    char kind = 0;
    if ((n == "q" || n == "p") && N == 1) {
      kind = n[0];
      comp = 0;
    } else if (n.size() == 2 && (n[0] == 'q' || n[0] == 'p') && n[1] >= '1' && n[1] <= '0' + N) {
      kind = n[0];
      comp = n[1] - '1';
    }
    if (comp < 0) cf.fail("observables", "unknown observable '" + n + "' for a " + std::to_string(N) + "-dimensional model");
    if (kind == 'q')
      obs.push_back({n, [comp](const State<N>& z) { return z.q[comp]; }});
    else
      obs.push_back({n, [comp](const State<N>& z) { return z.p[comp]; }});
  }
  return obs;
}

template <int N>
State<N> point_initial(const ConfigFile& cf, const ModelSetup<N>& m) {
  if (!m.default_point && !(cf.has("initial.q") && cf.has("initial.p")))
    cf.fail("initial.mode", "point initial condition for this model needs initial.q and initial.p");
  State<N> z = m.default_point.value_or(State<N>{});
  for (const char* key : {"initial.q", "initial.p"}) {
    if (!cf.has(key)) continue;
    const auto v = cf.list(key);
    if (static_cast<int>(v.size()) != N) cf.fail(key, "expected " + std::to_string(N) + " values");
    for (int i = 0; i < N; ++i) (key[8] == 'q' ? z.q : z.p)[i] = v[i];
  }
  return z;
}

// returns the initial-condition functor; *point is set for point mode
template <int N>
InitialCondition<N> build_initial(const ConfigFile& cf, const ModelSetup<N>& m, std::uint64_t seed,
                                  std::optional<State<N>>* point = nullptr) {
  const std::string mode = cf.str("initial.mode", m.sampler ? "sampled" : "point");
  if (mode == "sampled") {
    if (!m.sampler) cf.fail("initial.mode", "model '" + m.sys.name + "' has no initial-condition sampler");
    if (cf.has("initial.q") || cf.has("initial.p"))
      cf.fail(cf.has("initial.q") ? "initial.q" : "initial.p", "initial.q / initial.p only apply to point mode");
    return sampled_initial<N>(seed, m.sampler);
  }
  if (mode != "point") cf.fail("initial.mode", "initial.mode must be 'point' or 'sampled'");
  const State<N> z = point_initial(cf, m);
  if (point) *point = z;
  return fixed_initial<N>(z);
}

inline int config_threads(const ConfigFile& cf) {
  long long t = cf.integer("threads", 0);
  if (t < 0) cf.fail("threads", "threads must be >= 0 (0 = auto)");
  if (const char* env = std::getenv("SDHA_THREADS"); env && *env) {
    const std::string v(env);
    std::size_t used = 0;
    try {
      t = std::stoll(v, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used != v.size() || t < 0) throw ParseError("SDHA_THREADS: '" + v + "' is not a non-negative integer");
  }
  return static_cast<int>(t);
}

inline std::size_t positive_count(const ConfigFile& cf, const std::string& key, long long def) {
  const long long v = cf.integer(key, def);
  if (v <= 0) cf.fail(key, key + " must be positive");
  return static_cast<std::size_t>(v);
}

inline std::size_t config_steps(const ConfigFile& cf, double dt, double T) {
  if (!(dt > 0)) cf.fail("dt", "dt must be positive");
  if (!(T > 0)) cf.fail("T", "T must be positive");
  try {
    return steps_for(T, dt);
  } catch (const InvalidParameter&) {
    cf.fail("dt", "T = " + fmt(T) + " is not an integer multiple of dt = " + fmt(dt));
  }
}

// Runs fn, mapping configuration and input errors to exit code 1.
template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
  }
  return 1;
}

template <class Fn>
int dispatch_dim(const ConfigFile& cf, Fn&& fn) {
  return model_dim(cf) == 1 ? fn(std::integral_constant<int, 1>{}) : fn(std::integral_constant<int, 2>{});
}

// ---------- run ----------

template <int N>
int run_impl(const ConfigFile& cf, const std::string& out_override, std::ostream& out, std::ostream& err) {
  const ModelSetup<N> model = build_model<N>(cf);
  const Method<N> method = build_method<N>(cf);
  const double dt = cf.num("dt"), T = cf.num("T");
  const std::size_t K = config_steps(cf, dt, T);
  const std::size_t n_paths = positive_count(cf, "n_paths", 1000);
  const std::uint64_t seed = cf.u64("seed", 0);
  const std::size_t stride = positive_count(cf, "record_stride", 1);
  if (K % stride != 0) cf.fail("record_stride", "record_stride must divide the number of steps (" + std::to_string(K) + ")");
  const std::string output = out_override.empty() ? cf.str("output") : out_override;
  const int threads = config_threads(cf);
  const auto obs = build_observables<N>(cf, model.sys);
  const InitialCondition<N> initial = build_initial<N>(cf, model, seed);

  EnsembleOptions opt;
  opt.threads = threads;
  opt.record_stride = stride;
  std::vector<double> edges;
  if (cf.has("histogram.observable") || cf.has("histogram.edges")) {
    const std::string hname = cf.str("histogram.observable", "H");
    std::size_t idx = obs.size();
    for (std::size_t i = 0; i < obs.size(); ++i)
      if (obs[i].name == hname) idx = i;
    if (idx == obs.size()) cf.fail("histogram.observable", "histogram observable '" + hname + "' is not in observables");
    const auto e = cf.list("histogram.edges");
    if (e.size() != 3 || !(e[1] > e[0]) || !(e[2] >= 1) || e[2] != std::floor(e[2]))
      cf.fail("histogram.edges", "expected 'lo, hi, bins' with hi > lo and integer bins >= 1");
    edges = uniform_edges(e[0], e[1], static_cast<std::size_t>(e[2]));
    opt.collect_final = {idx};
  }

  const EnsembleSeries es = run_ensemble(model.sys, method, dt, T, n_paths, seed, obs, initial, opt);

  std::string csv = "t";
  for (const auto& o : obs) csv += ",mean_" + o.name + ",sem_" + o.name;
  csv += "\n";
  for (std::size_t r = 0; r < es.times.size(); ++r) {
    csv += fmt(es.times[r]);
    for (std::size_t o = 0; o < obs.size(); ++o) csv += "," + fmt(es.mean[r][o]) + "," + fmt(es.sem[r][o]);
    csv += "\n";
  }
  write_file(output, csv);

  std::string meta = "# run metadata\n[config]\nsource = " + cf.source() + "\n";
  for (const auto& e : cf.entries()) meta += e.key + " = " + e.value + "\n";
  meta += "[result]\noutput = " + output + "\nmethod = " + method.name + "\nsteps = " + std::to_string(K) +
          "\nn_paths = " + std::to_string(es.n_paths) + "\nn_failed = " + std::to_string(es.n_failed) +
          "\ndegraded = " + (es.degraded ? "true" : "false") + "\n";
  if (!es.failed_paths.empty()) {
    meta += "failed_paths =";
    for (std::size_t i = 0; i < es.failed_paths.size(); ++i) meta += (i ? ", " : " ") + std::to_string(es.failed_paths[i]);
    meta += "\n";
  }
  write_file(output + ".meta", meta);

  if (!edges.empty()) {
    const Histogram h = histogram(es.final_values[0], edges, es.n_paths);
    std::string hc = "bin_left,bin_right,density\n";
    for (std::size_t i = 0; i + 1 < edges.size(); ++i)
      hc += fmt(edges[i]) + "," + fmt(edges[i + 1]) + "," + fmt(h.density[i]) + "\n";
    write_file(output + ".hist.csv", hc);
  }

  out << "wrote " << output << " (" << es.times.size() << " rows, " << es.n_paths << " paths, " << es.n_failed
      << " failed)\n";
  if (es.degraded) {
    err << "warning: ensemble degraded: " << es.n_failed << " of " << es.n_paths << " paths failed\n";
    return 2;
  }
  return 0;
}

int cmd_run(const std::string& config_path, const std::string& out_override, std::ostream& out,
                   std::ostream& err) {
  return guarded(err, [&] {
    const ConfigFile cf = load_config(config_path);
    return dispatch_dim(cf, [&](auto n) { return run_impl<decltype(n)::value>(cf, out_override, out, err); });
  });
}

// ---------- check-tableau ----------

inline std::string detect_tableau_kind(const std::string& file) {
  const std::string ext = std::filesystem::path(file).extension().string();
  if (ext == ".sprk") return "sprk";
  if (ext == ".wrk") return "wrk";
  std::ifstream in(file);
  if (!in) throw ParseError(file + ": cannot open file");
  std::string line;
  while (std::getline(in, line))
    if (ConfigFile::trim(line) == "a0") return "wrk";
  return "sprk";
}

int cmd_check_tableau(const std::string& file, std::string kind, std::ostream& out, std::ostream& err) {
  constexpr double tol = 1e-12;
  return guarded(err, [&] {
    if (kind.empty() || kind == "auto") kind = detect_tableau_kind(file);
    ConditionReport rep;
    std::string name;
    if (kind == "sprk") {
      const SprkTableau t = load_sprk_tableau(file);
      t.validate();
      name = t.name;
      rep = merge(check_sprk_symplectic_conditions(t, tol), check_sprk_order_conditions(t, tol));
    } else if (kind == "wrk") {
      const WrkTableau t = load_wrk_tableau(file);
      t.validate();
      name = t.name;
      rep = check_wrk_symplectic_conditions(t, tol);
    } else {
      throw ParseError("unknown tableau kind '" + kind + "' (sprk, wrk)");
    }
    out << kind << " tableau " << name << "\n";
    for (const auto& c : rep.conditions) {
      out << "  " << c.label << ": ";
      if (c.skipped)
        out << "skipped\n";
      else
        out << sci(c.violation) << (c.violation <= tol ? "" : "  VIOLATED") << "\n";
    }
    out << "max violation: " << sci(rep.max_violation) << "\n";
    if (!rep.pass) {
      for (const auto& v : rep.violated) err << "violated: " << v << "\n";
      return 3;
    }
    return 0;
  });
}

// ---------- order ----------

template <int N>
int order_impl(const ConfigFile& cf, const std::string& out_override, std::ostream& out, std::ostream& err) {
  const ModelSetup<N> model = build_model<N>(cf);
  const Method<N> method = build_method<N>(cf);
  const std::string kind = cf.str("order.kind", method.noise == NoiseKind::wiener ? "ms" : "weak");
  if (kind != "ms" && kind != "weak") cf.fail("order.kind", "order.kind must be 'ms' or 'weak'");
  const std::vector<double> dts = cf.list("order.dt_list");
  if (dts.size() < 4) cf.fail("order.dt_list", "order estimation needs at least 4 dt values");
  const double T = cf.num("T");
  for (double d : dts) config_steps(cf, d, T);
  const std::size_t n_paths = positive_count(cf, "n_paths", 1000);
  const std::uint64_t seed = cf.u64("seed", 0);
  const int threads = config_threads(cf);
  const std::string output = out_override.empty() ? cf.str("output") : out_override;
  std::optional<State<N>> point;
  const InitialCondition<N> initial = build_initial<N>(cf, model, seed, &point);

  OrderResult r;
  try {
    if (kind == "ms") {
      if (!model.exact) cf.fail("model.name", "model '" + model.sys.name + "' has no pathwise exact solution");
      if (!point) cf.fail("initial.mode", "mean-square order needs a point initial condition");
      if (method.noise != NoiseKind::wiener)
        cf.fail("method.name", "mean-square order needs a method driven by Wiener increments");
      const State<N> z0 = *point;
      const auto exact = [&](double t, std::span<const double> W) { return model.exact(z0, t, W); };
      r = estimate_ms_order<N>(model.sys, exact, method, dts, T, n_paths, seed, z0, threads);
    } else {
      if (!model.mean_H) cf.fail("model.name", "model '" + model.sys.name + "' has no exact mean energy");
      if (!point) cf.fail("initial.mode", "weak order needs a point initial condition");
      const State<N> z0 = *point;
      const auto phi = model.sys.H;
      r = estimate_weak_order<N>(model.sys, method, dts, T, n_paths, seed, phi,
                                 [&](double t) { return model.mean_H(z0, t); }, initial, threads);
    }
  } catch (const PrecisionFloor& e) {
    err << "inconclusive: " << e.what() << "\n";
    return 2;
  }

  std::string csv = "dt,error\n";
  out << kind << " order, method " << method.name << ", " << n_paths << " paths\n";
  out << "  dt                       error                    sem\n";
  for (std::size_t l = 0; l < r.dts.size(); ++l) {
    csv += fmt(r.dts[l]) + "," + fmt(r.errors[l]) + "\n";
    out << "  " << fmt(r.dts[l]) << "  " << fmt(r.errors[l]) << "  " << fmt(r.sems[l]) << "\n";
  }
  write_file(output, csv);
  out << "slope: " << fmt(r.slope) << "\n";
  if (r.n_failed) out << "failed paths: " << r.n_failed << "\n";
  if (r.inconclusive) {
    err << "inconclusive: Monte Carlo error is not below half the measured error at every dt\n";
    return 2;
  }
  if (cf.has("order.expect_min") || cf.has("order.expect_max")) {
    const double lo = cf.num("order.expect_min", -INFINITY), hi = cf.num("order.expect_max", INFINITY);
    if (!(r.slope >= lo && r.slope <= hi)) {
      err << "slope " << fmt(r.slope) << " outside [" << fmt(lo) << ", " << fmt(hi) << "]\n";
      return 3;
    }
  }
  return 0;
}

int cmd_order(const std::string& config_path, const std::string& out_override, std::ostream& out,
                     std::ostream& err) {
  return guarded(err, [&] {
    const ConfigFile cf = load_config(config_path);
    return dispatch_dim(cf, [&](auto n) { return order_impl<decltype(n)::value>(cf, out_override, out, err); });
  });
}

// ---------- structure ----------

template <int N>
State<N> random_state(PathRng& rng) {
  State<N> z;
  for (int i = 0; i < N; ++i) z.q[i] = 4 * rng.uniform() - 2;
  for (int i = 0; i < N; ++i) z.p[i] = 4 * rng.uniform() - 2;
  return z;
}

inline std::vector<double> random_increments(PathRng& rng, int m, double dt, NoiseKind kind) {
  std::vector<double> w(m);
  for (auto& x : w) {
    if (kind == NoiseKind::three_point) {
      const double u = rng.uniform();
      x = u < 1.0 / 6 ? -std::sqrt(3 * dt) : (u < 2.0 / 6 ? std::sqrt(3 * dt) : 0.0);
    } else {
      x = std::sqrt(dt) * rng.normal();
    }
  }
  return w;
}

template <int N>
std::optional<SprkTableau> sprk_tableau_of(const ConfigFile& cf) {
  const std::string name = cf.str("method.name");
  if (name == "midpoint") return midpoint_tableau();
  if (name == "stormer_verlet") return stormer_verlet_tableau();
  if (name == "dirk") return dirk_tableau(cf.num("method.lambda", 0.5));
  if (name == "sprk") return load_sprk_tableau(resolve_relative(cf, cf.str("method.tableau")));
  return std::nullopt;
}

// Checks and their pass thresholds:
//   symplectic  |D^T W D - W|_inf <= 1e-6 (forcing-free systems; forced systems only report the fitted c)
//   conformal   error of the fitted conformal factor against exp(-nu_0 T - sum nu_i W_i) decreases under
//               refinement dt, dt/2, dt/4 on one Brownian path
//   qs-det      Jacobian determinant within relative 1e-6 of det(I + g (I - g/2)^{-1}), spread <= 1e-8
//   noether     |J_K - J_0| <= 1e-8
//   generating  r_q, r_p <= 1e-5
template <int N>
int structure_impl(const ConfigFile& cf, std::ostream& out, std::ostream& err) {
  const std::string check = cf.str("structure.check");
  const ModelSetup<N> model = build_model<N>(cf);
  SolverConfig strict;
  strict.tol = 1e-14;
  strict.mode = SolverMode::newton;
  const Method<N> method = build_method<N>(cf, strict);
  const auto& sys = model.sys;
  const int m = sys.dim_m();
  const double dt = cf.num("dt", 0.1);
  if (!(dt > 0)) cf.fail("dt", "dt must be positive");
  const std::uint64_t seed = cf.u64("seed", 0);
  PathRng rng(seed, 0);
  const StepMap<N> step = [&](const State<N>& z, double h, std::span<const double> w) {
    return method.step(sys, z, h, w, method.solver);
  };
  auto incompatible = [&](const std::string& msg) {
    err << "error: " << check << ": " << msg << "\n";
    return 1;
  };

  if (check == "symplectic") {
    const std::size_t points = positive_count(cf, "structure.points", 10);
    double worst = 0, cmin = INFINITY, cmax = -INFINITY, force = 0;
    for (std::size_t i = 0; i < points; ++i) {
      const State<N> z = random_state<N>(rng);
      const auto w = random_increments(rng, m, dt, method.noise);
      const auto rep = step_jacobian<N>(step, z, dt, w);
      worst = std::max(worst, rep.unit_residual);
      cmin = std::min(cmin, rep.conformal_factor_fitted);
      cmax = std::max(cmax, rep.conformal_factor_fitted);
      force = std::max(force, sys.F(z).cwiseAbs().maxCoeff());
      for (const auto& c : sys.noise) force = std::max(force, c.f(z).cwiseAbs().maxCoeff());
    }
    out << "symplectic: max |D^T W D - W| = " << sci(worst) << ", fitted c in [" << fmt(cmin) << ", " << fmt(cmax)
        << "]\n";
    if (force > 0) {
      out << "note: the system is forced, so its flow is not symplectic; fitted c reported for information\n";
      return 0;
    }
    return worst <= 1e-6 ? 0 : 3;
  }

  if (check == "conformal") {
    if (!sys.linear_forcing) return incompatible("model has no linear forcing");
    if (method.noise != NoiseKind::wiener) return incompatible("needs a method driven by Wiener increments");
    std::vector<double> nu;
    for (const auto& G : *sys.linear_forcing) {
      const double c = G(0, 0);
      if (!(G - c * Mat<N>::Identity()).isZero(0)) return incompatible("forcing is not a scalar multiple of p");
      nu.push_back(c);
    }
    const double T = cf.num("T", 1.0);
    const double fine = dt / 4;
    const std::size_t Kf = config_steps(cf, fine, T);
    BrownianDriver drv(seed, 0, m, fine);
    const FinePath fp = make_fine_path(drv, Kf);
    const State<N> z0 = random_state<N>(rng);
    const double target = conformal_factor(nu, T, fp.total());
    double prev = INFINITY;
    bool decreasing = true;
    for (std::size_t factor : {4, 2, 1}) {
      const FinePath cp = aggregate_path(fp, factor);
      const double h = fine * static_cast<double>(factor);
      const StepMap<N> flow = [&](const State<N>& z, double, std::span<const double>) {
        State<N> y = z;
        for (std::size_t k = 0; k < cp.steps(); ++k) y = step(y, h, cp.row(k));
        return y;
      };
      const auto rep = step_jacobian<N>(flow, z0, T, std::span<const double>{});
      const double e = std::abs(rep.conformal_factor_fitted - target);
      out << "conformal: dt = " << fmt(h) << "  fitted c = " << fmt(rep.conformal_factor_fitted)
          << "  exact = " << fmt(target) << "  error = " << sci(e) << "  residual = " << sci(rep.symplectic_residual)
          << "\n";
      decreasing = decreasing && e < prev;
      prev = e;
    }
    return decreasing ? 0 : 3;
  }

  if (check == "qs-det") {
    if (method.name != "stormer_verlet") return incompatible("defined for the Stormer-Verlet method only");
    if (!sys.separable) return incompatible("model is not separable");
    if (!sys.linear_forcing) return incompatible("model has no linear forcing");
    const std::size_t points = positive_count(cf, "structure.points", 20);
    const std::size_t draws = positive_count(cf, "structure.noise_draws", 5);
    std::vector<State<N>> states;
    for (std::size_t i = 0; i < points; ++i) states.push_back(random_state<N>(rng));
    double worst_rel = 0, worst_spread = 0;
    for (std::size_t d = 0; d < draws; ++d) {
      const auto w = random_increments(rng, m, dt, NoiseKind::wiener);
      const double expected = quasi_symplectic_det(forcing_increment(sys, dt, w));
      double lo = INFINITY, hi = -INFINITY;
      for (const auto& z : states) {
        const double det = step_jacobian<N>(step, z, dt, w).det;
        lo = std::min(lo, det);
        hi = std::max(hi, det);
        worst_rel = std::max(worst_rel, std::abs(det - expected) / std::abs(expected));
      }
      worst_spread = std::max(worst_spread, hi - lo);
      out << "qs-det: draw " << d << "  expected det = " << fmt(expected) << "  range [" << fmt(lo) << ", " << fmt(hi)
          << "]\n";
    }
    out << "qs-det: max relative deviation = " << sci(worst_rel) << ", max spread = " << sci(worst_spread) << "\n";
    return worst_rel <= 1e-6 && worst_spread <= 1e-8 ? 0 : 3;
  }

  if (check == "noether") {
    if constexpr (N != 2) {
      return incompatible("needs a planar (N = 2) model");
    } else {
      if (sys.name != "central") return incompatible("needs the rotation-symmetric central-force model");
      const std::size_t K = positive_count(cf, "structure.steps", 10000);
      BrownianDriver drv(seed, 0, m, dt, method.increment_mode(), method.truncation.value_or(0));
      State<N> z = model.default_point.value_or(random_state<N>(rng));
      if (cf.has("initial.q") || cf.has("initial.p")) z = point_initial(cf, model);
      const double J0 = momentum_map_so2(z);
      std::vector<double> w(m);
      double worst = 0;
      for (std::size_t k = 0; k < K; ++k) {
        drv.next(w);
        z = step(z, dt, w);
        if (!z.finite()) {
          out << "noether: state diverged at step " << k << "\n";
          return 3;
        }
        worst = std::max(worst, std::abs(momentum_map_so2(z) - J0));
      }
      const double drift = std::abs(momentum_map_so2(z) - J0);
      out << "noether: J_0 = " << fmt(J0) << "  |J_K - J_0| = " << sci(drift) << "  max over path = " << sci(worst)
          << "\n";
      return drift <= 1e-8 ? 0 : 3;
    }
  }

  if (check == "generating") {
    const auto t = sprk_tableau_of<N>(cf);
    if (!t) return incompatible("needs a partitioned Runge-Kutta method with a tableau");
    const std::size_t points = positive_count(cf, "structure.points", 10);
    double rq = 0, rp = 0;
    for (std::size_t i = 0; i < points; ++i) {
      const State<N> z = random_state<N>(rng);
      const auto w = random_increments(rng, m, dt, NoiseKind::wiener);
      const auto g = verify_generating_identity<N>(sys, *t, z, dt, w, method.solver);
      rq = std::max(rq, g.r_q);
      rp = std::max(rp, g.r_p);
    }
    out << "generating: max r_q = " << sci(rq) << ", max r_p = " << sci(rp) << "\n";
    return rq <= 1e-5 && rp <= 1e-5 ? 0 : 3;
  }

  cf.fail("structure.check", "unknown check '" + check + "' (symplectic, conformal, qs-det, noether, generating)");
}

int cmd_structure(const std::string& config_path, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ConfigFile cf = load_config(config_path);
    return dispatch_dim(cf, [&](auto n) { return structure_impl<decltype(n)::value>(cf, out, err); });
  });
}

}  // namespace sdha::cli
