#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "hmclab/csv.hpp"
#include "hmclab/experiments.hpp"

namespace hmclab {
namespace config {

using nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

/// Schema violations exit with code 2, violated numerical guarantees with 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalAssertion : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void check_keys(const json& obj, const std::set<std::string>& allowed,
                       const std::string& context) {
  if (!obj.is_object()) throw ConfigError(context + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError(context + ": unknown key '" + it.key() + "'");
}

template <typename T>
T require(const json& obj, const std::string& key, const std::string& context) {
  if (!obj.contains(key)) throw ConfigError(context + ": missing key '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(context + ": key '" + key + "' has the wrong type");
  }
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback, const std::string& context) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(context + ": key '" + key + "' has the wrong type");
  }
}

inline Vec vec_of(const json& arr, const std::string& context) {
  if (!arr.is_array()) throw ConfigError(context + ": expected an array");
  Vec v(arr.size());
  for (size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) throw ConfigError(context + ": expected numbers");
    v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  }
  return v;
}

inline Mat mat_of(const json& arr, const std::string& context) {
  if (!arr.is_array() || arr.empty()) throw ConfigError(context + ": expected a matrix");
  const size_t rows = arr.size();
  Vec first = vec_of(arr[0], context);
  Mat m(rows, first.size());
  m.row(0) = first;
  for (size_t i = 1; i < rows; ++i) {
    Vec row = vec_of(arr[i], context);
    if (row.size() != m.cols()) throw ConfigError(context + ": ragged matrix");
    m.row(static_cast<Eigen::Index>(i)) = row;
  }
  return m;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace detail

inline Potential parse_potential(const json& j, const std::string& context = "potential") {
  using detail::check_keys;
  using detail::get_or;
  using detail::require;
  if (!j.is_object()) throw ConfigError(context + ": expected an object");
  const std::string family = require<std::string>(j, "family", context);
  if (family == "quadratic") {
    check_keys(j, {"family", "matrix"}, context);
    return quadratic_potential(detail::mat_of(j.at("matrix"), context + ".matrix"));
  }
  if (family == "double_well_1d") {
    check_keys(j, {"family", "scale", "half_width"}, context);
    return double_well_1d(get_or(j, "scale", 1.0, context), get_or(j, "half_width", 2.0, context));
  }
  if (family == "mexican_hat_2d") {
    check_keys(j, {"family", "scale", "half_width"}, context);
    return mexican_hat_2d(get_or(j, "scale", 1.0, context), get_or(j, "half_width", 2.0, context));
  }
  if (family == "zero") {
    check_keys(j, {"family", "dim"}, context);
    return zero_potential(require<int>(j, "dim", context));
  }
  if (family == "mean_field") {
    check_keys(j, {"family", "p", "particles", "confinement", "interaction"}, context);
    const int p = require<int>(j, "p", context);
    const int N = require<int>(j, "particles", context);
    meanfield::MeanFieldSpec spec(p, N, parse_potential(j.at("confinement"), context + ".confinement"),
                                  parse_potential(j.at("interaction"), context + ".interaction"));
    return meanfield::build_meanfield(spec);
  }
  throw ConfigError(context + ": unknown family '" + family + "'");
}

inline StepLaw parse_step_law(const json& j, const std::string& context) {
  using detail::require;
  detail::check_keys(j, {"kind", "t", "t0", "t1", "atoms", "weights"}, context);
  const std::string kind = require<std::string>(j, "kind", context);
  if (kind == "fixed") return StepLaw::fixed(require<double>(j, "t", context));
  if (kind == "uniform")
    return StepLaw::uniform(require<double>(j, "t0", context), require<double>(j, "t1", context));
  if (kind == "discrete")
    return StepLaw::discrete(require<std::vector<double>>(j, "atoms", context),
                             require<std::vector<double>>(j, "weights", context));
  throw ConfigError(context + ": unknown step law '" + kind + "'");
}

inline ChainParams parse_chain(const json& j, const std::string& context = "chain") {
  using detail::get_or;
  detail::check_keys(j, {"t", "eta", "placement", "step_law", "integrator", "allow_large_t"}, context);
  ChainParams params;
  params.t = detail::require<double>(j, "t", context);
  params.eta = get_or(j, "eta", 0.0, context);
  params.allow_large_t = get_or(j, "allow_large_t", false, context);
  const std::string pl = get_or<std::string>(j, "placement", "refresh_then_flow", context);
  if (pl == "refresh_then_flow")
    params.placement = RefreshPlacement::refresh_then_flow;
  else if (pl == "flow_then_refresh")
    params.placement = RefreshPlacement::flow_then_refresh;
  else if (pl == "refresh_flow_refresh")
    params.placement = RefreshPlacement::refresh_flow_refresh;
  else
    throw ConfigError(context + ": unknown placement '" + pl + "'");
  if (j.contains("step_law")) params.step_law = parse_step_law(j.at("step_law"), context + ".step_law");
  if (j.contains("integrator")) {
    const json& ji = j.at("integrator");
    detail::check_keys(ji, {"method", "tolerance", "verlet_steps"}, context + ".integrator");
    const std::string method = get_or<std::string>(ji, "method", "reference", context);
    if (method == "reference")
      params.integrator.method = IntegratorMethod::reference;
    else if (method == "verlet")
      params.integrator.method = IntegratorMethod::verlet;
    else
      throw ConfigError(context + ".integrator: unknown method '" + method + "'");
    params.integrator.tolerance = get_or(ji, "tolerance", 1e-10, context);
    params.integrator.verlet_steps = get_or(ji, "verlet_steps", 16, context);
  }
  return params;
}

inline experiments::StateSampler parse_initial(const json& j, Eigen::Index dim,
                                               const std::string& context = "initial") {
  using detail::get_or;
  detail::check_keys(j, {"x", "v", "x_mean", "x_std", "v_std"}, context);
  if (j.contains("x")) {
    Vec x = detail::vec_of(j.at("x"), context + ".x");
    Vec v = j.contains("v") ? detail::vec_of(j.at("v"), context + ".v") : Vec(Vec::Zero(x.size()));
    if (x.size() != dim || v.size() != dim) throw ConfigError(context + ": dimension mismatch");
    return [x, v](RngStream&) { return PhaseState(x, v); };
  }
  Vec mean = j.contains("x_mean") ? detail::vec_of(j.at("x_mean"), context + ".x_mean")
                                  : Vec(Vec::Zero(dim));
  if (mean.size() != dim) throw ConfigError(context + ": x_mean dimension mismatch");
  const double xs = get_or(j, "x_std", 1.0, context);
  const double vs = get_or(j, "v_std", 1.0, context);
  return [mean, xs, vs, dim](RngStream& rng) {
    return PhaseState(mean + xs * rng.normal_vector(dim), vs * rng.normal_vector(dim));
  };
}

struct RunResult {
  std::string csv;
  std::string text;  // human-readable summary, printed by the CLI
};

namespace detail {

inline RunResult run_run(const json& j, std::uint64_t seed, int /*threads*/) {
  check_keys(j, {"experiment", "seed", "output", "potential", "chain", "steps", "initial"}, "config");
  Potential p = parse_potential(j.at("potential"));
  ChainParams params = parse_chain(j.at("chain"));
  const int steps = require<int>(j, "steps", "config");
  auto init = parse_initial(j.contains("initial") ? j.at("initial") : json::object(), p.dim());
  RngStream rng(seed);
  PhaseState z0 = init(rng);
  auto traj = run_trajectory(p, params, z0, steps, rng);
  std::vector<std::string> header{"step"};
  for (Eigen::Index i = 0; i < p.dim(); ++i) header.push_back("x" + std::to_string(i));
  for (Eigen::Index i = 0; i < p.dim(); ++i) header.push_back("v" + std::to_string(i));
  header.push_back("U");
  header.push_back("x_sq");
  CsvWriter csv(header);
  for (const auto& rec : traj) {
    std::vector<double> row{static_cast<double>(rec.step)};
    for (Eigen::Index i = 0; i < p.dim(); ++i) row.push_back(rec.state.x[i]);
    for (Eigen::Index i = 0; i < p.dim(); ++i) row.push_back(rec.state.v[i]);
    row.push_back(rec.potential);
    row.push_back(rec.x_squared);
    csv.add_row(row);
  }
  return {csv.str(), "trajectory: " + std::to_string(traj.size()) + " records\n"};
}

inline RunResult run_certify(const json& j, std::uint64_t, int) {
  check_keys(j, {"experiment", "seed", "output", "inputs"}, "config");
  const json& ji = j.at("inputs");
  check_keys(ji, {"t", "eta", "L", "L_H", "c_ls", "a"}, "inputs");
  certify::RateInputs raw;
  raw.t = require<double>(ji, "t", "inputs");
  raw.eta = get_or(ji, "eta", 0.0, "inputs");
  raw.hessian_bound = get_or(ji, "L", 1.0, "inputs");
  raw.hessian_lipschitz = get_or(ji, "L_H", 0.0, "inputs");
  raw.c_ls = get_or(ji, "c_ls", 1.0, "inputs");
  certify::RescaleReport rr{};
  certify::RateInputs unit = certify::rescale_to_unit(raw, &rr);
  if (ji.contains("a") && ji.at("a").is_number()) {
    unit.fisher_weight = ji.at("a").get<double>();
  } else {
    const std::string mode = get_or<std::string>(ji, "a", "rule", "inputs");
    if (mode == "rule")
      unit.fisher_weight = certify::fisher_weight_rule(unit.friction());
    else if (mode == "optimize")
      unit.fisher_weight = certify::optimize_fisher_weight(unit.t, unit.eta);
    else
      throw ConfigError("inputs.a: expected a number, 'rule' or 'optimize'");
  }
  const auto cert = certify::dissipation_rate(unit);
  const auto reg = certify::one_step_regularization(unit.t, unit.eta, unit.hessian_lipschitz);
  CsvWriter csv({"t", "eta", "rescaled_t", "fisher_weight", "gain_position", "coupling",
                 "gain_velocity", "rate", "contraction_factor", "valid", "meets_rule_guarantee",
                 "one_step_regularization"});
  csv.add_row({raw.t, raw.eta, unit.t, unit.fisher_weight, cert.gain_position, cert.coupling,
               cert.gain_velocity, cert.rate, cert.contraction_factor, cert.valid ? 1.0 : 0.0,
               cert.meets_rule_guarantee ? 1.0 : 0.0, reg.constant});
  std::string text = "certificate: rate=" + CsvWriter::format_double(cert.rate) +
                     " factor=" + CsvWriter::format_double(cert.contraction_factor) +
                     (cert.valid ? " (valid)" : " (INVALID)") + "\n";
  return {csv.str(), text};
}

inline RunResult run_gaussian(const json& j, std::uint64_t, int) {
  check_keys(j, {"experiment", "seed", "output", "P", "t_grid", "eta_grid", "steps", "initial_mean",
                 "initial_cov"},
             "config");
  Mat P = mat_of(j.at("P"), "P");
  const auto ts = require<std::vector<double>>(j, "t_grid", "config");
  const auto etas = require<std::vector<double>>(j, "eta_grid", "config");
  const int steps = require<int>(j, "steps", "config");
  const auto d2 = 2 * P.rows();
  Vec mean = j.contains("initial_mean") ? vec_of(j.at("initial_mean"), "initial_mean")
                                        : Vec(Vec::Constant(d2, 1.0));
  Mat cov = j.contains("initial_cov") ? mat_of(j.at("initial_cov"), "initial_cov")
                                      : Mat(2.0 * Mat::Identity(d2, d2));
  gauss::GaussianLaw nu0(mean, cov);
  auto rows = experiments::dissipation_grid(P, ts, etas, nu0, steps);
  CsvWriter csv({"t", "eta", "k", "kl", "fisher", "mixed_fisher", "modified_entropy",
                 "certified_factor", "observed_ratio"});
  bool violated = false;
  for (const auto& r : rows) {
    csv.add_row({r.t, r.eta, static_cast<double>(r.k), r.kl, r.fisher, r.mixed_fisher,
                 r.modified_entropy, r.certified_factor, r.observed_ratio});
    if (r.observed_ratio > r.certified_factor * (1.0 + 1e-9)) violated = true;
  }
  if (violated)
    throw NumericalAssertion("gaussian: observed contraction ratio exceeded the certified factor");
  return {csv.str(), "gaussian sweep: " + std::to_string(rows.size()) + " rows, bound held\n"};
}

inline RunResult run_couple(const json& j, std::uint64_t seed, int) {
  check_keys(j, {"experiment", "seed", "output", "potential", "chain", "pairs", "n",
                 "spread", "estimate_jacobian"},
             "config");
  Potential p = parse_potential(j.at("potential"));
  ChainParams params = parse_chain(j.at("chain"));
  const int pairs = get_or(j, "pairs", 10, "config");
  const int n = require<int>(j, "n", "config");
  const double spread = get_or(j, "spread", 1.0, "config");
  const bool want_jac = get_or(j, "estimate_jacobian", false, "config");
  RngStream rng(seed);
  CsvWriter csv({"pair", "merge_residual", "half_sq_displacement", "bound_rhs", "grad_op_norm",
                 "grad_frobenius_sq"});
  const auto rc = certify::n_step_regularization(params.t, params.eta, p.hessian_lipschitz(), n);
  bool failed = false;
  for (int i = 0; i < pairs; ++i) {
    RngStream sub = rng.substream(i);
    PhaseState z(spread * sub.normal_vector(p.dim()), sub.normal_vector(p.dim()));
    PhaseState zp(spread * sub.normal_vector(p.dim()), sub.normal_vector(p.dim()));
    auto nc = coupling::n_step_coupling(p, params, z, zp, n, sub);
    const double rhs =
        rc.density_constant * ((zp.x - z.x).squaredNorm() +
                               rc.velocity_weight * rc.velocity_weight * (zp.v - z.v).squaredNorm());
    double opn = 0.0, fro = 0.0;
    if (want_jac) {
      auto est = coupling::coupling_jacobian_fd(p, params, z, zp, nc);
      opn = est.op_norm_minus_identity;
      fro = est.frobenius_sq_minus_identity;
    }
    csv.add_row({static_cast<double>(i), nc.merge_residual, nc.half_sq_displacement, rhs, opn, fro});
    if (nc.merge_residual > 1e-7) failed = true;
  }
  if (failed) throw NumericalAssertion("couple: a merge residual exceeded 1e-7");
  return {csv.str(), "coupled " + std::to_string(pairs) + " pairs, all merged\n"};
}

inline RunResult run_anneal(const json& j, std::uint64_t seed, int threads) {
  check_keys(j, {"experiment", "seed", "output", "potential", "schedule", "steps", "replicas",
                 "checkpoints", "thresholds", "initial", "critical_depth"},
             "config");
  Potential p = parse_potential(j.at("potential"));
  const json& js = j.at("schedule");
  check_keys(js, {"beta0", "c_hat", "gamma", "q", "L0"}, "schedule");
  anneal::AnnealSchedule sched;
  sched.beta0 = require<double>(js, "beta0", "schedule");
  sched.c_hat = get_or(js, "c_hat", std::numeric_limits<double>::infinity(), "schedule");
  sched.gamma = require<double>(js, "gamma", "schedule");
  sched.q = require<double>(js, "q", "schedule");
  sched.L0 = get_or(js, "L0", p.hessian_bound(), "schedule");
  const long steps = require<long>(j, "steps", "config");
  const int replicas = get_or(j, "replicas", 100, "config");
  auto init = parse_initial(j.contains("initial") ? j.at("initial") : json::object(), p.dim());
  std::vector<long> checkpoints;
  if (j.contains("checkpoints")) {
    checkpoints = require<std::vector<long>>(j, "checkpoints", "config");
  } else {
    for (long c = 1; c <= steps; c *= 10) checkpoints.push_back(c);
    if (checkpoints.empty() || checkpoints.back() != steps) checkpoints.push_back(steps);
  }
  std::vector<double> thresholds;
  if (j.contains("thresholds")) {
    thresholds = require<std::vector<double>>(j, "thresholds", "config");
  } else if (p.dim() <= 2 && p.box()) {
    const double cs = anneal::critical_depth(p, *p.box(), 0.01).c_star;
    thresholds = {0.1 * cs, 0.5 * cs, 1.0 * cs};
  } else {
    thresholds = {0.1, 0.5, 1.0};
  }
  auto rep = experiments::anneal_experiment(p, sched, init, steps, checkpoints, thresholds,
                                            replicas, RngStream(seed), threads);
  std::vector<std::string> header{"n", "beta", "t", "eta", "U_q10", "U_q50", "U_q90"};
  for (size_t i = 0; i < thresholds.size(); ++i)
    header.push_back("exceed_" + CsvWriter::format_double(thresholds[i]));
  CsvWriter csv(header);
  for (const auto& r : rep.rows) {
    std::vector<double> row{static_cast<double>(r.step), r.beta, r.t, r.eta,
                            r.energy_q10, r.energy_q50, r.energy_q90};
    for (double f : r.exceed_fraction) row.push_back(f);
    csv.add_row(row);
  }
  return {csv.str(), "annealed " + std::to_string(replicas) + " replicas over " +
                         std::to_string(steps) + " steps\n"};
}

inline RunResult run_meanfield(const json& j, std::uint64_t seed, int threads) {
  check_keys(j, {"experiment", "seed", "output", "p", "confinement", "interaction", "chain",
                 "N_list", "reference_N", "k", "steps", "replicas", "reference_replicas",
                 "initial_particle"},
             "config");
  const int pdim = require<int>(j, "p", "config");
  meanfield::MeanFieldSpec spec(pdim, 2, parse_potential(j.at("confinement"), "confinement"),
                                parse_potential(j.at("interaction"), "interaction"));
  ChainParams params = parse_chain(j.at("chain"));
  meanfield::ChaosConfig cc;
  cc.N_list = get_or(j, "N_list", std::vector<int>{16, 64}, "config");
  cc.reference_N = get_or(j, "reference_N", 256, "config");
  cc.k = get_or(j, "k", 1, "config");
  cc.n_steps = require<int>(j, "steps", "config");
  cc.replicas = get_or(j, "replicas", 256, "config");
  cc.reference_replicas = get_or(j, "reference_replicas", 64, "config");
  cc.threads = threads;
  auto init = parse_initial(
      j.contains("initial_particle") ? j.at("initial_particle") : json::object(), pdim);
  auto rep = meanfield::chaos_experiment(spec, params, init, cc, RngStream(seed));
  CsvWriter csv({"N", "n", "k", "w2_estimate", "bootstrap_lo", "bootstrap_hi"});
  for (const auto& r : rep.rows)
    csv.add_row({static_cast<double>(r.N), static_cast<double>(cc.n_steps),
                 static_cast<double>(rep.k), r.w2sq, r.lo, r.hi});
  return {csv.str(), "chaos slope " + CsvWriter::format_double(rep.slope) + " in [" +
                         CsvWriter::format_double(rep.slope_lo) + ", " +
                         CsvWriter::format_double(rep.slope_hi) + "]\n"};
}

inline RunResult run_verlet_error(const json& j, std::uint64_t seed, int threads) {
  check_keys(j, {"experiment", "seed", "output", "potential", "chain", "steps",
                 "verlet_steps_list", "replicas", "initial"},
             "config");
  Potential p = parse_potential(j.at("potential"));
  ChainParams params = parse_chain(j.at("chain"));
  const int steps = require<int>(j, "steps", "config");
  const auto Ks = get_or(j, "verlet_steps_list", std::vector<int>{4, 8, 16, 32}, "config");
  const int replicas = get_or(j, "replicas", 100, "config");
  auto init = parse_initial(j.contains("initial") ? j.at("initial") : json::object(), p.dim());
  auto rep = experiments::verlet_error_experiment(p, params, init, steps, Ks, replicas,
                                                  RngStream(seed), threads);
  CsvWriter csv({"delta", "verlet_steps", "mean_error", "mean_sq_error", "moment_ratio_p2",
                 "slope_p1", "slope_p2"});
  for (const auto& r : rep.rows)
    csv.add_row({r.delta, static_cast<double>(r.verlet_steps), r.mean_error, r.mean_sq_error,
                 r.moment_ratio_p2, rep.slope_p1, rep.slope_p2});
  return {csv.str(), "verlet error slopes: p1=" + CsvWriter::format_double(rep.slope_p1) +
                         " p2=" + CsvWriter::format_double(rep.slope_p2) + "\n"};
}

}  // namespace detail

struct Invocation {
  std::string experiment;          // must match config's "experiment"
  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> out_override;
  int threads = 0;
};

struct Outcome {
  std::string output_path;
  std::string text;
};

inline Outcome run(const Invocation& inv) {
  std::ifstream f(inv.config_path);
  if (!f) throw ConfigError("cannot open config file: " + inv.config_path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  const std::string kind = detail::require<std::string>(j, "experiment", "config");
  if (kind != inv.experiment)
    throw ConfigError("config experiment '" + kind + "' does not match subcommand '" +
                      inv.experiment + "'");
  const std::uint64_t seed =
      inv.seed_override ? *inv.seed_override : detail::get_or<std::uint64_t>(j, "seed", 0, "config");
  const std::string out = inv.out_override
                              ? *inv.out_override
                              : detail::get_or<std::string>(j, "output", kind + ".csv", "config");

  RunResult res;
  if (kind == "run")
    res = detail::run_run(j, seed, inv.threads);
  else if (kind == "certify")
    res = detail::run_certify(j, seed, inv.threads);
  else if (kind == "gaussian")
    res = detail::run_gaussian(j, seed, inv.threads);
  else if (kind == "couple")
    res = detail::run_couple(j, seed, inv.threads);
  else if (kind == "anneal")
    res = detail::run_anneal(j, seed, inv.threads);
  else if (kind == "meanfield")
    res = detail::run_meanfield(j, seed, inv.threads);
  else if (kind == "verlet_error")
    res = detail::run_verlet_error(j, seed, inv.threads);
  else
    throw ConfigError("unknown experiment kind: " + kind);

  std::ofstream of(out, std::ios::binary);
  if (!of) throw ConfigError("cannot write output file: " + out);
  of << res.csv;
  of.close();

  json manifest;
  manifest["experiment"] = kind;
  manifest["seed"] = seed;
  manifest["config_hash"] = detail::fnv1a(j.dump());
  manifest["version"] = kVersion;
  manifest["output"] = out;
  std::ofstream mf(out + ".manifest.json", std::ios::binary);
  mf << manifest.dump(2) << "\n";
  return {out, res.text};
}

}  // namespace config
}  // namespace hmclab
