#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "daso/baseline.hpp"
#include "daso/config.hpp"
#include "daso/daso_trainer.hpp"
#include "daso/errors.hpp"
#include "daso/training.hpp"
#include "daso/verification.hpp"

namespace daso {

inline constexpr const char* kSeedEnvVar = "DASO_SIM_SEED";

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitDivergence = 2 };

inline constexpr const char* kMetricsHeader =
    "epoch,batch,phase,sim_time_s,train_loss,eval_metric,lr,B,W,inter_bytes_cum,intra_bytes_cum";

// 12 significant digits.
inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

// Rounds through the 12-digit text form so JSON output is stable.
inline double rounded(double v) { return std::strtod(format_number(v).c_str(), nullptr); }

struct RunSummary {
  std::string method;
  double final_loss = 0.0;
  double best_eval = 0.0;
  double total_sim_time_s = 0.0;
  std::uint64_t total_inter_bytes = 0;
  std::uint64_t total_intra_bytes = 0;
  std::optional<int> epochs_to_target;
  std::string config_digest;
  std::uint64_t seed = 0;
  std::optional<std::string> divergence;
};

inline RunSummary summarize(const RunResult& result, const ExperimentConfig& cfg) {
  RunSummary s;
  s.method = result.method;
  s.total_sim_time_s = result.sim_time_s;
  s.total_inter_bytes = result.counters.inter_bytes;
  s.total_intra_bytes = result.counters.intra_bytes;
  s.config_digest = config_digest(cfg);
  s.seed = cfg.seed;
  s.divergence = result.divergence;
  bool have_eval = false;
  for (const MetricsRow& row : result.rows) {
    if (row.batch != -1) continue;
    s.final_loss = row.train_loss;
    if (row.eval_metric && (!have_eval || *row.eval_metric > s.best_eval)) {
      s.best_eval = *row.eval_metric;
      have_eval = true;
    }
    if (cfg.loss_target && !s.epochs_to_target && row.train_loss <= *cfg.loss_target) {
      s.epochs_to_target = row.epoch;
    }
  }
  return s;
}

inline nlohmann::ordered_json to_json(const RunSummary& s) {
  nlohmann::ordered_json j;
  j["method"] = s.method;
  j["final_loss"] = rounded(s.final_loss);
  j["best_eval"] = rounded(s.best_eval);
  j["total_sim_time_s"] = rounded(s.total_sim_time_s);
  j["total_inter_bytes"] = s.total_inter_bytes;
  j["total_intra_bytes"] = s.total_intra_bytes;
  j["epochs_to_target"] =
      s.epochs_to_target ? nlohmann::ordered_json(*s.epochs_to_target) : nlohmann::ordered_json(nullptr);
  j["config_digest"] = s.config_digest;
  j["seed"] = s.seed;
  j["divergence"] =
      s.divergence ? nlohmann::ordered_json(*s.divergence) : nlohmann::ordered_json(nullptr);
  return j;
}

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const MetricsRow& r : rows) {
    out += std::to_string(r.epoch) + "," + std::to_string(r.batch) + "," + r.phase + "," +
           format_number(r.sim_time_s) + "," + format_number(r.train_loss) + "," +
           (r.eval_metric ? format_number(*r.eval_metric) : std::string()) + "," +
           format_number(r.lr) + "," + std::to_string(r.B) + "," + std::to_string(r.W) + "," +
           std::to_string(r.inter_bytes_cum) + "," + std::to_string(r.intra_bytes_cum) + "\n";
  }
  return out;
}

// Write to a temporary sibling, then rename over the target.
inline void write_atomically(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// Applies DASO_SIM_SEED when set.
inline void apply_env_overrides(ExperimentConfig& cfg) {
  if (const char* env = std::getenv(kSeedEnvVar); env && *env) {
    try {
      cfg.seed = detail::parse_number<std::uint64_t>(env);
    } catch (const ConfigError&) {
      throw ConfigError(std::string(kSeedEnvVar) + ": expected an unsigned integer, got '" + env + "'");
    }
  }
}

inline ExperimentConfig load_experiment(const std::string& config_path) {
  ExperimentConfig cfg = load_config(config_path);
  apply_env_overrides(cfg);
  return cfg;
}

enum class Method { daso, baseline };

inline Method parse_method(std::string_view s) {
  if (s == "daso") return Method::daso;
  if (s == "baseline") return Method::baseline;
  throw ConfigError("unknown method '" + std::string(s) + "' (expected daso or baseline)");
}

inline RunResult run_method(const ExperimentConfig& cfg, const Dataset& data, Method method,
                            const RunOptions& options = {}) {
  if (method == Method::daso) return run_daso(cfg.trainer(), data, cfg.daso(), options);
  return run_baseline(cfg.trainer(), data, cfg.baseline, options);
}

namespace detail {

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    err << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace detail

/// Writes <out>/metrics.csv and <out>/summary.json.
inline int cmd_run(const std::string& config_path, const std::string& method,
                   const std::string& out_dir, std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    const Method m = parse_method(method);
    const ExperimentConfig cfg = load_experiment(config_path);
    const RunResult result = run_method(cfg, cfg.dataset(), m);
    const std::filesystem::path out(out_dir);
    write_atomically(out / "metrics.csv", metrics_csv(result.rows));
    write_atomically(out / "summary.json", to_json(summarize(result, cfg)).dump(2) + "\n");
    if (result.divergence) {
      err << "divergence: " << *result.divergence << "\n";
      return static_cast<int>(kExitDivergence);
    }
    return static_cast<int>(kExitOk);
  });
}

struct Comparison {
  RunSummary daso;
  RunSummary baseline;
  double time_ratio = 0.0;
  std::optional<double> inter_traffic_ratio;  // undefined when the baseline moves no bytes
};

inline Comparison compare(const ExperimentConfig& cfg) {
  const Dataset data = cfg.dataset();
  Comparison c;
  c.daso = summarize(run_method(cfg, data, Method::daso), cfg);
  c.baseline = summarize(run_method(cfg, data, Method::baseline), cfg);
  c.time_ratio = c.daso.total_sim_time_s / c.baseline.total_sim_time_s;
  if (c.baseline.total_inter_bytes > 0) {
    c.inter_traffic_ratio = static_cast<double>(c.daso.total_inter_bytes) /
                            static_cast<double>(c.baseline.total_inter_bytes);
  }
  return c;
}

/// Runs both methods on one config; writes <out>/compare.json.
inline int cmd_compare(const std::string& config_path, const std::string& out_dir,
                       std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    const ExperimentConfig cfg = load_experiment(config_path);
    const Comparison c = compare(cfg);
    nlohmann::ordered_json j;
    j["daso"] = to_json(c.daso);
    j["baseline"] = to_json(c.baseline);
    j["time_ratio"] = rounded(c.time_ratio);
    j["inter_traffic_ratio"] =
        c.inter_traffic_ratio ? nlohmann::ordered_json(rounded(*c.inter_traffic_ratio))
                              : nlohmann::ordered_json(nullptr);
    write_atomically(std::filesystem::path(out_dir) / "compare.json", j.dump(2) + "\n");
    if (c.daso.divergence || c.baseline.divergence) return static_cast<int>(kExitDivergence);
    return static_cast<int>(kExitOk);
  });
}

struct SmoothnessReport {
  double L = 0.0;
  double eta = 0.0;
  int steps = 0;
  int violations = 0;
  double control_L = 0.0;
  int control_violations = 0;
};

/// Descent-lemma check on a random quadratic with eta = 1/(2L), plus a
/// negative control that under-states L by a factor of 100.
inline SmoothnessReport run_smoothness_check(std::uint64_t seed, int steps = 1000) {
  Rng rng(derive_seed(seed, 0x736d6f6f7468));  // "smooth"
  constexpr double kL = 4.0;
  const QuadraticProblem q = random_quadratic(10, kL / 10.0, kL, rng);
  ParamVector x0(10);
  for (double& v : x0) v = rng.normal(0.0, 3.0);
  const double eta = 1.0 / (2.0 * kL);
  const auto traj = quadratic_descent(q, x0, eta, steps);
  SmoothnessReport r;
  r.L = kL;
  r.eta = eta;
  r.steps = steps;
  r.violations = smoothness_bound_check(SmoothnessProbe{kL, steps}, traj, eta);
  r.control_L = kL / 100.0;
  r.control_violations = smoothness_bound_check(SmoothnessProbe{r.control_L, steps}, traj, eta);
  return r;
}

inline constexpr double kFormTolerance = 1e-12;
inline constexpr double kVerifyEta = 0.1;

/// Appendix-style checks; writes <out>/verify.json. Exit 0 iff every S = 1
/// record agrees to 1e-12 under some convention and the descent check
/// reports no violations.
inline int cmd_verify(const std::string& out_dir, std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    constexpr std::uint64_t kSeed = 20210601;
    bool ok = true;
    nlohmann::ordered_json records = nlohmann::ordered_json::array();
    for (int S : {1, 2, 4}) {
      for (int P : {1, 2, 4}) {
        const FormReport r = check_forms_agree(S, P, kVerifyEta, kSeed);
        if (S == 1 && !(r.max_abs_diff <= kFormTolerance)) ok = false;
        nlohmann::ordered_json rec;
        rec["S"] = r.S;
        rec["P"] = r.P;
        rec["eta"] = r.eta;
        rec["diff_sent_at_t"] = rounded(r.diff_sent_at_t);
        rec["diff_after_one_step"] = rounded(r.diff_after_one_step);
        rec["max_abs_diff"] = rounded(r.max_abs_diff);
        rec["best_convention"] = r.best_convention;
        rec["convention_note"] = r.convention_note;
        records.push_back(rec);
      }
    }
    const SmoothnessReport sm = run_smoothness_check(kSeed);
    if (sm.violations != 0) ok = false;

    nlohmann::ordered_json j;
    j["forms"] = records;
    j["smoothness"] = {{"L", sm.L},
                       {"eta", sm.eta},
                       {"steps", sm.steps},
                       {"violations", sm.violations},
                       {"negative_control", {{"L", sm.control_L}, {"violations", sm.control_violations}}}};
    j["pass"] = ok;
    write_atomically(std::filesystem::path(out_dir) / "verify.json", j.dump(2) + "\n");
    if (!ok) err << "verify: checks failed, see verify.json\n";
    return ok ? static_cast<int>(kExitOk) : static_cast<int>(kExitConfig);
  });
}

/// Strong-scaling sweep over node counts; per-rank batch size stays fixed.
/// Writes <out>/sweep.csv.
inline int cmd_sweep(const std::string& config_path, const std::vector<int>& nodes,
                     const std::string& out_dir, std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    const ExperimentConfig base = load_experiment(config_path);
    if (nodes.empty()) throw ConfigError("sweep needs at least one node count");
    std::string csv = "num_nodes,method,total_sim_time_s,final_loss,total_inter_bytes\n";
    bool diverged = false;
    for (int k : nodes) {
      ExperimentConfig cfg = base;
      cfg.cluster.num_nodes = k;
      try {
        cfg.validate();
      } catch (const ConfigError& e) {
        throw ConfigError("num_nodes=" + std::to_string(k) + ": " + e.what());
      }
      const Comparison c = compare(cfg);
      for (const RunSummary* s : {&c.daso, &c.baseline}) {
        csv += std::to_string(k) + "," + s->method + "," + format_number(s->total_sim_time_s) +
               "," + format_number(s->final_loss) + "," + std::to_string(s->total_inter_bytes) +
               "\n";
        diverged = diverged || s->divergence.has_value();
      }
    }
    write_atomically(std::filesystem::path(out_dir) / "sweep.csv", csv);
    return diverged ? static_cast<int>(kExitDivergence) : static_cast<int>(kExitOk);
  });
}

}  // namespace daso
