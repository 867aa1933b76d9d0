#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "daso/baseline.hpp"
#include "daso/errors.hpp"
#include "daso/localopt.hpp"
#include "daso/models.hpp"
#include "daso/netsim.hpp"
#include "daso/sync.hpp"
#include "daso/topology.hpp"
#include "daso/training.hpp"

namespace daso {

/// One experiment: drives both the DASO and the baseline trainer.
struct ExperimentConfig {
  ClusterSpec cluster{4, 4};
  TaskKind task = TaskKind::linreg;
  int n = 1024;
  TaskDims dims{10, 16, 2};
  double noise_sd = 0.1;
  SgdConfig optimizer{};
  int lr_warmup_epochs = 5;
  double decay_factor = 0.5;
  PlateauConfig lr_plateau{};
  std::optional<double> world_scale;  // default: world_size / 4
  int B_init = 4;
  std::optional<int> W_init;  // default: max(1, B_init / 4)
  int daso_warmup_epochs = 5;
  int daso_cooldown_epochs = 5;
  QuantFormat blocking_quant = QuantFormat::bf16;
  PlateauConfig bw_plateau{};
  BaselineConfig baseline{};
  CostModel cost{};
  int total_epochs = 50;
  int batch_size_per_rank = 8;
  std::uint64_t seed = 0;
  std::optional<double> loss_target;

  static constexpr int kReferenceWorldSize = 4;

  TrainerConfig trainer() const {
    TrainerConfig t;
    t.cluster = cluster;
    t.sgd = optimizer;
    t.schedule.base_lr = optimizer.lr;
    t.schedule.world_scale =
        world_scale ? *world_scale
                    : static_cast<double>(cluster.world_size()) / kReferenceWorldSize;
    t.schedule.warmup_epochs = lr_warmup_epochs;
    t.schedule.decay_factor = decay_factor;
    t.schedule.plateau = lr_plateau;
    t.cost = cost;
    t.batch_size_per_rank = batch_size_per_rank;
    t.total_epochs = total_epochs;
    t.seed = seed;
    return t;
  }

  DasoConfig daso() const {
    DasoConfig d;
    d.B_init = B_init;
    d.W_init = W_init ? *W_init : DasoConfig::default_wait(B_init);
    d.warmup_epochs = daso_warmup_epochs;
    d.cooldown_epochs = daso_cooldown_epochs;
    d.total_epochs = total_epochs;
    d.blocking_quant = blocking_quant;
    d.plateau = bw_plateau;
    return d;
  }

  SyntheticSpec synthetic() const { return SyntheticSpec{task, n, dims, noise_sd, seed}; }

  Dataset dataset() const { return make_synthetic(synthetic()); }

  void validate() const {
    trainer().validate();
    daso().validate();
    baseline.validate();
    if (n < 1) throw ConfigError("task.n must be >= 1");
    if (dims.d < 1) throw ConfigError("task.d must be >= 1");
    if (dims.hidden < 1) throw ConfigError("task.hidden must be >= 1");
    if (dims.classes < 2) throw ConfigError("task.classes must be >= 2");
    if (!(noise_sd >= 0)) throw ConfigError("task.noise_sd must be >= 0");
    const int world = cluster.world_size();
    if (world > n) throw ConfigError("cluster world size exceeds task.n");
    if (n / world < batch_size_per_rank) {
      throw ConfigError("run.batch_size_per_rank exceeds the per-rank shard size");
    }
  }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct ConfigField {
  std::string section;
  std::string key;
  bool required;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  // Empty optional: key is omitted when serializing.
  std::function<std::optional<std::string>(const ExperimentConfig&)> get;
};

template <class T>
T parse_number(std::string_view text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) throw ConfigError("expected a number, got '" + std::string(text) + "'");
  return value;
}

template <class T, class Member>
ConfigField number_field(std::string section, std::string key, bool required, Member member) {
  return ConfigField{
      std::move(section), std::move(key), required,
      [member](ExperimentConfig& c, std::string_view v) { member(c) = parse_number<T>(v); },
      [member](const ExperimentConfig& c) -> std::optional<std::string> {
        const T v = member(c);
        if constexpr (std::is_floating_point_v<T>) return format_double(v);
        else return std::to_string(v);
      }};
}

template <class T, class Member>
ConfigField optional_number_field(std::string section, std::string key, Member member) {
  return ConfigField{
      std::move(section), std::move(key), false,
      [member](ExperimentConfig& c, std::string_view v) { member(c) = parse_number<T>(v); },
      [member](const ExperimentConfig& c) -> std::optional<std::string> {
        const std::optional<T>& v = member(c);
        if (!v) return std::nullopt;
        if constexpr (std::is_floating_point_v<T>) return format_double(*v);
        else return std::to_string(*v);
      }};
}

inline const std::vector<ConfigField>& config_fields() {
  using C = ExperimentConfig;
  static const std::vector<ConfigField> fields = {
      number_field<int>("cluster", "num_nodes", true, [](auto& c) -> auto& { return c.cluster.num_nodes; }),
      number_field<int>("cluster", "gpus_per_node", true, [](auto& c) -> auto& { return c.cluster.gpus_per_node; }),

      ConfigField{"task", "kind", true,
                  [](C& c, std::string_view v) { c.task = parse_task_kind(v); },
                  [](const C& c) -> std::optional<std::string> { return std::string(to_string(c.task)); }},
      number_field<int>("task", "n", false, [](auto& c) -> auto& { return c.n; }),
      number_field<int>("task", "d", false, [](auto& c) -> auto& { return c.dims.d; }),
      number_field<double>("task", "noise_sd", false, [](auto& c) -> auto& { return c.noise_sd; }),
      number_field<int>("task", "hidden", false, [](auto& c) -> auto& { return c.dims.hidden; }),
      number_field<int>("task", "classes", false, [](auto& c) -> auto& { return c.dims.classes; }),

      number_field<double>("optimizer", "lr", false, [](auto& c) -> auto& { return c.optimizer.lr; }),
      number_field<double>("optimizer", "momentum", false, [](auto& c) -> auto& { return c.optimizer.momentum; }),
      number_field<double>("optimizer", "weight_decay", false, [](auto& c) -> auto& { return c.optimizer.weight_decay; }),

      number_field<int>("schedule", "warmup_epochs", false, [](auto& c) -> auto& { return c.lr_warmup_epochs; }),
      number_field<double>("schedule", "decay_factor", false, [](auto& c) -> auto& { return c.decay_factor; }),
      number_field<int>("schedule", "plateau_window", false, [](auto& c) -> auto& { return c.lr_plateau.window_epochs; }),
      number_field<double>("schedule", "plateau_threshold", false, [](auto& c) -> auto& { return c.lr_plateau.rel_threshold; }),
      optional_number_field<double>("schedule", "world_scale", [](auto& c) -> auto& { return c.world_scale; }),

      number_field<int>("daso", "B_init", false, [](auto& c) -> auto& { return c.B_init; }),
      optional_number_field<int>("daso", "W_init", [](auto& c) -> auto& { return c.W_init; }),
      number_field<int>("daso", "warmup_epochs", false, [](auto& c) -> auto& { return c.daso_warmup_epochs; }),
      number_field<int>("daso", "cooldown_epochs", false, [](auto& c) -> auto& { return c.daso_cooldown_epochs; }),
      ConfigField{"daso", "blocking_quant", false,
                  [](C& c, std::string_view v) { c.blocking_quant = parse_quant_format(v); },
                  [](const C& c) -> std::optional<std::string> { return std::string(to_string(c.blocking_quant)); }},
      number_field<int>("daso", "plateau_window", false, [](auto& c) -> auto& { return c.bw_plateau.window_epochs; }),
      number_field<double>("daso", "plateau_threshold", false, [](auto& c) -> auto& { return c.bw_plateau.rel_threshold; }),

      ConfigField{"baseline", "compression", false,
                  [](C& c, std::string_view v) { c.baseline.compression = parse_quant_format(v); },
                  [](const C& c) -> std::optional<std::string> { return std::string(to_string(c.baseline.compression)); }},
      number_field<std::uint64_t>("baseline", "fusion_bytes", false, [](auto& c) -> auto& { return c.baseline.fusion_bytes; }),

      number_field<double>("cost_model", "alpha_intra", false, [](auto& c) -> auto& { return c.cost.alpha_intra; }),
      number_field<double>("cost_model", "beta_intra", false, [](auto& c) -> auto& { return c.cost.beta_intra; }),
      number_field<double>("cost_model", "alpha_inter", false, [](auto& c) -> auto& { return c.cost.alpha_inter; }),
      number_field<double>("cost_model", "beta_inter", false, [](auto& c) -> auto& { return c.cost.beta_inter; }),
      number_field<double>("cost_model", "compute_per_batch", false, [](auto& c) -> auto& { return c.cost.compute_per_batch; }),

      number_field<int>("run", "total_epochs", true, [](auto& c) -> auto& { return c.total_epochs; }),
      number_field<int>("run", "batch_size_per_rank", false, [](auto& c) -> auto& { return c.batch_size_per_rank; }),
      number_field<std::uint64_t>("run", "seed", false, [](auto& c) -> auto& { return c.seed; }),
      optional_number_field<double>("run", "loss_target", [](auto& c) -> auto& { return c.loss_target; }),
  };
  return fields;
}

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace detail

/// Parses the sectioned key-value format:
///
///   # comment            ; comment
///   [section]
///   key = value          (value may be double-quoted)
///
/// Unknown sections or keys, duplicates, and missing required keys are
/// errors; messages carry `<source>:<line>` and the `section.key` name.
inline ExperimentConfig parse_config(std::string_view text, const std::string& source = "<config>") {
  ExperimentConfig cfg;
  const auto& fields = detail::config_fields();
  std::set<std::string> seen;
  std::string section;
  int line_no = 0;

  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";

    if (const auto c = line.find_first_of("#;"); c != std::string_view::npos) line = line.substr(0, c);
    line = detail::trim(line);
    if (line.empty()) {
      if (eol == text.size()) break;
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = std::string(detail::trim(line.substr(1, line.size() - 2)));
      bool known = false;
      for (const auto& f : fields) known = known || f.section == section;
      if (!known) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key(detail::trim(line.substr(0, eq)));
    std::string_view value = detail::trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (section.empty()) throw ConfigError(where + "key '" + key + "' outside any section");
    const std::string name = section + "." + key;
    const detail::ConfigField* field = nullptr;
    for (const auto& f : fields) {
      if (f.section == section && f.key == key) field = &f;
    }
    if (!field) throw ConfigError(where + "unknown key " + name);
    if (!seen.insert(name).second) throw ConfigError(where + "duplicate key " + name);
    try {
      field->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + name + ": " + e.what());
    }
    if (eol == text.size()) break;
  }

  for (const auto& f : fields) {
    const std::string name = f.section + "." + f.key;
    if (f.required && !seen.count(name)) {
      throw ConfigError(source + ": missing required key " + name);
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

/// Canonical text form; parse(serialize(c)) reproduces c exactly.
inline std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& f : detail::config_fields()) {
    const std::optional<std::string> value = f.get(cfg);
    if (!value) continue;
    if (f.section != section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += f.key + " = " + *value + "\n";
  }
  return out;
}

// FNV-1a 64 of the canonical form, as 16 hex digits.
inline std::string config_digest(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : serialize_config(cfg)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace daso
