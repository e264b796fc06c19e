#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "uplift/harness.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

struct Overrides {
  std::string seeds;
  std::optional<std::uint64_t> horizon;
  std::string out;
  std::optional<std::size_t> threads;
  std::optional<std::size_t> log_grid;
};

// "100" is seeds 1..100, "3,7,9" a list, "base:count" a range.
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  auto num = [&](const std::string& s) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != s.size()) throw uplift::ConfigError("--seeds", "bad seed value '" + s + "'");
    return static_cast<std::uint64_t>(v);
  };
  if (const auto colon = text.find(':'); colon != std::string::npos) {
    const auto base = num(text.substr(0, colon));
    const auto count = num(text.substr(colon + 1));
    for (std::uint64_t i = 0; i < count; ++i) out.push_back(base + i);
  } else if (text.find(',') != std::string::npos) {
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto comma = text.find(',', start);
      out.push_back(num(text.substr(start, comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  } else {
    const auto count = num(text);
    for (std::uint64_t i = 1; i <= count; ++i) out.push_back(i);
  }
  if (out.empty()) throw uplift::ConfigError("--seeds", "no seeds given");
  return out;
}

uplift::ExperimentConfig load_with_overrides(const std::string& path, const Overrides& o) {
  auto cfg = uplift::load_config(path);
  if (!o.seeds.empty()) cfg.seeds = parse_seeds(o.seeds);
  if (o.horizon) {
    if (*o.horizon == 0) throw uplift::ConfigError("--horizon", "must be positive");
    cfg.horizon = *o.horizon;
  }
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.threads) cfg.threads = std::max<std::size_t>(1, *o.threads);
  if (o.log_grid) cfg.log_points = *o.log_grid;
  return cfg;
}

void print_finals(const uplift::ExperimentResult& res) {
  for (const auto& row : res.summary) {
    if (row.t != res.grid.back()) continue;
    std::printf("%-24s %-28s mean=%-12.6g stderr=%-10.4g p95=%.6g\n", row.policy.c_str(), row.params_id.c_str(),
                row.mean, row.stderr_, row.p95);
  }
}

nlohmann::json selected_json(const std::vector<uplift::Selected>& sel) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : sel) {
    out.push_back({{"policy", s.policy},
                   {"params_id", s.params_id},
                   {"mean", s.mean},
                   {"std", s.std},
                   {"p95", s.p95},
                   {"score", s.score}});
  }
  return out;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

int cmd_run(const std::string& path, const Overrides& o, bool sweep) {
  const auto cfg = load_with_overrides(path, o);
  const auto res = uplift::run_experiment(cfg);
  uplift::export_csv(res, cfg.output_dir, cfg.write_traces);
  print_finals(res);
  if (sweep) {
    const auto sel = uplift::sweep_and_select(cfg, res);
    write_json(cfg.output_dir / "selected.json", selected_json(sel));
    std::printf("\nselected (mean + std of final regret):\n");
    for (const auto& s : sel) {
      std::printf("%-24s %-28s score=%.6g\n", s.policy.c_str(), s.params_id.c_str(), s.score);
    }
  }
  std::printf("wrote %s\n", cfg.output_dir.string().c_str());
  return kOk;
}

int cmd_ablation(const std::string& path, const Overrides& o) {
  const auto cfg = load_with_overrides(path, o);
  const auto res = uplift::ablation_suite(cfg);
  uplift::export_csv(res.experiment, cfg.output_dir, cfg.write_traces);
  write_json(cfg.output_dir / "ablation.json", selected_json(res.best));
  for (const auto& s : res.best) {
    std::printf("%-24s best %-22s mean=%-12.6g p95=%.6g\n", s.policy.c_str(), s.params_id.c_str(), s.mean, s.p95);
  }
  std::printf("wrote %s\n", cfg.output_dir.string().c_str());
  return kOk;
}

int cmd_validate(const std::string& path) {
  const auto doc = uplift::read_json_file(path);
  if (doc.is_object() && doc.contains("instance")) {
    const auto cfg = uplift::parse_config(doc, std::filesystem::path(path).parent_path());
    if (cfg.instance.kind != uplift::InstanceKind::kContextual) {
      const auto inst = uplift::build_instance(cfg);
      uplift::validate_config(cfg, *inst.spec);
    }
    std::printf("config ok\n");
    return kOk;
  }
  const auto spec = uplift::spec_from_json(doc);
  const auto violations = uplift::validate_spec(spec);
  for (const auto& v : violations) std::printf("%s\n", uplift::describe(v).c_str());
  if (!violations.empty()) return kConfigError;
  std::printf("spec ok: K=%zu m=%zu max|V_a|=%zu\n", spec.num_actions, spec.num_variables,
              spec.max_affected_count());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uplifting bandit simulation harness"};
  app.require_subcommand(1);
  Overrides o;
  std::string path;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", path, "Experiment config (JSON)")->required();
    sub->add_option("--seeds", o.seeds, "N (seeds 1..N), a comma list, or base:count");
    sub->add_option("--horizon", o.horizon, "Number of rounds T");
    sub->add_option("--out", o.out, "Output directory (default $UPLIFT_OUT_DIR or ./uplift_out)");
    sub->add_option("--threads", o.threads, "Worker threads");
    sub->add_option("--log-grid", o.log_grid, "Log-spaced grid points (0 logs every round)");
  };
  auto* run = app.add_subcommand("run", "Run every policy and parameter point over all seeds");
  add_common(run);
  auto* sweep = app.add_subcommand("sweep", "Run, then select the best parameter per policy");
  add_common(sweep);
  auto* ablation = app.add_subcommand("ablation", "Misspecified-L and baseline LCB ablations");
  add_common(ablation);
  auto* validate = app.add_subcommand("validate", "Check a config or an instance spec");
  validate->add_option("file", path, "Config or spec (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*run) return cmd_run(path, o, false);
    if (*sweep) return cmd_run(path, o, true);
    if (*ablation) return cmd_ablation(path, o);
    if (*validate) return cmd_validate(path);
  } catch (const uplift::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntimeError;
  }
  return kRuntimeError;
}
