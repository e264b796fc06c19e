#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "uplift/core.hpp"
#include "uplift/environments.hpp"
#include "uplift/policies.hpp"
#include "uplift/spec_io.hpp"

namespace uplift {

enum class Mode { kTuned, kTheory };

enum class InstanceKind { kGaussianPreset, kBernoulliCluster, kLowerBound, kSpecFile, kContextual };

struct InstanceRecipe {
  InstanceKind kind = InstanceKind::kGaussianPreset;
  // lower_bound
  std::size_t K = 0;
  std::size_t m = 0;
  std::vector<double> gaps;
  std::vector<std::size_t> affected_counts;
  LowerBoundVariant variant = LowerBoundVariant::kBlockShared;
  // spec_file
  std::filesystem::path path;
};

/// One policy entry with its parameter grids.
struct PolicyDescriptor {
  PolicyTag tag = PolicyTag::kUpUcbBl;
  std::string label;
  std::vector<double> lambdas;
  std::vector<double> sigma2s;
  std::vector<std::size_t> L_values;     // empty: instance max |V_a|
  std::optional<double> epsilon;         // empty: derived from the instance
  BaselineBound bound = BaselineBound::kUcb;
};

struct ContextualSettings {
  std::size_t m = 100;
  std::size_t d = 5;
  std::size_t Z = 1;
  std::size_t L = 10;
  double lambda_reg = 10.0;
  double S = 1.0;
  bool baseline_known = false;
};

struct ExperimentConfig {
  InstanceRecipe instance;
  double noise_scale = 1.0;
  std::uint64_t horizon = 0;
  std::vector<std::uint64_t> seeds;
  Mode mode = Mode::kTuned;
  double delta = 0.05;
  std::vector<PolicyDescriptor> policies;
  std::filesystem::path output_dir;
  std::size_t threads = 1;
  std::size_t log_points = 200;  // 0 logs every round
  bool write_traces = true;
  ContextualSettings contextual;
};

/// Parses a config document; throws ConfigError naming the offending field.
/// Relative spec paths resolve against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

struct Instance {
  std::shared_ptr<const BanditSpec> spec;
  EnvironmentOptions env_options;
};
Instance build_instance(const ExperimentConfig& cfg);

/// Fully resolved parameters of one grid point.
struct ParamPoint {
  std::string id;
  double lambda = 1.0;
  double delta_tilde = 0.0;  // theory mode only
  double sigma2 = 1.0;
  std::size_t L = 0;
  double epsilon = 0.0;
};

std::vector<ParamPoint> resolve_params(const PolicyDescriptor& p, const ExperimentConfig& cfg, const BanditSpec& spec);
/// Checks T >= K, nonempty seeds, and each policy's knowledge requirements.
void validate_config(const ExperimentConfig& cfg, const BanditSpec& spec);

/// Smallest nonzero |individual uplift| over all actions.
double min_individual_uplift(const BanditSpec& spec);
/// Smallest nonzero |mu^a_v - mu^b_v| over a, v in V_a, b != a.
double min_effect_gap(const BanditSpec& spec);

std::unique_ptr<Policy> make_policy(const PolicyDescriptor& p, const ParamPoint& q, const BanditSpec& spec,
                                    std::uint64_t horizon, std::uint64_t seed);

/// Roughly `points` log-spaced rounds in [1, T], always including T/4, T/2, 3T/4 and T.
std::vector<std::uint64_t> log_grid(std::uint64_t T, std::size_t points);

struct RunRecord {
  std::string policy;
  std::string params_id;
  std::uint64_t seed = 0;
  std::vector<std::size_t> actions;     // at grid rounds (0-based action)
  std::vector<double> cum_regret;       // at grid rounds
  std::vector<std::uint64_t> pull_counts;
  double final_regret = 0.0;
};

/// Single run of one policy on one environment seed, sampled on `grid`.
RunRecord simulate(const Instance& inst, const PolicyDescriptor& p, const ParamPoint& q, std::uint64_t horizon,
                   std::uint64_t seed, const std::vector<std::uint64_t>& grid);

struct SummaryRow {
  std::string policy;
  std::string params_id;
  std::uint64_t t = 0;
  double mean = 0.0;
  double stderr_ = 0.0;
  double std = 0.0;
  double p95 = 0.0;
};

struct Stats {
  double mean = 0.0;
  double std = 0.0;     // population
  double stderr_ = 0.0;
  double p95 = 0.0;     // nearest rank
};
Stats compute_stats(std::vector<double> values);

struct ExperimentResult {
  std::vector<std::uint64_t> grid;
  std::vector<RunRecord> runs;         // sorted by (policy order, param order, seed order)
  std::vector<SummaryRow> summary;
  nlohmann::json resolved;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);
std::vector<SummaryRow> summarize(const std::vector<RunRecord>& runs, const std::vector<std::uint64_t>& grid);

std::string format_double(double x);
void export_csv(const ExperimentResult& result, const std::filesystem::path& dir, bool write_traces = true);
std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path);
std::vector<RunRecord> read_traces_csv(const std::filesystem::path& path, std::vector<std::uint64_t>* grid = nullptr);

struct Selected {
  std::string policy;
  std::string params_id;
  ParamPoint params;
  double mean = 0.0;
  double std = 0.0;
  double p95 = 0.0;
  double score = 0.0;  // mean + std of final regret
};

/// Parameter minimizing mean + 1 std of final regret (first on ties).
std::size_t select_by_score(const std::vector<std::pair<double, double>>& mean_std);
std::vector<Selected> sweep_and_select(const ExperimentConfig& cfg, const ExperimentResult& result);

struct AblationResult {
  ExperimentResult experiment;
  /// One entry per variant, best parameter first by the tuning score.
  std::vector<Selected> best;
};

/// Misspecified L for UpUCB-L and bLCB versus bUCB for UpUCB(wb).
ExperimentConfig ablation_config(const ExperimentConfig& base, const std::vector<std::size_t>& L_values = {5, 8, 10, 15});
AblationResult ablation_suite(const ExperimentConfig& cfg);

/// Output directory default: $UPLIFT_OUT_DIR, else ./uplift_out.
std::filesystem::path default_output_dir();

}  // namespace uplift
