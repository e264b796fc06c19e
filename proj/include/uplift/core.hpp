#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace uplift {

/// Either one of the K actions (0-based) or pure observation.
class Arm {
 public:
  static constexpr Arm baseline() { return Arm(kBaselineTag); }
  static constexpr Arm action(std::size_t index) { return Arm(index); }

  constexpr bool is_baseline() const { return value_ == kBaselineTag; }
  std::size_t index() const {
    if (is_baseline()) throw std::logic_error("Arm::index() on baseline");
    return value_;
  }
  friend constexpr bool operator==(Arm, Arm) = default;

 private:
  static constexpr std::size_t kBaselineTag = static_cast<std::size_t>(-1);
  constexpr explicit Arm(std::size_t v) : value_(v) {}
  std::size_t value_;
};

/// One covariance shared by every action and the baseline.
struct GaussianCorrelated {
  Eigen::MatrixXd covariance;
};
/// Independent Bernoulli payoffs; means are success probabilities.
struct BernoulliIndependent {};

using NoiseModel = std::variant<GaussianCorrelated, BernoulliIndependent>;

/// Ground truth of a (K, m)-uplifting bandit.
///
/// Variables outside an action's affected set must carry the baseline mean
/// bit-for-bit; `validate_spec` reports any breach.
struct BanditSpec {
  std::size_t num_actions = 0;
  std::size_t num_variables = 0;
  std::vector<double> baseline_means;
  std::vector<std::vector<double>> action_means;
  std::vector<std::vector<std::size_t>> affected_sets;
  NoiseModel noise = BernoulliIndependent{};

  std::size_t affected_count(std::size_t a) const { return affected_sets.at(a).size(); }
  std::size_t max_affected_count() const;
  bool is_gaussian() const { return std::holds_alternative<GaussianCorrelated>(noise); }
};

/// Dense membership index over the affected sets, shared by estimators and
/// policies that are told which variables each action touches.
class AffectedSets {
 public:
  AffectedSets(std::size_t num_variables, std::vector<std::vector<std::size_t>> sets);
  explicit AffectedSets(const BanditSpec& spec)
      : AffectedSets(spec.num_variables, spec.affected_sets) {}

  std::size_t num_actions() const { return sets_.size(); }
  std::size_t num_variables() const { return num_variables_; }
  std::span<const std::size_t> of(std::size_t a) const { return sets_[a]; }
  std::size_t size(std::size_t a) const { return sets_[a].size(); }
  std::size_t max_size() const;
  bool contains(std::size_t a, std::size_t v) const { return mask_[a * num_variables_ + v] != 0; }
  /// True when v belongs to every affected set (its baseline is never observed).
  bool affected_by_all(std::size_t v) const { return in_all_[v] != 0; }

 private:
  std::size_t num_variables_;
  std::vector<std::vector<std::size_t>> sets_;
  std::vector<unsigned char> mask_;
  std::vector<unsigned char> in_all_;
};

struct RegretTrace {
  std::vector<std::size_t> actions;
  std::vector<double> instant_regret;
  std::vector<double> cumulative_regret;

  std::size_t horizon() const { return actions.size(); }
  double final_regret() const { return cumulative_regret.empty() ? 0.0 : cumulative_regret.back(); }
};

struct Gaps {
  std::vector<double> gaps;
  std::optional<double> min_nonzero;
};

struct Violation {
  enum class Kind {
    kDimension,
    kIndexRange,
    kUnaffectedMismatch,
    kBernoulliRange,
    kCovarianceShape,
    kCovarianceAsymmetric,
    kCovarianceDiagonal,
  };
  Kind kind;
  std::optional<std::size_t> action;
  std::optional<std::size_t> variable;
  std::string message;
};

double expected_reward(const BanditSpec& spec, Arm arm);
double action_uplift(const BanditSpec& spec, std::size_t a);
std::vector<double> individual_uplifts(const BanditSpec& spec, std::size_t a);
Gaps suboptimality_gaps(const BanditSpec& spec);
/// Expected regret of an action sequence; gaps are taken from `suboptimality_gaps`.
RegretTrace regret_of_run(const BanditSpec& spec, std::span<const std::size_t> actions);
RegretTrace regret_of_run(const Gaps& gaps, std::span<const std::size_t> actions);
std::vector<Violation> validate_spec(const BanditSpec& spec);
std::string describe(const Violation& v);

/// max(lo, min(hi, x)); throws std::invalid_argument when lo > hi.
double clip(double x, double lo, double hi);

}  // namespace uplift
