#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uplift/core.hpp"
#include "uplift/estimators.hpp"
#include "uplift/rng.hpp"

namespace uplift {

enum class PolicyTag {
  kUcbBaseline,
  kThompsonGaussian,
  kUpUcbBl,
  kUpUcbWb,
  kUpUcbLBl,
  kUpUcbLWb,
  kUpUcbILiftBl,
  kUpUcbILiftWb,
};

std::string_view tag_name(PolicyTag tag);
std::optional<PolicyTag> parse_tag(std::string_view name);

/// What each policy is told about the instance.
struct Requirements {
  bool baseline_means = false;
  bool affected_sets = false;
  bool L_bound = false;
  bool epsilon = false;
};
Requirements requirements(PolicyTag tag);

/// Confidence level used by theory mode for each policy family. `L` is the
/// bound on affected-set sizes the policy works with.
double delta_tilde(PolicyTag tag, std::size_t K, std::size_t m, std::uint64_t T, std::size_t L, double delta);
inline double theory_lambda(PolicyTag tag, std::size_t K, std::size_t m, std::uint64_t T, std::size_t L,
                            double delta) {
  return -std::log(delta_tilde(tag, K, m, T, L, delta));
}

/// Lowest index among the maxima; NaN entries never win.
std::size_t argmax_lowest(std::span<const double> values);

/// Base class: select, then observe. Owns the estimator.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual PolicyTag tag() const = 0;

  /// t must equal estimator().round() + 1.
  std::size_t select(std::uint64_t t);
  void observe(std::size_t a, std::span<const double> payoffs);
  /// n pulls at once; only policies whose state depends on sums alone accept it.
  void observe_batch(std::size_t a, std::uint64_t n, std::span<const double> payoff_sum);

  const EstimatorState& estimator() const { return est_; }
  std::size_t num_actions() const { return est_.num_actions(); }
  std::size_t num_variables() const { return est_.num_variables(); }

 protected:
  explicit Policy(EstimatorState est) : est_(std::move(est)) {}
  /// Called for t > K (or every t when round_robin_init() is false).
  virtual std::size_t choose(std::uint64_t t) = 0;
  virtual void after_observe(std::size_t a, std::span<const double> payoffs) = 0;
  virtual bool supports_batch() const { return false; }
  virtual bool round_robin_init() const { return true; }

  EstimatorState est_;
};

/// Reward-level UCB: mean reward + m * radius.
class UcbBaselinePolicy final : public Policy {
 public:
  UcbBaselinePolicy(std::size_t K, std::size_t m, double lambda);
  PolicyTag tag() const override { return PolicyTag::kUcbBaseline; }
  double index(std::size_t a) const;

 private:
  std::size_t choose(std::uint64_t t) override;
  void after_observe(std::size_t, std::span<const double>) override {}
  bool supports_batch() const override { return true; }
  double lambda_;
  std::vector<double> scratch_;
};

/// Gaussian-prior Thompson sampling on total rewards with noise variance m^2 sigma2.
class ThompsonPolicy final : public Policy {
 public:
  ThompsonPolicy(std::size_t K, std::size_t m, double prior_mean, double prior_var, double sigma2,
                 std::uint64_t seed);
  PolicyTag tag() const override { return PolicyTag::kThompsonGaussian; }
  double posterior_mean(std::size_t a) const { return mean_[a]; }
  double posterior_var(std::size_t a) const { return var_[a]; }
  double noise_var() const { return noise_var_; }

 private:
  std::size_t choose(std::uint64_t t) override;
  void after_observe(std::size_t a, std::span<const double> payoffs) override;
  bool round_robin_init() const override { return false; }
  std::vector<double> mean_;
  std::vector<double> var_;
  double noise_var_;
  CounterRng rng_;
  std::vector<double> scratch_;
};

/// Known baseline and affected sets.
class UpUcbBlPolicy final : public Policy {
 public:
  UpUcbBlPolicy(std::vector<double> baseline_means, std::shared_ptr<const AffectedSets> affected, double lambda);
  PolicyTag tag() const override { return PolicyTag::kUpUcbBl; }
  double index(std::size_t a) const { return index_[a]; }
  double compute_index(std::size_t a) const;

 private:
  std::size_t choose(std::uint64_t t) override;
  void after_observe(std::size_t a, std::span<const double>) override { index_[a] = compute_index(a); }
  bool supports_batch() const override { return true; }
  std::vector<double> mu0_;
  std::shared_ptr<const AffectedSets> affected_;
  double lambda_;
  std::vector<double> index_;
};

enum class BaselineBound { kUcb, kLcb };

/// Known affected sets, estimated baseline. kLcb is the ablation variant.
class UpUcbWbPolicy final : public Policy {
 public:
  UpUcbWbPolicy(std::shared_ptr<const AffectedSets> affected, double lambda, BaselineBound bound = BaselineBound::kUcb);
  PolicyTag tag() const override { return PolicyTag::kUpUcbWb; }
  BaselineBound bound() const { return bound_; }
  double index(std::size_t a) const;
  /// Baseline term subtracted for variable v (0 when every action affects v).
  double baseline_term(std::size_t v) const;

 private:
  std::size_t choose(std::uint64_t t) override;
  void after_observe(std::size_t, std::span<const double>) override {}
  bool supports_batch() const override { return true; }
  std::shared_ptr<const AffectedSets> affected_;
  double lambda_;
  BaselineBound bound_;
  std::vector<double> scratch_;
};

struct LIndex {
  double value = 0.0;
  std::vector<std::size_t> identified;  // sorted
  std::vector<std::size_t> padding;     // sorted
  std::size_t pivot = 0;                // only meaningful for the wb variant
};

/// Picks up to `count` entries of `scores` outside `excluded` with the largest
/// score (ties to the lowest index), optionally only strictly positive ones.
std::vector<std::size_t> top_scores(std::span<const double> scores, std::span<const unsigned char> excluded,
                                    std::size_t count, bool positive_only);

/// Known baseline, unknown affected sets with |V_a| <= L.
class UpUcbLBlPolicy final : public Policy {
 public:
  UpUcbLBlPolicy(std::size_t K, std::vector<double> baseline_means, std::size_t L, double lambda);
  PolicyTag tag() const override { return PolicyTag::kUpUcbLBl; }
  std::size_t L() const { return L_; }
  const LIndex& details(std::size_t a) const { return cache_[a]; }
  LIndex compute(std::size_t a) const;

 private:
  std::size_t choose(std::uint64_t t) override;
  void after_observe(std::size_t a, std::span<const double>) override { cache_[a] = compute(a); }
  bool supports_batch() const override { return true; }
  std::vector<double> mu0_;
  std::size_t L_;
  double lambda_;
  std::vector<LIndex> cache_;
};

/// Neither baseline nor affected sets known; the most-pulled action stands in
/// for the baseline.
class UpUcbLWbPolicy final : public Policy {
 public:
  UpUcbLWbPolicy(std::size_t K, std::size_t m, std::size_t L, double lambda);
  PolicyTag tag() const override { return PolicyTag::kUpUcbLWb; }
  std::size_t L() const { return L_; }
  std::size_t pivot() const;
  LIndex compute(std::size_t a) const { return compute(a, pivot()); }
  LIndex compute(std::size_t a, std::size_t pivot) const;

 private:
  std::size_t choose(std::uint64_t t) override;
  void after_observe(std::size_t, std::span<const double>) override {}
  bool supports_batch() const override { return true; }
  std::size_t L_;
  double lambda_;
  std::vector<double> scratch_;
};

/// Known baseline; individual uplifts are either 0 or at least epsilon in size.
class UpUcbILiftBlPolicy final : public Policy {
 public:
  UpUcbILiftBlPolicy(std::size_t K, std::vector<double> baseline_means, double epsilon, double lambda);
  PolicyTag tag() const override { return PolicyTag::kUpUcbILiftBl; }
  std::uint64_t n0() const { return n0_; }
  double epsilon() const { return epsilon_; }
  /// Current identified set of a (sorted); all variables until a reaches n0 pulls.
  const std::vector<std::size_t>& identified(std::size_t a) const { return identified_[a]; }
  double index(std::size_t a) const { return index_[a]; }

 private:
  std::size_t choose(std::uint64_t t) override;
  void after_observe(std::size_t a, std::span<const double>) override;
  bool supports_batch() const override { return true; }
  double compute_index(std::size_t a) const;
  std::vector<double> mu0_;
  double epsilon_;
  double lambda_;
  std::uint64_t n0_;
  std::vector<std::vector<std::size_t>> identified_;
  std::vector<double> index_;
};

/// Successive elimination, then an uplift UCB over the survivors.
class UpUcbILiftWbPolicy final : public Policy {
 public:
  enum class Phase { kEliminate, kUpUcb };

  UpUcbILiftWbPolicy(std::size_t K, std::size_t m, double epsilon, double lambda, std::uint64_t horizon);
  PolicyTag tag() const override { return PolicyTag::kUpUcbILiftWb; }
  Phase phase() const { return phase_; }
  std::uint64_t n0() const { return n0_; }
  /// Current elimination round (1-based) while in the first phase.
  std::uint64_t rho() const { return rho_; }
  const std::vector<std::size_t>& active() const { return active_; }
  /// Estimated baseline-like actions at v; frozen at the phase switch.
  const std::vector<std::size_t>& baseline_like(std::size_t v) const { return b_hat_.at(v); }
  const std::vector<std::size_t>& estimated_affected(std::size_t a) const { return v_hat_.at(a); }
  double index(std::size_t a) const;
  double slack(std::uint64_t rho) const;

 private:
  std::size_t choose(std::uint64_t t) override;
  void after_observe(std::size_t a, std::span<const double>) override;
  bool round_robin_init() const override { return false; }
  void finish_round();
  void switch_phase();
  double ucb0(std::size_t v) const;

  double epsilon_;
  double lambda_;
  std::uint64_t horizon_;
  std::uint64_t n0_;
  Phase phase_ = Phase::kEliminate;
  std::uint64_t rho_ = 1;
  std::size_t pos_ = 0;
  std::vector<std::size_t> active_;
  std::vector<std::vector<std::size_t>> b_hat_;
  std::vector<std::vector<std::size_t>> v_hat_;
  std::vector<double> scratch_;
};

}  // namespace uplift
