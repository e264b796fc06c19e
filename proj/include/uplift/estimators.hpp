#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "uplift/core.hpp"

namespace uplift {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// sqrt(2 lambda / count); +inf at count 0. Throws on lambda <= 0.
double radius(std::uint64_t count, double lambda);

/// x - y where an infinite operand wins: inf - anything = inf, finite - inf = -inf.
inline double sat_sub(double x, double y) {
  if (x == kInf) return kInf;
  if (y == kInf) return -kInf;
  return x - y;
}

struct ConfidenceInterval {
  double center = 0.0;
  double radius = kInf;

  double lo() const { return radius == kInf ? -kInf : center - radius; }
  double hi() const { return radius == kInf ? kInf : center + radius; }
  bool contains(double x) const { return lo() <= x && x <= hi(); }
};

/// Closed intervals: touching endpoints intersect.
inline bool intersects(const ConfidenceInterval& p, const ConfidenceInterval& q) {
  return p.lo() <= q.hi() && q.lo() <= p.hi();
}
inline bool disjoint(const ConfidenceInterval& p, const ConfidenceInterval& q) { return !intersects(p, q); }

/// Running counts and sums for every (action, variable) pair, plus the pooled
/// baseline statistics when the affected sets are known.
class EstimatorState {
 public:
  EstimatorState(std::size_t num_actions, std::size_t num_variables,
                 std::shared_ptr<const AffectedSets> affected = nullptr);

  void observe(std::size_t a, std::span<const double> payoffs);
  /// Records n pulls of a whose payoff vectors add up to `payoff_sum`.
  void observe_batch(std::size_t a, std::uint64_t n, std::span<const double> payoff_sum);

  std::size_t num_actions() const { return num_actions_; }
  std::size_t num_variables() const { return num_variables_; }
  std::uint64_t round() const { return round_; }
  bool tracks_baseline() const { return affected_ != nullptr; }
  const AffectedSets* affected() const { return affected_.get(); }

  std::uint64_t pull_count(std::size_t a) const { return pull_counts_[a]; }
  double payoff_sum(std::size_t a, std::size_t v) const { return sums_[a * num_variables_ + v]; }
  /// Sum over rounds of the observed total reward of a.
  double reward_sum(std::size_t a) const { return reward_sums_[a]; }
  std::uint64_t baseline_count(std::size_t v) const { return baseline_counts_.at(v); }
  double baseline_sum(std::size_t v) const { return baseline_sums_.at(v); }

  double mean_estimate(std::size_t a, std::size_t v) const {
    return payoff_sum(a, v) / static_cast<double>(std::max<std::uint64_t>(1, pull_counts_[a]));
  }
  double baseline_mean_estimate(std::size_t v) const {
    return baseline_sums_.at(v) / static_cast<double>(std::max<std::uint64_t>(1, baseline_counts_[v]));
  }
  double mean_reward(std::size_t a) const {
    return reward_sums_[a] / static_cast<double>(std::max<std::uint64_t>(1, pull_counts_[a]));
  }

  /// mean_estimate(a, v) + radius(N_a): the plain per-pair UCB used by the
  /// policies that do not know the affected sets.
  double ucb(std::size_t a, std::size_t v, double lambda) const {
    const double r = radius(pull_counts_[a], lambda);
    return r == kInf ? kInf : mean_estimate(a, v) + r;
  }
  double baseline_ucb(std::size_t v, double lambda) const {
    const double r = radius(baseline_counts_.at(v), lambda);
    return r == kInf ? kInf : baseline_mean_estimate(v) + r;
  }

  /// Three-case index: baseline on a variable every action touches is 0;
  /// an action on one of its own variables uses its own statistics; the
  /// baseline elsewhere uses the pooled estimator. Querying an action on a
  /// variable it does not affect is a contract violation.
  double ucb_index(Arm arm, std::size_t v, double lambda) const;

  ConfidenceInterval confidence_interval(std::size_t a, std::size_t v, double lambda) const {
    return {mean_estimate(a, v), radius(pull_counts_[a], lambda)};
  }
  ConfidenceInterval baseline_confidence_interval(std::size_t v, double lambda) const {
    return {baseline_mean_estimate(v), radius(baseline_counts_.at(v), lambda)};
  }

 private:
  std::size_t num_actions_;
  std::size_t num_variables_;
  std::shared_ptr<const AffectedSets> affected_;
  std::uint64_t round_ = 0;
  std::vector<std::uint64_t> pull_counts_;
  std::vector<double> sums_;
  std::vector<double> reward_sums_;
  std::vector<std::uint64_t> baseline_counts_;
  std::vector<double> baseline_sums_;
};

}  // namespace uplift
