#include "uplift/estimators.hpp"

#include <cmath>
#include <stdexcept>

namespace uplift {

double radius(std::uint64_t count, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  if (count == 0) return kInf;
  return std::sqrt(2.0 * lambda / static_cast<double>(count));
}

EstimatorState::EstimatorState(std::size_t num_actions, std::size_t num_variables,
                               std::shared_ptr<const AffectedSets> affected)
    : num_actions_(num_actions),
      num_variables_(num_variables),
      affected_(std::move(affected)),
      pull_counts_(num_actions, 0),
      sums_(num_actions * num_variables, 0.0),
      reward_sums_(num_actions, 0.0) {
  if (affected_) {
    if (affected_->num_actions() != num_actions || affected_->num_variables() != num_variables) {
      throw std::invalid_argument("affected sets do not match the estimator dimensions");
    }
    baseline_counts_.assign(num_variables, 0);
    baseline_sums_.assign(num_variables, 0.0);
  }
}

void EstimatorState::observe(std::size_t a, std::span<const double> payoffs) {
  observe_batch(a, 1, payoffs);
}

void EstimatorState::observe_batch(std::size_t a, std::uint64_t n, std::span<const double> payoff_sum) {
  if (a >= num_actions_) throw std::out_of_range("action index out of range");
  if (payoff_sum.size() != num_variables_) throw std::invalid_argument("payoff vector has wrong length");
  round_ += n;
  pull_counts_[a] += n;
  double* row = &sums_[a * num_variables_];
  double total = 0.0;
  for (std::size_t v = 0; v < num_variables_; ++v) {
    row[v] += payoff_sum[v];
    total += payoff_sum[v];
  }
  reward_sums_[a] += total;
  if (affected_) {
    for (std::size_t v = 0; v < num_variables_; ++v) {
      if (!affected_->contains(a, v)) {
        baseline_counts_[v] += n;
        baseline_sums_[v] += payoff_sum[v];
      }
    }
  }
}

double EstimatorState::ucb_index(Arm arm, std::size_t v, double lambda) const {
  if (!affected_) throw std::logic_error("ucb_index needs the affected sets");
  if (arm.is_baseline()) {
    if (affected_->affected_by_all(v)) return 0.0;
    return baseline_ucb(v, lambda);
  }
  if (!affected_->contains(arm.index(), v)) throw std::logic_error("action index queried outside its affected set");
  return ucb(arm.index(), v, lambda);
}

}  // namespace uplift
