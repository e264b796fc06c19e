#include "uplift/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace uplift {

std::size_t BanditSpec::max_affected_count() const {
  std::size_t out = 0;
  for (const auto& s : affected_sets) out = std::max(out, s.size());
  return out;
}

AffectedSets::AffectedSets(std::size_t num_variables, std::vector<std::vector<std::size_t>> sets)
    : num_variables_(num_variables), sets_(std::move(sets)) {
  mask_.assign(sets_.size() * num_variables_, 0);
  in_all_.assign(num_variables_, sets_.empty() ? 0 : 1);
  for (std::size_t a = 0; a < sets_.size(); ++a) {
    auto& s = sets_[a];
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    for (std::size_t v : s) {
      if (v >= num_variables_) throw std::out_of_range("affected variable index out of range");
      mask_[a * num_variables_ + v] = 1;
    }
  }
  for (std::size_t v = 0; v < num_variables_; ++v) {
    for (std::size_t a = 0; a < sets_.size() && in_all_[v]; ++a) {
      if (!mask_[a * num_variables_ + v]) in_all_[v] = 0;
    }
  }
}

std::size_t AffectedSets::max_size() const {
  std::size_t out = 0;
  for (const auto& s : sets_) out = std::max(out, s.size());
  return out;
}

namespace {

void check_action(const BanditSpec& spec, std::size_t a) {
  if (a >= spec.num_actions || a >= spec.action_means.size()) {
    throw std::out_of_range("action index " + std::to_string(a) + " out of range");
  }
}

}  // namespace

double expected_reward(const BanditSpec& spec, Arm arm) {
  const std::vector<double>* means = &spec.baseline_means;
  if (!arm.is_baseline()) {
    check_action(spec, arm.index());
    means = &spec.action_means[arm.index()];
  }
  double sum = 0.0;
  for (double x : *means) sum += x;
  return sum;
}

double action_uplift(const BanditSpec& spec, std::size_t a) {
  check_action(spec, a);
  double sum = 0.0;
  for (std::size_t v : spec.affected_sets.at(a)) {
    sum += spec.action_means[a].at(v) - spec.baseline_means.at(v);
  }
  return sum;
}

std::vector<double> individual_uplifts(const BanditSpec& spec, std::size_t a) {
  check_action(spec, a);
  std::vector<double> out(spec.num_variables, 0.0);
  for (std::size_t v : spec.affected_sets.at(a)) out.at(v) = spec.action_means[a][v] - spec.baseline_means[v];
  return out;
}

// Gaps go through uplifts rather than full reward sums: with m = 10^5 variables
// the sums lose several digits that the uplifts keep.
Gaps suboptimality_gaps(const BanditSpec& spec) {
  Gaps out;
  std::vector<double> theta(spec.num_actions);
  for (std::size_t a = 0; a < spec.num_actions; ++a) theta[a] = action_uplift(spec, a);
  const double best = theta.empty() ? 0.0 : *std::max_element(theta.begin(), theta.end());
  out.gaps.resize(spec.num_actions);
  for (std::size_t a = 0; a < spec.num_actions; ++a) {
    out.gaps[a] = best - theta[a];
    if (out.gaps[a] > 0.0 && (!out.min_nonzero || out.gaps[a] < *out.min_nonzero)) {
      out.min_nonzero = out.gaps[a];
    }
  }
  return out;
}

RegretTrace regret_of_run(const Gaps& gaps, std::span<const std::size_t> actions) {
  RegretTrace trace;
  trace.actions.assign(actions.begin(), actions.end());
  trace.instant_regret.reserve(actions.size());
  trace.cumulative_regret.reserve(actions.size());
  double cum = 0.0;
  for (std::size_t a : actions) {
    if (a >= gaps.gaps.size()) throw std::out_of_range("action index " + std::to_string(a) + " out of range");
    const double g = gaps.gaps[a];
    cum += g;
    trace.instant_regret.push_back(g);
    trace.cumulative_regret.push_back(cum);
  }
  return trace;
}

RegretTrace regret_of_run(const BanditSpec& spec, std::span<const std::size_t> actions) {
  return regret_of_run(suboptimality_gaps(spec), actions);
}

std::vector<Violation> validate_spec(const BanditSpec& spec) {
  using K = Violation::Kind;
  std::vector<Violation> out;
  const std::size_t m = spec.num_variables;
  if (spec.num_actions == 0 || m == 0) {
    out.push_back({K::kDimension, {}, {}, "num_actions and num_variables must be positive"});
  }
  if (spec.baseline_means.size() != m) {
    out.push_back({K::kDimension, {}, {}, "baseline_means has length " + std::to_string(spec.baseline_means.size())});
  }
  if (spec.action_means.size() != spec.num_actions) {
    out.push_back({K::kDimension, {}, {}, "action_means has " + std::to_string(spec.action_means.size()) + " rows"});
  }
  if (spec.affected_sets.size() != spec.num_actions) {
    out.push_back({K::kDimension, {}, {}, "affected_sets has " + std::to_string(spec.affected_sets.size()) + " entries"});
  }
  if (!out.empty()) return out;

  std::vector<unsigned char> in_set(m);
  for (std::size_t a = 0; a < spec.num_actions; ++a) {
    std::fill(in_set.begin(), in_set.end(), 0);
    for (std::size_t v : spec.affected_sets[a]) {
      if (v >= m) {
        out.push_back({K::kIndexRange, a, v, "affected variable out of range"});
      } else {
        in_set[v] = 1;
      }
    }
    if (spec.action_means[a].size() != m) {
      out.push_back({K::kDimension, a, {}, "action mean vector has wrong length"});
      continue;
    }
    for (std::size_t v = 0; v < m; ++v) {
      if (!in_set[v] && spec.action_means[a][v] != spec.baseline_means[v]) {
        out.push_back({K::kUnaffectedMismatch, a, v, "unaffected variable differs from baseline"});
      }
    }
  }

  if (std::holds_alternative<BernoulliIndependent>(spec.noise)) {
    auto check = [&](std::optional<std::size_t> a, const std::vector<double>& means) {
      for (std::size_t v = 0; v < means.size(); ++v) {
        if (!(means[v] >= 0.0 && means[v] <= 1.0)) {
          out.push_back({K::kBernoulliRange, a, v, "Bernoulli mean outside [0,1]"});
        }
      }
    };
    check({}, spec.baseline_means);
    for (std::size_t a = 0; a < spec.num_actions; ++a) check(a, spec.action_means[a]);
  } else {
    const auto& cov = std::get<GaussianCorrelated>(spec.noise).covariance;
    if (static_cast<std::size_t>(cov.rows()) != m || static_cast<std::size_t>(cov.cols()) != m) {
      out.push_back({K::kCovarianceShape, {}, {}, "covariance must be m x m"});
      return out;
    }
    for (std::size_t i = 0; i < m; ++i) {
      if (!(cov(i, i) <= 1.0) || cov(i, i) < 0.0) {
        out.push_back({K::kCovarianceDiagonal, {}, i, "covariance diagonal outside [0,1]"});
      }
      for (std::size_t j = i + 1; j < m; ++j) {
        if (cov(i, j) != cov(j, i)) {
          out.push_back({K::kCovarianceAsymmetric, {}, i, "covariance not symmetric at column " + std::to_string(j + 1)});
        }
      }
    }
  }
  return out;
}

std::string describe(const Violation& v) {
  std::ostringstream os;
  os << v.message;
  // External coordinates are 1-based.
  if (v.action || v.variable) {
    os << " at (";
    os << (v.action ? std::to_string(*v.action + 1) : std::string("baseline"));
    os << ", " << (v.variable ? std::to_string(*v.variable + 1) : std::string("-")) << ")";
  }
  return os.str();
}

double clip(double x, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("clip: lo > hi");
  return std::max(lo, std::min(hi, x));
}

}  // namespace uplift
