#include "uplift/policies.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace uplift {

namespace {

constexpr std::array<std::pair<PolicyTag, std::string_view>, 8> kTagNames = {{
    {PolicyTag::kUcbBaseline, "UCB_BASELINE"},
    {PolicyTag::kThompsonGaussian, "THOMPSON_GAUSSIAN"},
    {PolicyTag::kUpUcbBl, "UPUCB_BL"},
    {PolicyTag::kUpUcbWb, "UPUCB_WB"},
    {PolicyTag::kUpUcbLBl, "UPUCB_L_BL"},
    {PolicyTag::kUpUcbLWb, "UPUCB_L_WB"},
    {PolicyTag::kUpUcbILiftBl, "UPUCB_ILIFT_BL"},
    {PolicyTag::kUpUcbILiftWb, "UPUCB_ILIFT_WB"},
}};

void require_positive(double x, const char* what) {
  if (!(x > 0.0)) throw std::invalid_argument(std::string(what) + " must be positive");
}

std::uint64_t ceil_count(double x) {
  if (!(x >= 0.0)) throw std::invalid_argument("count must be nonnegative");
  if (x >= 1.8e19) return UINT64_MAX;
  return static_cast<std::uint64_t>(std::ceil(x));
}

}  // namespace

std::string_view tag_name(PolicyTag tag) {
  for (const auto& [t, name] : kTagNames) {
    if (t == tag) return name;
  }
  return "UNKNOWN";
}

std::optional<PolicyTag> parse_tag(std::string_view name) {
  for (const auto& [t, n] : kTagNames) {
    if (n == name) return t;
  }
  return std::nullopt;
}

Requirements requirements(PolicyTag tag) {
  switch (tag) {
    case PolicyTag::kUpUcbBl: return {true, true, false, false};
    case PolicyTag::kUpUcbWb: return {false, true, false, false};
    case PolicyTag::kUpUcbLBl: return {true, false, true, false};
    case PolicyTag::kUpUcbLWb: return {false, false, true, false};
    case PolicyTag::kUpUcbILiftBl: return {true, false, false, true};
    case PolicyTag::kUpUcbILiftWb: return {false, false, false, true};
    default: return {};
  }
}

double delta_tilde(PolicyTag tag, std::size_t K, std::size_t m, std::uint64_t T, std::size_t L, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0,1)");
  const double k = static_cast<double>(K);
  const double t = static_cast<double>(T);
  switch (tag) {
    case PolicyTag::kUpUcbWb: return delta / (4.0 * k * static_cast<double>(std::max<std::size_t>(L, 1)) * t);
    case PolicyTag::kUpUcbLBl:
    case PolicyTag::kUpUcbLWb:
    case PolicyTag::kUpUcbILiftBl:
    case PolicyTag::kUpUcbILiftWb: return delta / (2.0 * k * static_cast<double>(m) * t);
    default: return delta / (2.0 * k * t);
  }
}

std::size_t argmax_lowest(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax of empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best] || (std::isnan(values[best]) && !std::isnan(values[i]))) best = i;
  }
  return best;
}

std::vector<std::size_t> top_scores(std::span<const double> scores, std::span<const unsigned char> excluded,
                                    std::size_t count, bool positive_only) {
  std::vector<std::size_t> cand;
  for (std::size_t v = 0; v < scores.size(); ++v) {
    if (excluded.empty() || !excluded[v]) {
      if (!positive_only || scores[v] > 0.0) cand.push_back(v);
    }
  }
  if (count < cand.size()) {
    auto better = [&](std::size_t x, std::size_t y) {
      return scores[x] > scores[y] || (scores[x] == scores[y] && x < y);
    };
    std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(count), cand.end(), better);
    cand.resize(count);
    std::sort(cand.begin(), cand.end());
  }
  return cand;
}

// -- Policy ------------------------------------------------------------------

std::size_t Policy::select(std::uint64_t t) {
  if (t != est_.round() + 1) throw std::logic_error("select called out of order");
  if (round_robin_init() && t <= est_.num_actions()) return static_cast<std::size_t>(t - 1);
  return choose(t);
}

void Policy::observe(std::size_t a, std::span<const double> payoffs) {
  est_.observe(a, payoffs);
  after_observe(a, payoffs);
}

void Policy::observe_batch(std::size_t a, std::uint64_t n, std::span<const double> payoff_sum) {
  if (!supports_batch()) throw std::logic_error("policy does not accept batched observations");
  est_.observe_batch(a, n, payoff_sum);
  after_observe(a, {});
}

// -- UCB on rewards ------------------------------------------------------------

UcbBaselinePolicy::UcbBaselinePolicy(std::size_t K, std::size_t m, double lambda)
    : Policy(EstimatorState(K, m)), lambda_(lambda), scratch_(K) {
  require_positive(lambda, "lambda");
}

double UcbBaselinePolicy::index(std::size_t a) const {
  const double r = radius(est_.pull_count(a), lambda_);
  return r == kInf ? kInf : est_.mean_reward(a) + static_cast<double>(num_variables()) * r;
}

std::size_t UcbBaselinePolicy::choose(std::uint64_t) {
  for (std::size_t a = 0; a < num_actions(); ++a) scratch_[a] = index(a);
  return argmax_lowest(scratch_);
}

// -- Thompson sampling ---------------------------------------------------------

ThompsonPolicy::ThompsonPolicy(std::size_t K, std::size_t m, double prior_mean, double prior_var, double sigma2,
                               std::uint64_t seed)
    : Policy(EstimatorState(K, m)),
      mean_(K, prior_mean),
      var_(K, prior_var),
      noise_var_(static_cast<double>(m) * static_cast<double>(m) * sigma2),
      rng_(seed, Stream::kPolicy),
      scratch_(K) {
  require_positive(sigma2, "sigma2");
  if (prior_var < 0.0) throw std::invalid_argument("prior variance must be nonnegative");
}

std::size_t ThompsonPolicy::choose(std::uint64_t) {
  for (std::size_t a = 0; a < num_actions(); ++a) {
    const double z = rng_.normal();
    scratch_[a] = var_[a] == 0.0 ? mean_[a] : mean_[a] + std::sqrt(var_[a]) * z;
  }
  return argmax_lowest(scratch_);
}

void ThompsonPolicy::after_observe(std::size_t a, std::span<const double> payoffs) {
  double y = 0.0;
  for (double x : payoffs) y += x;
  const double v = var_[a];
  if (v == 0.0) return;
  if (v == kInf) {
    var_[a] = noise_var_;
    mean_[a] = y;
    return;
  }
  const double post = 1.0 / (1.0 / v + 1.0 / noise_var_);
  mean_[a] = post * (mean_[a] / v + y / noise_var_);
  var_[a] = post;
}

// -- UpUCB, known baseline ------------------------------------------------------

UpUcbBlPolicy::UpUcbBlPolicy(std::vector<double> baseline_means, std::shared_ptr<const AffectedSets> affected,
                             double lambda)
    : Policy(EstimatorState(affected->num_actions(), affected->num_variables())),
      mu0_(std::move(baseline_means)),
      affected_(std::move(affected)),
      lambda_(lambda),
      index_(affected_->num_actions(), kInf) {
  require_positive(lambda, "lambda");
  if (mu0_.size() != num_variables()) throw std::invalid_argument("baseline means have wrong length");
  for (std::size_t a = 0; a < num_actions(); ++a) index_[a] = compute_index(a);
}

double UpUcbBlPolicy::compute_index(std::size_t a) const {
  const double r = radius(est_.pull_count(a), lambda_);
  double g = 0.0;
  for (std::size_t v : affected_->of(a)) g += est_.mean_estimate(a, v) + r - mu0_[v];
  return g;
}

std::size_t UpUcbBlPolicy::choose(std::uint64_t) { return argmax_lowest(index_); }

// -- UpUCB, estimated baseline ------------------------------------------------------

UpUcbWbPolicy::UpUcbWbPolicy(std::shared_ptr<const AffectedSets> affected, double lambda, BaselineBound bound)
    : Policy(EstimatorState(affected->num_actions(), affected->num_variables(), affected)),
      affected_(std::move(affected)),
      lambda_(lambda),
      bound_(bound),
      scratch_(affected_->num_actions()) {
  require_positive(lambda, "lambda");
}

double UpUcbWbPolicy::baseline_term(std::size_t v) const {
  if (bound_ == BaselineBound::kUcb) return est_.ucb_index(Arm::baseline(), v, lambda_);
  if (affected_->affected_by_all(v)) return 0.0;
  const double r = radius(est_.baseline_count(v), lambda_);
  return r == kInf ? -kInf : est_.baseline_mean_estimate(v) - r;
}

double UpUcbWbPolicy::index(std::size_t a) const {
  double g = 0.0;
  for (std::size_t v : affected_->of(a)) {
    const double u = est_.ucb(a, v, lambda_);
    const double b = baseline_term(v);
    // An unexplored baseline under the LCB variant subtracts -inf.
    g += b == -kInf ? kInf : sat_sub(u, b);
  }
  return g;
}

std::size_t UpUcbWbPolicy::choose(std::uint64_t) {
  for (std::size_t a = 0; a < num_actions(); ++a) scratch_[a] = index(a);
  return argmax_lowest(scratch_);
}

// -- UpUCB-L, known baseline ------------------------------------------------------

UpUcbLBlPolicy::UpUcbLBlPolicy(std::size_t K, std::vector<double> baseline_means, std::size_t L, double lambda)
    : Policy(EstimatorState(K, baseline_means.size())), mu0_(std::move(baseline_means)), L_(L), lambda_(lambda) {
  require_positive(lambda, "lambda");
  cache_.reserve(K);
  for (std::size_t a = 0; a < K; ++a) cache_.push_back(compute(a));
}

LIndex UpUcbLBlPolicy::compute(std::size_t a) const {
  const std::size_t m = num_variables();
  LIndex out;
  std::vector<double> u(m);
  std::vector<unsigned char> in_i(m, 0);
  const double r = radius(est_.pull_count(a), lambda_);
  for (std::size_t v = 0; v < m; ++v) {
    const ConfidenceInterval ci{est_.mean_estimate(a, v), r};
    u[v] = sat_sub(r == kInf ? kInf : ci.center + r, mu0_[v]);
    if (!ci.contains(mu0_[v])) {
      in_i[v] = 1;
      out.identified.push_back(v);
    }
  }
  const std::size_t budget = L_ > out.identified.size() ? L_ - out.identified.size() : 0;
  out.padding = top_scores(u, in_i, budget, false);
  for (std::size_t v : out.identified) out.value += u[v];
  for (std::size_t v : out.padding) out.value += u[v];
  return out;
}

std::size_t UpUcbLBlPolicy::choose(std::uint64_t) {
  std::size_t best = 0;
  for (std::size_t a = 1; a < num_actions(); ++a) {
    if (cache_[a].value > cache_[best].value) best = a;
  }
  return best;
}

// -- UpUCB-L, nothing known ------------------------------------------------------

UpUcbLWbPolicy::UpUcbLWbPolicy(std::size_t K, std::size_t m, std::size_t L, double lambda)
    : Policy(EstimatorState(K, m)), L_(L), lambda_(lambda), scratch_(K) {
  require_positive(lambda, "lambda");
}

std::size_t UpUcbLWbPolicy::pivot() const {
  std::size_t best = 0;
  for (std::size_t a = 1; a < num_actions(); ++a) {
    if (est_.pull_count(a) > est_.pull_count(best)) best = a;
  }
  return best;
}

LIndex UpUcbLWbPolicy::compute(std::size_t a, std::size_t b) const {
  LIndex out;
  out.pivot = b;
  if (a == b) return out;
  const std::size_t m = num_variables();
  std::vector<double> u(m);
  std::vector<unsigned char> in_i(m, 0);
  for (std::size_t v = 0; v < m; ++v) {
    const auto ca = est_.confidence_interval(a, v, lambda_);
    const auto cb = est_.confidence_interval(b, v, lambda_);
    u[v] = sat_sub(ca.hi(), cb.hi());
    if (disjoint(ca, cb)) {
      in_i[v] = 1;
      out.identified.push_back(v);
    }
  }
  const std::size_t cap = 2 * L_;
  const std::size_t budget = cap > out.identified.size() ? cap - out.identified.size() : 0;
  out.padding = top_scores(u, in_i, budget, true);
  for (std::size_t v : out.identified) out.value += u[v];
  for (std::size_t v : out.padding) out.value += u[v];
  return out;
}

std::size_t UpUcbLWbPolicy::choose(std::uint64_t) {
  const std::size_t b = pivot();
  for (std::size_t a = 0; a < num_actions(); ++a) scratch_[a] = compute(a, b).value;
  return argmax_lowest(scratch_);
}

// -- iLift, known baseline ------------------------------------------------------

UpUcbILiftBlPolicy::UpUcbILiftBlPolicy(std::size_t K, std::vector<double> baseline_means, double epsilon,
                                       double lambda)
    : Policy(EstimatorState(K, baseline_means.size())),
      mu0_(std::move(baseline_means)),
      epsilon_(epsilon),
      lambda_(lambda) {
  require_positive(epsilon, "epsilon");
  require_positive(lambda, "lambda");
  n0_ = ceil_count(8.0 * lambda / (epsilon * epsilon));
  std::vector<std::size_t> all(num_variables());
  for (std::size_t v = 0; v < all.size(); ++v) all[v] = v;
  identified_.assign(K, all);
  index_.resize(K);
  for (std::size_t a = 0; a < K; ++a) index_[a] = compute_index(a);
}

double UpUcbILiftBlPolicy::compute_index(std::size_t a) const {
  const double r = radius(est_.pull_count(a), lambda_);
  if (r == kInf) return identified_[a].empty() ? 0.0 : kInf;
  double g = 0.0;
  for (std::size_t v : identified_[a]) g += est_.mean_estimate(a, v) + r - mu0_[v];
  return g;
}

void UpUcbILiftBlPolicy::after_observe(std::size_t a, std::span<const double>) {
  if (est_.pull_count(a) >= n0_) {
    std::vector<std::size_t> next;
    for (std::size_t v = 0; v < num_variables(); ++v) {
      if (std::abs(est_.mean_estimate(a, v) - mu0_[v]) > epsilon_ / 2.0) next.push_back(v);
    }
    identified_[a] = std::move(next);
  }
  index_[a] = compute_index(a);
}

std::size_t UpUcbILiftBlPolicy::choose(std::uint64_t) { return argmax_lowest(index_); }

// -- iLift, nothing known ------------------------------------------------------

UpUcbILiftWbPolicy::UpUcbILiftWbPolicy(std::size_t K, std::size_t m, double epsilon, double lambda,
                                       std::uint64_t horizon)
    : Policy(EstimatorState(K, m)), epsilon_(epsilon), lambda_(lambda), horizon_(horizon), scratch_(m) {
  require_positive(epsilon, "epsilon");
  require_positive(lambda, "lambda");
  n0_ = ceil_count(32.0 * lambda / (epsilon * epsilon));
  active_.resize(K);
  for (std::size_t a = 0; a < K; ++a) active_[a] = a;
  if (n0_ == 0) switch_phase();
}

double UpUcbILiftWbPolicy::slack(std::uint64_t rho) const {
  return static_cast<double>(num_variables()) * std::sqrt(2.0 * lambda_ / static_cast<double>(rho));
}

std::size_t UpUcbILiftWbPolicy::choose(std::uint64_t) {
  if (phase_ == Phase::kEliminate) {
    // When the budget runs out mid-round the remaining pulls continue through
    // the active set in index order; no further elimination can happen.
    return active_[pos_];
  }
  for (std::size_t v = 0; v < num_variables(); ++v) scratch_[v] = ucb0(v);
  std::size_t best = active_.front();
  double best_g = -kInf;
  for (std::size_t a : active_) {
    double g = 0.0;
    for (std::size_t v : v_hat_[a]) g += sat_sub(est_.ucb(a, v, lambda_), scratch_[v]);
    if (g > best_g) {
      best_g = g;
      best = a;
    }
  }
  return best;
}

double UpUcbILiftWbPolicy::index(std::size_t a) const {
  if (phase_ != Phase::kUpUcb) throw std::logic_error("index is defined in the second phase only");
  double g = 0.0;
  for (std::size_t v : v_hat_.at(a)) g += sat_sub(est_.ucb(a, v, lambda_), ucb0(v));
  return g;
}

double UpUcbILiftWbPolicy::ucb0(std::size_t v) const {
  const auto& b = b_hat_[v];
  if (b.empty()) return 0.0;
  std::size_t pick = b.front();
  for (std::size_t a : b) {
    if (est_.pull_count(a) > est_.pull_count(pick)) pick = a;
  }
  return est_.ucb(pick, v, lambda_);
}

void UpUcbILiftWbPolicy::after_observe(std::size_t, std::span<const double>) {
  if (phase_ != Phase::kEliminate) return;
  if (++pos_ == active_.size()) finish_round();
}

void UpUcbILiftWbPolicy::finish_round() {
  pos_ = 0;
  const double c = slack(rho_);
  double best = -kInf;
  for (std::size_t a : active_) best = std::max(best, est_.mean_reward(a));
  std::vector<std::size_t> keep;
  for (std::size_t a : active_) {
    if (est_.mean_reward(a) + 2.0 * c >= best) keep.push_back(a);
  }
  active_ = std::move(keep);
  if (rho_++ >= n0_) switch_phase();
}

void UpUcbILiftWbPolicy::switch_phase() {
  const std::size_t K = num_actions();
  const std::size_t m = num_variables();
  b_hat_.assign(m, {});
  v_hat_.assign(K, {});
  std::vector<ConfidenceInterval> ci(K);
  for (std::size_t v = 0; v < m; ++v) {
    for (std::size_t a = 0; a < K; ++a) ci[a] = est_.confidence_interval(a, v, lambda_);
    for (std::size_t a = 0; a < K; ++a) {
      bool shared = false;
      for (std::size_t b = 0; b < K && !shared; ++b) shared = b != a && intersects(ci[a], ci[b]);
      if (shared) {
        b_hat_[v].push_back(a);
      } else {
        v_hat_[a].push_back(v);
      }
    }
  }
  phase_ = Phase::kUpUcb;
}

}  // namespace uplift
