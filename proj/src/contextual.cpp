#include "uplift/contextual.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace uplift {

RidgeModel::RidgeModel(std::size_t dim, double lambda_reg) : lambda_(lambda_reg) {
  if (dim == 0) throw std::invalid_argument("dimension must be positive");
  if (!(lambda_reg > 0.0)) throw std::invalid_argument("lambda_reg must be positive");
  const auto d = static_cast<Eigen::Index>(dim);
  gram_ = lambda_reg * Eigen::MatrixXd::Identity(d, d);
  inverse_ = Eigen::MatrixXd::Identity(d, d) / lambda_reg;
  moment_ = Eigen::VectorXd::Zero(d);
  theta_ = Eigen::VectorXd::Zero(d);
  tmp_.resize(d);
}

void RidgeModel::update(const Eigen::VectorXd& x, double y) {
  if (x.size() != gram_.rows()) throw std::invalid_argument("feature has wrong dimension");
  gram_.noalias() += x * x.transpose();
  moment_.noalias() += y * x;
  ++count_;
  if (++since_refactor_ >= kRefactorEvery) {
    since_refactor_ = 0;
    inverse_ = gram_.llt().solve(Eigen::MatrixXd::Identity(gram_.rows(), gram_.cols()));
  } else {
    tmp_.noalias() = inverse_ * x;
    inverse_.noalias() -= (tmp_ * tmp_.transpose()) / (1.0 + x.dot(tmp_));
  }
  theta_.noalias() = inverse_ * moment_;
}

double RidgeModel::inverse_norm(const Eigen::VectorXd& x) const {
  return std::sqrt(std::max(0.0, x.dot(inverse_ * x)));
}

double beta_schedule(double t, double S, double lambda_reg, std::size_t d, std::size_t m, std::size_t Z,
                     double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0,1)");
  const double dd = static_cast<double>(d);
  const double inner = 2.0 * std::log((static_cast<double>(Z) + 1.0) / delta) +
                       dd * std::log(1.0 + static_cast<double>(m) * t / (dd * lambda_reg));
  return std::sqrt(lambda_reg) * S + std::sqrt(inner);
}

double c2upucb_regret_bound(std::uint64_t T, double S, double lambda_reg, std::size_t d, std::size_t m,
                            std::size_t L, std::size_t Z, double delta) {
  const double dd = static_cast<double>(d);
  const double l = static_cast<double>(L);
  const double t = static_cast<double>(T);
  const double inside = dd * l * (static_cast<double>(Z) + 1.0) * t * std::log(1.0 + l * t / (dd * lambda_reg));
  return 4.0 * std::sqrt(inside) * beta_schedule(t, S, lambda_reg, d, m, Z, delta);
}

namespace {

Selection select_top(std::span<const double> best, std::span<const std::size_t> treatment, std::size_t L) {
  std::vector<std::size_t> cand;
  for (std::size_t v = 0; v < best.size(); ++v) {
    if (best[v] > 0.0) cand.push_back(v);
  }
  if (L < cand.size()) {
    auto better = [&](std::size_t x, std::size_t y) { return best[x] > best[y] || (best[x] == best[y] && x < y); };
    std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(L), cand.end(), better);
    cand.resize(L);
    std::sort(cand.begin(), cand.end());
  }
  Selection out;
  out.individuals = cand;
  for (std::size_t v : cand) out.treatments.push_back(treatment[v]);
  return out;
}

}  // namespace

Selection c2upucb_select(std::span<const double> indices, std::size_t L) {
  std::vector<std::size_t> ones(indices.size(), 1);
  return select_top(indices, ones, L);
}

Selection c2upucb_select(const Eigen::MatrixXd& indices, std::size_t L) {
  const auto m = static_cast<std::size_t>(indices.rows());
  if (indices.cols() < 1) throw std::invalid_argument("need at least one treatment");
  std::vector<double> best(m);
  std::vector<std::size_t> arg(m);
  for (std::size_t v = 0; v < m; ++v) {
    Eigen::Index z = 0;
    const auto row = indices.row(static_cast<Eigen::Index>(v));
    for (Eigen::Index j = 1; j < row.size(); ++j) {
      if (row(j) > row(z)) z = j;
    }
    best[v] = row(z);
    arg[v] = static_cast<std::size_t>(z) + 1;
  }
  return select_top(best, arg, L);
}

ContextualEnvironment::ContextualEnvironment(std::size_t m, std::size_t d, std::size_t Z, std::uint64_t seed,
                                             double noise_scale)
    : m_(m),
      d_(d),
      noise_scale_(noise_scale),
      feature_rng_(seed, Stream::kContextFeatures),
      noise_rng_(seed, Stream::kContextNoise) {
  if (m == 0 || d == 0 || Z == 0) throw std::invalid_argument("m, d and Z must be positive");
  if (noise_scale < 0.0) throw std::invalid_argument("noise_scale must be nonnegative");
  CounterRng param_rng(seed, Stream::kContextParams);
  for (std::size_t z = 0; z <= Z; ++z) theta_.push_back(draw_ball(param_rng));
  features_.assign(m, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d)));
}

Eigen::VectorXd ContextualEnvironment::draw_ball(CounterRng& rng) const {
  Eigen::VectorXd x(static_cast<Eigen::Index>(d_));
  double n2 = 0.0;
  do {
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
    n2 = x.squaredNorm();
  } while (n2 == 0.0);
  const double r = std::pow(rng.uniform(), 1.0 / static_cast<double>(d_));
  return x * (r / std::sqrt(n2));
}

void ContextualEnvironment::next_round() {
  for (auto& x : features_) x = draw_ball(feature_rng_);
}

double ContextualEnvironment::sample_payoff(std::size_t z, std::size_t v) {
  const double mean = mean_payoff(z, v);
  if (noise_scale_ == 0.0) return mean;
  double e = 0.0;
  do {
    e = noise_rng_.normal();
  } while (std::abs(e) > kNoiseTruncation);
  return mean + noise_scale_ * e;
}

ContextualEnvironment make_linear_contextual_env(std::size_t m, std::size_t d, std::size_t Z, std::uint64_t seed,
                                                 double noise_scale) {
  return ContextualEnvironment(m, d, Z, seed, noise_scale);
}

ContextualRunResult run_c2upucb(ContextualEnvironment& env, const ContextualRunOptions& opt) {
  const std::size_t m = env.num_individuals();
  const std::size_t d = env.dim();
  const std::size_t Z = env.num_treatments();
  if (opt.lambda_reg < static_cast<double>(opt.L)) throw std::invalid_argument("lambda_reg must be at least L");

  std::vector<RidgeModel> models(Z + 1, RidgeModel(d, opt.lambda_reg));
  ContextualRunResult res;
  res.potential.assign(Z + 1, 0.0);
  res.potential_bound.assign(Z + 1, 0.0);
  res.max_round_cardinality.assign(Z + 1, 0);
  std::vector<std::uint64_t> samples(Z + 1, 0);
  res.regret_bound = c2upucb_regret_bound(opt.horizon, opt.S, opt.lambda_reg, d, m, opt.L, Z, opt.delta);

  const auto mi = static_cast<Eigen::Index>(m);
  const auto zi = static_cast<Eigen::Index>(Z);
  ContextualRoundInfo info;
  info.indices.resize(mi, zi);
  info.true_uplifts.resize(mi, zi);
  std::vector<std::size_t> assigned(m);
  std::vector<std::size_t> round_card(Z + 1);
  std::vector<std::size_t> actions;
  actions.reserve(opt.horizon);
  std::vector<double> best_true(m);
  double cum = 0.0;

  for (std::uint64_t t = 1; t <= opt.horizon; ++t) {
    env.next_round();
    const auto& x = env.features();
    const double beta = beta_schedule(static_cast<double>(t - 1), opt.S, opt.lambda_reg, d, m, Z, opt.delta);
    for (std::size_t v = 0; v < m; ++v) {
      const double base = opt.baseline_known ? env.mean_payoff(0, v) : models[0].index(x[v], beta);
      for (std::size_t z = 1; z <= Z; ++z) {
        const auto vi = static_cast<Eigen::Index>(v);
        const auto zc = static_cast<Eigen::Index>(z - 1);
        info.indices(vi, zc) = models[z].index(x[v], beta) - base;
        info.true_uplifts(vi, zc) = env.mean_payoff(z, v) - env.mean_payoff(0, v);
      }
      best_true[v] = info.true_uplifts.row(static_cast<Eigen::Index>(v)).maxCoeff();
    }
    info.chosen = c2upucb_select(info.indices, opt.L);

    // Oracle: best treatment per individual, top L positive uplifts.
    std::vector<double> sorted;
    for (double u : best_true) {
      if (u > 0.0) sorted.push_back(u);
    }
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double oracle = 0.0;
    for (std::size_t i = 0; i < std::min(opt.L, sorted.size()); ++i) oracle += sorted[i];
    double got = 0.0;
    std::fill(assigned.begin(), assigned.end(), 0);
    for (std::size_t i = 0; i < info.chosen.individuals.size(); ++i) {
      const std::size_t v = info.chosen.individuals[i];
      assigned[v] = info.chosen.treatments[i];
      got += info.true_uplifts(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(assigned[v] - 1));
    }
    const double inst = std::max(0.0, oracle - got);
    cum += inst;
    res.trace.actions.push_back(info.chosen.individuals.size());
    res.trace.instant_regret.push_back(inst);
    res.trace.cumulative_regret.push_back(cum);
    info.t = t;
    info.features = &x;
    info.instant_regret = inst;
    if (opt.on_round) opt.on_round(info);

    // Potential terms use the statistics from before this round's feedback.
    std::fill(round_card.begin(), round_card.end(), 0);
    for (std::size_t v = 0; v < m; ++v) {
      const std::size_t z = assigned[v];
      if (z == 0 && opt.baseline_known) continue;
      const double w = models[z].inverse_norm(x[v]);
      res.potential[z] += w * w;
      ++round_card[z];
    }
    for (std::size_t v = 0; v < m; ++v) {
      const std::size_t z = assigned[v];
      if (z == 0 && opt.baseline_known) continue;
      models[z].update(x[v], env.sample_payoff(z, v));
    }

    const double beta_t = beta_schedule(static_cast<double>(t), opt.S, opt.lambda_reg, d, m, Z, opt.delta);
    for (std::size_t z = 0; z <= Z; ++z) {
      samples[z] += round_card[z];
      res.max_round_cardinality[z] = std::max(res.max_round_cardinality[z], round_card[z]);
      const double dd = static_cast<double>(d);
      res.potential_bound[z] = 2.0 * dd * std::log(1.0 + static_cast<double>(samples[z]) / (dd * opt.lambda_reg));
      if (opt.lambda_reg >= static_cast<double>(res.max_round_cardinality[z]) &&
          res.potential[z] > res.potential_bound[z] * (1.0 + 1e-12)) {
        res.potential_ok = false;
      }
      if (z == 0 && opt.baseline_known) continue;
      const Eigen::VectorXd diff = env.theta()[z] - models[z].estimate();
      if (std::sqrt(std::max(0.0, diff.dot(models[z].gram() * diff))) > beta_t) res.ellipsoid_covered = false;
    }
  }
  return res;
}

}  // namespace uplift
