#include "uplift/environments.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uplift {

namespace {

// Detects c0*I + c1*(11^T - I) on a leading block, zero outside it.
bool match_equicorrelated(const Eigen::MatrixXd& cov, std::size_t& block, double& c0, double& c1) {
  const auto m = static_cast<std::size_t>(cov.rows());
  block = 0;
  while (block < m && cov(block, block) != 0.0) ++block;
  if (block == 0) {
    c0 = c1 = 0.0;
    return cov.isZero(0.0);
  }
  c0 = cov(0, 0);
  c1 = block > 1 ? cov(1, 0) : 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < m; ++i) {
      double expect = 0.0;
      if (i < block && j < block) expect = i == j ? c0 : c1;
      if (cov(i, j) != expect) return false;
    }
  }
  return true;
}

}  // namespace

GaussianFactor GaussianFactor::from_covariance(const Eigen::MatrixXd& cov) {
  if (cov.rows() != cov.cols()) throw std::invalid_argument("covariance must be square");
  GaussianFactor f;
  f.dim_ = static_cast<std::size_t>(cov.rows());
  double c0 = 0.0;
  double c1 = 0.0;
  if (match_equicorrelated(cov, f.block_, c0, c1)) {
    if (f.block_ == 0) {
      f.kind_ = Kind::kZero;
      return f;
    }
    if (c0 < 0.0 || c0 + static_cast<double>(f.block_ - 1) * c1 < -1e-12 || c1 > c0) {
      throw std::invalid_argument("covariance is not positive semidefinite");
    }
    if (c1 == c0) {
      f.kind_ = Kind::kRankOne;
      f.a_ = std::sqrt(c0);
      return f;
    }
    // x = a z + b (1^T z) 1 has covariance a^2 I + (2ab + n b^2) 11^T.
    const double n = static_cast<double>(f.block_);
    f.kind_ = Kind::kEquicorrelated;
    f.a_ = std::sqrt(c0 - c1);
    f.b_ = (-f.a_ + std::sqrt(std::max(0.0, f.a_ * f.a_ + n * c1))) / n;
    f.scratch_.resize(f.block_);
    return f;
  }

  f.kind_ = Kind::kDense;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) {
    f.dense_ = llt.matrixL();
  } else {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
    if (ldlt.info() != Eigen::Success) throw std::invalid_argument("covariance factorization failed");
    Eigen::VectorXd d = ldlt.vectorD();
    const double tol = 1e-10 * std::max(1.0, cov.diagonal().cwiseAbs().maxCoeff());
    if (d.minCoeff() < -tol) throw std::invalid_argument("covariance is not positive semidefinite");
    d = d.cwiseMax(0.0).cwiseSqrt();
    Eigen::MatrixXd l = ldlt.matrixL();
    Eigen::MatrixXd scaled = l * d.asDiagonal();
    f.dense_ = ldlt.transpositionsP().transpose() * scaled;
  }
  f.scratch_.resize(f.dim_);
  return f;
}

void GaussianFactor::add_sample(CounterRng& rng, double scale, std::span<double> out) const {
  switch (kind_) {
    case Kind::kZero:
      return;
    case Kind::kRankOne: {
      const double w = scale * a_ * rng.normal();
      for (std::size_t v = 0; v < block_; ++v) out[v] += w;
      return;
    }
    case Kind::kEquicorrelated: {
      double total = 0.0;
      for (std::size_t v = 0; v < block_; ++v) {
        scratch_[v] = rng.normal();
        total += scratch_[v];
      }
      const double shared = b_ * total;
      for (std::size_t v = 0; v < block_; ++v) out[v] += scale * (a_ * scratch_[v] + shared);
      return;
    }
    case Kind::kDense: {
      for (std::size_t v = 0; v < dim_; ++v) scratch_[v] = rng.normal();
      Eigen::Map<const Eigen::VectorXd> z(scratch_.data(), static_cast<Eigen::Index>(dim_));
      Eigen::Map<Eigen::VectorXd> o(out.data(), static_cast<Eigen::Index>(dim_));
      o.noalias() += scale * (dense_ * z);
      return;
    }
  }
}

Environment::Environment(std::shared_ptr<const BanditSpec> spec, std::uint64_t seed, EnvironmentOptions options)
    : spec_(std::move(spec)), rng_(seed, Stream::kPayoffs), noise_scale_(options.noise_scale) {
  if (!spec_) throw std::invalid_argument("null spec");
  if (noise_scale_ < 0.0) throw std::invalid_argument("noise_scale must be nonnegative");
  if (!spec_->is_gaussian()) {
    if (!options.action_covariances.empty()) throw std::invalid_argument("per-action covariance needs Gaussian noise");
    return;
  }
  factors_.push_back(GaussianFactor::from_covariance(std::get<GaussianCorrelated>(spec_->noise).covariance));
  baseline_factor_ = 0;
  factor_of_action_.assign(spec_->num_actions, 0);
  if (!options.action_covariances.empty()) {
    if (options.action_covariances.size() != spec_->num_actions) {
      throw std::invalid_argument("need one covariance per action");
    }
    for (std::size_t a = 0; a < spec_->num_actions; ++a) {
      factor_of_action_[a] = factors_.size();
      factors_.push_back(GaussianFactor::from_covariance(options.action_covariances[a]));
    }
  }
  for (const auto& f : factors_) {
    if (f.dim() != spec_->num_variables) throw std::invalid_argument("covariance dimension mismatch");
  }
}

const std::vector<double>& Environment::means_of(Arm arm) const {
  if (arm.is_baseline()) return spec_->baseline_means;
  if (arm.index() >= spec_->num_actions) throw std::out_of_range("action index out of range");
  return spec_->action_means[arm.index()];
}

const GaussianFactor* Environment::factor_of(Arm arm) const {
  if (factors_.empty()) return nullptr;
  return &factors_[arm.is_baseline() ? baseline_factor_ : factor_of_action_[arm.index()]];
}

void Environment::draw(Arm arm, std::span<double> out) {
  const auto& mu = means_of(arm);
  if (out.size() != mu.size()) throw std::invalid_argument("payoff buffer has wrong length");
  if (const auto* f = factor_of(arm)) {
    std::copy(mu.begin(), mu.end(), out.begin());
    if (noise_scale_ != 0.0) f->add_sample(rng_, noise_scale_, out);
    return;
  }
  // Bernoulli. Zero noise returns the means themselves.
  if (noise_scale_ == 0.0) {
    std::copy(mu.begin(), mu.end(), out.begin());
    return;
  }
  for (std::size_t v = 0; v < mu.size(); ++v) out[v] = rng_.uniform() < mu[v] ? 1.0 : 0.0;
}

void Environment::sample_payoffs(std::size_t a, std::span<double> out) { draw(Arm::action(a), out); }

std::vector<double> Environment::sample_payoffs(std::size_t a) {
  std::vector<double> out(spec_->num_variables);
  draw(Arm::action(a), out);
  return out;
}

void Environment::sample_baseline(std::span<double> out) { draw(Arm::baseline(), out); }

void Environment::sample_payoff_sum(std::size_t a, std::uint64_t n, std::span<double> out) {
  const Arm arm = Arm::action(a);
  const auto& mu = means_of(arm);
  if (out.size() != mu.size()) throw std::invalid_argument("payoff buffer has wrong length");
  const double dn = static_cast<double>(n);
  if (const auto* f = factor_of(arm)) {
    for (std::size_t v = 0; v < mu.size(); ++v) out[v] = dn * mu[v];
    if (noise_scale_ != 0.0 && n > 0) f->add_sample(rng_, noise_scale_ * std::sqrt(dn), out);
    return;
  }
  std::fill(out.begin(), out.end(), 0.0);
  if (noise_scale_ == 0.0) {
    for (std::size_t v = 0; v < mu.size(); ++v) out[v] = dn * mu[v];
    return;
  }
  for (std::uint64_t i = 0; i < n; ++i) {
    for (std::size_t v = 0; v < mu.size(); ++v) out[v] += rng_.uniform() < mu[v] ? 1.0 : 0.0;
  }
}

double gaussian_preset_rho(std::size_t m, double total_variance) {
  const double md = static_cast<double>(m);
  return (total_variance / md - 1.0) / (md - 1.0);
}

BanditSpec make_gaussian_preset() {
  constexpr std::size_t kK = 10;
  constexpr std::size_t kM = 100;
  constexpr std::size_t kBlock = 10;
  BanditSpec spec;
  spec.num_actions = kK;
  spec.num_variables = kM;
  spec.baseline_means.assign(kM, 0.5);
  for (std::size_t a = 0; a < kK; ++a) {
    std::vector<double> mu = spec.baseline_means;
    std::vector<std::size_t> set;
    const double lift = a == 0 ? 0.05 : 0.03;
    for (std::size_t v = a * kBlock; v < (a + 1) * kBlock; ++v) {
      mu[v] = 0.5 + lift;
      set.push_back(v);
    }
    spec.action_means.push_back(std::move(mu));
    spec.affected_sets.push_back(std::move(set));
  }
  const double rho = gaussian_preset_rho(kM, 80.0);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Constant(kM, kM, rho);
  cov.diagonal().setOnes();
  spec.noise = GaussianCorrelated{std::move(cov)};
  return spec;
}

BanditSpec make_cluster_spec(std::span<const std::size_t> sizes, std::span<const double> treated,
                             std::span<const double> untreated) {
  if (sizes.size() != treated.size() || sizes.size() != untreated.size()) {
    throw std::invalid_argument("cluster tables must have equal length");
  }
  BanditSpec spec;
  spec.num_actions = sizes.size();
  for (std::size_t c = 0; c < sizes.size(); ++c) spec.baseline_means.insert(spec.baseline_means.end(), sizes[c], untreated[c]);
  spec.num_variables = spec.baseline_means.size();
  std::size_t start = 0;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    std::vector<double> mu = spec.baseline_means;
    std::vector<std::size_t> set(sizes[c]);
    for (std::size_t i = 0; i < sizes[c]; ++i) {
      set[i] = start + i;
      mu[start + i] = treated[c];
    }
    spec.action_means.push_back(std::move(mu));
    spec.affected_sets.push_back(std::move(set));
    start += sizes[c];
  }
  spec.noise = BernoulliIndependent{};
  return spec;
}

BanditSpec make_bernoulli_cluster_preset() {
  return make_cluster_spec(criteo::kSizes, criteo::kTreated, criteo::kUntreated);
}

LowerBoundInstance make_lower_bound_instance(std::size_t num_actions, std::size_t num_variables,
                                             const std::vector<double>& gaps,
                                             const std::vector<std::size_t>& affected_counts,
                                             LowerBoundVariant variant) {
  if (num_actions == 0 || num_variables == 0) throw std::invalid_argument("K and m must be positive");
  if (gaps.size() != num_actions || affected_counts.size() != num_actions) {
    throw std::invalid_argument("gaps and affected_counts need one entry per action");
  }
  if (gaps[0] != 0.0) throw std::invalid_argument("first gap must be 0");
  for (std::size_t a = 0; a < num_actions; ++a) {
    if (!(gaps[a] >= 0.0)) throw std::invalid_argument("gaps must be nonnegative");
    if (affected_counts[a] < 1 || affected_counts[a] > num_variables) {
      throw std::invalid_argument("affected counts must lie in [1, m]");
    }
  }
  const double r_star = 1.0 + *std::max_element(gaps.begin(), gaps.end());
  LowerBoundInstance out;
  BanditSpec& spec = out.spec;
  spec.num_actions = num_actions;
  spec.num_variables = num_variables;
  spec.baseline_means.assign(num_variables, 0.0);
  for (std::size_t a = 0; a < num_actions; ++a) {
    const std::size_t la = affected_counts[a];
    std::vector<double> mu(num_variables, 0.0);
    std::vector<std::size_t> set(la);
    for (std::size_t v = 0; v < la; ++v) {
      mu[v] = (r_star - gaps[a]) / static_cast<double>(la);
      set[v] = v;
    }
    spec.action_means.push_back(std::move(mu));
    spec.affected_sets.push_back(std::move(set));
  }
  const auto m = static_cast<Eigen::Index>(num_variables);
  if (variant == LowerBoundVariant::kFullyShared) {
    spec.noise = GaussianCorrelated{Eigen::MatrixXd::Ones(m, m)};
  } else {
    // The baseline is a point mass; each action shares one noise on its block.
    spec.noise = GaussianCorrelated{Eigen::MatrixXd::Zero(m, m)};
    for (std::size_t a = 0; a < num_actions; ++a) {
      const auto la = static_cast<Eigen::Index>(affected_counts[a]);
      Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(m, m);
      cov.topLeftCorner(la, la).setOnes();
      out.action_covariances.push_back(std::move(cov));
    }
  }
  return out;
}

}  // namespace uplift
