#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "uplift/core.hpp"
#include "uplift/rng.hpp"

namespace uplift {

/// Square-root factor F of a PSD covariance (Sigma = F F^T) with cheap paths
/// for the structured matrices the presets use.
///
/// Equicorrelated blocks (c0 on the diagonal, c1 off it, on a leading n x n
/// block and zero elsewhere) sample in O(n); anything else goes through a
/// dense factor: Cholesky first, pivoted LDL^T when Sigma is singular.
class GaussianFactor {
 public:
  static GaussianFactor from_covariance(const Eigen::MatrixXd& cov);

  std::size_t dim() const { return dim_; }
  bool is_structured() const { return kind_ != Kind::kDense; }
  /// out[v] += scale * (F z)[v] for a fresh standard normal vector z.
  void add_sample(CounterRng& rng, double scale, std::span<double> out) const;

 private:
  enum class Kind { kZero, kRankOne, kEquicorrelated, kDense };
  Kind kind_ = Kind::kZero;
  std::size_t dim_ = 0;
  std::size_t block_ = 0;
  double a_ = 0.0;
  double b_ = 0.0;
  Eigen::MatrixXd dense_;
  mutable std::vector<double> scratch_;
};

struct EnvironmentOptions {
  /// Multiplies every noise term; 0 gives the deterministic diagnostic mode.
  double noise_scale = 1.0;
  /// Per-action covariance overriding the spec's shared one (empty = shared).
  std::vector<Eigen::MatrixXd> action_covariances;
};

/// Seeded payoff sampler for one run. Single-threaded.
class Environment {
 public:
  Environment(std::shared_ptr<const BanditSpec> spec, std::uint64_t seed, EnvironmentOptions options = {});

  const BanditSpec& spec() const { return *spec_; }
  std::shared_ptr<const BanditSpec> spec_ptr() const { return spec_; }
  double noise_scale() const { return noise_scale_; }

  /// One draw X ~ D_a written into `out` (length m).
  void sample_payoffs(std::size_t a, std::span<double> out);
  std::vector<double> sample_payoffs(std::size_t a);
  /// One draw from the no-action distribution D_0.
  void sample_baseline(std::span<double> out);
  /// Sum of n independent draws from D_a, exact in distribution.
  void sample_payoff_sum(std::size_t a, std::uint64_t n, std::span<double> out);

 private:
  const std::vector<double>& means_of(Arm arm) const;
  const GaussianFactor* factor_of(Arm arm) const;
  void draw(Arm arm, std::span<double> out);

  std::shared_ptr<const BanditSpec> spec_;
  CounterRng rng_;
  double noise_scale_;
  std::vector<GaussianFactor> factors_;
  std::vector<std::size_t> factor_of_action_;
  std::size_t baseline_factor_ = 0;
};

/// Ten actions on 100 variables, disjoint blocks of ten, baseline 0.5.
BanditSpec make_gaussian_preset();

/// Correlation used by the Gaussian preset so that 1^T Sigma 1 = 80.
double gaussian_preset_rho(std::size_t m = 100, double total_variance = 80.0);

namespace criteo {
inline constexpr std::size_t kClusters = 20;
inline constexpr std::array<std::size_t, kClusters> kSizes = {
    10600, 2764, 7222, 11128, 6385, 1630, 2806, 1089, 3018, 4594,
    594, 7020, 12654, 2186, 9609, 5101, 3714, 4569, 1158, 2159};
inline constexpr std::array<double, kClusters> kTreated = {
    0.001, 0.037, 0.003, 0.001, 0.003, 0.377, 0.237, 0.309, 0.071, 0.287,
    0.531, 0.044, 0.007, 0.086, 0.002, 0.019, 0.028, 0.007, 0.265, 0.013};
inline constexpr std::array<double, kClusters> kUntreated = {
    0.001, 0.023, 0.002, 0.002, 0.004, 0.289, 0.206, 0.229, 0.073, 0.289,
    0.464, 0.035, 0.004, 0.052, 0.001, 0.011, 0.022, 0.004, 0.165, 0.000};
/// Uplift vector as published alongside the rates (computed from unrounded data).
inline constexpr std::array<double, kClusters> kPublishedUplift = {
    0.6, 39.3, 6.6, -5.0, -5.7, 143.5, 86.0, 87.1, -4.5, -6.9,
    39.8, 66.3, 34.7, 75.4, 4.0, 40.3, 21.1, 12.3, 115.7, 28.3};
}  // namespace criteo

/// Bernoulli instance with one action per contiguous cluster of variables.
BanditSpec make_cluster_spec(std::span<const std::size_t> sizes, std::span<const double> treated,
                             std::span<const double> untreated);
BanditSpec make_bernoulli_cluster_preset();

enum class LowerBoundVariant { kBlockShared, kFullyShared };

struct LowerBoundInstance {
  BanditSpec spec;
  /// Covariance actually used by each action's sampler.
  std::vector<Eigen::MatrixXd> action_covariances;

  EnvironmentOptions options(double noise_scale = 1.0) const { return {noise_scale, action_covariances}; }
};

/// Hard instance with zero baseline; gaps[0] must be 0.
LowerBoundInstance make_lower_bound_instance(std::size_t num_actions, std::size_t num_variables,
                                             const std::vector<double>& gaps,
                                             const std::vector<std::size_t>& affected_counts,
                                             LowerBoundVariant variant);

}  // namespace uplift
