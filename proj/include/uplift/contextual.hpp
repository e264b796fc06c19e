#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "uplift/core.hpp"
#include "uplift/rng.hpp"

namespace uplift {

/// Ridge regression state for one treatment: V = lambda I + sum x x^T, b = sum y x.
///
/// The inverse is carried along with Sherman-Morrison updates and rebuilt from
/// the gram matrix every `kRefactorEvery` updates.
class RidgeModel {
 public:
  static constexpr std::size_t kRefactorEvery = 256;

  RidgeModel(std::size_t dim, double lambda_reg);

  void update(const Eigen::VectorXd& x, double y);

  std::size_t dim() const { return static_cast<std::size_t>(gram_.rows()); }
  double lambda_reg() const { return lambda_; }
  std::uint64_t sample_count() const { return count_; }
  const Eigen::MatrixXd& gram() const { return gram_; }
  const Eigen::VectorXd& moment() const { return moment_; }
  const Eigen::MatrixXd& gram_inverse() const { return inverse_; }
  const Eigen::VectorXd& estimate() const { return theta_; }

  double predict(const Eigen::VectorXd& x) const { return theta_.dot(x); }
  /// sqrt(x^T V^{-1} x).
  double inverse_norm(const Eigen::VectorXd& x) const;
  double index(const Eigen::VectorXd& x, double beta) const { return predict(x) + beta * inverse_norm(x); }

 private:
  double lambda_;
  Eigen::MatrixXd gram_;
  Eigen::MatrixXd inverse_;
  Eigen::VectorXd moment_;
  Eigen::VectorXd theta_;
  std::uint64_t count_ = 0;
  std::size_t since_refactor_ = 0;
  Eigen::VectorXd tmp_;
};

double beta_schedule(double t, double S, double lambda_reg, std::size_t d, std::size_t m, std::size_t Z,
                     double delta);

/// High-probability regret bound for the contextual policy at horizon T.
double c2upucb_regret_bound(std::uint64_t T, double S, double lambda_reg, std::size_t d, std::size_t m,
                            std::size_t L, std::size_t Z, double delta);

struct Selection {
  std::vector<std::size_t> individuals;  // sorted ascending
  std::vector<std::size_t> treatments;   // 1-based treatment per chosen individual
};

/// At most L individuals with strictly positive index, largest first (ties to
/// the lowest index).
Selection c2upucb_select(std::span<const double> indices, std::size_t L);
/// indices is m x Z; column z-1 holds treatment z.
Selection c2upucb_select(const Eigen::MatrixXd& indices, std::size_t L);

/// Synthetic linear environment: theta_z for z = 0..Z uniform in the unit
/// ball, fresh features uniform in the unit ball each round, standard normal
/// noise truncated to [-6, 6].
class ContextualEnvironment {
 public:
  static constexpr double kNoiseTruncation = 6.0;

  ContextualEnvironment(std::size_t m, std::size_t d, std::size_t Z, std::uint64_t seed, double noise_scale = 1.0);

  std::size_t num_individuals() const { return m_; }
  std::size_t dim() const { return d_; }
  std::size_t num_treatments() const { return theta_.size() - 1; }
  double noise_scale() const { return noise_scale_; }
  const std::vector<Eigen::VectorXd>& theta() const { return theta_; }

  void next_round();
  const std::vector<Eigen::VectorXd>& features() const { return features_; }
  double mean_payoff(std::size_t z, std::size_t v) const { return theta_[z].dot(features_[v]); }
  double sample_payoff(std::size_t z, std::size_t v);

 private:
  Eigen::VectorXd draw_ball(CounterRng& rng) const;

  std::size_t m_;
  std::size_t d_;
  double noise_scale_;
  CounterRng feature_rng_;
  CounterRng noise_rng_;
  std::vector<Eigen::VectorXd> theta_;
  std::vector<Eigen::VectorXd> features_;
};

ContextualEnvironment make_linear_contextual_env(std::size_t m, std::size_t d, std::size_t Z, std::uint64_t seed,
                                                 double noise_scale = 1.0);

struct ContextualRoundInfo {
  std::uint64_t t = 0;
  const std::vector<Eigen::VectorXd>* features = nullptr;
  Eigen::MatrixXd indices;        // m x Z uplifting indices used for selection
  Eigen::MatrixXd true_uplifts;   // m x Z
  Selection chosen;
  double instant_regret = 0.0;
};

struct ContextualRunOptions {
  std::size_t L = 0;
  std::uint64_t horizon = 0;
  bool baseline_known = false;
  double lambda_reg = 1.0;
  double delta = 0.05;
  double S = 1.0;
  std::function<void(const ContextualRoundInfo&)> on_round;
};

struct ContextualRunResult {
  RegretTrace trace;  // actions hold the number of treated individuals
  /// Per model: sum over chosen (t, v) of ||x||^2 in V_{t-1}^{-1}, and the bound.
  std::vector<double> potential;
  std::vector<double> potential_bound;
  std::vector<std::size_t> max_round_cardinality;
  bool potential_ok = true;
  /// ||theta_z - theta_hat_z||_V <= beta_t held for every t and updated z.
  bool ellipsoid_covered = true;
  double regret_bound = 0.0;
};

ContextualRunResult run_c2upucb(ContextualEnvironment& env, const ContextualRunOptions& options);

}  // namespace uplift
