#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "uplift/contextual.hpp"

using namespace uplift;

namespace {

// Exhaustive best subset of size <= L, returned sorted.
std::vector<std::size_t> brute_force(const std::vector<double>& u, std::size_t L) {
  const std::size_t m = u.size();
  double best = 0.0;
  std::vector<std::size_t> arg;
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    if (std::size_t(__builtin_popcount(mask)) > L) continue;
    double s = 0;
    std::vector<std::size_t> set;
    for (std::size_t v = 0; v < m; ++v) {
      if (mask & (1u << v)) {
        s += u[v];
        set.push_back(v);
      }
    }
    if (s > best) {
      best = s;
      arg = set;
    }
  }
  return arg;
}

}  // namespace

TEST_CASE("ridge model basics") {
  RidgeModel fresh(3, 2.0);
  CHECK(fresh.estimate().isZero());
  CHECK(fresh.sample_count() == 0);

  RidgeModel one(1, 1.0);
  Eigen::VectorXd x(1);
  x << 1.0;
  one.update(x, 2.0);
  CHECK(one.estimate()(0) == doctest::Approx(1.0));
  CHECK_THROWS(one.update(Eigen::VectorXd::Ones(2), 1.0));
  CHECK_THROWS(RidgeModel(2, 0.0));
}

TEST_CASE("ridge estimate matches the batch least-squares solve") {
  CounterRng rng(3, Stream::kContextFeatures);
  const int d = 4, n = 700;  // crosses the periodic refactorization twice
  const double lam = 1.5;
  RidgeModel model(d, lam);
  Eigen::MatrixXd X(n, d);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd x(d);
    for (int j = 0; j < d; ++j) x(j) = rng.uniform() - 0.5;
    X.row(i) = x.transpose();
    y(i) = rng.normal();
    model.update(x, y(i));
    if (i % 97 == 0 || i == n - 1) {
      const Eigen::MatrixXd Xi = X.topRows(i + 1);
      const Eigen::VectorXd yi = y.head(i + 1);
      const Eigen::MatrixXd V = lam * Eigen::MatrixXd::Identity(d, d) + Xi.transpose() * Xi;
      const Eigen::VectorXd oracle = V.ldlt().solve(Xi.transpose() * yi);
      CHECK((model.estimate() - oracle).cwiseAbs().maxCoeff() <= 1e-9);
      CHECK((model.gram() - V).cwiseAbs().maxCoeff() <= 1e-9);
    }
  }
}

TEST_CASE("index = prediction + beta * inverse norm") {
  RidgeModel fresh(3, 1.0);
  Eigen::VectorXd e(3);
  e << 0.6, 0.0, 0.8;
  CHECK(fresh.index(e, 2.5) == doctest::Approx(2.5));

  CounterRng rng(5, Stream::kContextFeatures);
  RidgeModel m(3, 1.0);
  for (int i = 0; i < 50; ++i) {
    Eigen::VectorXd x(3);
    for (int j = 0; j < 3; ++j) x(j) = rng.uniform();
    m.update(x, rng.normal());
  }
  Eigen::VectorXd x(3);
  x << 0.1, -0.4, 0.3;
  CHECK(m.index(x, 0.0) == doctest::Approx(m.predict(x)));
  const double w = std::sqrt(x.dot(m.gram().ldlt().solve(x)));
  CHECK(std::abs((m.index(x, 1.7) - m.predict(x)) - 1.7 * w) <= 1e-9);
}

TEST_CASE("beta schedule") {
  // 2 log((Z+1)/delta) = 2 at delta = 2/e, and 4 at delta = 2/e^2
  CHECK(beta_schedule(0, 1, 1, 3, 5, 1, 2.0 / std::exp(1.0)) == doctest::Approx(2.414213562373095));
  CHECK(beta_schedule(0, 1, 1, 3, 5, 1, 2.0 / std::exp(2.0)) == doctest::Approx(3.0));
  CHECK(beta_schedule(100, 1, 10, 5, 100, 2, 0.05) == doctest::Approx(9.053390769313339).epsilon(1e-12));
  double prev = 0;
  for (double t = 0; t <= 5000; t += 50) {
    const double b = beta_schedule(t, 1, 10, 5, 100, 1, 0.05);
    CHECK(b >= prev);
    prev = b;
  }
  CHECK_THROWS(beta_schedule(1, 1, 1, 1, 1, 1, 1.5));
}

TEST_CASE("regret bound formula") {
  const double T = 2000, d = 5, L = 10, Z = 1, lam = 10;
  const double expect =
      4 * std::sqrt(d * L * (Z + 1) * T * std::log(1 + L * T / (d * lam))) * beta_schedule(T, 1, lam, 5, 100, 1, 0.05);
  CHECK(c2upucb_regret_bound(2000, 1, lam, 5, 100, 10, 1, 0.05) == doctest::Approx(expect));
}

TEST_CASE("top-L selection") {
  const std::vector<double> u = {0.5, -0.1, 0.9};
  CHECK(c2upucb_select(u, 2).individuals == std::vector<std::size_t>{0, 2});
  CHECK(c2upucb_select(u, 3).individuals == std::vector<std::size_t>{0, 2});
  CHECK(c2upucb_select(u, 0).individuals.empty());
  const std::vector<double> tie = {0.3, 0.3, 0.3};
  CHECK(c2upucb_select(tie, 2).individuals == std::vector<std::size_t>{0, 1});

  Eigen::MatrixXd mz(3, 2);
  mz << 0.2, 0.2,  //
      -0.5, 0.4,   //
      0.1, -0.3;
  const auto s = c2upucb_select(mz, 2);
  CHECK(s.individuals == std::vector<std::size_t>{0, 1});
  CHECK(s.treatments == std::vector<std::size_t>{1, 2});
}

TEST_CASE("top-L selection equals exhaustive search") {
  CounterRng rng(8, Stream::kPolicy);
  for (int draw = 0; draw < 300; ++draw) {
    const std::size_t m = 1 + rng() % 12;
    const std::size_t L = rng() % 5;
    std::vector<double> u(m);
    for (auto& x : u) x = rng.normal();
    CHECK(c2upucb_select(u, L).individuals == brute_force(u, L));
  }
}

TEST_CASE("contextual environment") {
  auto env = make_linear_contextual_env(20, 4, 3, 12);
  CHECK(env.theta().size() == 4);
  for (const auto& th : env.theta()) CHECK(th.norm() <= 1.0);
  for (int t = 0; t < 50; ++t) {
    env.next_round();
    for (const auto& x : env.features()) CHECK(x.norm() <= 1.0);
  }
  auto quiet = make_linear_contextual_env(5, 3, 1, 12, 0.0);
  quiet.next_round();
  for (std::size_t v = 0; v < 5; ++v) CHECK(quiet.sample_payoff(1, v) == quiet.theta()[1].dot(quiet.features()[v]));

  auto a = make_linear_contextual_env(5, 3, 1, 77), b = make_linear_contextual_env(5, 3, 1, 77);
  a.next_round();
  b.next_round();
  CHECK(a.sample_payoff(0, 2) == b.sample_payoff(0, 2));
  for (int i = 0; i < 20000; ++i) CHECK(std::abs(a.sample_payoff(0, 0) - a.mean_payoff(0, 0)) <= 6.0);
}

TEST_CASE("run_c2upucb contracts") {
  auto env = make_linear_contextual_env(10, 3, 1, 1);
  ContextualRunOptions opt;
  opt.L = 4;
  opt.horizon = 10;
  opt.lambda_reg = 3.0;
  CHECK_THROWS_AS(run_c2upucb(env, opt), std::invalid_argument);

  // No budget: nobody is treated, and the oracle under the same budget treats nobody either.
  opt.L = 0;
  opt.lambda_reg = 1.0;
  opt.horizon = 200;
  const auto r = run_c2upucb(env, opt);
  for (std::size_t k : r.trace.actions) CHECK(k == 0);
  CHECK(r.trace.final_regret() == 0.0);
}

TEST_CASE("zero noise: rounds with separated indices have no regret") {
  auto env = make_linear_contextual_env(5, 2, 1, 4, 0.0);
  ContextualRunOptions opt;
  opt.L = 2;
  opt.horizon = 4000;
  opt.lambda_reg = 2.0;
  std::size_t separated = 0, checked = 0;
  opt.on_round = [&](const ContextualRoundInfo& info) {
    ++checked;
    std::vector<double> pts = {0.0};
    for (Eigen::Index v = 0; v < info.true_uplifts.rows(); ++v) pts.push_back(info.true_uplifts(v, 0));
    std::sort(pts.begin(), pts.end());
    double sep = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < pts.size(); ++i) sep = std::min(sep, pts[i] - pts[i - 1]);
    const double err = (info.indices - info.true_uplifts).cwiseAbs().maxCoeff();
    if (err < sep / 2) {
      ++separated;
      CHECK(info.instant_regret == doctest::Approx(0.0));
    }
  };
  const auto res = run_c2upucb(env, opt);
  CHECK(checked == 4000);
  CHECK(separated > 0);
  CHECK(res.potential_ok);
  // late rounds are separated more often than early ones, and regret grows ever slower
  const auto& c = res.trace.cumulative_regret;
  CHECK(c[3999] - c[1999] < c[1999]);
}

TEST_CASE("potential inequality and coverage on a noisy run") {
  auto env = make_linear_contextual_env(50, 3, 2, 9);
  ContextualRunOptions opt;
  opt.L = 5;
  opt.horizon = 300;
  opt.lambda_reg = 5.0;
  const auto res = run_c2upucb(env, opt);
  CHECK(res.potential_ok);
  for (std::size_t z = 0; z < 3; ++z) {
    if (double(res.max_round_cardinality[z]) <= opt.lambda_reg) CHECK(res.potential[z] <= res.potential_bound[z]);
  }
  CHECK(res.ellipsoid_covered);
  CHECK(res.regret_bound > 0);
}
