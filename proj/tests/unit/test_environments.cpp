#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "uplift/environments.hpp"
#include "uplift/spec_io.hpp"

using namespace uplift;

namespace {

double ks_statistic(std::vector<double> x, std::vector<double> y) {
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  std::size_t i = 0, j = 0;
  double d = 0;
  while (i < x.size() && j < y.size()) {
    const double t = std::min(x[i], y[j]);
    while (i < x.size() && x[i] <= t) ++i;
    while (j < y.size() && y[j] <= t) ++j;
    d = std::max(d, std::abs(double(i) / double(x.size()) - double(j) / double(y.size())));
  }
  return d;
}

std::shared_ptr<const BanditSpec> shared(BanditSpec s) { return std::make_shared<const BanditSpec>(std::move(s)); }

}  // namespace

TEST_CASE("Gaussian preset construction") {
  const auto s = make_gaussian_preset();
  CHECK(s.num_actions == 10);
  CHECK(s.num_variables == 100);
  CHECK(validate_spec(s).empty());
  const auto g = suboptimality_gaps(s);
  REQUIRE(g.min_nonzero.has_value());
  CHECK(std::abs(*g.min_nonzero - 0.2) < 1e-12);
  const auto& cov = std::get<GaussianCorrelated>(s.noise).covariance;
  CHECK(std::abs(cov.sum() - 80.0) <= 1e-9);
  CHECK(cov.diagonal().maxCoeff() <= 1.0);
  for (std::size_t a = 0; a < 10; ++a) {
    for (double mu : s.action_means[a]) CHECK((mu >= 0.0 && mu <= 1.0));
    REQUIRE(s.affected_sets[a].size() == 10);
    CHECK(s.affected_sets[a].front() == 10 * a);
    CHECK(s.affected_sets[a].back() == 10 * a + 9);
  }
  CHECK(action_uplift(s, 0) == doctest::Approx(0.5));
  CHECK(action_uplift(s, 3) == doctest::Approx(0.3));
  CHECK(gaussian_preset_rho() == doctest::Approx((80.0 / 100 - 1) / 99));
}

TEST_CASE("Bernoulli extremes are deterministic") {
  BanditSpec s;
  s.num_actions = 1;
  s.num_variables = 2;
  s.baseline_means = {0.0, 1.0};
  s.action_means = {{0.0, 1.0}};
  s.affected_sets = {{}};
  Environment env(shared(s), 5);
  for (int i = 0; i < 500; ++i) {
    const auto x = env.sample_payoffs(0);
    CHECK(x[0] == 0.0);
    CHECK(x[1] == 1.0);
  }
}

TEST_CASE("Gaussian preset draws: per-coordinate means and total variance") {
  Environment env(shared(make_gaussian_preset()), 17);
  const auto& spec = env.spec();
  const int n = 100000;
  std::vector<double> sum(100, 0.0);
  double tot = 0, tot2 = 0;
  std::vector<double> x(100);
  for (int i = 0; i < n; ++i) {
    env.sample_payoffs(0, x);
    double s = 0;
    for (int v = 0; v < 100; ++v) {
      sum[v] += x[v];
      s += x[v];
    }
    tot += s;
    tot2 += s * s;
  }
  for (int v = 0; v < 100; ++v) CHECK(std::abs(sum[v] / n - spec.action_means[0][v]) <= 4.0 / std::sqrt(double(n)));
  const double mean = tot / n;
  const double var = tot2 / n - mean * mean;
  CHECK(std::abs(var - 80.0) <= 0.05 * 80.0);
}

TEST_CASE("unaffected marginals match the baseline (two-sample KS)") {
  Environment env(shared(make_gaussian_preset()), 23);
  const int n = 10000;
  // variable 50 is outside V_1 and V_2; variable 3 is outside V_2
  std::vector<double> a50, b50, a3, b3;
  std::vector<double> x(100);
  for (int i = 0; i < n; ++i) {
    env.sample_payoffs(0, x);
    a50.push_back(x[50]);
    env.sample_baseline(x);
    b50.push_back(x[50]);
    b3.push_back(x[3]);
    env.sample_payoffs(1, x);
    a3.push_back(x[3]);
  }
  const double crit = std::sqrt(-std::log(0.001 / 2) / 2) * std::sqrt(2.0 / n);
  CHECK(ks_statistic(a50, b50) < crit);
  CHECK(ks_statistic(a3, b3) < crit);
}

TEST_CASE("determinism: same seed and action sequence give identical payoffs") {
  auto spec = shared(make_gaussian_preset());
  Environment e1(spec, 99), e2(spec, 99), e3(spec, 100);
  bool differs = false;
  for (int t = 0; t < 200; ++t) {
    const std::size_t a = t % 10;
    const auto x = e1.sample_payoffs(a);
    CHECK(x == e2.sample_payoffs(a));
    if (x != e3.sample_payoffs(a)) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("zero noise returns the means exactly") {
  auto spec = shared(make_gaussian_preset());
  Environment env(spec, 1, {0.0, {}});
  for (std::size_t a = 0; a < 10; ++a) CHECK(env.sample_payoffs(a) == spec->action_means[a]);
  std::vector<double> out(100);
  env.sample_payoff_sum(2, 7, out);
  for (std::size_t v = 0; v < 100; ++v) CHECK(out[v] == doctest::Approx(7 * spec->action_means[2][v]));
}

TEST_CASE("sample_payoff_sum has the law of a sum") {
  auto spec = shared(make_gaussian_preset());
  Environment env(spec, 3);
  const int reps = 20000;
  const std::uint64_t n = 16;
  double tot = 0, tot2 = 0, first = 0;
  std::vector<double> out(100);
  for (int i = 0; i < reps; ++i) {
    env.sample_payoff_sum(1, n, out);
    double s = 0;
    for (double v : out) s += v;
    tot += s;
    tot2 += s * s;
    first += out[15];
  }
  const double mean = tot / reps;
  const double expect = double(n) * expected_reward(*spec, Arm::action(1));
  CHECK(std::abs(mean - expect) <= 4 * std::sqrt(n * 80.0 / reps));
  CHECK(std::abs((tot2 / reps - mean * mean) / (n * 80.0) - 1.0) <= 0.05);
  CHECK(std::abs(first / reps - n * spec->action_means[1][15]) <= 4 * std::sqrt(double(n) / reps));

  // Bernoulli sums are binomial.
  auto cl = shared(make_cluster_spec(std::vector<std::size_t>{3, 2}, std::vector<double>{0.3, 0.9},
                                     std::vector<double>{0.1, 0.5}));
  Environment be(cl, 4);
  std::vector<double> o(5);
  double acc = 0;
  for (int i = 0; i < reps; ++i) {
    be.sample_payoff_sum(0, 10, o);
    CHECK(o[0] == std::round(o[0]));
    CHECK((o[0] >= 0 && o[0] <= 10));
    acc += o[0];
  }
  CHECK(std::abs(acc / reps - 3.0) <= 4 * std::sqrt(10 * 0.3 * 0.7 / reps));
}

TEST_CASE("Bernoulli cluster preset") {
  const auto s = make_bernoulli_cluster_preset();
  CHECK(s.num_actions == 20);
  CHECK(s.num_variables == 100000);
  CHECK(s.max_affected_count() == 12654);
  CHECK(std::abs(action_uplift(s, 18) - 115.7) <= 0.6);
  CHECK(action_uplift(s, 3) < 0.0);
  CHECK(!s.is_gaussian());
  // Contiguous blocks in published order.
  std::size_t start = 0;
  for (std::size_t a = 0; a < 20; ++a) {
    CHECK(s.affected_sets[a].front() == start);
    CHECK(s.affected_sets[a].size() == criteo::kSizes[a]);
    CHECK(s.baseline_means[start] == criteo::kUntreated[a]);
    CHECK(s.action_means[a][start] == criteo::kTreated[a]);
    start += criteo::kSizes[a];
  }
}

TEST_CASE("checked-in cluster table agrees with the built-in constants") {
  const auto t = load_cluster_table(std::string(UPLIFT_DATA_DIR) + "/criteo_clusters.json");
  REQUIRE(t.sizes.size() == criteo::kClusters);
  for (std::size_t i = 0; i < criteo::kClusters; ++i) {
    CHECK(t.sizes[i] == criteo::kSizes[i]);
    CHECK(t.treated[i] == criteo::kTreated[i]);
    CHECK(t.untreated[i] == criteo::kUntreated[i]);
    CHECK(t.published_uplift[i] == criteo::kPublishedUplift[i]);
  }
}

TEST_CASE("lower-bound instances") {
  const std::vector<double> gaps = {0, 0.3, 0.1, 0.7};
  const std::vector<std::size_t> counts = {4, 2, 5, 1};
  for (auto variant : {LowerBoundVariant::kBlockShared, LowerBoundVariant::kFullyShared}) {
    const auto lb = make_lower_bound_instance(4, 6, gaps, counts, variant);
    CHECK(validate_spec(lb.spec).empty());
    CHECK(expected_reward(lb.spec, Arm::action(0)) == doctest::Approx(1.7).epsilon(1e-14));
    const auto g = suboptimality_gaps(lb.spec);
    for (std::size_t a = 0; a < 4; ++a) CHECK(std::abs(g.gaps[a] - gaps[a]) <= 1e-12);
    for (double b : lb.spec.baseline_means) CHECK(b == 0.0);
    for (std::size_t a = 0; a < 4; ++a) {
      CHECK(lb.spec.affected_sets[a].size() == counts[a]);
      for (std::size_t v = 0; v < 6; ++v) {
        const double expect = v < counts[a] ? (1.7 - gaps[a]) / double(counts[a]) : 0.0;
        CHECK(lb.spec.action_means[a][v] == doctest::Approx(expect).epsilon(1e-14));
      }
    }
  }
  CHECK_THROWS(make_lower_bound_instance(2, 3, {0.1, 0}, {1, 1}, LowerBoundVariant::kBlockShared));
  CHECK_THROWS(make_lower_bound_instance(2, 3, {0, -0.1}, {1, 1}, LowerBoundVariant::kBlockShared));
  CHECK_THROWS(make_lower_bound_instance(2, 3, {0, 0.1}, {0, 1}, LowerBoundVariant::kBlockShared));
  CHECK_THROWS(make_lower_bound_instance(2, 3, {0, 0.1}, {1, 4}, LowerBoundVariant::kBlockShared));
}

TEST_CASE("lower-bound noise structure") {
  SUBCASE("fully shared K=2 m=5 has total variance 25") {
    const auto lb = make_lower_bound_instance(2, 5, {0, 0.5}, {2, 3}, LowerBoundVariant::kFullyShared);
    Environment env(shared(lb.spec), 8, lb.options());
    const int n = 40000;
    for (std::size_t a = 0; a < 2; ++a) {
      double s1 = 0, s2 = 0;
      for (int i = 0; i < n; ++i) {
        const auto x = env.sample_payoffs(a);
        double s = 0;
        for (double v : x) s += v;
        // one shared noise: all coordinates move together
        CHECK(x[4] - lb.spec.action_means[a][4] == doctest::Approx(x[0] - lb.spec.action_means[a][0]));
        s1 += s;
        s2 += s * s;
      }
      const double mean = s1 / n;
      CHECK(std::abs((s2 / n - mean * mean) / 25.0 - 1.0) <= 0.05);
    }
  }
  SUBCASE("block shared: noise only on the pulled action's block") {
    const auto lb = make_lower_bound_instance(2, 5, {0, 0.5}, {2, 3}, LowerBoundVariant::kBlockShared);
    Environment env(shared(lb.spec), 8, lb.options());
    for (int i = 0; i < 200; ++i) {
      const auto x = env.sample_payoffs(1);
      CHECK(x[3] == 0.0);
      CHECK(x[4] == 0.0);
      CHECK(x[0] - lb.spec.action_means[1][0] == doctest::Approx(x[2] - lb.spec.action_means[1][2]));
      std::vector<double> b(5);
      env.sample_baseline(b);
      for (double v : b) CHECK(v == 0.0);
    }
  }
}

TEST_CASE("GaussianFactor reproduces its covariance") {
  CounterRng rng(1, Stream::kPayoffs);
  Eigen::MatrixXd dense(3, 3);
  dense << 1.0, 0.3, -0.2, 0.3, 0.8, 0.1, -0.2, 0.1, 0.5;
  Eigen::MatrixXd singular = Eigen::MatrixXd::Zero(3, 3);
  singular.topLeftCorner(2, 2).setOnes();
  Eigen::MatrixXd equi = Eigen::MatrixXd::Constant(3, 3, 0.25);
  equi.diagonal().setOnes();
  Eigen::MatrixXd semi(3, 3);  // rank 2, not block structured
  semi << 1.0, 0.5, 1.0, 0.5, 1.0, 0.5, 1.0, 0.5, 1.0;
  for (const Eigen::MatrixXd& cov : {dense, singular, equi, semi, Eigen::MatrixXd(Eigen::MatrixXd::Zero(3, 3))}) {
    const auto f = GaussianFactor::from_covariance(cov);
    const int n = 60000;
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(3, 3);
    std::vector<double> x(3);
    for (int i = 0; i < n; ++i) {
      std::fill(x.begin(), x.end(), 0.0);
      f.add_sample(rng, 1.0, x);
      const Eigen::Map<Eigen::Vector3d> xv(x.data());
      acc += xv * xv.transpose();
    }
    acc /= n;
    CHECK((acc - cov).cwiseAbs().maxCoeff() <= 0.03);
  }
  Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(2, 2);
  bad(0, 1) = bad(1, 0) = 2.0;
  CHECK_THROWS(GaussianFactor::from_covariance(bad));
}

TEST_CASE("spec documents round-trip") {
  const auto s = make_gaussian_preset();
  const auto back = spec_from_json(spec_to_json(s));
  CHECK(back.num_actions == s.num_actions);
  CHECK(back.action_means == s.action_means);
  CHECK(back.baseline_means == s.baseline_means);
  CHECK(back.affected_sets == s.affected_sets);
  CHECK(std::get<GaussianCorrelated>(back.noise).covariance == std::get<GaussianCorrelated>(s.noise).covariance);

  const auto doc = nlohmann::json::parse(R"({
    "num_actions": 2, "num_variables": 3,
    "baseline_means": [0.5, 0.5, 0.5],
    "individual_uplifts": [[0.1], [0.2, -0.1]],
    "affected_sets": [[2], [1, 3]],
    "noise": {"type": "gaussian_correlated", "equicorrelated": {"variance": 1, "correlation": 0.1}}
  })");
  const auto t = spec_from_json(doc);
  CHECK(t.affected_sets == std::vector<std::vector<std::size_t>>{{1}, {0, 2}});
  CHECK(t.action_means[0] == std::vector<double>{0.5, 0.6, 0.5});
  CHECK(t.action_means[1][2] == doctest::Approx(0.4));
  CHECK(validate_spec(t).empty());

  auto broken = doc;
  broken["affected_sets"][1][0] = 7;
  try {
    spec_from_json(broken);
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.path() == "/affected_sets/1");
  }
}
