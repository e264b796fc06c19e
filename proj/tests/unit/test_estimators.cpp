#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "uplift/environments.hpp"
#include "uplift/estimators.hpp"

using namespace uplift;

namespace {

std::shared_ptr<const AffectedSets> sets(std::size_t m, std::vector<std::vector<std::size_t>> s) {
  return std::make_shared<const AffectedSets>(m, std::move(s));
}

}  // namespace

TEST_CASE("radius") {
  CHECK(radius(8, 1) == doctest::Approx(0.5));
  CHECK(radius(0, 1) == kInf);
  CHECK(radius(2, 2) == doctest::Approx(1.41421356237));
  CHECK_THROWS_AS(radius(3, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(radius(3, -1.0), std::invalid_argument);
  for (std::uint64_t n = 1; n < 50; ++n) {
    CHECK(radius(n + 1, 1.5) < radius(n, 1.5));
    CHECK(radius(n, 1.5) < radius(n, 1.6));
  }
}

TEST_CASE("saturating subtraction") {
  CHECK(sat_sub(kInf, kInf) == kInf);
  CHECK(sat_sub(kInf, 3.0) == kInf);
  CHECK(sat_sub(3.0, kInf) == -kInf);
  CHECK(sat_sub(3.0, 1.0) == 2.0);
}

TEST_CASE("observe updates counts and sums") {
  EstimatorState st(2, 3, sets(3, {{0}, {1, 2}}));
  const std::vector<double> x = {0.1, 0.2, 0.3};
  st.observe(0, x);
  CHECK(st.pull_count(0) == 1);
  CHECK(st.pull_count(1) == 0);
  CHECK(st.round() == 1);
  for (std::size_t v = 0; v < 3; ++v) CHECK(st.payoff_sum(0, v) == x[v]);
  CHECK(st.baseline_count(0) == 0);
  CHECK(st.baseline_count(1) == 1);
  CHECK(st.baseline_count(2) == 1);
  CHECK(st.baseline_sum(2) == 0.3);
  CHECK(st.reward_sum(0) == doctest::Approx(0.6));
  CHECK_THROWS(st.observe(0, std::vector<double>{1.0}));
  CHECK_THROWS(st.observe(2, x));
}

TEST_CASE("mean estimates use max(1, N)") {
  EstimatorState st(1, 1, sets(1, {{}}));
  CHECK(st.mean_estimate(0, 0) == 0.0);
  CHECK(st.baseline_mean_estimate(0) == 0.0);
  for (int i = 0; i < 4; ++i) st.observe(0, std::vector<double>{0.75});
  CHECK(st.mean_estimate(0, 0) == 0.75);
  CHECK(st.baseline_mean_estimate(0) == 0.75);
}

TEST_CASE("zero-noise means are exact") {
  auto spec = std::make_shared<const BanditSpec>(make_gaussian_preset());
  Environment env(spec, 1, {0.0, {}});
  EstimatorState st(10, 100);
  std::vector<double> x(100);
  for (int i = 0; i < 100; ++i) {
    env.sample_payoffs(0, x);
    st.observe(0, x);
  }
  // 100 copies of 0.55 (or 0.5) summed; compare the sum of the same doubles
  for (std::size_t v = 0; v < 100; ++v) {
    double s = 0;
    for (int i = 0; i < 100; ++i) s += spec->action_means[0][v];
    CHECK(st.mean_estimate(0, v) == s / 100.0);
    CHECK(std::abs(st.mean_estimate(0, v) - spec->action_means[0][v]) < 1e-14);
  }
}

TEST_CASE("mean estimate concentrates after 1e4 pulls (200 seeds)") {
  auto spec = std::make_shared<const BanditSpec>(make_gaussian_preset());
  int good = 0;
  const int seeds = 200;
  std::vector<double> sum(100);
  for (int seed = 1; seed <= seeds; ++seed) {
    Environment env(spec, seed);
    EstimatorState st(10, 100);
    env.sample_payoff_sum(4, 10000, sum);
    st.observe_batch(4, 10000, sum);
    bool ok = true;
    for (std::size_t v = 0; v < 100; ++v) ok = ok && std::abs(st.mean_estimate(4, v) - spec->action_means[4][v]) <= 0.04;
    good += ok;
  }
  CHECK(good >= 0.99 * seeds);
}

TEST_CASE("ucb_index three cases") {
  // v0 is affected by every action; v1 only by action 0; v2 by nobody
  EstimatorState st(2, 3, sets(3, {{0, 1}, {0}}));
  for (int i = 0; i < 4; ++i) st.observe(0, std::vector<double>{0.75, 0.75, 0.2});
  for (int i = 0; i < 8; ++i) st.observe(1, std::vector<double>{0.1, 0.4, 0.3});
  CHECK(st.ucb_index(Arm::baseline(), 0, 1.0) == 0.0);
  CHECK(st.ucb_index(Arm::action(0), 1, 1.0) == doctest::Approx(0.75 + std::sqrt(0.5)));
  CHECK(st.ucb_index(Arm::action(0), 1, 1.0) == doctest::Approx(1.45711).epsilon(1e-5));
  // baseline at v1 pools the 8 pulls of action 1
  CHECK(st.baseline_count(1) == 8);
  CHECK(st.ucb_index(Arm::baseline(), 1, 1.0) == doctest::Approx(0.4 + 0.5));
  CHECK(st.ucb_index(Arm::baseline(), 2, 1.0) == doctest::Approx((4 * 0.2 + 8 * 0.3) / 12 + std::sqrt(2.0 / 12)));
  CHECK_THROWS_AS(st.ucb_index(Arm::action(1), 1, 1.0), std::logic_error);
  EstimatorState fresh(2, 3, sets(3, {{0, 1}, {0}}));
  CHECK(fresh.ucb_index(Arm::baseline(), 2, 1.0) == kInf);
}

TEST_CASE("confidence intervals") {
  EstimatorState st(1, 1);
  const auto c0 = st.confidence_interval(0, 0, 1.0);
  CHECK(c0.radius == kInf);
  CHECK(c0.contains(1e300));
  CHECK(c0.contains(-1e300));
  for (int i = 0; i < 8; ++i) st.observe(0, std::vector<double>{0.3});
  const auto c = st.confidence_interval(0, 0, 1.0);
  CHECK(c.lo() == doctest::Approx(-0.2));
  CHECK(c.hi() == doctest::Approx(0.8));

  CHECK(disjoint({0.1, 0.1}, {0.7, 0.2}));
  CHECK_FALSE(disjoint({0.25, 0.25}, {0.7, 0.2}));
  CHECK(intersects({0.25, 0.25}, {0.7, 0.2}));
  CHECK(intersects(c0, {5.0, 0.0}));
}

TEST_CASE("baseline counts dominate action counts off the affected set") {
  auto spec = std::make_shared<const BanditSpec>(make_gaussian_preset());
  auto aff = std::make_shared<const AffectedSets>(*spec);
  Environment env(spec, 2);
  EstimatorState st(10, 100, aff);
  CounterRng rng(2, Stream::kPolicy);
  std::vector<double> x(100);
  for (int t = 0; t < 3000; ++t) {
    const std::size_t a = rng() % 10;
    env.sample_payoffs(a, x);
    st.observe(a, x);
    for (std::size_t b = 0; b < 10; ++b) {
      for (std::size_t v = 0; v < 100; ++v) {
        if (aff->contains(b, v)) continue;
        CHECK(st.baseline_count(v) >= st.pull_count(b));
        CHECK(st.baseline_confidence_interval(v, 1.0).radius <= st.confidence_interval(b, v, 1.0).radius);
      }
    }
  }
  std::uint64_t total = 0;
  for (std::size_t a = 0; a < 10; ++a) total += st.pull_count(a);
  CHECK(total == st.round());
}

TEST_CASE("observe is order-insensitive") {
  auto aff = sets(2, {{0}, {1}});
  EstimatorState a(2, 2, aff), b(2, 2, aff);
  std::vector<std::pair<std::size_t, std::vector<double>>> obs = {
      {0, {0.5, 0.25}}, {1, {0.125, 0.75}}, {0, {1.0, 0.5}}, {1, {0.0, 0.25}}};
  for (const auto& [act, x] : obs) a.observe(act, x);
  std::reverse(obs.begin(), obs.end());
  for (const auto& [act, x] : obs) b.observe(act, x);
  for (std::size_t act = 0; act < 2; ++act) {
    CHECK(a.pull_count(act) == b.pull_count(act));
    for (std::size_t v = 0; v < 2; ++v) CHECK(a.payoff_sum(act, v) == b.payoff_sum(act, v));
  }
  for (std::size_t v = 0; v < 2; ++v) {
    CHECK(a.baseline_count(v) == b.baseline_count(v));
    CHECK(a.baseline_sum(v) == b.baseline_sum(v));
  }
}

TEST_CASE("observe_batch equals repeated observe on counts") {
  auto aff = sets(2, {{0}, {1}});
  EstimatorState a(2, 2, aff), b(2, 2, aff);
  for (int i = 0; i < 5; ++i) a.observe(1, std::vector<double>{0.5, 0.25});
  b.observe_batch(1, 5, std::vector<double>{2.5, 1.25});
  CHECK(a.pull_count(1) == b.pull_count(1));
  CHECK(a.round() == b.round());
  CHECK(a.baseline_count(0) == b.baseline_count(0));
  CHECK(a.mean_estimate(1, 0) == b.mean_estimate(1, 0));
  CHECK(a.reward_sum(1) == doctest::Approx(b.reward_sum(1)));
}
