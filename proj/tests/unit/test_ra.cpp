#include <doctest.h>

#include <cmath>
#include <vector>

#include "drlra/ra.hpp"

using namespace drlra;
using namespace drlra::ra;

namespace {

NodeSet first_nodes(std::size_t n) {
  NodeSet s;
  for (std::size_t i = 0; i < n; ++i) {
    s.push_back(NodeId(i));
  }
  return s;
}

// Enumerates all M^n sequence choices and tallies singleton counts.
std::vector<double> enumerate_singletons(std::size_t n, std::size_t m) {
  std::vector<double> dist(n + 1, 0.0);
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) {
    total *= m;
  }
  for (std::size_t code = 0; code < total; ++code) {
    std::vector<int> load(m, 0);
    std::size_t c = code;
    for (std::size_t i = 0; i < n; ++i) {
      ++load[c % m];
      c /= m;
    }
    std::size_t u = 0;
    for (int l : load) {
      u += l == 1 ? 1 : 0;
    }
    dist[u] += 1.0 / static_cast<double>(total);
  }
  return dist;
}

} // namespace

TEST_SUITE("ra") {

TEST_CASE("lone contender always delivered, forced collision never") {
  RngStream rng(1);
  for (int i = 0; i < 100; ++i) {
    CHECK(simulate_ra_contention(first_nodes(1), {1, 1}, rng).ra_delivered.size() == 1);
    const SlotOutcome two = simulate_ra_contention(first_nodes(2), {1, 10}, rng);
    CHECK(two.ra_delivered.empty());
    CHECK(two.ra_collided.size() == 2);
  }
}

TEST_CASE("three contenders deliver 3 (53/54)^2 on average") {
  RngStream rng(42);
  const std::size_t trials = 100000;
  double total = 0.0;
  for (std::size_t i = 0; i < trials; ++i) {
    total += static_cast<double>(simulate_ra_contention(first_nodes(3), {54, 10}, rng).ra_delivered.size());
  }
  const double oracle = 3.0 * std::pow(53.0 / 54.0, 2);
  CHECK(oracle == doctest::Approx(2.8899).epsilon(1e-4));
  CHECK(std::abs(total / trials - oracle) < 0.01);
}

TEST_CASE("grants capped at N") {
  RngStream rng(9);
  for (int i = 0; i < 200; ++i) {
    const SlotOutcome o = simulate_ra_contention(first_nodes(30), {54, 4}, rng);
    CHECK(o.ra_delivered.size() <= 4);
    CHECK(is_subset(o.ra_delivered, o.ra_detected()));
  }
}

TEST_CASE("collision-free probability") {
  CHECK(collision_free_prob(1, 54) == 1.0);
  CHECK(collision_free_prob(2, 1) == 0.0);
  CHECK(collision_free_prob(20, 54) == doctest::Approx(0.7012).epsilon(1e-4 / 0.7012));
  // Two nodes, two sequences: 2 of the 4 equally likely picks are distinct.
  const auto e = enumerate_singletons(2, 2);
  CHECK(collision_free_prob(2, 2) == doctest::Approx(e[2]));
  CHECK(collision_free_prob(2, 2) == 0.5);
  CHECK_THROWS_AS(collision_free_prob(3, 0), std::invalid_argument);
}

TEST_CASE("singleton distribution matches exhaustive enumeration") {
  for (std::size_t m : {2u, 3u, 5u}) {
    for (std::size_t n = 1; n <= 6; ++n) {
      const auto exact = enumerate_singletons(n, m);
      const auto dp = singleton_distribution(n, m);
      REQUIRE(dp.size() >= exact.size());
      for (std::size_t u = 0; u < exact.size(); ++u) {
        CHECK(dp[u] == doctest::Approx(exact[u]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("capped singleton expectation") {
  CHECK(expected_capped_singletons(3, 54, 10) == doctest::Approx(3.0 * std::pow(53.0 / 54.0, 2)));
  CHECK(expected_capped_singletons(0, 54, 10) == 0.0);
  RngStream rng(3);
  const std::size_t trials = 100000;
  double total = 0.0;
  for (std::size_t i = 0; i < trials; ++i) {
    total += static_cast<double>(simulate_ra_contention(first_nodes(25), {54, 10}, rng).ra_delivered.size());
  }
  CHECK(std::abs(total / trials - expected_capped_singletons(25, 54, 10)) < 0.01);
}

TEST_CASE("analytic rate examples") {
  const std::vector<std::size_t> idle(10, 0);
  CHECK(analytic_ra_rate(idle, {54, 10}, 20, RateMode::verbatim).mean() == 0.0);
  CHECK(analytic_ra_rate(idle, {54, 10}, 20, RateMode::simulation_consistent).mean() == 0.0);

  const std::vector<std::size_t> three(5, 3);
  const double sc = analytic_ra_rate(three, {54, 10}, 20, RateMode::simulation_consistent).mean();
  CHECK(sc == doctest::Approx(0.14450).epsilon(5e-6 / 0.1445));

  RngStream rng(17);
  double total = 0.0;
  for (int i = 0; i < 100000; ++i) {
    total += static_cast<double>(simulate_ra_contention(first_nodes(3), {54, 10}, rng).ra_delivered.size());
  }
  CHECK(std::abs(total / 100000.0 / 20.0 - sc) < 0.005);

  const std::vector<std::size_t> one(5, 1);
  CHECK(analytic_ra_rate(one, {54, 10}, 20, RateMode::verbatim).mean() == doctest::Approx(0.05));
  CHECK(verbatim_slot_term(0.0, 54, 10) == 0.0);
}

TEST_CASE("ra scheme over a trace respects invariants") {
  RngStream rng(8);
  std::vector<std::uint8_t> bits(12 * 50);
  for (auto& b : bits) {
    b = rng.bernoulli(0.4) ? 1 : 0;
  }
  const ActivityTrace trace(12, 50, bits);
  const auto out = run_ra_scheme(trace, 10, 50, {6, 3}, rng);
  REQUIRE(out.size() == 40);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i].slot == 10 + i);
    CHECK_FALSE(check_outcome(out[i], trace.active_set(10 + i), 0, 3));
    CHECK(out[i].ra_attempted == trace.active_set(10 + i));
  }
}

}
