#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <random>
#include <set>

#include "ncpoisson/errors.hpp"
#include "ncpoisson/index_schedule.hpp"

using namespace ncp;

namespace {

// Brute-force rho over all ell^2 index pairs.
Index rho_oracle(const QSchedule& s, Index a, Index b) {
  Index best = std::numeric_limits<Index>::max();
  for (int i = 1; i <= s.ell(); ++i) {
    for (int j = 1; j <= s.ell(); ++j) best = std::min(best, std::abs(s.q(i, a) - s.q(j, b)));
  }
  return best;
}

// Connected components by repeated flooding; independent of the union-find in the library.
std::set<std::set<Index>> components_oracle(const QSchedule& s, const Tuple& t, double threshold) {
  std::set<std::set<Index>> out;
  std::vector<bool> seen(t.size(), false);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (seen[i]) continue;
    std::set<Index> comp{t[i]};
    seen[i] = true;
    bool grew = true;
    while (grew) {
      grew = false;
      for (std::size_t j = 0; j < t.size(); ++j) {
        if (seen[j]) continue;
        for (Index m : comp) {
          if (static_cast<double>(rho_oracle(s, m, t[j])) <= threshold) {
            comp.insert(t[j]);
            seen[j] = true;
            grew = true;
            break;
          }
        }
      }
    }
    out.insert(comp);
  }
  return out;
}

std::set<std::set<Index>> as_sets(const ClusterPartition& p) {
  std::set<std::set<Index>> out;
  for (const auto& c : p.clusters) out.insert(std::set<Index>(c.begin(), c.end()));
  return out;
}

std::vector<QSchedule> sample_schedules() {
  return {QSchedule::linear(1), QSchedule::linear(2), QSchedule::linear(3, 2), QSchedule::arithmetic_gap(2, 4, 0.5),
          QSchedule::arithmetic_gap(3, 1, 0.2), QSchedule::polynomial(2, 2), QSchedule::exponential_gap(3)};
}

Tuple random_tuple(std::mt19937_64& gen, int r, Index n) {
  std::set<Index> s;
  std::uniform_int_distribution<Index> d(1, n);
  while (static_cast<int>(s.size()) < r) s.insert(d(gen));
  return Tuple(s.begin(), s.end());
}

}  // namespace

TEST_CASE("evaluate on the built-in families") {
  CHECK(QSchedule::linear(2).evaluate(3) == std::vector<Index>{3, 6});
  CHECK(QSchedule::exponential_gap(3).evaluate(5) == std::vector<Index>{5, 10, 20});
  const auto g = QSchedule::arithmetic_gap(2, 4, 0.5);
  // ln 1 = 0, so the gap floors to 1.
  CHECK(g.evaluate(1) == std::vector<Index>{1, 2});
  const Index l = 100;
  const Index gap = static_cast<Index>(std::ceil(4 * std::pow(std::log(100.0), 1.5)));
  CHECK(g.evaluate(l) == std::vector<Index>{l, l + gap});
  CHECK(QSchedule::polynomial(3, 2).evaluate(4) == std::vector<Index>{16, 32, 48});
  CHECK(QSchedule::linear(2, 3).evaluate(2) == std::vector<Index>{6, 12});
}

TEST_CASE("ordering and gap floors hold on every family up to the horizon") {
  for (const auto& s : sample_schedules()) {
    for (Index l = 1; l <= 2000; l += 7) {
      const auto v = s.evaluate(l);
      CHECK(v.front() >= l);
      for (std::size_t j = 1; j < v.size(); ++j) {
        CHECK(v[j] > v[j - 1]);
        if (s.gap_params()) CHECK(static_cast<double>(v[j] - v[j - 1]) >= s.gap_floor(l));
      }
      if (l > 1) {
        const auto prev = s.evaluate(l - 1);
        for (std::size_t j = 0; j < v.size(); ++j) CHECK(v[j] > prev[j]);
      }
    }
  }
}

TEST_CASE("table schedules are validated") {
  CHECK_NOTHROW(QSchedule::table({{1, 3}, {2, 5}, {3, 8}}));
  CHECK_THROWS_AS(QSchedule::table({{1, 1}}), ValidationError);             // not strictly ordered
  CHECK_THROWS_AS(QSchedule::table({{2, 4}, {2, 5}}), ValidationError);     // q_1 not increasing
  CHECK_THROWS_AS(QSchedule::table({{0, 4}}), ValidationError);             // q_1(1) < 1
  CHECK_THROWS_AS(QSchedule::table({{5, 6}, {6, 7}, {7, 8}}, GapParams{4, 0.5}), ValidationError);
  const auto t = QSchedule::table({{1, 3}, {2, 5}});
  CHECK(t.evaluate(2) == std::vector<Index>{2, 5});
  CHECK(t.domain_limit() == 2);
  CHECK_THROWS(t.evaluate(3));
}

TEST_CASE("rho examples") {
  const auto s = QSchedule::linear(2);
  CHECK(rho(s, 1, 2) == 0);
  CHECK(rho(s, 1, 3) == 1);
  for (const auto& sch : sample_schedules()) CHECK(rho(sch, 7, 7) == 0);
}

TEST_CASE("rho matches the brute-force oracle and is symmetric") {
  std::mt19937_64 gen(11);
  std::uniform_int_distribution<Index> d(1, 500);
  for (const auto& s : sample_schedules()) {
    for (int trial = 0; trial < 300; ++trial) {
      const Index a = d(gen), b = d(gen);
      CHECK(rho(s, a, b) == rho_oracle(s, a, b));
      CHECK(rho(s, a, b) == rho(s, b, a));
    }
  }
}

TEST_CASE("cluster_partition examples") {
  const auto s = QSchedule::linear(2);
  CHECK(as_sets(cluster_partition(s, {1, 2, 5}, 0)) == std::set<std::set<Index>>{{1, 2}, {5}});
  CHECK(as_sets(cluster_partition(s, {1, 2, 4}, 0)) == std::set<std::set<Index>>{{1, 2, 4}});
  CHECK(as_sets(cluster_partition(QSchedule::exponential_gap(2), {9}, 3)) == std::set<std::set<Index>>{{9}});
  CHECK_THROWS_AS(cluster_partition(s, {3, 3}, 0), ValidationError);
}

TEST_CASE("cluster_partition equals flood-fill components and only coarsens with the threshold") {
  std::mt19937_64 gen(12);
  for (const auto& s : sample_schedules()) {
    for (int trial = 0; trial < 60; ++trial) {
      const int r = 1 + static_cast<int>(gen() % 5);
      const Tuple t = random_tuple(gen, r, 60);
      const double th1 = static_cast<double>(gen() % 6);
      const double th2 = th1 + static_cast<double>(gen() % 6);
      const auto p1 = cluster_partition(s, t, th1);
      const auto p2 = cluster_partition(s, t, th2);
      CHECK(as_sets(p1) == components_oracle(s, t, th1));
      // every cluster at th1 sits inside one cluster at th2
      for (const auto& c : as_sets(p1)) {
        int holders = 0;
        for (const auto& big : as_sets(p2)) holders += std::includes(big.begin(), big.end(), c.begin(), c.end()) ? 1 : 0;
        CHECK(holders == 1);
      }
      // maximality: members of different clusters are farther apart than the threshold
      for (std::size_t i = 0; i < p1.clusters.size(); ++i) {
        for (std::size_t j = i + 1; j < p1.clusters.size(); ++j) {
          for (Index a : p1.clusters[i]) {
            for (Index b : p1.clusters[j]) CHECK(static_cast<double>(rho(s, a, b)) > th1);
          }
        }
      }
    }
  }
}

TEST_CASE("classify_tuple examples") {
  const auto s = QSchedule::linear(2);
  const auto a = classify_tuple(s, {1, 2}, 0, 0);
  CHECK(a.cls.k == 1);
  CHECK(a.has_nonsingleton);
  CHECK(a.rare);
  const auto b = classify_tuple(s, {3, 7}, 0, 0);
  CHECK(b.cls.k == 2);
  CHECK(b.i_min == 3);
  CHECK_FALSE(b.rare);
  CHECK(classify_tuple(QSchedule::arithmetic_gap(2, 4, 0.5), {1, 50}, 0, 10).rare);
}

TEST_CASE("non-rare at threshold 0 exactly when every pair has positive rho") {
  std::mt19937_64 gen(13);
  for (const auto& s : sample_schedules()) {
    for (int trial = 0; trial < 100; ++trial) {
      const Tuple t = random_tuple(gen, 2 + static_cast<int>(gen() % 3), 40);
      bool all_positive = true;
      for (std::size_t i = 0; i < t.size(); ++i) {
        for (std::size_t j = i + 1; j < t.size(); ++j) all_positive = all_positive && rho_oracle(s, t[i], t[j]) > 0;
      }
      CHECK(classify_tuple(s, t, 0, 0).rare == !all_positive);
    }
  }
}

TEST_CASE("enumerate_classes examples") {
  const auto s = QSchedule::linear(2);
  const auto e = enumerate_classes(s, 2, 3, 0, 0);
  CHECK(e.total() == 3);
  bool saw12 = false, saw23 = false;
  for (const auto& [cls, tuples] : e.classes) {
    for (const auto& t : tuples) {
      const bool rare = classify_tuple(s, t, 0, 0).rare;
      if (t == Tuple{1, 2}) saw12 = rare;
      if (t == Tuple{2, 3}) saw23 = !rare;
    }
  }
  CHECK(saw12);
  CHECK(saw23);

  const auto singles = enumerate_classes(s, 1, 10, 0, 4);
  CHECK(singles.total() == 10);
  CHECK(singles.rare_count() == 4);

  CHECK_THROWS_AS(enumerate_classes(s, 3, 2000, 0, 0, 1000), ResourceError);
}

TEST_CASE("class sizes add up to binomial(n, r)") {
  for (const auto& s : sample_schedules()) {
    for (int r = 1; r <= 3; ++r) {
      const auto e = enumerate_classes(s, r, 14, 1, 2);
      CHECK(static_cast<double>(e.total()) == binomial(14, r));
    }
  }
  CHECK(binomial(10, 3) == 120);
  CHECK(factorial(5) == 120);
}

TEST_CASE("for q_j(l) = j l at most ell^2 indices m have rho(l, m) = 0") {
  for (int ell = 1; ell <= 4; ++ell) {
    const auto s = QSchedule::linear(ell);
    for (Index l = 1; l <= 60; ++l) {
      int count = 0;
      for (Index m = 1; m <= 60 * ell; ++m) count += (m != l && rho(s, l, m) == 0) ? 1 : 0;
      CHECK(count <= ell * ell);
    }
  }
}

TEST_CASE("ScheduleTable inverse agrees with a linear scan") {
  for (const auto& s : sample_schedules()) {
    const ScheduleTable t(s, 300);
    for (int j = 1; j <= s.ell(); ++j) {
      for (Index v = 1; v <= t.last(300); v += 3) {
        std::optional<Index> want;
        for (Index l = 1; l <= 300; ++l) {
          if (t.at(j, l) == v) want = l;
        }
        CHECK(t.inverse(j, v) == want);
      }
    }
  }
}

TEST_CASE("short-return window and index cutoff") {
  CHECK(subshift_short_return_window(8, 0.25) == static_cast<Index>(std::floor(std::pow(std::log(8.0), 1.25))));
  const GapParams gap{4, 0.5};
  for (Index n = 2; n <= 40; ++n) {
    const Index a = subshift_short_return_window(n, 0.25);
    Index k = 1;
    while (!(gap.c * std::pow(std::log(static_cast<double>(k)), 1 + gap.gamma) > 2.0 * static_cast<double>(n + a))) ++k;
    CHECK(subshift_index_cutoff(n, 0.25, gap) == k);
    const auto p = subshift_rare_params(n, 0.25, gap);
    CHECK(p.threshold == static_cast<double>(n + a));
    CHECK(p.cutoff == static_cast<double>(k));
  }
}

TEST_CASE("markov cluster scale") {
  const auto s = QSchedule::linear(2);
  // gap at l is l itself, so ln l is the minimum
  CHECK(markov_cluster_scale(s, 20) == doctest::Approx(std::log(20.0)));
  CHECK(markov_cluster_scale(QSchedule::linear(1), 20) == doctest::Approx(std::log(20.0)));
  const auto p = markov_rare_params(s, 20);
  CHECK(p.threshold == doctest::Approx(std::log(20.0)));
  CHECK(p.cutoff == doctest::Approx(std::log(20.0)));
  const auto ind = independent_rare_params();
  CHECK(ind.threshold == 0);
  CHECK(ind.cutoff == 0);
}

TEST_CASE("independent counting bound covers enumerated class sizes") {
  const auto s = QSchedule::linear(2);
  const Index n = 30;
  const auto e = enumerate_classes(s, 2, n, 0, 0);
  CountingContext ctx;
  ctx.regime = RareRegime::Independent;
  ctx.ell = 2;
  ctx.index_range = n;
  CHECK(counting_bound_violations(e, ctx).empty());
  CHECK(std::isinf(ordered_class_bound(ctx, 2, 2, 0)));
}
