#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "ncpoisson/errors.hpp"
#include "ncpoisson/subshift_model.hpp"

using namespace ncp;

namespace {

MarkovGibbsMeasure golden() {
  Eigen::MatrixXd Q(2, 2);
  Q << 2.0 / 3, 1.0 / 3, 1, 0;
  return MarkovGibbsMeasure(SubshiftSFT::golden_mean(), Q);
}

MarkovGibbsMeasure three_symbol() {
  Eigen::MatrixXi A(3, 3);
  A << 1, 1, 0, 0, 1, 1, 1, 0, 1;
  Eigen::MatrixXd Q(3, 3);
  Q << 0.3, 0.7, 0, 0, 0.6, 0.4, 0.5, 0, 0.5;
  return MarkovGibbsMeasure(SubshiftSFT(A), Q);
}

MarkovGibbsMeasure fair(int iota) { return MarkovGibbsMeasure::uniform_rows(SubshiftSFT::full_shift(iota)); }

// Every word of the given length over the alphabet, admissible or not.
std::vector<Word> all_words(int iota, int length) {
  std::vector<Word> out;
  Word w(static_cast<std::size_t>(length), 0);
  while (true) {
    out.push_back(w);
    int i = length - 1;
    while (i >= 0 && ++w[static_cast<std::size_t>(i)] == iota) w[static_cast<std::size_t>(i--)] = 0;
    if (i < 0) break;
  }
  return out;
}

// Self-overlap at some shift i <= a (i < |w|).
bool has_period_at_most(const Word& w, Index a) {
  const auto n = static_cast<Index>(w.size());
  for (Index i = 1; i <= std::min(a, n - 1); ++i) {
    bool ok = true;
    for (Index k = 0; k + i < n; ++k) ok = ok && w[static_cast<std::size_t>(k + i)] == w[static_cast<std::size_t>(k)];
    if (ok) return true;
  }
  return false;
}

// P(x[t, t+m) in blocks for all t in times) by summing cylinder probabilities of whole words.
double b_by_words(const MarkovGibbsMeasure& mu, const CylinderTarget& target, const std::vector<Index>& times) {
  const Index m = target.block_length;
  const Index len = *std::max_element(times.begin(), times.end()) + m;
  double total = 0;
  for (const Word& x : admissible_words(mu.sft(), static_cast<int>(len))) {
    bool all = true;
    for (Index t : times) {
      const Word piece(x.begin() + t, x.begin() + t + m);
      all = all && std::binary_search(target.blocks.begin(), target.blocks.end(), piece);
    }
    if (all) total += cylinder_prob(mu, x);
  }
  return total;
}

}  // namespace

TEST_CASE("SFT validation and bridges") {
  CHECK_THROWS_AS(SubshiftSFT(Eigen::MatrixXi::Identity(2, 2)), ValidationError);
  Eigen::MatrixXi bad(2, 2);
  bad << 1, 2, 1, 0;
  CHECK_THROWS_AS(SubshiftSFT{bad}, ValidationError);
  const auto g = SubshiftSFT::golden_mean();
  CHECK(g.wp() == 2);
  CHECK_FALSE(g.bridge(1, 1, 1));
  CHECK(g.bridge(1, 1, 2));
  CHECK(g.admissible(Word{0, 1, 0, 0, 1}));
  CHECK_FALSE(g.admissible(Word{0, 1, 1}));
  Eigen::MatrixXd wrong(2, 2);
  wrong << 0.5, 0.5, 0.5, 0.5;  // support exceeds A
  CHECK_THROWS_AS(MarkovGibbsMeasure(g, wrong), ValidationError);
}

TEST_CASE("cylinder probability examples") {
  const auto f = fair(2);
  for (const auto& w : all_words(2, 6)) CHECK(cylinder_prob(f, w) == doctest::Approx(1.0 / 64).epsilon(1e-14));
  const auto gm = golden();
  CHECK(gm.pi()(0) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(gm.pi()(1) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(cylinder_prob(gm, Word{0}) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(cylinder_prob(gm, Word{0, 1, 0}) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK_THROWS_AS(cylinder_prob(gm, Word{1, 1}), ValidationError);
  // h = -sum pi_a Q_ab ln Q_ab
  const double h = -0.75 * (2.0 / 3 * std::log(2.0 / 3) + 1.0 / 3 * std::log(1.0 / 3));
  CHECK(gm.entropy() == doctest::Approx(h).epsilon(1e-12));
}

TEST_CASE("cylinder probabilities form a stationary measure") {
  for (const auto& mu : {golden(), three_symbol(), fair(3)}) {
    for (int n = 1; n <= 12; ++n) {
      double total = 0;
      for (const auto& w : admissible_words(mu.sft(), n)) total += cylinder_prob(mu, w);
      CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
    }
    for (int n = 1; n <= 8; ++n) {
      for (const auto& w : admissible_words(mu.sft(), n)) {
        double left = 0, right = 0;
        for (int a = 0; a < mu.sft().iota(); ++a) {
          Word aw{a};
          aw.insert(aw.end(), w.begin(), w.end());
          if (mu.sft().admissible(aw)) left += cylinder_prob(mu, aw);
          Word wa = w;
          wa.push_back(a);
          if (mu.sft().admissible(wa)) right += cylinder_prob(mu, wa);
        }
        CHECK(left == doctest::Approx(cylinder_prob(mu, w)).epsilon(1e-12));
        CHECK(right == doctest::Approx(cylinder_prob(mu, w)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("Gibbs constant") {
  const auto f = gibbs_constant(fair(2), 8);
  CHECK(f.C == doctest::Approx(1.0));
  CHECK(f.bounded);

  // ratio pi_{w0} / Q(w_last, next), next = w0 when allowed, else the smallest allowed symbol
  const auto gm = golden();
  double want = 1;
  for (int n = 1; n <= 8; ++n) {
    for (const auto& w : admissible_words(gm.sft(), n)) {
      const int next = gm.sft().allowed(w.back(), w.front()) ? w.front() : 0;
      const double r = gm.pi()(w.front()) / gm.Q()(w.back(), next);
      want = std::max({want, r, 1 / r});
    }
  }
  const auto g = gibbs_constant(gm, 8);
  CHECK(g.C == doctest::Approx(want).epsilon(1e-12));
  CHECK(g.C == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(g.bounded);
  CHECK(std::isfinite(gibbs_constant(three_symbol(), 1).C));
}

TEST_CASE("psi-mixing") {
  const auto f = psi_mixing_check(fair(2), 4, 10);
  CHECK(std::isinf(f.beta));
  CHECK(f.violations == 0u);
  CHECK(f.worst.relative_error == doctest::Approx(0.0).epsilon(1e-12));

  const auto gm = golden();
  const auto g = psi_mixing_check(gm, 4, 12);
  CHECK(std::abs(g.beta / std::log(3.0) - 1) < 0.05);
  CHECK(g.spectral_rate == doctest::Approx(std::log(3.0)).epsilon(1e-10));
  CHECK(g.beta_matches_spectrum);
  CHECK(g.violations == 0u);
  CHECK(g.triples > 0u);

  // relative error of one triple from cylinder sums over every connecting word
  const Word U{0, 1}, V{1, 0, 0};
  for (Index gap = 1; gap <= 6; ++gap) {
    double joint = 0;
    for (const auto& mid : all_words(2, static_cast<int>(gap - 1))) {
      Word x = U;
      if (gap > 1) x.insert(x.end(), mid.begin(), mid.end());
      x.insert(x.end(), V.begin(), V.end());
      if (gm.sft().admissible(x)) joint += cylinder_prob(gm, x);
    }
    const double err = std::abs(joint / (cylinder_prob(gm, U) * cylinder_prob(gm, V)) - 1);
    CHECK(err <= g.C * std::exp(-g.beta * static_cast<double>(gap)) * (1 + 1e-9));
    CHECK(err <= g.per_gap[static_cast<std::size_t>(gap - 1)] + 1e-12);
  }
}

TEST_CASE("short return examples") {
  const auto full = SubshiftSFT::full_shift(2);
  CHECK_FALSE(short_return_check(full, Word{0, 1, 0, 1, 0, 1, 0, 1}, 2));
  CHECK(short_return_check(full, Word{0, 0, 1, 0, 0, 1, 1}, 3));
  CHECK_FALSE(short_return_check(full, Word{0, 0, 0, 0, 0}, 1));
}

TEST_CASE("words with a period at most a never pass the short-return check") {
  for (int len = 1; len <= 12; ++len) {
    for (const auto& w : all_words(2, len)) {
      for (Index a = 0; a < len; ++a) {
        // on the full shift the check is exactly the overlap condition
        CHECK(short_return_check(SubshiftSFT::full_shift(2), w, a) == !has_period_at_most(w, a));
      }
    }
  }
  const auto gm = SubshiftSFT::golden_mean();
  for (int len = 1; len <= 12; ++len) {
    for (const auto& w : admissible_words(gm, len)) {
      for (Index a = 0; a < len; ++a) {
        if (has_period_at_most(w, a)) CHECK_FALSE(short_return_check(gm, w, a));
      }
    }
  }
}

TEST_CASE("AEP deviation") {
  const auto f = fair(2);
  for (std::uint64_t s = 0; s < 20; ++s) CHECK(aep_deviation(f, sample_point(f, 50, s)) == doctest::Approx(0.0).epsilon(1e-12));
  const auto gm = golden();
  double mean = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Word w = sample_point(gm, 10000, 2024, s);
    CHECK(gm.sft().admissible(w));
    mean += aep_deviation(gm, w) / 100;
  }
  CHECK(mean < 0.05);
  CHECK(aep_deviation(gm, Word{1}) == doctest::Approx(std::abs(std::log(0.25) + gm.entropy())).epsilon(1e-12));
}

TEST_CASE("cylinder targets") {
  const auto f = fair(2);
  const auto t = make_cylinder_target(f, Word{0, 0, 1, 0, 1, 1, 1, 0}, 8);
  CHECK(t.block_length == 8);
  CHECK(t.blocks.size() == 1);
  CHECK(t.probability == doctest::Approx(1.0 / 256));
  CHECK(t.short_return_window == subshift_short_return_window(8, kDefaultShortReturnEpsilon));
  CHECK(t.short_return_clear == short_return_check(f.sft(), t.omega_star, t.short_return_window));
  CHECK(target_count(t, 1, 1.0) == 256);
  CHECK(target_count(t, 2, 1.0) == 65536);

  const auto periodic = make_cylinder_target(f, Word(8, 0), 8);
  CHECK_FALSE(periodic.short_return_clear);
  CHECK_THROWS_AS(NonconventionalSimulator(f, QSchedule::arithmetic_gap(2, 4, 0.5), periodic, 1.0), ValidationError);

  const auto gm = golden();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto c = sample_clear_target(gm, 9, 0, 0.25, seed);
    CHECK(c.short_return_clear);
    CHECK(gm.sft().admissible(c.omega_star));
  }

  // refinement keeps omega*'s own block and draws the rest reproducibly
  const Word w = sample_point(f, 20, 5);
  const auto r1 = make_cylinder_target(f, w, 8, 1.0, 0.25, 77);
  const auto r2 = make_cylinder_target(f, w, 8, 1.0, 0.25, 77);
  CHECK(r1.refined);
  CHECK(r1.block_length == 8 + static_cast<Index>(std::floor(std::log(8.0))));
  CHECK(r1.blocks == r2.blocks);
  const Word own(w.begin(), w.begin() + r1.block_length);
  CHECK(std::binary_search(r1.blocks.begin(), r1.blocks.end(), own));
  for (const auto& b : r1.blocks) CHECK(std::equal(w.begin(), w.begin() + 8, b.begin()));
  double p = 0;
  for (const auto& b : r1.blocks) p += cylinder_prob(f, b);
  CHECK(r1.probability == doctest::Approx(p));
}

TEST_CASE("exact b-coefficients for cylinder targets") {
  const auto gm = golden();
  const auto t = make_cylinder_target(gm, Word{0, 1, 0}, 3);
  // ell = 1: stationarity
  for (Index l = 1; l <= 20; ++l) CHECK(exact_b_subshift(gm, QSchedule::linear(1), t, {l}) == doctest::Approx(t.probability).epsilon(1e-13));

  // full shift, ell = 2, gaps at least the block length: product of probabilities
  const auto f = fair(2);
  const auto tf = make_cylinder_target(f, Word{0, 0, 1, 1}, 4);
  const auto lin = QSchedule::linear(2, 4);
  for (Index l = 1; l <= 10; ++l) CHECK(exact_b_subshift(f, lin, tf, {l}) == doctest::Approx(tf.probability * tf.probability).epsilon(1e-13));

  // golden mean, n = 3, ell = 2, against whole-word enumeration (overlapping and separated occurrences)
  const auto sched = QSchedule::arithmetic_gap(2, 1, 0.5);
  for (Index l = 1; l <= 8; ++l) {
    const auto q = sched.evaluate(l);
    CHECK(exact_b_subshift(gm, sched, t, {l}) == doctest::Approx(b_by_words(gm, t, q)).epsilon(1e-12));
  }
  for (Index l : {1, 2, 3}) {
    for (Index l2 : {4, 6}) {
      std::vector<Index> times = sched.evaluate(l);
      for (Index v : sched.evaluate(l2)) times.push_back(v);
      CHECK(exact_b_subshift(gm, sched, t, {l, l2}) == doctest::Approx(b_by_words(gm, t, times)).epsilon(1e-12));
    }
  }
  // refined multi-block target
  const auto rt = make_cylinder_target(f, Word{0, 1, 1, 0, 1, 0}, 3, 1.0, 0.25, 3);
  for (Index l = 1; l <= 4; ++l) {
    CHECK(exact_b_subshift(f, sched, rt, {l}) == doctest::Approx(b_by_words(f, rt, sched.evaluate(l))).epsilon(1e-12));
  }
}

TEST_CASE("block kernel and word lift give the same coefficients") {
  const auto mu = three_symbol();
  const auto t = sample_clear_target(mu, 4, 0, 0.25, 8);
  const auto lift = lift_target(mu, t);
  const auto sched = QSchedule::arithmetic_gap(2, 2, 0.5);
  for (const Tuple& tup : std::vector<Tuple>{{1}, {2}, {1, 2}, {3, 7}, {1, 4, 9}}) {
    CHECK(exact_b(lift.lift.chain, sched, lift.gamma, tup) == doctest::Approx(exact_b_subshift(mu, sched, t, tup)).epsilon(1e-12));
  }
}

TEST_CASE("b-coefficients approach P(B)^2 within the psi-mixing envelope") {
  const auto gm = golden();
  const auto psi = psi_mixing_check(gm, 4, 12);
  const auto t = make_cylinder_target(gm, Word{0, 0, 1, 0}, 4);
  const double P = t.probability;
  for (Index G = t.block_length + 1; G <= t.block_length + 12; ++G) {
    const auto s = QSchedule::table({{1, 1 + G}});
    const double b = exact_b_subshift(gm, s, t, {1});
    CHECK(std::abs(b - P * P) <= psi.C * std::exp(-psi.beta * static_cast<double>(G - t.block_length)) * P * P * (1 + 1e-9));
  }
}

TEST_CASE("nonconventional counts: exact law against the occurrence sampler") {
  const auto f = fair(2);
  const auto t = make_cylinder_target(f, Word{0, 0, 1}, 3);
  REQUIRE(t.short_return_clear);
  const auto sched = QSchedule::linear(1);
  const NonconventionalDraw d = simulate_nonconventional(f, sched, t, 1.0, 1);
  CHECK(d.N == 8);

  const Index N = target_count(t, 1, 1.0);
  const auto exact = exact_nonconventional_distribution(f, sched, t, N);
  NonconventionalSimulator sim(f, sched, t, 1.0);
  const std::uint64_t R = 100000;
  std::vector<std::uint64_t> draws(R);
  for (std::uint64_t i = 0; i < R; ++i) {
    Rng rng(31, i, StreamTag::SubshiftPath);
    draws[i] = sim.draw(rng);
  }
  const auto emp = empirical_distribution(draws);
  CHECK(emp.mean() == doctest::Approx(exact.mean()).epsilon(0.02));
  for (std::size_t k = 0; k < exact.pmf.size(); ++k) {
    const double p = exact.at(k);
    CHECK(std::abs(emp.at(k) - p) <= 3 * std::sqrt(p * (1 - p) / R) + 1e-12);
  }
  // a clear word of length 3 with a(3) = 1 cannot recur at the next offset
  for (std::uint64_t i = 0; i < 20; ++i) CHECK(simulate_nonconventional(f, sched, t, 1.0, 2, i).S <= 4u);
}

TEST_CASE("hitting times") {
  const auto f = fair(4);
  // whole space: every l hits
  const auto all = target_from_blocks(f, {{0}, {1}, {2}, {3}});
  const auto h = hitting_time(f, QSchedule::linear(1), all, 3);
  CHECK(h.tau == 1);
  CHECK(h.scaled == doctest::Approx(1.0));
  CHECK_FALSE(h.censored);

  // one symbol of four, ell = 1: tau is geometric with p = 1/4
  const auto one = target_from_blocks(f, {{0}});
  const std::uint64_t R = 100000;
  std::uint64_t above = 0;
  HittingTimeSimulator sim(f, QSchedule::linear(1), one, 4.0);
  for (std::uint64_t i = 0; i < R; ++i) {
    Rng rng(12, i, StreamTag::HittingTime);
    above += sim.draw(rng).scaled > 1.0 ? 1 : 0;
  }
  const double want = std::pow(0.75, 4);  // P(tau > ceil(1/p))
  CHECK(std::abs(static_cast<double>(above) / R - want) <= 3 * std::sqrt(want * (1 - want) / R));
}
