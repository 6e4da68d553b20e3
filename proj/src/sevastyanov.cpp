#include "ncpoisson/sevastyanov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "ncpoisson/errors.hpp"
#include "ncpoisson/rng.hpp"

namespace ncp {

double BernoulliOracle::b(const Tuple& tuple) const {
  std::vector<Index> idx;
  for (Index l : tuple) {
    for (Index v : scheme_.schedule().evaluate(l)) idx.push_back(v);
  }
  std::sort(idx.begin(), idx.end());
  const auto distinct = std::unique(idx.begin(), idx.end()) - idx.begin();
  return std::pow(scheme_.p(), static_cast<double>(distinct));
}

std::optional<std::pair<double, double>> BernoulliOracle::rare_envelopes(int r) const {
  const double p = scheme_.p();
  const double lam = scheme_.lambda_n();
  const int ell = scheme_.ell();
  const double c = factorial(r) * std::pow(ell, 2.0 * r);
  double joint = 0, product = 0;
  for (int k = 1; k < r; ++k) {
    joint += std::pow(lam, k) * std::pow(c, k);
    product += std::pow(lam, k) * std::pow(p, (r - k) * ell) * std::pow(c, k);
  }
  return std::make_pair(p * joint, product);
}

double ConditionRow::ratio_width() const {
  if (!ratio_min || !ratio_max) return 0.0;
  return *ratio_max - *ratio_min;
}

namespace {

std::string tuple_string(const Tuple& t) {
  std::string s;
  for (Index v : t) s += (s.empty() ? "" : ",") + std::to_string(v);
  return s;
}

double call(const CoefficientOracle& oracle, const Tuple& t) {
  try {
    return oracle.b(t);
  } catch (const ResourceError& e) {
    throw ResourceError(e.module(), fmt::format("{} (tuple {})", e.what(), tuple_string(t)));
  }
}

struct RatioAccumulator {
  std::optional<double> lo, hi;
  std::uint64_t zero_denominator = 0;
  std::uint64_t evaluated = 0;

  void add(double joint, double product) {
    ++evaluated;
    if (!(product > 0)) {
      ++zero_denominator;
      if (joint > 0) hi = std::numeric_limits<double>::infinity();
      return;
    }
    const double ratio = joint / product;
    lo = lo ? std::min(*lo, ratio) : ratio;
    hi = hi ? std::max(*hi, ratio) : ratio;
  }
};

// Smallest l in 1..N with q_j(l) >= value (N + 1 if none).
Index first_at_least(const ScheduleTable& table, int j, Index value) {
  Index lo = 1, hi = table.count() + 1;
  while (lo < hi) {
    const Index mid = lo + (hi - lo) / 2;
    if (table.at(j, mid) >= value) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo;
}

Index rho_table(const ScheduleTable& table, Index a, Index b) {
  Index best = std::numeric_limits<Index>::max();
  for (Index x : table.row(a)) {
    for (Index y : table.row(b)) best = std::min(best, x > y ? x - y : y - x);
  }
  return best;
}

void full_enumeration(const CoefficientOracle& oracle, int r, const RareParams& rp, const std::vector<double>& single,
                      ConditionRow& row) {
  const Index N = oracle.size();
  Tuple t(static_cast<std::size_t>(r));
  std::iota(t.begin(), t.end(), Index{1});
  RatioAccumulator acc;
  double joint_sum = 0, product_sum = 0;
  while (true) {
    const auto cls = classify_tuple(oracle.schedule(), t, rp.threshold, rp.cutoff);
    const double joint = call(oracle, t);
    double product = 1.0;
    for (Index i : t) product *= single[static_cast<std::size_t>(i - 1)];
    if (cls.rare) {
      ++row.rare_tuples;
      joint_sum += joint;
      product_sum += product;
    } else {
      acc.add(joint, product);
    }
    int i = r - 1;
    while (i >= 0 && t[static_cast<std::size_t>(i)] == N - r + 1 + i) --i;
    if (i < 0) break;
    ++t[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < r; ++j) t[static_cast<std::size_t>(j)] = t[static_cast<std::size_t>(j - 1)] + 1;
  }
  const double rf = factorial(r);
  row.rare_sum_joint = rf * joint_sum;
  row.rare_sum_product = rf * product_sum;
  row.ratio_min = acc.lo;
  row.ratio_max = acc.hi;
  row.zero_denominator = acc.zero_denominator;
  row.nonrare_evaluated = acc.evaluated;
  row.nonrare_total = acc.evaluated;
  row.exact = true;
  row.coverage = 1.0;
}

void stratified_pairs(const CoefficientOracle& oracle, const RareParams& rp, const std::vector<double>& single,
                      const ConditionOptions& options, ConditionRow& row) {
  const Index N = oracle.size();
  const ScheduleTable table(oracle.schedule(), N);
  const int ell = table.ell();
  const auto L = static_cast<Index>(std::min(std::floor(rp.cutoff), static_cast<double>(N)));
  const auto T = static_cast<Index>(std::floor(rp.threshold));
  const Index W = options.boundary_window;

  // Pairs (i, j), i < j, i > L with rho <= T (rare) or T < rho <= T + W (boundary).
  std::vector<std::pair<Index, Index>> close, boundary;
  std::vector<Index> cand;
  std::uint64_t low_count = 0;
  for (Index i = 1; i < N; ++i) {
    if (i <= L) {
      low_count += static_cast<std::uint64_t>(N - i);
      continue;
    }
    cand.clear();
    for (int a = 1; a <= ell; ++a) {
      const Index v = table.at(a, i);
      for (int b = 1; b <= ell; ++b) {
        Index j = std::max(i + 1, first_at_least(table, b, v - T - W));
        for (; j <= N && table.at(b, j) <= v + T + W; ++j) cand.push_back(j);
      }
    }
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    for (Index j : cand) {
      const Index d = rho_table(table, i, j);
      if (d <= T) {
        close.emplace_back(i, j);
      } else if (d <= T + W) {
        boundary.emplace_back(i, j);
      }
    }
    if (low_count + close.size() > options.budget) break;
  }
  row.rare_tuples = low_count + close.size();
  if (row.rare_tuples > options.budget) {
    throw ResourceError("sevastyanov_checker",
                        fmt::format("{} rare pairs at N = {} exceed the budget {}", row.rare_tuples, N, options.budget));
  }

  double joint_sum = 0, product_sum = 0;
  std::vector<double> suffix(static_cast<std::size_t>(N) + 2, 0.0);
  for (Index i = N; i >= 1; --i) suffix[static_cast<std::size_t>(i)] = suffix[static_cast<std::size_t>(i + 1)] + single[static_cast<std::size_t>(i - 1)];
  for (Index i = 1; i <= std::min(L, N - 1); ++i) {
    product_sum += single[static_cast<std::size_t>(i - 1)] * suffix[static_cast<std::size_t>(i + 1)];
    for (Index j = i + 1; j <= N; ++j) joint_sum += call(oracle, {i, j});
  }
  for (auto [i, j] : close) {
    joint_sum += call(oracle, {i, j});
    product_sum += single[static_cast<std::size_t>(i - 1)] * single[static_cast<std::size_t>(j - 1)];
  }
  row.rare_sum_joint = 2.0 * joint_sum;
  row.rare_sum_product = 2.0 * product_sum;

  // Non-rare pairs to evaluate: the boundary strata plus a uniform sample.
  for (Index i = L + 1; i <= std::min(L + W, N - 1); ++i) {
    for (Index j = i + 1; j <= N; ++j) {
      if (rho_table(table, i, j) > T) boundary.emplace_back(i, j);
    }
  }
  Rng rng(options.seed, static_cast<std::uint64_t>(N), StreamTag::TupleSampling);
  const auto total_pairs = static_cast<std::uint64_t>(binomial(N, 2));
  const std::uint64_t nonrare_total = total_pairs - row.rare_tuples;
  if (nonrare_total > 0) {
    std::uint64_t drawn = 0, attempts = 0;
    while (drawn < options.samples && attempts < 50 * options.samples) {
      ++attempts;
      Index i = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(N)));
      Index j = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(N)));
      if (i == j) continue;
      if (i > j) std::swap(i, j);
      if (i <= L || rho_table(table, i, j) <= T) continue;
      boundary.emplace_back(i, j);
      ++drawn;
    }
  }
  std::sort(boundary.begin(), boundary.end());
  boundary.erase(std::unique(boundary.begin(), boundary.end()), boundary.end());
  RatioAccumulator acc;
  for (auto [i, j] : boundary) {
    acc.add(call(oracle, {i, j}), single[static_cast<std::size_t>(i - 1)] * single[static_cast<std::size_t>(j - 1)]);
  }
  row.ratio_min = acc.lo;
  row.ratio_max = acc.hi;
  row.zero_denominator = acc.zero_denominator;
  row.nonrare_evaluated = acc.evaluated;
  row.nonrare_total = nonrare_total;
  row.exact = acc.evaluated == nonrare_total;
  row.coverage = nonrare_total == 0 ? 1.0 : static_cast<double>(acc.evaluated) / static_cast<double>(nonrare_total);
}

}  // namespace

ConditionReport check_conditions(const OracleFactory& factory, int r, const std::vector<Index>& n_grid,
                                 const RareParamsFn& rare_params, const ConditionOptions& options) {
  if (r < 1) throw ValidationError("check_conditions needs r >= 1");
  if (n_grid.empty()) throw ValidationError("check_conditions needs a nonempty n grid");
  ConditionReport report;
  report.r = r;
  report.trend_slack = options.trend_slack;
  for (Index n : n_grid) {
    const std::unique_ptr<CoefficientOracle> oracle = factory(n);
    const Index N = oracle->size();
    if (N < r) throw ValidationError(fmt::format("index range {} at n = {} is below r = {}", N, n, r));
    const RareParams rp = rare_params(n);
    ConditionRow row;
    row.n = n;
    row.index_range = N;
    row.threshold = rp.threshold;
    row.cutoff = rp.cutoff;
    row.lambda = oracle->lambda();
    row.rare_envelopes = oracle->rare_envelopes(r);
    std::vector<double> single(static_cast<std::size_t>(N));
    for (Index i = 1; i <= N; ++i) {
      const double b = call(*oracle, {i});
      single[static_cast<std::size_t>(i - 1)] = b;
      row.max_b = std::max(row.max_b, b);
      row.sum_b += b;
    }
    if (binomial(N, r) <= static_cast<double>(options.budget)) {
      full_enumeration(*oracle, r, rp, single, row);
    } else if (r == 2) {
      stratified_pairs(*oracle, rp, single, options, row);
    } else {
      throw ResourceError("sevastyanov_checker",
                          fmt::format("C({}, {}) tuples exceed the budget {}; only r = 2 has a stratified mode", N, r,
                                      options.budget));
    }
    report.rows.push_back(row);
  }

  const double slack = options.trend_slack;
  for (std::size_t i = 1; i < report.rows.size(); ++i) {
    const ConditionRow& a = report.rows[i - 1];
    const ConditionRow& b = report.rows[i];
    if (b.max_b > a.max_b * (1 + slack)) report.max_b_decreasing = false;
    if (b.rare_sum_joint > a.rare_sum_joint * (1 + slack) || b.rare_sum_product > a.rare_sum_product * (1 + slack)) {
      report.rare_sums_decreasing = false;
    }
  }
  const ConditionRow& first = report.rows.front();
  const ConditionRow& last = report.rows.back();
  report.sum_b_approaching =
      std::abs(last.sum_b - last.lambda) <= std::abs(first.sum_b - first.lambda) + slack * last.lambda;
  const double w0 = first.ratio_width(), w1 = last.ratio_width();
  report.ratio_band_shrinking = w1 <= std::max(w0 / 2.0, 1e-12);
  report.ratio_shrink_factor = w1 > 0 ? w0 / w1 : std::numeric_limits<double>::infinity();
  return report;
}

Verdict poisson_limit_verdict(const ConditionReport& report, const VerdictTolerances& tol) {
  if (report.rows.empty()) throw ValidationError("verdict needs a nonempty report");
  const ConditionRow& row = report.rows.back();
  Verdict v;
  v.max_b_margin = tol.max_b - row.max_b;
  v.sum_b_margin = tol.sum_b - std::abs(row.sum_b - row.lambda);
  v.rare_margin = tol.rare - std::max(row.rare_sum_joint, row.rare_sum_product);
  if (row.ratio_min && row.ratio_max) {
    v.ratio_margin = tol.ratio - std::max(std::abs(*row.ratio_min - 1.0), std::abs(*row.ratio_max - 1.0));
  } else {
    v.ratio_margin = tol.ratio;
  }
  if (v.max_b_margin < 0) v.failed.emplace_back("max_b");
  if (v.sum_b_margin < 0) v.failed.emplace_back("sum_b");
  if (v.rare_margin < 0) v.failed.emplace_back("rare_sums");
  if (!(v.ratio_margin >= 0)) v.failed.emplace_back("ratio_band");
  v.pass = v.failed.empty();
  return v;
}

std::vector<ConditionCsvRow> condition_rows(const ConditionReport& report, const VerdictTolerances& tol) {
  std::vector<ConditionCsvRow> out;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const ConditionRow& row : report.rows) {
    auto add = [&](std::string name, double value, double envelope, double margin) {
      out.push_back({row.n, report.r, std::move(name), value, envelope, margin});
    };
    add("max_b", row.max_b, tol.max_b, tol.max_b - row.max_b);
    add("sum_b", row.sum_b, row.lambda, tol.sum_b - std::abs(row.sum_b - row.lambda));
    const double ej = row.rare_envelopes ? row.rare_envelopes->first : tol.rare;
    const double ep = row.rare_envelopes ? row.rare_envelopes->second : tol.rare;
    add("rare_sum_joint", row.rare_sum_joint, ej, ej - row.rare_sum_joint);
    add("rare_sum_product", row.rare_sum_product, ep, ep - row.rare_sum_product);
    const double lo = row.ratio_min.value_or(nan), hi = row.ratio_max.value_or(nan);
    add("ratio_min", lo, 1.0 - tol.ratio, lo - (1.0 - tol.ratio));
    add("ratio_max", hi, 1.0 + tol.ratio, (1.0 + tol.ratio) - hi);
  }
  return out;
}

}  // namespace ncp
