#include "ncpoisson/index_schedule.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "ncpoisson/errors.hpp"

namespace ncp {

namespace {

constexpr Index kIndexMax = std::numeric_limits<Index>::max();

Index checked_mul(Index a, Index b) {
  __int128 p = static_cast<__int128>(a) * b;
  if (p > kIndexMax) throw ValidationError(fmt::format("schedule value overflow ({} * {})", a, b));
  return static_cast<Index>(p);
}

Index log_gap(double c, double gamma, Index l) {
  const double raw = c * std::pow(std::log(static_cast<double>(l)), 1.0 + gamma);
  return std::max<Index>(1, static_cast<Index>(std::ceil(raw)));
}

struct DisjointSets {
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::vector<std::size_t> parent;
};

}  // namespace

QSchedule::QSchedule(ScheduleFamily family, int ell) : family_(family), ell_(ell) {
  if (ell < 1) throw ValidationError(fmt::format("schedule needs ell >= 1, got {}", ell));
}

QSchedule QSchedule::linear(int ell, Index stride) {
  QSchedule s(ScheduleFamily::Linear, ell);
  if (stride < 1) throw ValidationError("linear schedule stride must be >= 1");
  s.stride_ = stride;
  // q_{j+1}(l) - q_j(l) = stride * l >= l >= c (ln l)^{1+gamma} with c = 1/2, gamma = 1/2.
  s.gap_ = GapParams{0.5, 0.5};
  s.validate_up_to(kDefaultHorizon);
  return s;
}

QSchedule QSchedule::arithmetic_gap(int ell, double c, double gamma) {
  QSchedule s(ScheduleFamily::ArithmeticGap, ell);
  if (!(c > 0) || !(gamma > 0)) throw ValidationError("arithmetic_gap needs c > 0 and gamma > 0");
  s.gap_ = GapParams{c, gamma};
  s.validate_up_to(kDefaultHorizon);
  return s;
}

QSchedule QSchedule::polynomial(int ell, int degree) {
  QSchedule s(ScheduleFamily::Polynomial, ell);
  if (degree < 1) throw ValidationError("polynomial schedule degree must be >= 1");
  s.degree_ = degree;
  s.gap_ = GapParams{0.5, 0.5};
  s.validate_up_to(kDefaultHorizon);
  return s;
}

QSchedule QSchedule::exponential_gap(int ell) {
  QSchedule s(ScheduleFamily::ExponentialGap, ell);
  if (ell > 62) throw ValidationError("exponential_gap supports ell <= 62");
  s.gap_ = GapParams{0.5, 0.5};
  s.validate_up_to(kDefaultHorizon);
  return s;
}

QSchedule QSchedule::table(std::vector<std::vector<Index>> rows, std::optional<GapParams> gap) {
  if (rows.empty()) throw ValidationError("schedule table is empty");
  QSchedule s(ScheduleFamily::Table, static_cast<int>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<int>(rows[i].size()) != s.ell_) {
      throw ValidationError(fmt::format("schedule table row l={} has {} entries, expected {}", i + 1,
                                        rows[i].size(), s.ell_));
    }
  }
  if (gap && (!(gap->c > 0) || !(gap->gamma > 0))) throw ValidationError("gap parameters need c > 0 and gamma > 0");
  s.gap_ = gap;
  s.table_ = std::move(rows);
  s.validate_up_to(static_cast<Index>(s.table_.size()));
  return s;
}

std::string QSchedule::describe() const {
  switch (family_) {
    case ScheduleFamily::Linear:
      return fmt::format("linear(ell={}, stride={})", ell_, stride_);
    case ScheduleFamily::ArithmeticGap:
      return fmt::format("arithmetic_gap(ell={}, c={}, gamma={})", ell_, gap_->c, gap_->gamma);
    case ScheduleFamily::Polynomial:
      return fmt::format("polynomial(ell={}, degree={})", ell_, degree_);
    case ScheduleFamily::ExponentialGap:
      return fmt::format("exponential_gap(ell={})", ell_);
    case ScheduleFamily::Table:
      return fmt::format("table(ell={}, rows={})", ell_, table_.size());
  }
  return "unknown";
}

Index QSchedule::domain_limit() const noexcept {
  return family_ == ScheduleFamily::Table ? static_cast<Index>(table_.size()) : kIndexMax;
}

Index QSchedule::q(int j, Index l) const {
  if (j < 1 || j > ell_) throw ValidationError(fmt::format("schedule index j={} outside 1..{}", j, ell_));
  if (l < 1) throw ValidationError(fmt::format("schedule argument l={} must be >= 1", l));
  switch (family_) {
    case ScheduleFamily::Linear:
      return checked_mul(checked_mul(stride_, j), l);
    case ScheduleFamily::ArithmeticGap:
      return l + checked_mul(j - 1, log_gap(gap_->c, gap_->gamma, l));
    case ScheduleFamily::Polynomial: {
      Index v = j;
      for (int d = 0; d < degree_; ++d) v = checked_mul(v, l);
      return v;
    }
    case ScheduleFamily::ExponentialGap:
      return checked_mul(l, Index{1} << (j - 1));
    case ScheduleFamily::Table:
      if (l > static_cast<Index>(table_.size())) {
        throw ValidationError(fmt::format("schedule table undefined at (j={}, l={})", j, l));
      }
      return table_[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(j - 1)];
  }
  return 0;
}

void QSchedule::check_point(Index l) const {
  Index prev = 0;
  for (int j = 1; j <= ell_; ++j) {
    const Index v = q(j, l);
    if (j == 1 && v < l) {
      throw ValidationError(fmt::format("schedule violation at (j=1, l={}): q_1(l)={} < l", l, v));
    }
    if (j > 1 && v <= prev) {
      throw ValidationError(
          fmt::format("schedule violation at (j={}, l={}): not above q_{}(l)={}", j, l, j - 1, prev));
    }
    if (l > 1 && q(j, l - 1) >= v) {
      throw ValidationError(fmt::format("schedule violation at (j={}, l={}): not increasing in l", j, l));
    }
    if (j > 1 && gap_ && static_cast<double>(v - prev) < gap_floor(l)) {
      throw ValidationError(fmt::format("schedule violation at (j={}, l={}): gap {} below c (ln l)^(1+gamma)", j, l,
                                        v - prev));
    }
    prev = v;
  }
}

double QSchedule::gap_floor(Index l) const {
  return gap_->c * std::pow(std::log(static_cast<double>(l)), 1.0 + gap_->gamma);
}

void QSchedule::validate_up_to(Index horizon) const {
  for (Index l = 1; l <= horizon; ++l) check_point(l);
}

std::vector<Index> QSchedule::evaluate(Index l) const {
  if (l < 1) throw ValidationError(fmt::format("schedule argument l={} must be >= 1", l));
  check_point(l);
  std::vector<Index> out(static_cast<std::size_t>(ell_));
  for (int j = 1; j <= ell_; ++j) out[static_cast<std::size_t>(j - 1)] = q(j, l);
  return out;
}

double QSchedule::min_gap(Index l) const {
  double g = std::numeric_limits<double>::infinity();
  for (int j = 1; j < ell_; ++j) g = std::min(g, static_cast<double>(q(j + 1, l) - q(j, l)));
  return g;
}

ScheduleTable::ScheduleTable(const QSchedule& schedule, Index count)
    : ell_(schedule.ell()), count_(count) {
  if (count < 0) throw ValidationError("schedule table count must be >= 0");
  if (count > schedule.domain_limit()) {
    throw ValidationError(fmt::format("schedule is defined for l <= {}, {} requested",
                                      schedule.domain_limit(), count));
  }
  values_.resize(static_cast<std::size_t>(count * ell_));
  for (Index l = 1; l <= count; ++l) {
    for (int j = 1; j <= ell_; ++j) {
      const Index v = schedule.q(j, l);
      const bool ordered = j == 1 ? v >= l : v > at(j - 1, l);
      const bool gapped = j == 1 || !schedule.gap_params() ||
                          static_cast<double>(v - at(j - 1, l)) >= schedule.gap_floor(l);
      const bool increasing = l == 1 || at(j, l - 1) < v;
      if (!ordered || !increasing || !gapped) {
        throw ValidationError(fmt::format("schedule violation at (j={}, l={})", j, l));
      }
      values_[static_cast<std::size_t>((l - 1) * ell_ + (j - 1))] = v;
    }
  }
}

std::vector<Index> ScheduleTable::distinct_values() const {
  std::vector<Index> out(values_);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::optional<Index> ScheduleTable::inverse(int j, Index value) const {
  // q_j(l) >= l, so the answer is at most value; q_j(l) == l is common.
  Index lo = 1, hi = std::min(count_, value);
  if (hi >= 1 && at(j, hi) == value) return hi;
  while (lo <= hi) {
    const Index mid = lo + (hi - lo) / 2;
    const Index v = at(j, mid);
    if (v == value) return mid;
    if (v < value) {
      lo = mid + 1;
    } else {
      hi = mid - 1;
    }
  }
  return std::nullopt;
}

Index rho(const QSchedule& schedule, Index l, Index l2) {
  if (l < 1 || l2 < 1) throw ValidationError("rho arguments must be >= 1");
  Index best = std::numeric_limits<Index>::max();
  for (int i = 1; i <= schedule.ell(); ++i) {
    const Index a = schedule.q(i, l);
    for (int j = 1; j <= schedule.ell(); ++j) {
      const Index b = schedule.q(j, l2);
      best = std::min(best, a > b ? a - b : b - a);
    }
  }
  return best;
}

ClusterPartition cluster_partition(const QSchedule& schedule, const Tuple& tuple, double threshold) {
  for (std::size_t i = 0; i < tuple.size(); ++i) {
    if (tuple[i] < 1) throw ValidationError(fmt::format("tuple entry {} is not positive", tuple[i]));
    for (std::size_t j = i + 1; j < tuple.size(); ++j) {
      if (tuple[i] == tuple[j]) {
        throw ValidationError(fmt::format("tuple has duplicate entry {}", tuple[i]));
      }
    }
  }
  DisjointSets sets(tuple.size());
  for (std::size_t i = 0; i < tuple.size(); ++i) {
    for (std::size_t j = i + 1; j < tuple.size(); ++j) {
      if (static_cast<double>(rho(schedule, tuple[i], tuple[j])) <= threshold) sets.unite(i, j);
    }
  }
  ClusterPartition out{tuple, threshold, {}};
  std::vector<std::ptrdiff_t> slot(tuple.size(), -1);
  for (std::size_t i = 0; i < tuple.size(); ++i) {
    const std::size_t root = sets.find(i);
    if (slot[root] < 0) {
      slot[root] = static_cast<std::ptrdiff_t>(out.clusters.size());
      out.clusters.emplace_back();
    }
    out.clusters[static_cast<std::size_t>(slot[root])].push_back(tuple[i]);
  }
  return out;
}

TupleClassification classify_tuple(const QSchedule& schedule, const Tuple& tuple, double threshold,
                                   double cutoff) {
  const ClusterPartition part = cluster_partition(schedule, tuple, threshold);
  TupleClassification out;
  out.cls.k = static_cast<int>(part.clusters.size());
  out.cls.cutoff = cutoff;
  out.i_min = tuple.empty() ? 0 : *std::min_element(tuple.begin(), tuple.end());
  for (const auto& cluster : part.clusters) {
    if (cluster.size() > 1) out.has_nonsingleton = true;
    if (static_cast<double>(*std::min_element(cluster.begin(), cluster.end())) <= cutoff) {
      ++out.cls.l_flag;
    }
  }
  out.rare = out.has_nonsingleton || static_cast<double>(out.i_min) <= cutoff;
  return out;
}

std::size_t ClassEnumeration::total() const {
  std::size_t t = 0;
  for (const auto& [cls, tuples] : classes) t += tuples.size();
  return t;
}

std::size_t ClassEnumeration::rare_count() const {
  std::size_t t = 0;
  for (const auto& [cls, tuples] : classes) {
    if (cls.k < r || cls.l_flag > 0) t += tuples.size();
  }
  return t;
}

double binomial(Index n, int r) {
  if (r < 0 || n < r) return 0.0;
  double out = 1.0;
  for (int i = 1; i <= r; ++i) out = out * static_cast<double>(n - r + i) / i;
  return std::round(out);
}

double factorial(int r) {
  double f = 1.0;
  for (int i = 2; i <= r; ++i) f *= i;
  return f;
}

ClassEnumeration enumerate_classes(const QSchedule& schedule, int r, Index n, double threshold,
                                   double cutoff, std::uint64_t budget) {
  if (r < 1 || n < r) throw ValidationError(fmt::format("enumeration needs 1 <= r <= n (r={}, n={})", r, n));
  const double count = binomial(n, r);
  if (count > static_cast<double>(budget)) {
    throw ResourceError("index_schedule",
                        fmt::format("C({}, {}) = {:.0f} tuples exceeds the enumeration budget {}; "
                                    "shrink n or r",
                                    n, r, count, budget));
  }
  ClassEnumeration out{r, n, threshold, cutoff, {}};
  Tuple t(static_cast<std::size_t>(r));
  std::iota(t.begin(), t.end(), Index{1});
  while (true) {
    const TupleClassification c = classify_tuple(schedule, t, threshold, cutoff);
    out.classes[c.cls].push_back(t);
    int i = r - 1;
    while (i >= 0 && t[static_cast<std::size_t>(i)] == n - r + 1 + i) --i;
    if (i < 0) break;
    ++t[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < r; ++j) t[static_cast<std::size_t>(j)] = t[static_cast<std::size_t>(j - 1)] + 1;
  }
  return out;
}

RareParams independent_rare_params() { return {0.0, 0.0}; }

double markov_cluster_scale(const QSchedule& schedule, Index l) {
  if (l < 1) throw ValidationError("cluster scale needs l >= 1");
  return std::min(std::log(static_cast<double>(l)), schedule.min_gap(l));
}

RareParams markov_rare_params(const QSchedule& schedule, Index n) {
  const double a = markov_cluster_scale(schedule, n);
  return {a, a};
}

Index subshift_short_return_window(Index n, double epsilon) {
  if (n < 1) throw ValidationError("short-return window needs n >= 1");
  if (!(epsilon > 0)) throw ValidationError("short-return window needs epsilon > 0");
  return static_cast<Index>(std::floor(std::pow(std::log(static_cast<double>(n)), 1.0 + epsilon)));
}

Index subshift_index_cutoff(Index n, double epsilon, const GapParams& gap) {
  const double rhs = 2.0 * static_cast<double>(n + subshift_short_return_window(n, epsilon));
  auto exceeds = [&](Index k) {
    return gap.c * std::pow(std::log(static_cast<double>(k)), 1.0 + gap.gamma) > rhs;
  };
  const double guess = std::exp(std::pow(rhs / gap.c, 1.0 / (1.0 + gap.gamma)));
  if (!(guess < 4e18)) throw ResourceError("index_schedule", "index cutoff L(n) overflows");
  auto k = std::max<Index>(1, static_cast<Index>(std::floor(guess)) + 1);
  while (k > 1 && exceeds(k - 1)) --k;
  while (!exceeds(k)) ++k;
  return k;
}

RareParams subshift_rare_params(Index block_length, double epsilon, const GapParams& gap) {
  const Index a = subshift_short_return_window(block_length, epsilon);
  return {static_cast<double>(block_length + a),
          static_cast<double>(subshift_index_cutoff(block_length, epsilon, gap))};
}

double ordered_class_bound(const CountingContext& ctx, int r, int k, int l_flag) {
  const double inf = std::numeric_limits<double>::infinity();
  const double ell = ctx.ell;
  const auto n = static_cast<double>(ctx.index_range);
  const double rf = factorial(r);
  switch (ctx.regime) {
    case RareRegime::Independent:
      if (k >= r) return inf;
      return std::pow(rf * n * std::pow(ell, 2.0 * r), k);
    case RareRegime::Markov: {
      if (k == r && l_flag == 0) return inf;
      const double a = std::max(ctx.scale, 1.0);
      const double base = std::pow(2.0, r * r) * std::pow(ell, r * (r + 1.0)) * rf;
      return std::pow(base, k) * std::pow(a, k * r * r + l_flag) * std::pow(n, k - l_flag);
    }
    case RareRegime::Subshift: {
      if (k == r && l_flag == 0) return inf;
      const double base = std::pow(2.0, r * r) * std::pow(ell, r * (r + 1.0)) * rf;
      const double width = static_cast<double>(ctx.block_length) + ctx.scale;
      const double cut = std::max(ctx.cutoff, 1.0);
      return std::pow(base, k) * std::pow(width, k * r * r) * std::pow(cut, l_flag) *
             std::pow(n, k - l_flag);
    }
  }
  return inf;
}

std::vector<RareSetClass> counting_bound_violations(const ClassEnumeration& e,
                                                    const CountingContext& ctx) {
  std::vector<RareSetClass> out;
  const double rf = factorial(e.r);
  for (const auto& [cls, tuples] : e.classes) {
    if (static_cast<double>(tuples.size()) * rf > ordered_class_bound(ctx, e.r, cls.k, cls.l_flag)) {
      out.push_back(cls);
    }
  }
  return out;
}

}  // namespace ncp
