#include "ncpoisson/bernoulli_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include <fmt/format.h>

#include "ncpoisson/errors.hpp"

namespace ncp {

BernoulliScheme::BernoulliScheme(QSchedule schedule, Index n, double p, double lambda)
    : schedule_(std::move(schedule)), n_(n), p_(p), lambda_(lambda) {
  if (n < 1) throw ValidationError(fmt::format("scheme needs n >= 1, got {}", n));
  if (!(p > 0 && p < 1)) throw ValidationError(fmt::format("scheme needs p in (0,1), got {}", p));
  if (n > schedule_.domain_limit()) throw ValidationError("schedule table is shorter than n");
  lambda_n_ = static_cast<double>(n) * std::pow(p, schedule_.ell());
}

BernoulliScheme BernoulliScheme::from_lambda(QSchedule schedule, Index n, double lambda) {
  if (!(lambda > 0)) throw ValidationError("scheme needs lambda > 0");
  if (n < 1) throw ValidationError(fmt::format("scheme needs n >= 1, got {}", n));
  const double p = std::pow(lambda / static_cast<double>(n), 1.0 / schedule.ell());
  return BernoulliScheme(std::move(schedule), n, p, lambda);
}

BernoulliScheme BernoulliScheme::with_p(QSchedule schedule, Index n, double p) {
  BernoulliScheme s(std::move(schedule), n, p, 0.0);
  s.lambda_ = s.lambda_n_;
  return s;
}

std::vector<Index> BernoulliScheme::required_indices() const {
  ScheduleTable table(schedule_, n_);
  std::vector<Index> out = table.distinct_values();
  return out;
}

DissociatedIndex dissociated_index(const BernoulliScheme& scheme, Tuple J) {
  std::sort(J.begin(), J.end());
  DissociatedIndex out{J, std::nullopt};
  if (static_cast<int>(J.size()) != scheme.ell()) return out;
  ScheduleTable table(scheme.schedule(), scheme.n());
  const auto l = table.inverse(1, J.front());
  if (!l) return out;
  const auto row = table.row(*l);
  if (std::equal(row.begin(), row.end(), J.begin())) out.source_l = *l;
  return out;
}

BernoulliSampler::BernoulliSampler(const BernoulliScheme& scheme)
    : p_(scheme.p()), ell_(scheme.ell()) {
  ScheduleTable table(scheme.schedule(), scheme.n());
  const std::vector<Index> idx = table.distinct_values();
  width_ = idx.size();
  xi_.assign(width_, 0);
  slots_.reserve(static_cast<std::size_t>(scheme.n() * ell_));
  for (Index l = 1; l <= scheme.n(); ++l) {
    for (Index v : table.row(l)) {
      slots_.push_back(static_cast<std::uint32_t>(std::lower_bound(idx.begin(), idx.end(), v) - idx.begin()));
    }
  }
}

std::uint64_t BernoulliSampler::draw(Rng& rng) {
  for (auto& x : xi_) x = rng.bernoulli(p_) ? 1 : 0;
  std::uint64_t s = 0;
  const auto ell = static_cast<std::size_t>(ell_);
  for (std::size_t base = 0; base < slots_.size(); base += ell) {
    bool all = true;
    for (std::size_t j = 0; j < ell && all; ++j) all = xi_[slots_[base + j]] != 0;
    s += all ? 1 : 0;
  }
  return s;
}

std::uint64_t simulate_sum(const BernoulliScheme& scheme, std::uint64_t seed, std::uint64_t replicate) {
  BernoulliSampler sampler(scheme);
  Rng rng(seed, replicate, StreamTag::BernoulliSum);
  return sampler.draw(rng);
}

namespace {

struct Components {
  // For each component: the l's (1-based) and its distinct indices.
  std::vector<std::vector<Index>> terms;
  std::vector<std::vector<Index>> indices;
};

Components group_terms(const ScheduleTable& table) {
  const Index n = table.count();
  std::vector<std::size_t> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::unordered_map<Index, std::size_t> owner;
  for (Index l = 1; l <= n; ++l) {
    const auto me = static_cast<std::size_t>(l - 1);
    for (Index v : table.row(l)) {
      auto [it, fresh] = owner.emplace(v, me);
      if (!fresh) {
        const std::size_t a = find(it->second), b = find(me);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }
    }
  }
  Components c;
  std::vector<std::ptrdiff_t> slot(static_cast<std::size_t>(n), -1);
  for (Index l = 1; l <= n; ++l) {
    const std::size_t root = find(static_cast<std::size_t>(l - 1));
    if (slot[root] < 0) {
      slot[root] = static_cast<std::ptrdiff_t>(c.terms.size());
      c.terms.emplace_back();
      c.indices.emplace_back();
    }
    const auto s = static_cast<std::size_t>(slot[root]);
    c.terms[s].push_back(l);
    for (Index v : table.row(l)) c.indices[s].push_back(v);
  }
  for (auto& idx : c.indices) {
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  }
  return c;
}

}  // namespace

CountDistribution exact_distribution(const BernoulliScheme& scheme, int max_component_bits) {
  ScheduleTable table(scheme.schedule(), scheme.n());
  const Components comps = group_terms(table);
  const double p = scheme.p();
  CountDistribution total = point_mass(0);
  for (std::size_t c = 0; c < comps.terms.size(); ++c) {
    const auto& idx = comps.indices[c];
    const int m = static_cast<int>(idx.size());
    if (m > max_component_bits || m > 62) {
      throw ResourceError("bernoulli_model",
                          fmt::format("component with {} distinct indices exceeds the 2^{} enumeration cap",
                                      m, max_component_bits));
    }
    std::vector<std::uint64_t> need;
    need.reserve(comps.terms[c].size());
    for (Index l : comps.terms[c]) {
      std::uint64_t mask = 0;
      for (Index v : table.row(l)) {
        mask |= std::uint64_t{1} << (std::lower_bound(idx.begin(), idx.end(), v) - idx.begin());
      }
      need.push_back(mask);
    }
    std::vector<double> weight(static_cast<std::size_t>(m) + 1);
    for (int ones = 0; ones <= m; ++ones) weight[static_cast<std::size_t>(ones)] = std::pow(p, ones) * std::pow(1 - p, m - ones);
    CountDistribution local;
    local.pmf.assign(need.size() + 1, 0.0);
    const std::uint64_t end = std::uint64_t{1} << m;
    for (std::uint64_t a = 0; a < end; ++a) {
      std::size_t hits = 0;
      for (std::uint64_t mask : need) hits += (a & mask) == mask ? 1 : 0;
      local.pmf[hits] += weight[static_cast<std::size_t>(std::popcount(a))];
    }
    total = convolve(total, local);
  }
  return total;
}

bool ChenSteinTerms::I1_matches() const {
  return std::abs(I1 - I1_closed) <= 1e-12 * I1_closed + std::numeric_limits<double>::min();
}

bool ChenSteinTerms::envelopes_hold() const {
  const double slack = 1.0 + 1e-12;
  return I2 <= I2_envelope * slack && I3 <= I3_envelope * slack;
}

ChenSteinTerms chen_stein_terms(const BernoulliScheme& scheme) {
  ScheduleTable table(scheme.schedule(), scheme.n());
  const Index n = scheme.n();
  const int ell = scheme.ell();
  const double p = scheme.p();
  std::unordered_map<Index, std::vector<Index>> users;
  for (Index l = 1; l <= n; ++l) {
    for (Index v : table.row(l)) users[v].push_back(l);
  }
  ChenSteinTerms t;
  const double pJ = std::pow(p, ell);
  std::vector<Index> partners;
  std::vector<Index> merged;
  double i1_carry = 0;
  for (Index l = 1; l <= n; ++l) {
    // Neumaier summation keeps I1 within a few ulps of n p^{2 ell}.
    const double term = pJ * pJ;
    const double sum = t.I1 + term;
    i1_carry += std::abs(t.I1) >= term ? (t.I1 - sum) + term : (term - sum) + t.I1;
    t.I1 = sum;
    partners.clear();
    for (Index v : table.row(l)) {
      for (Index k : users[v]) {
        if (k != l) partners.push_back(k);
      }
    }
    std::sort(partners.begin(), partners.end());
    partners.erase(std::unique(partners.begin(), partners.end()), partners.end());
    for (Index k : partners) {
      merged.assign(table.row(l).begin(), table.row(l).end());
      merged.insert(merged.end(), table.row(k).begin(), table.row(k).end());
      std::sort(merged.begin(), merged.end());
      const auto distinct = std::unique(merged.begin(), merged.end()) - merged.begin();
      t.I2 += pJ * pJ;
      t.I3 += std::pow(p, static_cast<double>(distinct));
      ++t.intersecting_pairs;
    }
  }
  t.I1 += i1_carry;
  const auto nd = static_cast<double>(n);
  t.I1_closed = nd * std::pow(p, 2.0 * ell);
  t.I2_envelope = nd * ell * ell * std::pow(p, 2.0 * ell);
  t.I3_envelope = nd * ell * ell * std::pow(p, ell + 1.0);
  t.bound = std::min(1.0, 1.0 / scheme.lambda_n()) * (t.I1 + t.I2 + t.I3);
  return t;
}

BernoulliBoundReport verify_bernoulli_bound(const BernoulliScheme& scheme, int max_component_bits) {
  BernoulliBoundReport r;
  r.n = scheme.n();
  r.ell = scheme.ell();
  r.p_n = scheme.p();
  r.lambda = scheme.lambda();
  r.lambda_n = scheme.lambda_n();
  const CountDistribution exact = exact_distribution(scheme, max_component_bits);
  r.tv = tv_distance(exact, poisson_distribution(PoissonLaw(scheme.lambda())));
  r.bound = bernoulli_poisson_bound(r.ell, r.p_n, r.lambda, r.lambda_n);
  r.holds = r.tv <= r.bound + 1e-10;
  return r;
}

}  // namespace ncp
