#include "ncpoisson/occurrence_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <span>

#include <fmt/format.h>

#include "ncpoisson/errors.hpp"

namespace ncp {

namespace {

struct Automaton {
  int iota = 0;
  std::vector<int> go;     // go[v * iota + a]
  std::vector<int> depth;
  std::vector<int> symbol; // last symbol on the path to v; -1 for the root

  int nodes() const { return static_cast<int>(depth.size()); }
};

Automaton build_automaton(const std::vector<Word>& blocks, int iota) {
  Automaton au;
  au.iota = iota;
  au.go.assign(static_cast<std::size_t>(iota), -1);
  au.depth.push_back(0);
  au.symbol.push_back(-1);
  for (const Word& b : blocks) {
    int v = 0;
    for (int a : b) {
      int& next = au.go[static_cast<std::size_t>(v * iota + a)];
      if (next < 0) {
        next = au.nodes();
        au.depth.push_back(au.depth[static_cast<std::size_t>(v)] + 1);
        au.symbol.push_back(a);
        au.go.resize(au.go.size() + static_cast<std::size_t>(iota), -1);
      }
      v = au.go[static_cast<std::size_t>(v * iota + a)];
    }
  }
  std::vector<int> fail(static_cast<std::size_t>(au.nodes()), 0);
  std::queue<int> q;
  for (int a = 0; a < iota; ++a) {
    int& t = au.go[static_cast<std::size_t>(a)];
    if (t < 0) {
      t = 0;
    } else {
      fail[static_cast<std::size_t>(t)] = 0;
      q.push(t);
    }
  }
  while (!q.empty()) {
    const int v = q.front();
    q.pop();
    for (int a = 0; a < iota; ++a) {
      int& t = au.go[static_cast<std::size_t>(v * iota + a)];
      const int via_fail = au.go[static_cast<std::size_t>(fail[static_cast<std::size_t>(v)] * iota + a)];
      if (t < 0) {
        t = via_fail;
      } else {
        fail[static_cast<std::size_t>(t)] = via_fail;
        q.push(t);
      }
    }
  }
  return au;
}

}  // namespace

OccurrenceSampler::OccurrenceSampler(const MarkovGibbsMeasure& measure, const std::vector<Word>& blocks,
                                     Index last_start, std::size_t memory_budget) {
  if (blocks.empty()) throw ValidationError("occurrence sampler needs at least one block");
  if (last_start < 0) throw ValidationError("occurrence sampler needs last_start >= 0");
  m_ = static_cast<Index>(blocks.front().size());
  last_end_ = last_start + m_ - 1;
  const int iota = measure.sft().iota();
  const Eigen::MatrixXd& Q = measure.Q();
  const Automaton au = build_automaton(blocks, iota);

  // Chain state: node v >= 1 (its last symbol is implied) or (root, a) as nodes + a.
  const int K = au.nodes() + iota;
  auto id = [&](int v, int a) { return v == 0 ? au.nodes() + a : v; };
  auto last_symbol = [&](int s) { return s >= au.nodes() ? s - au.nodes() : au.symbol[static_cast<std::size_t>(s)]; };
  std::vector<int> match_index(static_cast<std::size_t>(K), -1);
  std::vector<int> match_state;
  for (int v = 1; v < au.nodes(); ++v) {
    if (au.depth[static_cast<std::size_t>(v)] == m_) {
      match_index[static_cast<std::size_t>(v)] = static_cast<int>(match_state.size());
      match_state.push_back(v);
    }
  }
  matches_ = match_state.size();

  const long double entries =
      static_cast<long double>(1 + matches_) * static_cast<long double>(matches_) * static_cast<long double>(last_end_ + 1);
  if (entries * sizeof(double) > static_cast<long double>(memory_budget)) {
    throw ResourceError("subshift_model",
                        fmt::format("first-passage tables need {:.3g} bytes, above the budget of {} bytes; "
                                    "shrink N_n or the number of blocks",
                                    static_cast<double>(entries * sizeof(double)), memory_budget));
  }

  struct Edge {
    int from;
    int to;
    double p;
  };
  std::vector<Edge> edges;
  for (int s = 1; s < K; ++s) {
    const int v = s >= au.nodes() ? 0 : s;
    const int a = last_symbol(s);
    for (int b = 0; b < iota; ++b) {
      if (Q(a, b) > 0) edges.push_back({s, id(au.go[static_cast<std::size_t>(v * iota + b)], b), Q(a, b)});
    }
  }

  const auto width = static_cast<std::size_t>(last_end_ + 1) * matches_;
  auto run = [&](std::vector<double> dist, bool record_now) {
    std::vector<double> cdf(width, 0.0);
    std::vector<double> next(static_cast<std::size_t>(K));
    double acc = 0;
    for (Index t = 0; t <= last_end_; ++t) {
      if (t > 0) {
        std::fill(next.begin(), next.end(), 0.0);
        for (const Edge& e : edges) next[static_cast<std::size_t>(e.to)] += dist[static_cast<std::size_t>(e.from)] * e.p;
        dist.swap(next);
      }
      for (std::size_t k = 0; k < matches_; ++k) {
        const auto s = static_cast<std::size_t>(match_state[k]);
        if (t > 0 || record_now) {
          acc += dist[s];
          dist[s] = 0;
        }
        cdf[static_cast<std::size_t>(t) * matches_ + k] = acc;
      }
      // Mass left below 2^-64 cannot move a 53-bit uniform; stopping here also
      // keeps the recursion out of subnormal arithmetic.
      double remaining = 0;
      for (double w : dist) remaining += w;
      if (remaining < 0x1p-64) {
        std::fill(cdf.begin() + static_cast<std::ptrdiff_t>((t + 1) * static_cast<Index>(matches_)), cdf.end(), acc);
        break;
      }
    }
    return cdf;
  };

  std::vector<double> start(static_cast<std::size_t>(K), 0.0);
  for (int a = 0; a < iota; ++a) start[static_cast<std::size_t>(id(au.go[static_cast<std::size_t>(a)], a))] += measure.pi()(a);
  cdf_.push_back(run(start, true));
  for (std::size_t k = 0; k < matches_; ++k) {
    std::vector<double> from(static_cast<std::size_t>(K), 0.0);
    from[static_cast<std::size_t>(match_state[k])] = 1.0;
    cdf_.push_back(run(from, false));
  }
  for (const auto& c : cdf_) {
    const double total = c.back();
    rate_.push_back(total > 0 && total < 1 ? -std::log1p(-total) / static_cast<double>(last_end_ + 1) : 0.0);
  }
}

std::size_t OccurrenceSampler::search(std::size_t table, std::size_t count, double u) const {
  const std::vector<double>& c = cdf_[table];
  if (count == 0) return 0;
  // Guess from a geometric law, then gallop to a bracket and bisect inside it.
  const double rate = rate_[table];
  std::size_t guess = 0;
  if (rate > 0) {
    const double t = -std::log1p(-u) / rate;
    guess = t < static_cast<double>(count) ? static_cast<std::size_t>(t) * matches_ : count - 1;
  }
  guess = std::min(guess, count - 1);
  std::size_t lo = 0, hi = count;
  if (c[guess] > u) {
    hi = guess;
    std::size_t step = 1;
    while (hi > 0) {
      const std::size_t probe = hi > step ? hi - step : 0;
      if (c[probe] > u) {
        hi = probe;
        step *= 2;
      } else {
        lo = probe + 1;
        break;
      }
    }
  } else {
    lo = guess + 1;
    std::size_t step = 1;
    while (lo < count) {
      const std::size_t probe = std::min(count - 1, lo + step - 1);
      if (c[probe] > u) {
        hi = probe;
        break;
      }
      lo = probe + 1;
      step *= 2;
    }
  }
  return static_cast<std::size_t>(std::upper_bound(c.begin() + static_cast<std::ptrdiff_t>(lo),
                                                   c.begin() + static_cast<std::ptrdiff_t>(hi), u) -
                                  c.begin());
}

bool OccurrenceSampler::next(Rng& rng, Cursor& c, Index& start) const {
  const Index horizon = c.first ? last_end_ : last_end_ - c.now;
  if (horizon < (c.first ? 0 : 1)) return false;
  const auto count = static_cast<std::size_t>((horizon + 1) * static_cast<Index>(matches_));
  const std::size_t idx = search(c.table, count, rng.uniform());
  if (idx == count) {
    c.now = last_end_;
    c.first = false;
    return false;
  }
  const auto dt = static_cast<Index>(idx / matches_);
  c.now = c.first ? dt : c.now + dt;
  c.first = false;
  c.table = 1 + idx % matches_;
  start = c.now - m_ + 1;
  return true;
}

void OccurrenceSampler::sample(Rng& rng, std::vector<Index>& starts) const {
  sample_each(rng, [&](Index t) {
    starts.push_back(t);
    return true;
  });
}

NonconventionalSimulator::NonconventionalSimulator(const MarkovGibbsMeasure& measure, const QSchedule& schedule,
                                                   const CylinderTarget& target, double lambda,
                                                   std::size_t memory_budget)
    : N_(target_count(target, schedule.ell(), lambda)),
      lambda_(lambda),
      lambda_n_(static_cast<double>(N_) * std::pow(target.probability, schedule.ell())),
      table_(schedule, N_) {
  if (!target.short_return_clear && !target.explicit_blocks) {
    throw ValidationError("target omega_star fails short_return_check; the Poisson regime needs a clear reference word");
  }
  if (schedule.ell() > 1 && !schedule.gap_params()) {
    throw ValidationError("schedule lacks the logarithmic gap condition required for subshift targets");
  }
  sampler_ = std::make_shared<const OccurrenceSampler>(measure, target.blocks, table_.last(N_), memory_budget);
  marks_.assign(static_cast<std::size_t>(table_.last(N_)) / 64 + 1, 0);
}


namespace {

void mark(std::vector<std::uint64_t>& bits, std::span<const Index> starts, bool on) {
  for (Index t : starts) {
    auto& word = bits[static_cast<std::size_t>(t) >> 6];
    const std::uint64_t bit = std::uint64_t{1} << (static_cast<std::size_t>(t) & 63);
    word = on ? (word | bit) : (word & ~bit);
  }
}

bool marked(const std::vector<std::uint64_t>& bits, Index t) {
  return (bits[static_cast<std::size_t>(t) >> 6] >> (static_cast<std::size_t>(t) & 63)) & 1;
}

// l with q_1(l) = t and every q_j(l) marked, if any.
std::optional<Index> full_hit(const ScheduleTable& table, const std::vector<std::uint64_t>& bits, Index t) {
  const auto l = table.inverse(1, t);
  if (!l) return std::nullopt;
  for (int j = 2; j <= table.ell(); ++j) {
    if (!marked(bits, table.at(j, *l))) return std::nullopt;
  }
  return l;
}

}  // namespace

std::uint64_t NonconventionalSimulator::draw(Rng& rng) {
  starts_.clear();
  sampler_->sample(rng, starts_);
  mark(marks_, starts_, true);
  std::uint64_t S = 0;
  for (Index t : starts_) S += full_hit(table_, marks_, t) ? 1 : 0;
  mark(marks_, starts_, false);
  return S;
}

NonconventionalDraw simulate_nonconventional(const MarkovGibbsMeasure& measure, const QSchedule& schedule,
                                             const CylinderTarget& target, double lambda, std::uint64_t seed,
                                             std::uint64_t replicate) {
  NonconventionalSimulator sim(measure, schedule, target, lambda);
  Rng rng(seed, replicate, StreamTag::SubshiftPath);
  return {sim.draw(rng), sim.N()};
}

HittingTimeSimulator::HittingTimeSimulator(const MarkovGibbsMeasure& measure, const QSchedule& schedule,
                                           const CylinderTarget& target, double cap_lambda,
                                           std::size_t memory_budget)
    : cap_(std::max<Index>(1, static_cast<Index>(std::ceil(cap_lambda / std::pow(target.probability, schedule.ell()))))),
      scale_(std::pow(target.probability, schedule.ell())),
      table_(schedule, cap_) {
  if (!(cap_lambda > 0)) throw ValidationError("hitting-time cap must be > 0");
  if (!target.short_return_clear && !target.explicit_blocks) {
    throw ValidationError("target omega_star fails short_return_check; the Poisson regime needs a clear reference word");
  }
  if (schedule.ell() > 1 && !schedule.gap_params()) {
    throw ValidationError("schedule lacks the logarithmic gap condition required for subshift targets");
  }
  sampler_ = std::make_shared<const OccurrenceSampler>(measure, target.blocks, table_.last(cap_), memory_budget);
  marks_.assign(static_cast<std::size_t>(table_.last(cap_)) / 64 + 1, 0);
}


HittingSample HittingTimeSimulator::draw(Rng& rng) {
  starts_.clear();
  HittingSample h{cap_, static_cast<double>(cap_) * scale_, true};
  std::size_t pending = 0;
  // A start t = q_1(l) is decided once every q_j(l) lies at or before the
  // latest generated start; starts arrive in increasing order and q_1 is
  // increasing, so the first full hit is the minimum.
  auto settle = [&](Index known_through) {
    for (; pending < starts_.size(); ++pending) {
      const Index t = starts_[pending];
      const auto l = table_.inverse(1, t);
      if (!l) continue;
      if (table_.last(*l) > known_through) return false;
      if (full_hit(table_, marks_, t)) {
        h = {*l, static_cast<double>(*l) * scale_, false};
        return true;
      }
    }
    return false;
  };
  bool hit = false;
  sampler_->sample_each(rng, [&](Index t) {
    starts_.push_back(t);
    mark(marks_, std::span<const Index>(&t, 1), true);
    hit = settle(t);
    return !hit;
  });
  if (!hit) settle(table_.last(cap_));
  mark(marks_, starts_, false);
  return h;
}

HittingSample hitting_time(const MarkovGibbsMeasure& measure, const QSchedule& schedule, const CylinderTarget& target,
                           std::uint64_t seed, std::uint64_t replicate, double cap_lambda) {
  HittingTimeSimulator sim(measure, schedule, target, cap_lambda);
  Rng rng(seed, replicate, StreamTag::HittingTime);
  return sim.draw(rng);
}

}  // namespace ncp
