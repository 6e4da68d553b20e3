#include "ncpoisson/markov_model.hpp"

#include <algorithm>
#include <bit>
#include <deque>
#include <cmath>
#include <limits>
#include <mutex>

#include <fmt/format.h>

#include "ncpoisson/errors.hpp"

namespace ncp {

class PowerCache {
 public:
  explicit PowerCache(Eigen::MatrixXd P) { squares_.push_back(std::move(P)); }

  // P^{2^i}.
  const Eigen::MatrixXd& square(std::size_t i) {
    std::lock_guard<std::mutex> lock(mu_);
    while (squares_.size() <= i) {
      const Eigen::MatrixXd& last = squares_.back();
      squares_.push_back(last * last);
    }
    return squares_[i];
  }

 private:
  std::mutex mu_;
  std::deque<Eigen::MatrixXd> squares_;  // push_back keeps earlier references valid
};

namespace {

constexpr double kRowTol = 1e-12;

Eigen::MatrixXd pattern(const Eigen::MatrixXd& A) {
  return (A.array() > 0).cast<double>().matrix();
}

// Positivity pattern of P^n.
Eigen::MatrixXd pattern_power(const Eigen::MatrixXd& base, Index n) {
  Eigen::MatrixXd result = Eigen::MatrixXd::Identity(base.rows(), base.cols());
  Eigen::MatrixXd sq = base;
  while (n > 0) {
    if (n & 1) result = pattern(result * sq);
    n >>= 1;
    if (n > 0) sq = pattern(sq * sq);
  }
  return result;
}

void validate_stochastic(const Eigen::MatrixXd& P) {
  if (P.rows() == 0 || P.rows() != P.cols()) {
    throw ValidationError(fmt::format("transition matrix must be square and nonempty ({}x{})", P.rows(), P.cols()));
  }
  for (Index i = 0; i < P.rows(); ++i) {
    for (Index j = 0; j < P.cols(); ++j) {
      if (!(P(i, j) >= 0) || !std::isfinite(P(i, j))) {
        throw ValidationError(fmt::format("transition matrix entry ({}, {}) = {} is not a probability", i, j, P(i, j)));
      }
    }
    const double s = P.row(i).sum();
    if (std::abs(s - 1.0) > kRowTol) {
      throw ValidationError(fmt::format("transition matrix row {} sums to {:.17g}", i, s));
    }
  }
}

void validate_distribution(const Eigen::VectorXd& v, Index size, const char* what) {
  if (v.size() != size) throw ValidationError(fmt::format("{} has {} entries, expected {}", what, v.size(), size));
  for (Index i = 0; i < v.size(); ++i) {
    if (!(v(i) >= 0)) throw ValidationError(fmt::format("{} entry {} is negative", what, i));
  }
  if (std::abs(v.sum() - 1.0) > kRowTol) throw ValidationError(fmt::format("{} sums to {:.17g}", what, v.sum()));
}

}  // namespace

std::optional<DoeblinCertificate> doeblin_certificate(const Eigen::MatrixXd& P, int n0_max) {
  if (n0_max < 1) throw ValidationError("doeblin certificate needs n0_max >= 1");
  const Eigen::MatrixXd A = pattern(P);
  auto positive = [&](Index n) { return pattern_power(A, n).minCoeff() > 0; };
  if (!positive(n0_max)) return std::nullopt;
  // Once P^n > 0 every later power is positive (rows of P are nonzero).
  Index lo = 1, hi = n0_max;
  while (lo < hi) {
    const Index mid = lo + (hi - lo) / 2;
    if (positive(mid)) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  Eigen::MatrixXd Pn = Eigen::MatrixXd::Identity(P.rows(), P.cols());
  for (Index i = 0; i < lo; ++i) Pn = Pn * P;
  const auto M = static_cast<double>(P.rows());
  DoeblinCertificate cert;
  cert.n0 = static_cast<int>(lo);
  cert.C = std::max(M * P.maxCoeff(), 1.0 / (M * Pn.minCoeff()));
  return cert;
}

FiniteMarkovChain::FiniteMarkovChain(Eigen::MatrixXd P, Eigen::VectorXd nu, std::optional<int> n0_max)
    : P_(std::move(P)), nu_(std::move(nu)) {
  validate_stochastic(P_);
  validate_distribution(nu_, P_.rows(), "initial distribution");
  const Index M = P_.rows();
  const Index wielandt = (M - 1) * (M - 1) + 1;
  const int search = n0_max ? std::min<int>(*n0_max, static_cast<int>(wielandt)) : static_cast<int>(wielandt);
  cert_ = doeblin_certificate(P_, std::max(1, search));
  if (cert_) {
    Eigen::MatrixXd A = P_.transpose() - Eigen::MatrixXd::Identity(M, M);
    A.row(M - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(M);
    rhs(M - 1) = 1.0;
    mu_ = A.fullPivLu().solve(rhs);
    mu_ = mu_.cwiseMax(0.0);
    mu_ /= mu_.sum();
  }
  cache_ = std::make_shared<PowerCache>(P_);
}

FiniteMarkovChain FiniteMarkovChain::two_state(double a, double b, std::optional<Eigen::VectorXd> nu) {
  if (!(a >= 0 && a <= 1 && b >= 0 && b <= 1)) throw ValidationError("two_state needs a, b in [0, 1]");
  Eigen::MatrixXd P(2, 2);
  P << 1 - a, a, b, 1 - b;
  Eigen::VectorXd start(2);
  if (nu) {
    start = *nu;
  } else if (a + b > 0) {
    start << b / (a + b), a / (a + b);
  } else {
    start << 0.5, 0.5;
  }
  return FiniteMarkovChain(P, start);
}

FiniteMarkovChain FiniteMarkovChain::random_stochastic(std::uint64_t seed, int M, double min_entry) {
  if (M < 1) throw ValidationError("random_stochastic needs M >= 1");
  if (!(min_entry >= 0) || min_entry * M >= 1.0) {
    throw ValidationError(fmt::format("random_stochastic needs 0 <= min_entry < 1/M, got {}", min_entry));
  }
  Rng rng(seed, 0, StreamTag::ChainFamily);
  Eigen::MatrixXd P(M, M);
  for (int i = 0; i < M; ++i) {
    double s = 0;
    for (int j = 0; j < M; ++j) {
      P(i, j) = -std::log(1.0 - rng.uniform());  // Dirichlet(1, ..., 1) row
      s += P(i, j);
    }
    const double free_mass = 1.0 - min_entry * M;
    for (int j = 0; j < M; ++j) P(i, j) = min_entry + free_mass * P(i, j) / s;
    P.row(i) /= P.row(i).sum();
  }
  return FiniteMarkovChain(P, Eigen::VectorXd::Constant(M, 1.0 / M));
}

const Eigen::VectorXd& FiniteMarkovChain::mu() const {
  if (!cert_) throw CertificationError("chain fails the Doeblin condition (no positive power of P)");
  return mu_;
}

FiniteMarkovChain FiniteMarkovChain::with_initial(Eigen::VectorXd nu) const {
  validate_distribution(nu, P_.rows(), "initial distribution");
  FiniteMarkovChain copy = *this;
  copy.nu_ = std::move(nu);
  return copy;
}

Eigen::MatrixXd FiniteMarkovChain::power(Index t) const {
  if (t < 0) throw ValidationError("matrix power needs t >= 0");
  Eigen::MatrixXd out = Eigen::MatrixXd::Identity(P_.rows(), P_.cols());
  for (std::size_t i = 0; t > 0; ++i, t >>= 1) {
    if (t & 1) out = out * cache_->square(i);
  }
  return out;
}

Eigen::RowVectorXd FiniteMarkovChain::propagate(const Eigen::RowVectorXd& v, Index t) const {
  if (t < 0) throw ValidationError("propagation needs t >= 0");
  Eigen::RowVectorXd out = v;
  for (std::size_t i = 0; t > 0; ++i, t >>= 1) {
    if (t & 1) out = out * cache_->square(i);
  }
  return out;
}

Eigen::VectorXd invariant_measure(const FiniteMarkovChain& chain) { return chain.mu(); }

MixingReport mixing_rate(const FiniteMarkovChain& chain, int horizon) {
  if (horizon < 1) throw ValidationError("mixing_rate needs horizon >= 1");
  const Eigen::VectorXd& mu = chain.mu();
  const auto M = static_cast<double>(chain.states());
  MixingReport r;
  r.d.resize(static_cast<std::size_t>(horizon));
  Eigen::MatrixXd Pn = Eigen::MatrixXd::Identity(chain.states(), chain.states());
  for (int n = 1; n <= horizon; ++n) {
    Pn = Pn * chain.P();
    double worst = 0;
    for (int x = 0; x < chain.states(); ++x) {
      for (int y = 0; y < chain.states(); ++y) worst = std::max(worst, M * std::abs(Pn(x, y) - mu(y)));
    }
    r.d[static_cast<std::size_t>(n - 1)] = worst;
  }
  constexpr double kZero = 1e-13;
  auto fit = [&](int from) {
    std::vector<std::pair<double, double>> pts;
    for (int n = from; n <= horizon; ++n) {
      const double v = r.d[static_cast<std::size_t>(n - 1)];
      if (v > kZero) pts.emplace_back(n, std::log(v));
    }
    return pts;
  };
  r.fit_from = horizon / 2 + 1;
  auto pts = fit(r.fit_from);
  if (pts.size() < 2) {
    r.fit_from = 1;
    pts = fit(1);
  }
  if (pts.size() < 2) {
    r.beta = std::numeric_limits<double>::infinity();
    r.C1 = *std::max_element(r.d.begin(), r.d.end());
  } else {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (auto [x, y] : pts) {
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const auto k = static_cast<double>(pts.size());
    r.beta = -(k * sxy - sx * sy) / (k * sxx - sx * sx);
    r.C1 = 0;
    for (int n = 1; n <= horizon; ++n) {
      r.C1 = std::max(r.C1, r.d[static_cast<std::size_t>(n - 1)] * std::exp(r.beta * n));
    }
  }
  for (int n = std::max(1, horizon / 2 + 1); n < horizon; ++n) {
    const double a = r.d[static_cast<std::size_t>(n - 1)], b = r.d[static_cast<std::size_t>(n)];
    if (b > a * (1 + 1e-9) + 1e-15) r.eventually_decreasing = false;
  }
  return r;
}

StateSet StateSet::of(int states, const std::vector<int>& members) {
  StateSet s{std::vector<bool>(static_cast<std::size_t>(states), false)};
  for (int m : members) {
    if (m < 0 || m >= states) throw ValidationError(fmt::format("state {} outside 0..{}", m, states - 1));
    s.mask[static_cast<std::size_t>(m)] = true;
  }
  return s;
}

std::vector<int> StateSet::members() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) out.push_back(static_cast<int>(i));
  }
  return out;
}

double StateSet::mass(const Eigen::VectorXd& dist) const {
  double m = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) m += dist(static_cast<Index>(i));
  }
  return m;
}

namespace {

std::vector<double> cumulative(const Eigen::RowVectorXd& row) {
  std::vector<double> c(static_cast<std::size_t>(row.size()));
  double s = 0;
  Index last = 0;
  for (Index j = 0; j < row.size(); ++j) {
    s += row(j);
    c[static_cast<std::size_t>(j)] = s;
    if (row(j) > 0) last = j;
  }
  for (Index j = last; j < row.size(); ++j) c[static_cast<std::size_t>(j)] = 1.0;
  return c;
}

}  // namespace

MarkovPathSampler::MarkovPathSampler(const FiniteMarkovChain& chain, const QSchedule& schedule,
                                     StateSet gamma, Index n)
    : M_(chain.states()), gamma_(std::move(gamma)), table_(schedule, n) {
  if (static_cast<int>(gamma_.mask.size()) != M_) throw ValidationError("target set size differs from state count");
  for (int i = 0; i < M_; ++i) {
    const auto c = cumulative(chain.P().row(i));
    cdf_.insert(cdf_.end(), c.begin(), c.end());
  }
  nu_cdf_ = cumulative(chain.nu().transpose());
  hit_.assign(static_cast<std::size_t>(table_.last(n)) + 1, 0);
}

int MarkovPathSampler::step(int from, double u) const {
  const auto begin = cdf_.begin() + static_cast<std::ptrdiff_t>(from) * M_;
  return static_cast<int>(std::upper_bound(begin, begin + M_, u) - begin);
}

std::uint64_t MarkovPathSampler::draw(Rng& rng) {
  int x = static_cast<int>(std::upper_bound(nu_cdf_.begin(), nu_cdf_.end(), rng.uniform()) - nu_cdf_.begin());
  hit_[0] = gamma_.contains(x) ? 1 : 0;
  for (std::size_t t = 1; t < hit_.size(); ++t) {
    x = step(x, rng.uniform());
    hit_[t] = gamma_.contains(x) ? 1 : 0;
  }
  std::uint64_t s = 0;
  for (Index l = 1; l <= table_.count(); ++l) {
    bool all = true;
    for (Index v : table_.row(l)) {
      if (!hit_[static_cast<std::size_t>(v)]) {
        all = false;
        break;
      }
    }
    s += all ? 1 : 0;
  }
  return s;
}

std::uint64_t simulate_arrival_sum(const FiniteMarkovChain& chain, const QSchedule& schedule,
                                   const StateSet& gamma, Index n, std::uint64_t seed, std::uint64_t replicate) {
  MarkovPathSampler sampler(chain, schedule, gamma, n);
  Rng rng(seed, replicate, StreamTag::MarkovPath);
  return sampler.draw(rng);
}

double exact_joint_hit(const FiniteMarkovChain& chain, std::vector<Index> times, const StateSet& gamma) {
  if (static_cast<int>(gamma.mask.size()) != chain.states()) {
    throw ValidationError("target set size differs from state count");
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  Eigen::RowVectorXd v = chain.nu().transpose();
  Index prev = 0;
  for (Index t : times) {
    if (t < 0) throw ValidationError("joint hit times must be >= 0");
    v = chain.propagate(v, t - prev);
    for (int s = 0; s < chain.states(); ++s) {
      if (!gamma.contains(s)) v(s) = 0;
    }
    prev = t;
  }
  return v.sum();
}

double exact_b(const FiniteMarkovChain& chain, const QSchedule& schedule, const StateSet& gamma,
               const Tuple& tuple, std::size_t index_budget) {
  const std::size_t count = tuple.size() * static_cast<std::size_t>(schedule.ell());
  if (count > index_budget) {
    throw ResourceError("markov_model", fmt::format("{} indices exceed the budget {}", count, index_budget));
  }
  for (std::size_t i = 0; i < tuple.size(); ++i) {
    for (std::size_t j = i + 1; j < tuple.size(); ++j) {
      if (tuple[i] == tuple[j]) throw ValidationError(fmt::format("tuple has duplicate entry {}", tuple[i]));
    }
  }
  std::vector<Index> times;
  times.reserve(count);
  for (Index l : tuple) {
    for (Index v : schedule.evaluate(l)) times.push_back(v);
  }
  return exact_joint_hit(chain, std::move(times), gamma);
}

CountDistribution exact_sum_distribution(const FiniteMarkovChain& chain, const QSchedule& schedule,
                                         const StateSet& gamma, Index n, std::uint64_t path_budget) {
  if (static_cast<int>(gamma.mask.size()) != chain.states()) {
    throw ValidationError("target set size differs from state count");
  }
  ScheduleTable table(schedule, n);
  const Index H = table.last(n);
  const int M = chain.states();
  const Eigen::MatrixXd& P = chain.P();

  // Number of positive-probability paths of length H.
  Eigen::RowVectorXd reach = (chain.nu().transpose().array() > 0).cast<double>().matrix();
  const Eigen::MatrixXd A = pattern(P);
  for (Index t = 0; t < H; ++t) {
    reach = reach * A;
    if (reach.sum() > static_cast<double>(path_budget)) {
      throw ResourceError("markov_model", fmt::format("more than {} paths by step {} of the horizon {}; "
                                                      "path budget exceeded, shrink n",
                                                      path_budget, t + 1, H));
    }
  }

  // ends[t] = l with q_ell(l) = t, or 0.
  std::vector<Index> ends(static_cast<std::size_t>(H) + 1, 0);
  for (Index l = 1; l <= n; ++l) ends[static_cast<std::size_t>(table.last(l))] = l;

  const auto len = static_cast<std::size_t>(H) + 1;
  std::vector<int> state(len, -1);
  std::vector<double> weight(len, 0.0);
  std::vector<std::uint32_t> count(len, 0);
  std::vector<std::uint8_t> hit(len, 0);
  std::vector<double> pmf(static_cast<std::size_t>(n) + 1, 0.0);

  auto enter = [&](std::size_t t, int s, double w) {
    state[t] = s;
    weight[t] = w;
    hit[t] = gamma.contains(s) ? 1 : 0;
    std::uint32_t c = t > 0 ? count[t - 1] : 0;
    if (const Index l = ends[t]; l > 0) {
      bool all = true;
      for (Index v : table.row(l)) all = all && hit[static_cast<std::size_t>(v)];
      c += all ? 1 : 0;
    }
    count[t] = c;
  };

  for (int s0 = 0; s0 < M; ++s0) {
    if (!(chain.nu()(s0) > 0)) continue;
    enter(0, s0, chain.nu()(s0));
    // next[t] is the next successor state to try from position t.
    std::vector<int> next(len, 0);
    std::size_t t = 0;
    while (true) {
      if (t + 1 == len) {
        pmf[count[t]] += weight[t];
        if (t == 0) break;
        --t;
        continue;
      }
      int& k = next[t];
      while (k < M && !(P(state[t], k) > 0)) ++k;
      if (k == M) {
        next[t] = 0;
        if (t == 0) break;
        --t;
        continue;
      }
      const int s = k++;
      enter(t + 1, s, weight[t] * P(state[t], s));
      ++t;
      next[t] = 0;
    }
  }
  CountDistribution d;
  d.pmf = std::move(pmf);
  return d;
}

WordLift lift_chain(const FiniteMarkovChain& base, int k) {
  if (k < 1) throw ValidationError("word lift needs k >= 1");
  const int M = base.states();
  const Eigen::MatrixXd& P = base.P();
  std::vector<std::vector<int>> words;
  std::vector<int> w;
  // Lexicographic enumeration of words with positive transitions.
  auto extend = [&](auto&& self) -> void {
    if (static_cast<int>(w.size()) == k) {
      words.push_back(w);
      return;
    }
    for (int s = 0; s < M; ++s) {
      if (!w.empty() && !(P(w.back(), s) > 0)) continue;
      w.push_back(s);
      self(self);
      w.pop_back();
    }
  };
  extend(extend);
  const auto W = static_cast<Index>(words.size());
  if (W > 4096) throw ResourceError("markov_model", fmt::format("word lift with {} states exceeds 4096", W));
  std::map<std::vector<int>, Index> where;
  for (Index i = 0; i < W; ++i) where.emplace(words[static_cast<std::size_t>(i)], i);
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(W, W);
  Eigen::VectorXd nu(W);
  for (Index i = 0; i < W; ++i) {
    const auto& word = words[static_cast<std::size_t>(i)];
    double p = base.nu()(word[0]);
    for (int t = 1; t < k; ++t) p *= P(word[static_cast<std::size_t>(t - 1)], word[static_cast<std::size_t>(t)]);
    nu(i) = p;
    std::vector<int> shifted(word.begin() + 1, word.end());
    shifted.push_back(0);
    for (int s = 0; s < M; ++s) {
      const double q = P(word.back(), s);
      if (!(q > 0)) continue;
      shifted.back() = s;
      L(i, where.at(shifted)) = q;
    }
  }
  std::optional<int> hint;
  if (base.certificate()) hint = base.certificate()->n0 + k - 1;
  return WordLift{k, std::move(words), FiniteMarkovChain(std::move(L), nu / nu.sum(), hint)};
}

namespace {

struct Pick {
  std::vector<int> members;
  double mass = 0;
};

std::optional<Pick> pick_words(const std::vector<double>& masses, double lo, double hi, double target) {
  const auto W = masses.size();
  if (W <= 16) {
    std::optional<Pick> best;
    double best_err = std::numeric_limits<double>::infinity();
    int best_size = 0;
    for (std::uint32_t m = 1; m < (1u << W); ++m) {
      double s = 0;
      for (std::size_t i = 0; i < W; ++i) {
        if (m >> i & 1u) s += masses[i];
      }
      if (s < lo || s > hi) continue;
      const double err = std::abs(s - target);
      const int size = std::popcount(m);
      if (err < best_err - 1e-15 || (std::abs(err - best_err) <= 1e-15 && size < best_size)) {
        Pick p;
        for (std::size_t i = 0; i < W; ++i) {
          if (m >> i & 1u) p.members.push_back(static_cast<int>(i));
        }
        p.mass = s;
        best = p;
        best_err = err;
        best_size = size;
      }
    }
    return best;
  }
  std::vector<std::size_t> order(W);
  for (std::size_t i = 0; i < W; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return masses[a] > masses[b]; });
  Pick p;
  for (std::size_t i : order) {
    if (p.mass + masses[i] <= target) {
      p.mass += masses[i];
      p.members.push_back(static_cast<int>(i));
    }
  }
  // One more word may land closer to the target from above.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const std::size_t i = *it;
    if (std::find(p.members.begin(), p.members.end(), static_cast<int>(i)) != p.members.end()) continue;
    if (p.mass + masses[i] <= hi && std::abs(p.mass + masses[i] - target) < std::abs(p.mass - target)) {
      p.mass += masses[i];
      p.members.push_back(static_cast<int>(i));
    }
    break;
  }
  std::sort(p.members.begin(), p.members.end());
  if (p.members.empty() || p.mass < lo || p.mass > hi) return std::nullopt;
  return p;
}

}  // namespace

TargetSetSequence choose_target_sets(const FiniteMarkovChain& chain, int ell, double lambda,
                                     const std::vector<Index>& n_grid, double tolerance, int k_max) {
  if (chain.states() < 2) throw ValidationError("target sets need a chain with at least 2 states");
  if (ell < 1 || !(lambda > 0) || !(tolerance > 0) || k_max < 1 || n_grid.empty()) {
    throw ValidationError("choose_target_sets needs ell >= 1, lambda > 0, tolerance > 0, k_max >= 1, nonempty grid");
  }
  for (Index n : n_grid) {
    if (n < 1) throw ValidationError("n_grid entries must be >= 1");
    if (static_cast<double>(n) < lambda * (1 - tolerance)) {
      throw ValidationError(fmt::format(
          "lambda = {} is unreachable at n = {}: n mu(G)^ell <= n for every set", lambda, n));
    }
  }
  const Eigen::VectorXd& mu = chain.mu();
  const Eigen::MatrixXd& P = chain.P();
  for (int k = 1; k <= k_max; ++k) {
    std::vector<std::vector<int>> words;
    std::vector<double> masses;
    std::vector<int> w;
    auto extend = [&](auto&& self, double m) -> void {
      if (static_cast<int>(w.size()) == k) {
        words.push_back(w);
        masses.push_back(m);
        return;
      }
      for (int s = 0; s < chain.states(); ++s) {
        const double step = w.empty() ? mu(s) : P(w.back(), s);
        if (!(step > 0) && !w.empty()) continue;
        w.push_back(s);
        self(self, m * step);
        w.pop_back();
      }
    };
    extend(extend, 1.0);
    TargetSetSequence seq;
    seq.k = k;
    seq.tolerance = tolerance;
    bool ok = true;
    for (Index n : n_grid) {
      const auto nd = static_cast<double>(n);
      const double target = std::pow(lambda / nd, 1.0 / ell);
      const double lo = std::pow(lambda * (1 - tolerance) / nd, 1.0 / ell);
      const double hi = std::pow(lambda * (1 + tolerance) / nd, 1.0 / ell);
      const auto pick = pick_words(masses, lo, hi, target);
      if (!pick) {
        ok = false;
        break;
      }
      seq.sets.emplace(n, StateSet::of(static_cast<int>(words.size()), pick->members));
      seq.mu_mass[n] = pick->mass;
      seq.lambda_n[n] = nd * std::pow(pick->mass, ell);
    }
    if (!ok) continue;
    if (k > 1) seq.lift = lift_chain(chain, k);
    return seq;
  }
  throw ValidationError(fmt::format(
      "no union of words of length <= {} reaches n mu(G)^{} within {} of lambda = {}; raise the word-lift length k_max",
      k_max, ell, tolerance, lambda));
}

}  // namespace ncp
