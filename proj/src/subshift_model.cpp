#include "ncpoisson/subshift_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "ncpoisson/errors.hpp"

namespace ncp {

namespace {

Eigen::MatrixXi bool_product(const Eigen::MatrixXi& a, const Eigen::MatrixXi& b) {
  return ((a * b).array() > 0).cast<int>().matrix();
}

Eigen::MatrixXi bool_power(const Eigen::MatrixXi& A, Index k) {
  Eigen::MatrixXi result = Eigen::MatrixXi::Identity(A.rows(), A.cols());
  Eigen::MatrixXi sq = A;
  while (k > 0) {
    if (k & 1) result = bool_product(result, sq);
    k >>= 1;
    if (k > 0) sq = bool_product(sq, sq);
  }
  return result;
}

std::string word_string(std::span<const int> w) {
  std::string s;
  for (int a : w) {
    if (!s.empty()) s += ',';
    s += std::to_string(a);
  }
  return s;
}

}  // namespace

SubshiftSFT::SubshiftSFT(Eigen::MatrixXi A) : A_(std::move(A)) {
  if (A_.rows() == 0 || A_.rows() != A_.cols()) throw ValidationError("adjacency matrix must be square and nonempty");
  for (Index i = 0; i < A_.rows(); ++i) {
    for (Index j = 0; j < A_.cols(); ++j) {
      if (A_(i, j) != 0 && A_(i, j) != 1) throw ValidationError("adjacency matrix must be 0-1");
    }
    if (A_.row(i).sum() == 0) throw ValidationError(fmt::format("adjacency matrix row {} is zero", i));
    if (A_.col(i).sum() == 0) throw ValidationError(fmt::format("adjacency matrix column {} is zero", i));
  }
  const Index M = A_.rows();
  const Index wielandt = (M - 1) * (M - 1) + 1;
  if (bool_power(A_, wielandt).minCoeff() == 0) {
    throw ValidationError("adjacency matrix is not primitive (no power of A is positive)");
  }
  Index lo = 1, hi = wielandt;
  while (lo < hi) {
    const Index mid = lo + (hi - lo) / 2;
    if (bool_power(A_, mid).minCoeff() > 0) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  wp_ = static_cast<int>(lo);
}

SubshiftSFT SubshiftSFT::full_shift(int iota) {
  if (iota < 1) throw ValidationError("full shift needs iota >= 1");
  return SubshiftSFT(Eigen::MatrixXi::Ones(iota, iota));
}

SubshiftSFT SubshiftSFT::golden_mean() {
  Eigen::MatrixXi A(2, 2);
  A << 1, 1, 1, 0;
  return SubshiftSFT(A);
}

bool SubshiftSFT::admissible(std::span<const int> word) const {
  for (std::size_t i = 0; i < word.size(); ++i) {
    if (word[i] < 0 || word[i] >= iota()) return false;
    if (i > 0 && !allowed(word[i - 1], word[i])) return false;
  }
  return true;
}

bool SubshiftSFT::bridge(int a, int b, Index k) const { return bool_power(A_, k)(a, b) > 0; }

MarkovGibbsMeasure::MarkovGibbsMeasure(SubshiftSFT sft, Eigen::MatrixXd Q) : sft_(std::move(sft)) {
  const int iota = sft_.iota();
  if (Q.rows() != iota || Q.cols() != iota) {
    throw ValidationError(fmt::format("Q must be {}x{}, got {}x{}", iota, iota, Q.rows(), Q.cols()));
  }
  for (int a = 0; a < iota; ++a) {
    for (int b = 0; b < iota; ++b) {
      if ((Q(a, b) > 0) != sft_.allowed(a, b)) {
        throw ValidationError(fmt::format("Q({}, {}) = {} disagrees with A({}, {}) = {}", a, b, Q(a, b), a, b,
                                          sft_.A()(a, b)));
      }
    }
  }
  FiniteMarkovChain probe(Q, Eigen::VectorXd::Constant(iota, 1.0 / iota));
  chain_ = std::make_shared<const FiniteMarkovChain>(probe.with_initial(probe.mu()));
  entropy_ = 0;
  for (int a = 0; a < iota; ++a) {
    for (int b = 0; b < iota; ++b) {
      if (Q(a, b) > 0) entropy_ -= chain_->mu()(a) * Q(a, b) * std::log(Q(a, b));
    }
  }
}

MarkovGibbsMeasure MarkovGibbsMeasure::uniform_rows(const SubshiftSFT& sft) {
  Eigen::MatrixXd Q = sft.A().cast<double>();
  for (Index i = 0; i < Q.rows(); ++i) Q.row(i) /= Q.row(i).sum();
  return MarkovGibbsMeasure(sft, Q);
}

double cylinder_prob(const MarkovGibbsMeasure& measure, std::span<const int> word) {
  if (word.empty()) return 1.0;
  if (!measure.sft().admissible(word)) {
    throw ValidationError(fmt::format("word [{}] is not admissible", word_string(word)));
  }
  double p = measure.pi()(word[0]);
  for (std::size_t i = 1; i < word.size(); ++i) p *= measure.Q()(word[i - 1], word[i]);
  return p;
}

std::vector<Word> admissible_words(const SubshiftSFT& sft, int length) {
  std::vector<Word> out;
  if (length < 1) return out;
  Word w;
  auto extend = [&](auto&& self) -> void {
    if (static_cast<int>(w.size()) == length) {
      out.push_back(w);
      return;
    }
    for (int a = 0; a < sft.iota(); ++a) {
      if (!w.empty() && !sft.allowed(w.back(), a)) continue;
      w.push_back(a);
      self(self);
      w.pop_back();
    }
  };
  extend(extend);
  return out;
}

GibbsReport gibbs_constant(const MarkovGibbsMeasure& measure, int n_max) {
  if (n_max < 1) throw ValidationError("gibbs_constant needs n_max >= 1");
  const SubshiftSFT& sft = measure.sft();
  GibbsReport r;
  r.extension_rule = "periodic extension w w w ... when w_{n-1} -> w_0 is allowed, else w then the smallest allowed symbol";
  r.C = 0;
  for (int n = 1; n <= n_max; ++n) {
    double worst = 0;
    for (const Word& w : admissible_words(sft, n)) {
      int next = w.front();
      if (!sft.allowed(w.back(), next)) {
        next = 0;
        while (!sft.allowed(w.back(), next)) ++next;
      }
      // P([w]) / exp(sum_{i<n} ln Q_{x_i x_{i+1}}) with x_n = next.
      const double ratio = measure.pi()(w.front()) / measure.Q()(w.back(), next);
      worst = std::max({worst, ratio, 1.0 / ratio});
    }
    r.per_length.push_back(worst);
    r.C = std::max(r.C, worst);
  }
  if (r.per_length.size() < 2) return r;
  const auto half = r.per_length.size() / 2;
  const double early = *std::max_element(r.per_length.begin(), r.per_length.begin() + static_cast<std::ptrdiff_t>(half));
  const double late = *std::max_element(r.per_length.begin() + static_cast<std::ptrdiff_t>(half), r.per_length.end());
  r.bounded = late <= early * (1 + 1e-9);
  return r;
}

PsiMixingReport psi_mixing_check(const MarkovGibbsMeasure& measure, int l_max, int gap_max) {
  if (l_max < 1 || gap_max < 1) throw ValidationError("psi_mixing_check needs l_max >= 1 and gap_max >= 1");
  const SubshiftSFT& sft = measure.sft();
  const int iota = sft.iota();
  const Eigen::VectorXd& pi = measure.pi();
  constexpr double kZero = 1e-13;

  // err[g-1](a, b) = |Q^g_{ab} / pi_b - 1|.
  std::vector<Eigen::MatrixXd> err;
  Eigen::MatrixXd Qg = Eigen::MatrixXd::Identity(iota, iota);
  for (int g = 1; g <= gap_max; ++g) {
    Qg = Qg * measure.Q();
    Eigen::MatrixXd e(iota, iota);
    for (int a = 0; a < iota; ++a) {
      for (int b = 0; b < iota; ++b) e(a, b) = std::abs(Qg(a, b) / pi(b) - 1.0);
    }
    err.push_back(e);
  }

  std::vector<Word> words;
  for (int len = 1; len <= l_max; ++len) {
    auto w = admissible_words(sft, len);
    words.insert(words.end(), w.begin(), w.end());
  }

  PsiMixingReport r;
  r.per_gap.assign(static_cast<std::size_t>(gap_max), 0.0);
  for (int g = 1; g <= gap_max; ++g) {
    for (const Word& U : words) {
      for (const Word& V : words) {
        const double e = err[static_cast<std::size_t>(g - 1)](U.back(), V.front());
        ++r.triples;
        if (e > r.per_gap[static_cast<std::size_t>(g - 1)]) r.per_gap[static_cast<std::size_t>(g - 1)] = e;
        if (e > r.worst.relative_error) r.worst = PsiTriple{U, V, g, e};
      }
    }
  }

  auto points = [&](int from) {
    std::vector<std::pair<double, double>> pts;
    for (int g = from; g <= gap_max; ++g) {
      const double e = r.per_gap[static_cast<std::size_t>(g - 1)];
      if (e > kZero) pts.emplace_back(g, std::log(e));
    }
    return pts;
  };
  auto pts = points(gap_max / 2 + 1);
  if (pts.size() < 2) pts = points(1);
  if (pts.size() < 2) {
    r.beta = std::numeric_limits<double>::infinity();
    r.C = *std::max_element(r.per_gap.begin(), r.per_gap.end());
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
    r.C = 0;
    for (int g = 1; g <= gap_max; ++g) {
      r.C = std::max(r.C, r.per_gap[static_cast<std::size_t>(g - 1)] * std::exp(r.beta * g));
    }
    r.C *= 1 + 1e-12;
  }
  for (int g = 1; g <= gap_max; ++g) {
    const double envelope = std::isinf(r.beta) ? r.C : r.C * std::exp(-r.beta * g);
    for (int a = 0; a < iota; ++a) {
      for (int b = 0; b < iota; ++b) {
        if (err[static_cast<std::size_t>(g - 1)](a, b) <= envelope + kZero) continue;
        // Count every (U, V) pair that ends in a and starts with b.
        for (const Word& U : words) {
          if (U.back() != a) continue;
          for (const Word& V : words) r.violations += V.front() == b ? 1 : 0;
        }
      }
    }
  }

  Eigen::EigenSolver<Eigen::MatrixXd> solver(measure.Q());
  std::vector<double> moduli;
  for (Index i = 0; i < solver.eigenvalues().size(); ++i) moduli.push_back(std::abs(solver.eigenvalues()(i)));
  std::sort(moduli.begin(), moduli.end(), std::greater<>());
  const double lambda2 = moduli.size() > 1 ? moduli[1] : 0.0;
  r.spectral_rate = lambda2 < 1e-14 ? std::numeric_limits<double>::infinity() : -std::log(lambda2);
  if (std::isinf(r.spectral_rate) || std::isinf(r.beta)) {
    r.beta_matches_spectrum = std::isinf(r.spectral_rate) && std::isinf(r.beta);
  } else {
    r.beta_matches_spectrum = std::abs(r.beta - r.spectral_rate) <= 0.05 * r.spectral_rate;
  }
  return r;
}

bool short_return_check(const SubshiftSFT& sft, std::span<const int> word, Index a_n) {
  if (word.empty()) throw ValidationError("short_return_check needs a nonempty word");
  if (!sft.admissible(word)) throw ValidationError(fmt::format("word [{}] is not admissible", word_string(word)));
  if (a_n < 0) throw ValidationError("short_return_check needs a_n >= 0");
  const auto n = static_cast<Index>(word.size());
  for (Index i = 1; i <= a_n; ++i) {
    if (i < n) {
      bool overlap = true;
      for (Index k = 0; k + i < n && overlap; ++k) overlap = word[k + i] == word[k];
      // The combined word w_0 .. w_{n-1} w_{n-i} .. w_{n-1} must also be admissible.
      if (overlap && sft.allowed(word[n - 1], word[n - i])) return false;
    } else if (sft.bridge(word[n - 1], word[0], i - n + 1)) {
      return false;
    }
  }
  return true;
}

CylinderTarget make_cylinder_target(const MarkovGibbsMeasure& measure, Word omega_star, Index n, double s,
                                    double epsilon, std::optional<std::uint64_t> refine_seed) {
  const SubshiftSFT& sft = measure.sft();
  if (n < 1) throw ValidationError("target needs n >= 1");
  if (!(s >= 0)) throw ValidationError("target needs s >= 0");
  const Index m = n + static_cast<Index>(std::floor(s * std::log(static_cast<double>(n))));
  if (static_cast<Index>(omega_star.size()) < n) {
    throw ValidationError(fmt::format("omega_star has {} symbols, needs at least n = {}", omega_star.size(), n));
  }
  if (refine_seed && static_cast<Index>(omega_star.size()) < m) {
    throw ValidationError(fmt::format("refinement needs omega_star of length >= {}", m));
  }
  if (!sft.admissible(omega_star)) {
    throw ValidationError(fmt::format("omega_star [{}] is not admissible", word_string(omega_star)));
  }
  CylinderTarget t;
  t.omega_star = std::move(omega_star);
  t.n = n;
  t.s = s;
  t.block_length = m;
  t.refined = refine_seed.has_value();

  Word w(t.omega_star.begin(), t.omega_star.begin() + n);
  std::vector<Word> all;
  auto extend = [&](auto&& self) -> void {
    if (static_cast<Index>(w.size()) == m) {
      all.push_back(w);
      return;
    }
    for (int a = 0; a < sft.iota(); ++a) {
      if (!sft.allowed(w.back(), a)) continue;
      w.push_back(a);
      self(self);
      w.pop_back();
    }
  };
  extend(extend);
  if (refine_seed) {
    const Word own(t.omega_star.begin(), t.omega_star.begin() + m);
    Rng rng(*refine_seed, 0, StreamTag::Refinement);
    for (auto& b : all) {
      if (b == own || rng.bernoulli(0.5)) t.blocks.push_back(std::move(b));
    }
  } else {
    t.blocks = std::move(all);
  }
  for (const Word& b : t.blocks) t.probability += cylinder_prob(measure, b);
  t.short_return_window = subshift_short_return_window(n, epsilon);
  t.short_return_clear =
      short_return_check(sft, std::span<const int>(t.omega_star.data(), static_cast<std::size_t>(n)),
                         t.short_return_window);
  return t;
}

CylinderTarget target_from_blocks(const MarkovGibbsMeasure& measure, std::vector<Word> blocks) {
  if (blocks.empty()) throw ValidationError("target needs at least one block");
  const std::size_t m = blocks.front().size();
  if (m == 0) throw ValidationError("blocks must be nonempty words");
  for (const Word& b : blocks) {
    if (b.size() != m) throw ValidationError("blocks must share one length");
    if (!measure.sft().admissible(b)) throw ValidationError(fmt::format("block [{}] is not admissible", word_string(b)));
  }
  std::sort(blocks.begin(), blocks.end());
  blocks.erase(std::unique(blocks.begin(), blocks.end()), blocks.end());
  CylinderTarget t;
  t.omega_star = blocks.front();
  t.n = static_cast<Index>(m);
  t.block_length = static_cast<Index>(m);
  t.blocks = std::move(blocks);
  for (const Word& b : t.blocks) t.probability += cylinder_prob(measure, b);
  t.explicit_blocks = true;
  return t;
}

Word sample_point(const MarkovGibbsMeasure& measure, Index length, std::uint64_t seed, std::uint64_t replicate) {
  if (length < 1) throw ValidationError("sample_point needs length >= 1");
  Rng rng(seed, replicate, StreamTag::PointSample);
  const int iota = measure.sft().iota();
  auto draw = [&](auto&& weight) {
    const double u = rng.uniform();
    double acc = 0;
    int last = 0;
    for (int a = 0; a < iota; ++a) {
      const double p = weight(a);
      if (!(p > 0)) continue;
      last = a;
      acc += p;
      if (u < acc) return a;
    }
    return last;
  };
  Word w;
  w.reserve(static_cast<std::size_t>(length));
  w.push_back(draw([&](int a) { return measure.pi()(a); }));
  while (static_cast<Index>(w.size()) < length) {
    const int prev = w.back();
    w.push_back(draw([&](int a) { return measure.Q()(prev, a); }));
  }
  return w;
}

CylinderTarget sample_clear_target(const MarkovGibbsMeasure& measure, Index n, double s, double epsilon,
                                   std::uint64_t seed, int max_tries) {
  const Index m = n + static_cast<Index>(std::floor(s * std::log(static_cast<double>(std::max<Index>(n, 1)))));
  for (int i = 0; i < max_tries; ++i) {
    CylinderTarget t = make_cylinder_target(measure, sample_point(measure, m, seed, static_cast<std::uint64_t>(i)), n,
                                            s, epsilon);
    if (t.short_return_clear) return t;
  }
  throw ValidationError(fmt::format("no short-return-clear omega_star found in {} draws", max_tries));
}

double aep_deviation(const MarkovGibbsMeasure& measure, std::span<const int> word) {
  if (word.empty()) throw ValidationError("aep_deviation needs a nonempty word");
  if (!measure.sft().admissible(word)) throw ValidationError(fmt::format("word [{}] is not admissible", word_string(word)));
  double logp = std::log(measure.pi()(word[0]));
  for (std::size_t i = 1; i < word.size(); ++i) logp += std::log(measure.Q()(word[i - 1], word[i]));
  return std::abs(logp / static_cast<double>(word.size()) + measure.entropy());
}

double exact_b_subshift(const MarkovGibbsMeasure& measure, const QSchedule& schedule, const CylinderTarget& target,
                        const Tuple& tuple) {
  if (target.blocks.empty()) return 0.0;
  std::vector<Index> times;
  for (Index l : tuple) {
    for (Index v : schedule.evaluate(l)) times.push_back(v);
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  if (times.empty()) return 1.0;

  const auto& blocks = target.blocks;
  const std::size_t W = blocks.size();
  const auto m = static_cast<Index>(target.block_length);
  const Eigen::MatrixXd& Q = measure.Q();
  std::vector<double> inner(W, 1.0);
  for (std::size_t i = 0; i < W; ++i) {
    for (Index k = 1; k < m; ++k) inner[i] *= Q(blocks[i][k - 1], blocks[i][k]);
  }
  std::vector<double> v(W);
  for (std::size_t i = 0; i < W; ++i) v[i] = measure.pi()(blocks[i][0]) * inner[i];
  std::vector<double> next(W);
  for (std::size_t step = 1; step < times.size(); ++step) {
    const Index d = times[step] - times[step - 1];
    std::fill(next.begin(), next.end(), 0.0);
    if (d >= m) {
      const Eigen::MatrixXd bridge = measure.chain().power(d - m + 1);
      for (std::size_t u = 0; u < W; ++u) {
        if (v[u] == 0) continue;
        for (std::size_t w = 0; w < W; ++w) next[w] += v[u] * bridge(blocks[u].back(), blocks[w][0]) * inner[w];
      }
    } else {
      for (std::size_t u = 0; u < W; ++u) {
        if (v[u] == 0) continue;
        for (std::size_t w = 0; w < W; ++w) {
          if (!std::equal(blocks[u].begin() + d, blocks[u].end(), blocks[w].begin())) continue;
          double f = 1.0;
          for (Index k = m - d; k < m; ++k) f *= Q(blocks[w][k - 1], blocks[w][k]);
          next[w] += v[u] * f;
        }
      }
    }
    v.swap(next);
  }
  double total = 0;
  for (double x : v) total += x;
  return total;
}

BlockLift lift_target(const MarkovGibbsMeasure& measure, const CylinderTarget& target) {
  WordLift lift = lift_chain(measure.chain(), static_cast<int>(target.block_length));
  std::vector<int> members;
  for (const Word& b : target.blocks) {
    const auto it = std::lower_bound(lift.words.begin(), lift.words.end(), b);
    if (it == lift.words.end() || *it != b) throw ValidationError("target block missing from the word lift");
    members.push_back(static_cast<int>(it - lift.words.begin()));
  }
  StateSet gamma = StateSet::of(static_cast<int>(lift.words.size()), members);
  return BlockLift{std::move(lift), std::move(gamma)};
}

Index target_count(const CylinderTarget& target, int ell, double lambda) {
  if (!(lambda > 0)) throw ValidationError("lambda must be > 0");
  if (!(target.probability > 0)) throw ValidationError("target has zero probability");
  const double N = std::round(lambda / std::pow(target.probability, ell));
  if (!(N < 4e18)) throw ResourceError("subshift_model", "N_n overflows");
  return std::max<Index>(1, static_cast<Index>(N));
}

CountDistribution exact_nonconventional_distribution(const MarkovGibbsMeasure& measure, const QSchedule& schedule,
                                                     const CylinderTarget& target, Index N,
                                                     std::uint64_t path_budget) {
  const BlockLift bl = lift_target(measure, target);
  return exact_sum_distribution(bl.lift.chain, schedule, bl.gamma, N, path_budget);
}

}  // namespace ncp
