#include "ncpoisson/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <Eigen/Core>
#include <fmt/format.h>
#include <openssl/evp.h>

#include "ncpoisson/bernoulli_model.hpp"
#include "ncpoisson/errors.hpp"
#include "ncpoisson/markov_model.hpp"
#include "ncpoisson/poisson_metrics.hpp"
#include "ncpoisson/subshift_model.hpp"

namespace ncp {

using nlohmann::json;

const std::vector<std::string>& table_names() {
  static const std::vector<std::string> names{"pmf_vs_poisson",      "tv_and_bounds",       "chen_stein_terms",
                                              "sevastyanov_report",  "mixing_certificates", "hitting_time_survival"};
  return names;
}

namespace {

constexpr const char* kVersion = "0.1.0";

struct Faults {
  std::vector<std::string> list;
  template <typename... Args>
  void add(fmt::format_string<Args...> f, Args&&... args) {
    list.push_back(fmt::format(f, std::forward<Args>(args)...));
  }
};

// Reads an optional field, recording a fault on a type mismatch.
template <typename T>
std::optional<T> field(const json& obj, const char* key, const std::string& where, Faults& faults) {
  if (!obj.is_object() || !obj.contains(key)) return std::nullopt;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    faults.add("{}.{}: wrong type ({})", where, key, obj.at(key).dump());
    return std::nullopt;
  }
}

template <typename T>
T required(const json& obj, const char* key, const std::string& where, Faults& faults, T fallback) {
  if (!obj.is_object() || !obj.contains(key)) {
    faults.add("{}.{}: missing", where, key);
    return fallback;
  }
  return field<T>(obj, key, where, faults).value_or(fallback);
}

Eigen::MatrixXd matrix_from(const json& rows) {
  const auto r = static_cast<Index>(rows.size());
  if (r == 0) throw ValidationError("matrix has no rows");
  const auto c = static_cast<Index>(rows.at(0).size());
  Eigen::MatrixXd M(r, c);
  for (Index i = 0; i < r; ++i) {
    if (static_cast<Index>(rows.at(static_cast<std::size_t>(i)).size()) != c) throw ValidationError("matrix rows differ in length");
    for (Index j = 0; j < c; ++j) M(i, j) = rows.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(j)).get<double>();
  }
  return M;
}

Eigen::VectorXd vector_from(const json& v) {
  Eigen::VectorXd out(static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Index>(i)) = v.at(i).get<double>();
  return out;
}

FiniteMarkovChain chain_from_spec(const json& spec) {
  const std::string family = spec.at("family").get<std::string>();
  if (family == "two_state") {
    std::optional<Eigen::VectorXd> nu;
    if (spec.contains("nu")) nu = vector_from(spec.at("nu"));
    return FiniteMarkovChain::two_state(spec.at("a").get<double>(), spec.at("b").get<double>(), nu);
  }
  if (family == "random_stochastic") {
    return FiniteMarkovChain::random_stochastic(spec.at("seed").get<std::uint64_t>(), spec.at("M").get<int>(),
                                                spec.value("min_entry", 0.0));
  }
  if (family == "matrix") {
    const Eigen::MatrixXd P = matrix_from(spec.at("P"));
    const Eigen::VectorXd nu =
        spec.contains("nu") ? vector_from(spec.at("nu")) : Eigen::VectorXd::Constant(P.rows(), 1.0 / static_cast<double>(P.rows()));
    return FiniteMarkovChain(P, nu);
  }
  throw ValidationError(fmt::format("unknown chain family '{}'", family));
}

MarkovGibbsMeasure measure_from_spec(const json& spec) {
  if (!spec.contains("sft")) throw ValidationError("sft: missing");
  const json& sft_spec = spec.at("sft");
  std::optional<SubshiftSFT> sft;
  if (sft_spec.contains("full_shift")) {
    sft = SubshiftSFT::full_shift(sft_spec.at("full_shift").get<int>());
  } else if (sft_spec.value("golden_mean", false)) {
    sft = SubshiftSFT::golden_mean();
  } else if (sft_spec.contains("adjacency")) {
    sft = SubshiftSFT(matrix_from(sft_spec.at("adjacency")).cast<int>());
  } else {
    throw ValidationError("sft needs full_shift, golden_mean or adjacency");
  }
  if (spec.contains("Q")) return MarkovGibbsMeasure(*sft, matrix_from(spec.at("Q")));
  return MarkovGibbsMeasure::uniform_rows(*sft);
}

struct TargetSpec {
  std::optional<Word> omega_star;
  std::optional<std::uint64_t> sample_seed;
  double s = 0;
  double epsilon = kDefaultShortReturnEpsilon;
  std::optional<std::uint64_t> refine_seed;
  bool require_clear = true;
};

TargetSpec target_spec(const json& spec) {
  TargetSpec t;
  const json target = spec.value("target", json::object());
  const json& w = target.at("omega_star");
  if (w.is_string()) {
    const std::string s = w.get<std::string>();
    if (s.rfind("sample:", 0) != 0) throw ValidationError("omega_star string must be 'sample:<seed>'");
    t.sample_seed = std::stoull(s.substr(7));
  } else {
    t.omega_star = w.get<Word>();
  }
  t.s = target.value("s", 0.0);
  t.epsilon = target.value("epsilon", kDefaultShortReturnEpsilon);
  if (target.contains("refine_seed")) t.refine_seed = target.at("refine_seed").get<std::uint64_t>();
  t.require_clear = target.value("require_clear", true);
  return t;
}

CylinderTarget build_target(const MarkovGibbsMeasure& measure, const TargetSpec& spec, Index n) {
  if (spec.sample_seed) {
    CylinderTarget t = sample_clear_target(measure, n, spec.s, spec.epsilon, *spec.sample_seed);
    if (spec.refine_seed) t = make_cylinder_target(measure, t.omega_star, n, spec.s, spec.epsilon, spec.refine_seed);
    return t;
  }
  return make_cylinder_target(measure, *spec.omega_star, n, spec.s, spec.epsilon, spec.refine_seed);
}

// Model state shared by validation and the run.
struct Prepared {
  std::optional<QSchedule> schedule;
  std::optional<FiniteMarkovChain> chain;
  std::optional<TargetSetSequence> targets;
  std::optional<MarkovGibbsMeasure> measure;
  std::map<Index, CylinderTarget> cylinders;
};

Prepared prepare(const ExperimentConfig& c, Faults& faults) {
  Prepared p;
  try {
    p.schedule = schedule_from_spec(c.schedule_spec);
  } catch (const std::exception& e) {
    faults.add("schedule: {}", e.what());
    return p;
  }
  const int ell = p.schedule->ell();
  try {
    if (c.model == ModelKind::Markov) {
      if (!c.model_spec.contains("chain")) throw ValidationError("chain: missing");
      p.chain = chain_from_spec(c.model_spec.at("chain"));
      const json target = c.model_spec.value("target", json::object());
      p.targets = choose_target_sets(*p.chain, ell, c.lambda, c.n_grid, target.value("tolerance", 0.05),
                                     target.value("k_max", 8));
    } else if (c.model == ModelKind::Subshift) {
      p.measure = measure_from_spec(c.model_spec);
      const TargetSpec ts = target_spec(c.model_spec);
      for (Index n : c.n_grid) {
        CylinderTarget t = build_target(*p.measure, ts, n);
        if (!t.short_return_clear && ts.require_clear) {
          faults.add("model.target: omega_star fails short_return_check at n = {} (a(n) = {}): the word returns to its "
                     "own cylinder within a(n) shifts",
                     n, t.short_return_window);
        }
        p.cylinders.emplace(n, std::move(t));
      }
    }
  } catch (const json::exception& e) {
    faults.add("model: {}", e.what());
  } catch (const std::exception& e) {
    faults.add("model: {}", e.what());
  }
  return p;
}

std::string num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return fmt::format("{}", x);  // shortest round-trip form
}
std::string num(std::optional<double> x) { return x ? num(*x) : std::string(); }
template <typename I>
  requires std::is_integral_v<I>
std::string num(I x) { return std::to_string(x); }
std::string flag(bool b) { return b ? "true" : "false"; }

// Runs draw(worker, replicate) for every replicate; workers are copies of the prototype.
template <typename Worker, typename Draw>
auto replicate(std::uint64_t count, unsigned threads, const Worker& prototype, Draw draw) {
  using Result = decltype(draw(std::declval<Worker&>(), std::uint64_t{0}));
  std::vector<Result> out(count);
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::uint64_t>(count, 1))));
  if (threads == 1) {
    Worker w = prototype;
    for (std::uint64_t i = 0; i < count; ++i) out[i] = draw(w, i);
    return out;
  }
  std::vector<std::thread> pool;
  const std::uint64_t chunk = (count + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      Worker w = prototype;
      const std::uint64_t lo = t * chunk, hi = std::min(count, lo + chunk);
      for (std::uint64_t i = lo; i < hi; ++i) out[i] = draw(w, i);
    });
  }
  for (auto& th : pool) th.join();
  return out;
}

// Stream seed for grid point n, so different n never share draws.
std::uint64_t stream_seed(std::uint64_t seed, Index n, StreamTag tag) {
  return derive_seed(seed, static_cast<std::uint64_t>(n), tag);
}

struct PointResult {
  Index n = 0;
  double lambda_n = 0;
  std::optional<double> p_n;
  std::optional<Index> N;
  std::optional<CountDistribution> exact;
  std::optional<CountDistribution> empirical;
  std::optional<BernoulliBoundReport> bernoulli;
  std::optional<ChenSteinTerms> chen_stein;
  std::vector<HittingSample> hitting;
};

PointResult run_point(const ExperimentConfig& c, const Prepared& p, Index n, bool want_hitting) {
  PointResult r;
  r.n = n;
  const QSchedule& schedule = *p.schedule;
  const bool want_tv = std::count(c.outputs.begin(), c.outputs.end(), "tv_and_bounds") > 0;
  const bool want_cs = std::count(c.outputs.begin(), c.outputs.end(), "chen_stein_terms") > 0;
  if (c.model == ModelKind::Bernoulli) {
    const BernoulliScheme scheme = BernoulliScheme::from_lambda(schedule, n, c.lambda);
    r.lambda_n = scheme.lambda_n();
    r.p_n = scheme.p();
    if (c.exact) {
      r.exact = exact_distribution(scheme, c.budgets.component_bits);
      if (want_tv) r.bernoulli = verify_bernoulli_bound(scheme, c.budgets.component_bits);
    }
    if (want_cs) r.chen_stein = chen_stein_terms(scheme);
    if (c.replicates > 0) {
      const std::uint64_t s = stream_seed(c.seed, n, StreamTag::BernoulliSum);
      auto draws = replicate(c.replicates, c.threads, BernoulliSampler(scheme), [&](BernoulliSampler& w, std::uint64_t i) {
        Rng rng(s, i, StreamTag::BernoulliSum);
        return w.draw(rng);
      });
      r.empirical = empirical_distribution(draws);
    }
  } else if (c.model == ModelKind::Markov) {
    const FiniteMarkovChain& chain = p.targets->chain(*p.chain);
    const StateSet& gamma = p.targets->sets.at(n);
    r.lambda_n = p.targets->lambda_n.at(n);
    if (c.exact) r.exact = exact_sum_distribution(chain, schedule, gamma, n, c.budgets.paths);
    if (c.replicates > 0) {
      const std::uint64_t s = stream_seed(c.seed, n, StreamTag::MarkovPath);
      auto draws = replicate(c.replicates, c.threads, MarkovPathSampler(chain, schedule, gamma, n),
                             [&](MarkovPathSampler& w, std::uint64_t i) {
                               Rng rng(s, i, StreamTag::MarkovPath);
                               return w.draw(rng);
                             });
      r.empirical = empirical_distribution(draws);
    }
  } else {
    const CylinderTarget& target = p.cylinders.at(n);
    const Index N = target_count(target, schedule.ell(), c.lambda);
    r.N = N;
    r.lambda_n = static_cast<double>(N) * std::pow(target.probability, schedule.ell());
    if (c.exact) r.exact = exact_nonconventional_distribution(*p.measure, schedule, target, N, c.budgets.paths);
    if (c.replicates > 0) {
      const std::uint64_t s = stream_seed(c.seed, n, StreamTag::SubshiftPath);
      NonconventionalSimulator sim(*p.measure, schedule, target, c.lambda, c.budgets.sampler_memory);
      auto draws = replicate(c.replicates, c.threads, sim, [&](NonconventionalSimulator& w, std::uint64_t i) {
        Rng rng(s, i, StreamTag::SubshiftPath);
        return w.draw(rng);
      });
      r.empirical = empirical_distribution(draws);
      if (want_hitting) {
        const std::uint64_t hs = stream_seed(c.seed, n, StreamTag::HittingTime);
        HittingTimeSimulator hit(*p.measure, schedule, target, c.hitting.cap, c.budgets.sampler_memory);
        r.hitting = replicate(c.replicates, c.threads, hit, [&](HittingTimeSimulator& w, std::uint64_t i) {
          Rng rng(hs, i, StreamTag::HittingTime);
          return w.draw(rng);
        });
      }
    }
  }
  return r;
}

Table pmf_table(const std::vector<PointResult>& points, double lambda) {
  Table t{"pmf_vs_poisson", {"n", "k", "exact", "empirical", "ci_3sigma", "poisson_lambda", "poisson_lambda_n"}, {}};
  for (const PointResult& r : points) {
    const PoissonLaw target(lambda), realized(r.lambda_n);
    std::size_t kmax = 0;
    if (r.exact) {
      for (std::size_t k = 0; k < r.exact->pmf.size(); ++k) {
        if (r.exact->pmf[k] > 1e-15) kmax = std::max(kmax, k);
      }
    }
    if (r.empirical) kmax = std::max(kmax, r.empirical->pmf.size() - 1);
    for (std::size_t k = 0;; ++k) {
      if (k > kmax && poisson_pmf(target, k) < 1e-12 && poisson_pmf(realized, k) < 1e-12) break;
      std::vector<std::string> row{num(r.n), num(k)};
      row.push_back(r.exact ? num(r.exact->at(k)) : "");
      if (r.empirical) {
        const double sz = static_cast<double>(*r.empirical->sample_size);
        const double ref = r.exact ? r.exact->at(k) : r.empirical->at(k);
        row.push_back(num(r.empirical->at(k)));
        row.push_back(num(3.0 * std::sqrt(ref * (1 - ref) / sz)));
      } else {
        row.insert(row.end(), {"", ""});
      }
      row.push_back(num(poisson_pmf(target, k)));
      row.push_back(num(poisson_pmf(realized, k)));
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

Table tv_table(const std::vector<PointResult>& points, const ExperimentConfig& c, int ell) {
  Table t{"tv_and_bounds",
          {"n", "ell", "p_n", "N", "lambda", "lambda_n", "tv_exact", "tv_exact_realized", "tv_empirical_realized",
           "bound", "holds"},
          {}};
  for (const PointResult& r : points) {
    const CountDistribution pois = poisson_distribution(PoissonLaw(c.lambda));
    const CountDistribution pois_n = poisson_distribution(PoissonLaw(r.lambda_n));
    std::vector<std::string> row{num(r.n), num(ell), num(r.p_n), r.N ? num(*r.N) : "", num(c.lambda), num(r.lambda_n)};
    row.push_back(r.exact ? num(tv_distance(*r.exact, pois)) : "");
    row.push_back(r.exact ? num(tv_distance(*r.exact, pois_n)) : "");
    row.push_back(r.empirical ? num(tv_distance(*r.empirical, pois_n)) : "");
    row.push_back(r.bernoulli ? num(r.bernoulli->bound) : "");
    row.push_back(r.bernoulli ? flag(r.bernoulli->holds) : "");
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table chen_stein_table(const std::vector<PointResult>& points) {
  Table t{"chen_stein_terms",
          {"n", "I1", "I2", "I3", "bound", "I1_closed", "I2_envelope", "I3_envelope", "intersecting_pairs", "I1_matches",
           "envelopes_hold"},
          {}};
  for (const PointResult& r : points) {
    const ChenSteinTerms& cs = *r.chen_stein;
    t.rows.push_back({num(r.n), num(cs.I1), num(cs.I2), num(cs.I3), num(cs.bound), num(cs.I1_closed),
                      num(cs.I2_envelope), num(cs.I3_envelope), num(cs.intersecting_pairs), flag(cs.I1_matches()),
                      flag(cs.envelopes_hold())});
  }
  return t;
}

Table hitting_table(const std::vector<PointResult>& points, const ExperimentConfig& c) {
  Table t{"hitting_time_survival", {"n", "lambda", "survival", "expected", "ci_3sigma", "within_ci", "censored"}, {}};
  for (const PointResult& r : points) {
    const auto R = static_cast<double>(r.hitting.size());
    std::uint64_t censored = 0;
    for (const auto& h : r.hitting) censored += h.censored ? 1 : 0;
    for (double lam : c.hitting.lambdas) {
      std::uint64_t above = 0;
      for (const auto& h : r.hitting) above += (h.censored || h.scaled > lam) ? 1 : 0;
      const double surv = static_cast<double>(above) / R;
      const double expected = std::exp(-lam);
      const double ci = 3.0 * std::sqrt(expected * (1 - expected) / R);
      t.rows.push_back({num(r.n), num(lam), num(surv), num(expected), num(ci), flag(std::abs(surv - expected) <= ci),
                        num(censored)});
    }
  }
  return t;
}

Table mixing_table(const ExperimentConfig& c, const Prepared& p) {
  Table t{"mixing_certificates", {"model", "quantity", "value"}, {}};
  auto add = [&](const char* model, const std::string& q, const std::string& v) { t.rows.push_back({model, q, v}); };
  if (c.model == ModelKind::Markov) {
    const FiniteMarkovChain& chain = *p.chain;
    add("markov", "states", num(chain.states()));
    add("markov", "doeblin_n0", chain.certificate() ? num(chain.certificate()->n0) : "");
    add("markov", "doeblin_C", chain.certificate() ? num(chain.certificate()->C) : "");
    const MixingReport m = mixing_rate(chain, c.mixing.horizon);
    add("markov", "mixing_horizon", num(c.mixing.horizon));
    add("markov", "mixing_C1", num(m.C1));
    add("markov", "mixing_beta", num(m.beta));
    add("markov", "eventually_decreasing", flag(m.eventually_decreasing));
    add("markov", "word_lift_k", num(p.targets->k));
  } else if (c.model == ModelKind::Subshift) {
    const MarkovGibbsMeasure& mu = *p.measure;
    add("subshift", "entropy", num(mu.entropy()));
    add("subshift", "primitivity_power", num(mu.sft().wp()));
    const GibbsReport g = gibbs_constant(mu, c.mixing.gibbs_n_max);
    add("subshift", "gibbs_C", num(g.C));
    add("subshift", "gibbs_bounded", flag(g.bounded));
    const PsiMixingReport psi = psi_mixing_check(mu, c.mixing.l_max, c.mixing.gap_max);
    add("subshift", "psi_C", num(psi.C));
    add("subshift", "psi_beta", num(psi.beta));
    add("subshift", "spectral_rate", num(psi.spectral_rate));
    add("subshift", "beta_matches_spectrum", flag(psi.beta_matches_spectrum));
    add("subshift", "psi_triples", num(psi.triples));
    add("subshift", "psi_violations", num(psi.violations));
  }
  return t;
}

Table sevastyanov_table(const ExperimentConfig& c, const Prepared& p) {
  Table t{"sevastyanov_report", {"n", "r", "condition", "value", "envelope", "margin"}, {}};
  const QSchedule& schedule = *p.schedule;
  OracleFactory factory;
  if (c.model == ModelKind::Bernoulli) {
    factory = [&](Index n) { return std::make_unique<BernoulliOracle>(BernoulliScheme::from_lambda(schedule, n, c.lambda)); };
  } else if (c.model == ModelKind::Markov) {
    factory = [&](Index n) {
      return std::make_unique<MarkovOracle>(p.targets->chain(*p.chain), schedule, p.targets->sets.at(n), n, c.lambda);
    };
  } else {
    factory = [&](Index n) {
      const CylinderTarget& target = p.cylinders.at(n);
      return std::make_unique<SubshiftOracle>(*p.measure, schedule, target, target_count(target, schedule.ell(), c.lambda),
                                              c.lambda);
    };
  }
  std::string rare = c.sevastyanov.rare;
  if (rare == "auto") rare = c.model == ModelKind::Bernoulli ? "independent" : c.model == ModelKind::Markov ? "markov" : "subshift";
  RareParamsFn params;
  if (rare == "independent") {
    params = [](Index) { return independent_rare_params(); };
  } else if (rare == "markov") {
    params = [&](Index n) { return markov_rare_params(schedule, n); };
  } else if (rare == "subshift") {
    const double eps = c.model == ModelKind::Subshift ? target_spec(c.model_spec).epsilon : kDefaultShortReturnEpsilon;
    params = [&schedule, eps](Index n) { return subshift_rare_params(n, eps, *schedule.gap_params()); };
  } else {
    params = [&](Index) { return c.sevastyanov.explicit_params; };
  }
  ConditionOptions options = c.sevastyanov.options;
  options.seed = c.seed;
  options.budget = c.budgets.enumeration;
  for (int r : c.sevastyanov.orders) {
    const ConditionReport report = check_conditions(factory, r, c.n_grid, params, options);
    for (const ConditionCsvRow& row : condition_rows(report, c.sevastyanov.tolerances)) {
      t.rows.push_back({num(row.n), num(row.r), row.condition, num(row.value), num(row.envelope), num(row.margin)});
    }
    for (const ConditionRow& row : report.rows) {
      t.rows.push_back({num(row.n), num(r), "coverage", num(row.coverage), "1", num(row.coverage - 1.0)});
    }
    const Verdict v = poisson_limit_verdict(report, c.sevastyanov.tolerances);
    const std::string last = num(report.rows.back().n);
    const double worst = std::min({v.max_b_margin, v.sum_b_margin, v.rare_margin, v.ratio_margin});
    t.rows.push_back({last, num(r), "verdict", v.pass ? "1" : "0", "1", num(worst)});
    t.rows.push_back({last, num(r), "rare_sums_decreasing", report.rare_sums_decreasing ? "1" : "0", "1", ""});
    t.rows.push_back({last, num(r), "ratio_shrink_factor", num(report.ratio_shrink_factor), "2",
                      num(report.ratio_shrink_factor - 2.0)});
  }
  return t;
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  std::string out;
  for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", digest[i]);
  return out;
}

}  // namespace

QSchedule schedule_from_spec(const json& spec) {
  const std::string family = spec.at("family").get<std::string>();
  const int ell = spec.at("ell").get<int>();
  if (family == "linear") return QSchedule::linear(ell, spec.value("stride", Index{1}));
  if (family == "arithmetic_gap") return QSchedule::arithmetic_gap(ell, spec.at("c").get<double>(), spec.at("gamma").get<double>());
  if (family == "polynomial") return QSchedule::polynomial(ell, spec.at("degree").get<int>());
  if (family == "exponential_gap") return QSchedule::exponential_gap(ell);
  if (family == "table") {
    std::optional<GapParams> gap;
    if (spec.contains("gap")) gap = GapParams{spec.at("gap").at("c").get<double>(), spec.at("gap").at("gamma").get<double>()};
    QSchedule s = QSchedule::table(spec.at("rows").get<std::vector<std::vector<Index>>>(), gap);
    if (s.ell() != ell) throw ValidationError(fmt::format("table rows have {} columns, ell = {}", s.ell(), ell));
    return s;
  }
  throw ValidationError(fmt::format("unknown schedule family '{}'", family));
}

ExperimentConfig parse_config(const json& doc) {
  Faults faults;
  ExperimentConfig c;
  c.raw = doc;
  if (!doc.is_object()) throw ConfigError({"config: top level must be an object"});

  static const std::set<std::string> known{"model", "schedule", "lambda", "n_grid", "replicates", "seed", "exact",
                                           "threads", "outputs", "budgets", "sevastyanov", "hitting", "mixing"};
  for (const auto& [key, value] : doc.items()) {
    if (!known.count(key)) faults.add("config: unknown key '{}'", key);
  }

  c.model_spec = doc.value("model", json::object());
  const std::string type = required<std::string>(c.model_spec, "type", "model", faults, "");
  if (type == "bernoulli") {
    c.model = ModelKind::Bernoulli;
  } else if (type == "markov") {
    c.model = ModelKind::Markov;
  } else if (type == "subshift") {
    c.model = ModelKind::Subshift;
  } else if (!type.empty()) {
    faults.add("model.type: '{}' is not one of bernoulli, markov, subshift", type);
  }
  if (!doc.contains("schedule")) faults.add("schedule: missing");
  c.schedule_spec = doc.value("schedule", json::object());

  c.lambda = required<double>(doc, "lambda", "config", faults, 1.0);
  if (!(c.lambda > 0)) faults.add("config.lambda: must be > 0, got {}", c.lambda);
  c.n_grid = required<std::vector<Index>>(doc, "n_grid", "config", faults, {});
  if (doc.contains("n_grid") && c.n_grid.empty()) faults.add("config.n_grid: must be nonempty");
  for (Index n : c.n_grid) {
    if (n < 1) faults.add("config.n_grid: entry {} must be >= 1", n);
  }
  if (const auto reps = field<std::int64_t>(doc, "replicates", "config", faults)) {
    if (*reps < 0) {
      faults.add("config.replicates: must be >= 0");
    } else {
      c.replicates = static_cast<std::uint64_t>(*reps);
    }
  } else if (!doc.contains("replicates")) {
    faults.add("config.replicates: missing");
  }
  if (!doc.contains("seed")) {
    faults.add("config.seed: missing (runs are seeded explicitly)");
  } else {
    c.seed = field<std::uint64_t>(doc, "seed", "config", faults).value_or(0);
  }
  c.exact = field<bool>(doc, "exact", "config", faults).value_or(true);
  c.threads = field<unsigned>(doc, "threads", "config", faults).value_or(1);
  if (c.threads == 0) faults.add("config.threads: must be >= 1");

  c.outputs = required<std::vector<std::string>>(doc, "outputs", "config", faults, {});
  if (doc.contains("outputs") && c.outputs.empty()) faults.add("config.outputs: must name at least one table");
  for (const auto& name : c.outputs) {
    if (std::find(table_names().begin(), table_names().end(), name) == table_names().end()) {
      faults.add("config.outputs: unknown table '{}'", name);
    }
  }
  auto wants = [&](const char* name) { return std::find(c.outputs.begin(), c.outputs.end(), name) != c.outputs.end(); };
  if (wants("chen_stein_terms") && c.model != ModelKind::Bernoulli) {
    faults.add("config.outputs: chen_stein_terms needs the bernoulli model");
  }
  if (wants("hitting_time_survival") && c.model != ModelKind::Subshift) {
    faults.add("config.outputs: hitting_time_survival needs the subshift model");
  }
  if (wants("hitting_time_survival") && c.replicates == 0) {
    faults.add("config.outputs: hitting_time_survival needs replicates > 0");
  }
  if (wants("mixing_certificates") && c.model == ModelKind::Bernoulli) {
    faults.add("config.outputs: mixing_certificates needs the markov or subshift model");
  }
  if (wants("pmf_vs_poisson") && !c.exact && c.replicates == 0) {
    faults.add("config.outputs: pmf_vs_poisson needs exact = true or replicates > 0");
  }

  const json budgets = doc.value("budgets", json::object());
  c.budgets.enumeration = field<std::uint64_t>(budgets, "enumeration", "budgets", faults).value_or(c.budgets.enumeration);
  c.budgets.paths = field<std::uint64_t>(budgets, "paths", "budgets", faults).value_or(c.budgets.paths);
  c.budgets.component_bits = field<int>(budgets, "component_bits", "budgets", faults).value_or(c.budgets.component_bits);
  c.budgets.sampler_memory = field<std::uint64_t>(budgets, "sampler_memory", "budgets", faults).value_or(c.budgets.sampler_memory);
  if (c.budgets.enumeration == 0) faults.add("budgets.enumeration: must be positive");
  if (c.budgets.paths == 0) faults.add("budgets.paths: must be positive");
  if (c.budgets.component_bits <= 0) faults.add("budgets.component_bits: must be positive");
  if (c.budgets.sampler_memory == 0) faults.add("budgets.sampler_memory: must be positive");

  const json sev = doc.value("sevastyanov", json::object());
  c.sevastyanov.orders = field<std::vector<int>>(sev, "r", "sevastyanov", faults).value_or(c.sevastyanov.orders);
  for (int r : c.sevastyanov.orders) {
    if (r < 1) faults.add("sevastyanov.r: order {} must be >= 1", r);
  }
  if (sev.contains("rare") && sev.at("rare").is_object()) {
    c.sevastyanov.rare = "explicit";
    c.sevastyanov.explicit_params.threshold = sev.at("rare").value("threshold", 0.0);
    c.sevastyanov.explicit_params.cutoff = sev.at("rare").value("cutoff", 0.0);
  } else {
    c.sevastyanov.rare = field<std::string>(sev, "rare", "sevastyanov", faults).value_or("auto");
    static const std::set<std::string> rare_kinds{"auto", "independent", "markov", "subshift"};
    if (!rare_kinds.count(c.sevastyanov.rare)) faults.add("sevastyanov.rare: unknown '{}'", c.sevastyanov.rare);
  }
  c.sevastyanov.options.samples = field<std::uint64_t>(sev, "samples", "sevastyanov", faults).value_or(c.sevastyanov.options.samples);
  c.sevastyanov.options.boundary_window =
      field<Index>(sev, "boundary_window", "sevastyanov", faults).value_or(c.sevastyanov.options.boundary_window);
  c.sevastyanov.options.trend_slack =
      field<double>(sev, "trend_slack", "sevastyanov", faults).value_or(c.sevastyanov.options.trend_slack);
  const json tol = sev.value("tolerances", json::object());
  auto& tv = c.sevastyanov.tolerances;
  tv.max_b = field<double>(tol, "max_b", "sevastyanov.tolerances", faults).value_or(tv.max_b);
  tv.sum_b = field<double>(tol, "sum_b", "sevastyanov.tolerances", faults).value_or(tv.sum_b);
  tv.rare = field<double>(tol, "rare", "sevastyanov.tolerances", faults).value_or(tv.rare);
  tv.ratio = field<double>(tol, "ratio", "sevastyanov.tolerances", faults).value_or(tv.ratio);

  const json hit = doc.value("hitting", json::object());
  c.hitting.lambdas = field<std::vector<double>>(hit, "lambdas", "hitting", faults).value_or(c.hitting.lambdas);
  c.hitting.cap = field<double>(hit, "cap", "hitting", faults).value_or(c.hitting.cap);
  for (double l : c.hitting.lambdas) {
    if (!(l > 0) || !(l < c.hitting.cap)) faults.add("hitting.lambdas: {} must lie in (0, cap = {})", l, c.hitting.cap);
  }

  const json mix = doc.value("mixing", json::object());
  c.mixing.horizon = field<int>(mix, "horizon", "mixing", faults).value_or(c.mixing.horizon);
  c.mixing.l_max = field<int>(mix, "l_max", "mixing", faults).value_or(c.mixing.l_max);
  c.mixing.gap_max = field<int>(mix, "gap_max", "mixing", faults).value_or(c.mixing.gap_max);
  c.mixing.gibbs_n_max = field<int>(mix, "gibbs_n_max", "mixing", faults).value_or(c.mixing.gibbs_n_max);
  if (c.mixing.horizon < 1 || c.mixing.l_max < 1 || c.mixing.gap_max < 1 || c.mixing.gibbs_n_max < 1) {
    faults.add("mixing: horizon, l_max, gap_max must be >= 1 and gibbs_n_max >= 1");
  }

  // The model can be built whenever the fields it reads are sound, so its faults are listed with the rest.
  const bool grid_ok = !c.n_grid.empty() && std::all_of(c.n_grid.begin(), c.n_grid.end(), [](Index n) { return n >= 1; });
  const bool type_ok = type == "bernoulli" || type == "markov" || type == "subshift";
  if (type_ok && grid_ok && c.lambda > 0 && doc.contains("schedule")) {
    const Prepared p = prepare(c, faults);
    if (p.schedule && (c.sevastyanov.rare == "subshift" || (c.sevastyanov.rare == "auto" && c.model == ModelKind::Subshift)) &&
        wants("sevastyanov_report") && !p.schedule->gap_params()) {
      faults.add("sevastyanov.rare: subshift rare sets need a schedule with gap parameters");
    }
  }
  if (!faults.list.empty()) throw ConfigError(std::move(faults.list));
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({fmt::format("config: cannot read '{}'", path.string())});
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError({fmt::format("config: {}", e.what())});
  }
  return parse_config(doc);
}

std::vector<Table> run_experiment(const ExperimentConfig& c) {
  Faults faults;
  const Prepared p = prepare(c, faults);
  if (!faults.list.empty()) throw ConfigError(std::move(faults.list));
  auto wants = [&](const char* name) { return std::find(c.outputs.begin(), c.outputs.end(), name) != c.outputs.end(); };

  std::vector<PointResult> points;
  if (wants("pmf_vs_poisson") || wants("tv_and_bounds") || wants("chen_stein_terms") || wants("hitting_time_survival")) {
    for (Index n : c.n_grid) points.push_back(run_point(c, p, n, wants("hitting_time_survival")));
  }
  std::vector<Table> tables;
  for (const std::string& name : c.outputs) {
    if (name == "pmf_vs_poisson") tables.push_back(pmf_table(points, c.lambda));
    if (name == "tv_and_bounds") tables.push_back(tv_table(points, c, p.schedule->ell()));
    if (name == "chen_stein_terms") tables.push_back(chen_stein_table(points));
    if (name == "sevastyanov_report") tables.push_back(sevastyanov_table(c, p));
    if (name == "mixing_certificates") tables.push_back(mixing_table(c, p));
    if (name == "hitting_time_survival") tables.push_back(hitting_table(points, c));
  }
  return tables;
}

std::string to_csv(const Table& table) {
  auto field_text = [](const std::string& f) {
    if (f.find_first_of(",\"\r\n") == std::string::npos) return f;
    std::string q = "\"";
    for (char ch : f) {
      if (ch == '"') q += '"';
      q += ch;
    }
    return q + '"';
  };
  std::string out;
  auto line = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out += ',';
      out += field_text(fields[i]);
    }
    out += "\r\n";
  };
  line(table.columns);
  for (const auto& row : table.rows) line(row);
  return out;
}

std::string config_hash(const ExperimentConfig& config) { return sha256_hex(config.raw.dump()); }

std::vector<std::filesystem::path> write_outputs(const ExperimentConfig& config, const std::vector<Table>& tables,
                                                 const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  json listing = json::array();
  for (const Table& t : tables) {
    const std::string csv = to_csv(t);
    const auto path = out_dir / (t.name + ".csv");
    std::ofstream(path, std::ios::binary) << csv;
    written.push_back(path);
    listing.push_back({{"name", t.name}, {"file", t.name + ".csv"}, {"rows", t.rows.size()}, {"sha256", sha256_hex(csv)}});
  }
  const json manifest{{"config_hash", config_hash(config)},
                      {"seed", config.seed},
                      {"tables", listing},
                      {"versions",
                       {{"ncpoisson", kVersion},
                        {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
                        {"fmt", std::to_string(FMT_VERSION)},
                        {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                                                      NLOHMANN_JSON_VERSION_PATCH)}}}};
  const auto mpath = out_dir / "manifest.json";
  std::ofstream(mpath, std::ios::binary) << manifest.dump(2) << '\n';
  written.push_back(mpath);
  return written;
}

}  // namespace ncp
