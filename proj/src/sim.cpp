#include "lago/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "lago/distributions.hpp"
#include "lago/errors.hpp"

namespace lago {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Replicate {
  bool ok = false;
  std::string error;
  Vec beta, se;
  bool reject = false;
  Vec xopt1, xopt_final;
  double propt1 = kNaN, propt_final = kNaN;
  int regime = -1;
};

FittedModel fit_any(const ScenarioSpec& spec, const std::vector<StageRecord>& stages) {
  return spec.outcome == OutcomeKind::binary ? fit_binary(stages) : fit_continuous(stages, spec.link);
}

Vec standard_errors(const ScenarioSpec& spec, const FittedModel& m, const std::vector<StageRecord>& stages) {
  Mat cov = m.covariance;
  if (spec.se == SeKind::sandwich && spec.outcome == OutcomeKind::binary)
    cov = logistic_sandwich_covariance(pooled_centers(stages), m.beta);
  return cov.diagonal().cwiseMax(0.0).cwiseSqrt();
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? kNaN : s / v.size();
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return kNaN;
  double m = mean_of(v), s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / (v.size() - 1));
}

double rel_bias(double mean, double truth) {
  if (truth == 0.0) return kNaN;
  return std::fabs(100.0 * (mean - truth) / truth);
}

QuantileSummary summarize_q(const std::vector<double>& v) {
  QuantileSummary q;
  if (v.empty()) return {kNaN, kNaN, kNaN};
  q.mean = mean_of(v);
  q.q025 = quantile(v, 0.025);
  q.q975 = quantile(v, 0.975);
  return q;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

void ScenarioSpec::validate() const {
  bounds.validate();
  const Eigen::Index P = bounds.size();
  if (true_beta.size() != P + 1) throw ValidationError("scenario: true_beta must have P+1 entries");
  if (cost.components() != P) throw ValidationError("scenario: cost dimension mismatch");
  if (replicates < 1) throw ValidationError("scenario: replicates must be >= 1");
  if (later.empty()) throw ValidationError("scenario: need at least two stages");
  bool n1 = false, n0 = false;
  for (const auto& c : stage1) {
    if (c.n < 1) throw ValidationError("scenario: center size must be positive");
    if (c.a.size() != P) throw ValidationError("scenario: stage-1 package length mismatch");
    if (c.arm == Arm::control && !c.a.isZero()) throw ValidationError("scenario: control packages must be zero");
    (c.arm == Arm::intervention ? n1 : n0) = true;
  }
  if (!n1 || !n0) throw ValidationError("scenario: stage 1 needs both arms");
  for (const auto& st : later) {
    bool m1 = false, m0 = false;
    for (const auto& c : st) {
      if (c.n < 1) throw ValidationError("scenario: center size must be positive");
      (c.arm == Arm::intervention ? m1 : m0) = true;
    }
    if (!m1 || !m0) throw ValidationError("scenario: every stage needs both arms");
  }
  if (outcome == OutcomeKind::continuous && !(sigma > 0)) throw ValidationError("scenario: sigma must be positive");
  goals.validate(outcome == OutcomeKind::binary);
}

std::vector<std::vector<PlannedCenter>> ScenarioSpec::planned() const {
  std::vector<std::vector<PlannedCenter>> out;
  std::vector<PlannedCenter> first;
  for (const auto& c : stage1) first.push_back({c.arm, c.n});
  out.push_back(first);
  out.insert(out.end(), later.begin(), later.end());
  return out;
}

Vec ScenarioSpec::stage1_centroid() const {
  Vec s = Vec::Zero(bounds.size());
  int k = 0;
  for (const auto& c : stage1)
    if (c.arm == Arm::intervention) s += c.a, ++k;
  return k ? Vec(s / k) : s;
}

std::mt19937_64 replicate_engine(std::uint64_t seed, std::uint64_t replicate) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(replicate), static_cast<std::uint32_t>(replicate >> 32)};
  return std::mt19937_64(seq);
}

int thread_count() {
  if (const char* env = std::getenv("LAGO_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(int n, int threads, const std::function<void(int)>& f) {
  if (threads <= 0) threads = thread_count();
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (int i; (i = next.fetch_add(1)) < n;) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

Center simulate_center(std::mt19937_64& rng, const ScenarioSpec& spec, Arm arm, const Vec& a, int n) {
  double eta = linear_predictor(spec.true_beta, a);
  if (spec.outcome == OutcomeKind::binary) {
    std::binomial_distribution<int> bin(n, expit(eta));
    return Center::binary(arm, a, n, bin(rng));
  }
  std::normal_distribution<double> noise(spec.link.inverse(eta), spec.sigma);
  Center c;
  c.arm = arm;
  c.a = a;
  c.n = n;
  for (int i = 0; i < n; ++i) {
    double y = noise(rng);
    c.sum += y;
    c.sumsq += y * y;
  }
  return c;
}

MetricsReport run_scenario(const ScenarioSpec& spec, int threads) {
  spec.validate();
  const int P = static_cast<int>(spec.bounds.size());
  const auto planned = spec.planned();
  const Vec centroid = spec.stage1_centroid();
  const FittedModel truth = model_from_beta(spec.true_beta, spec.link);
  std::vector<Vec> stage1_int;
  for (const auto& c : spec.stage1)
    if (c.arm == Arm::intervention) stage1_int.push_back(c.a);

  const bool has_goal = spec.goals.outcome_goal.has_value();
  std::vector<Replicate> reps(spec.replicates);
  parallel_for(spec.replicates, threads, [&](int i) {
    Replicate& out = reps[i];
    auto rng = replicate_engine(spec.seed, static_cast<std::uint64_t>(i));
    try {
      std::vector<StageRecord> stages(1);
      stages[0].stage = 1;
      for (const auto& c : spec.stage1) stages[0].centers.push_back(simulate_center(rng, spec, c.arm, c.a, c.n));

      FittedModel m1 = fit_any(spec, stages);
      if (has_goal) {
        out.xopt1 = recommend_outcome_only(m1, spec.goals, spec.cost, spec.bounds, centroid).x_hat;
        out.propt1 = predict(truth, out.xopt1);
      }

      Vec last = centroid;
      for (int k = 2; k <= spec.K(); ++k) {
        std::vector<Vec> packages;
        if (spec.baseline) {
          packages = stage1_int;
        } else {
          FittedModel m = k == 2 ? m1 : fit_any(spec, stages);
          Recommendation rec =
              recommend_stage_k(m, stages, planned, k, spec.goals, spec.cost, spec.bounds, last);
          if (k == 2) out.regime = static_cast<int>(rec.regime);
          last = rec.x_hat;
          packages = rec.per_center.empty() ? std::vector<Vec>{rec.x_hat} : rec.per_center;
        }
        StageRecord st;
        st.stage = k;
        int j = 0;
        for (const auto& pc : planned[k - 1]) {
          Vec a = Vec::Zero(P);
          if (pc.arm == Arm::intervention) {
            a = packages[j % packages.size()];
            if (spec.distortion) a = spec.distortion(j, a);
            ++j;
          }
          st.centers.push_back(simulate_center(rng, spec, pc.arm, a, pc.n));
        }
        stages.push_back(std::move(st));
      }

      FittedModel mf = fit_any(spec, stages);
      out.beta = mf.beta;
      out.se = standard_errors(spec, mf, stages);
      out.reject = final_test(pooled_centers(stages), spec.goals.test, spec.goals.alpha, spec.link).reject;
      if (has_goal) {
        out.xopt_final = recommend_outcome_only(mf, spec.goals, spec.cost, spec.bounds, last).x_hat;
        out.propt_final = predict(truth, out.xopt_final);
      }
      out.ok = true;
    } catch (const NumericalError& e) {
      out.error = e.what();
    }
  });

  MetricsReport rep;
  rep.name = spec.name;
  rep.replicates = spec.replicates;
  rep.seed = spec.seed;
  rep.regime_counts.assign(3, 0);
  std::vector<std::vector<double>> est(P), ses(P), cover(P), x1(P), xf(P);
  std::vector<double> p1, pf;
  int rejections = 0, ok = 0;
  for (const auto& r : reps) {
    if (!r.ok) {
      ++rep.failures;
      if (rep.failure_messages.size() < 5) rep.failure_messages.push_back(r.error);
      continue;
    }
    ++ok;
    rejections += r.reject;
    if (r.regime >= 0) ++rep.regime_counts[r.regime];
    for (int p = 0; p < P; ++p) {
      double b = r.beta(p + 1), s = r.se(p + 1), t = spec.true_beta(p + 1);
      est[p].push_back(b);
      ses[p].push_back(s);
      cover[p].push_back(std::fabs(b - t) <= 1.959963984540054 * s ? 1.0 : 0.0);
      if (has_goal) {
        x1[p].push_back(r.xopt1(p));
        xf[p].push_back(r.xopt_final(p));
      }
    }
    if (has_goal) {
      p1.push_back(r.propt1);
      pf.push_back(r.propt_final);
    }
  }

  rep.true_optimum = Vec::Constant(P, kNaN);
  if (spec.goals.outcome_goal) {
    try {
      rep.true_optimum = min_cost_subject_to_threshold(truth, spec.cost, spec.bounds, *spec.goals.outcome_goal,
                                                       spec.goals.direction);
    } catch (const InfeasibleError&) {
    }
  }
  for (int p = 0; p < P; ++p) {
    CoefficientMetrics cm;
    cm.true_value = spec.true_beta(p + 1);
    cm.mean = mean_of(est[p]);
    cm.rel_bias = rel_bias(cm.mean, cm.true_value);
    cm.se_ratio = 100.0 * mean_of(ses[p]) / sd_of(est[p]);
    cm.coverage = 100.0 * mean_of(cover[p]);
    rep.coefficients.push_back(cm);
    rep.opt_rel_bias_stage1.push_back(rel_bias(mean_of(x1[p]), rep.true_optimum(p)));
    rep.opt_rel_bias_final.push_back(rel_bias(mean_of(xf[p]), rep.true_optimum(p)));
  }
  double pw = ok ? static_cast<double>(rejections) / ok : kNaN;
  rep.power = 100.0 * pw;
  rep.power_mcse = ok ? 100.0 * std::sqrt(pw * (1 - pw) / ok) : kNaN;
  rep.propt_stage1 = summarize_q(p1);
  rep.propt_final = summarize_q(pf);
  return rep;
}

ScenarioSpec scenario_preset(const std::string& name, int n) {
  if (name != "1a" && name != "1b" && name != "2a" && name != "2b")
    throw ValidationError("unknown scenario '" + name + "'");
  if (n < 1) throw ValidationError("scenario: n must be positive");
  const bool cubic = name[1] == 'a';
  ScenarioSpec s;
  s.name = name + "-n" + std::to_string(n);
  s.true_beta = Eigen::Vector3d(0.1, 0.3, 0.15);
  s.bounds = {Vec::Zero(2), Vec(Eigen::Vector2d(cubic ? 2.0 : 4.0, 8.0))};
  if (cubic) {
    s.cost = CostFunction(2, {{0, 0, 10.0}, {0, 1, 10.0}, {0, 2, -1.19}, {0, 3, 2.0},
                              {1, 1, 2.0}, {1, 2, -0.2}, {1, 3, 0.1}});
  } else {
    s.cost = CostFunction(2, {{0, 1, 1.0}, {1, 1, 4.0}});
  }
  s.stage1 = {{Arm::control, Vec::Zero(2), n},
              {Arm::intervention, Vec(Eigen::Vector2d(1.0, 0.0)), n},
              {Arm::intervention, Vec(Eigen::Vector2d(0.0, 4.0)), n},
              {Arm::intervention, Vec(Eigen::Vector2d(1.0, 4.0)), n}};
  s.later = {{{Arm::control, n}, {Arm::control, n}, {Arm::intervention, n}, {Arm::intervention, n}}};
  if (name[0] == '1') s.goals.outcome_goal = cubic ? 0.7 : 0.7455;
  else s.goals.power_goal = 0.8;
  s.replicates = 2000;
  s.seed = 1;
  return s;
}

std::string metrics_csv_header(int components) {
  std::ostringstream os;
  os << "scenario,reps,failures,seed";
  for (int p = 1; p <= components; ++p)
    os << ",b1" << p << "_relbias,b1" << p << "_se_empsd,b1" << p << "_cp95";
  os << ",power,power_mcse";
  for (int p = 1; p <= components; ++p) os << ",xopt1_" << p << "_relbias";
  for (int p = 1; p <= components; ++p) os << ",xopt_all_" << p << "_relbias";
  os << ",propt1_mean,propt1_q025,propt1_q975,propt_all_mean,propt_all_q025,propt_all_q975";
  os << ",goal_feasible,pmax_fallback,shrinking_fallback";
  return os.str();
}

std::string metrics_csv_row(const MetricsReport& m) {
  std::ostringstream os;
  os << m.name << ',' << m.replicates << ',' << m.failures << ',' << m.seed;
  for (const auto& c : m.coefficients) os << ',' << fmt(c.rel_bias) << ',' << fmt(c.se_ratio) << ',' << fmt(c.coverage);
  os << ',' << fmt(m.power) << ',' << fmt(m.power_mcse);
  for (double v : m.opt_rel_bias_stage1) os << ',' << fmt(v);
  for (double v : m.opt_rel_bias_final) os << ',' << fmt(v);
  for (const auto* q : {&m.propt_stage1, &m.propt_final})
    os << ',' << fmt(q->mean) << ',' << fmt(q->q025) << ',' << fmt(q->q975);
  for (int c : m.regime_counts) os << ',' << c;
  return os.str();
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  double h = (v.size() - 1) * q;
  std::size_t lo = static_cast<std::size_t>(std::floor(h));
  std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - lo) * (v[hi] - v[lo]);
}

double betterbirth_power(const FittedModel& truth, const ArmSummary& earlier,
                         const std::vector<PlannedCenter>& final_stage, const VecRef& x, int replicates,
                         std::uint64_t seed, double alpha, int threads) {
  if (replicates < 1) throw ValidationError("replicates must be >= 1");
  const double p1 = predict(truth, x);
  const double p0 = truth.link.inverse(truth.beta(0));
  const double crit = normal_quantile(1 - alpha / 2);
  std::vector<char> rejected(replicates, 0);
  parallel_for(replicates, threads, [&](int i) {
    auto rng = replicate_engine(seed, static_cast<std::uint64_t>(i));
    ArmSummary s;
    s.n1_obs = earlier.n1_obs;
    s.n0_obs = earlier.n0_obs;
    s.s1_obs = earlier.s1_obs;
    s.s0_obs = earlier.s0_obs;
    for (const auto& c : final_stage) {
      std::binomial_distribution<int> bin(c.n, c.arm == Arm::intervention ? p1 : p0);
      int y = bin(rng);
      if (c.arm == Arm::intervention) s.n1_obs += c.n, s.s1_obs += y;
      else s.n0_obs += c.n, s.s0_obs += y;
    }
    try {
      rejected[i] = std::fabs(z_statistic(s, false)) > crit;
    } catch (const DegenerateVarianceError&) {
      rejected[i] = 0;
    }
  });
  double r = 0;
  for (char v : rejected) r += v;
  return r / replicates;
}

}  // namespace lago
