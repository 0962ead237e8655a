#include "lago/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "lago/errors.hpp"

namespace lago {

namespace {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  return it->get<T>();
}

const json& need(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(std::string("config: missing field '") + key + "'");
  return *it;
}

OutcomeKind outcome_from_string(const std::string& s) {
  if (s == "binary") return OutcomeKind::binary;
  if (s == "continuous") return OutcomeKind::continuous;
  throw ValidationError("unknown outcome kind '" + s + "'");
}

std::string trim(std::string s) {
  auto ws = [](unsigned char c) { return std::isspace(c); };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double to_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("csv: bad number '" + s + "' in column " + what);
  }
}

json planned_to_json(const std::vector<PlannedCenter>& st);
std::vector<PlannedCenter> planned_from_json(const json& st);

}  // namespace

json to_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vec vec_from_json(const json& j) {
  if (!j.is_array()) throw ValidationError("expected a numeric array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ValidationError("expected a numeric array");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

json to_json(const Link& link) {
  if (link.kind() == LinkKind::tabulated) return json{{"eta", link.knots_eta()}, {"mu", link.knots_mu()}};
  return link.name();
}

Link link_from_json(const json& j) {
  if (j.is_string()) {
    auto s = j.get<std::string>();
    if (s == "logit") return Link::logit();
    if (s == "identity") return Link::identity();
    throw ValidationError("unknown link '" + s + "'");
  }
  if (j.is_object())
    return Link::tabulated(need(j, "eta").get<std::vector<double>>(), need(j, "mu").get<std::vector<double>>());
  throw ValidationError("link must be a name or an {eta, mu} table");
}

json to_json(const CostFunction& cost, const std::vector<std::string>& names) {
  json arr = json::array();
  for (const auto& t : cost.terms()) {
    json term{{"degree", t.degree}, {"coeff", t.coeff}};
    if (t.component < static_cast<int>(names.size())) term["component"] = names[t.component];
    else term["component"] = t.component;
    arr.push_back(term);
  }
  return arr;
}

CostFunction cost_from_json(const json& j, int components, const std::vector<std::string>& names) {
  if (!j.is_array()) throw ValidationError("cost must be an array of {component, degree, coeff}");
  std::vector<CostTerm> terms;
  for (const auto& e : j) {
    CostTerm t;
    const json& c = need(e, "component");
    if (c.is_string()) {
      auto it = std::find(names.begin(), names.end(), c.get<std::string>());
      if (it == names.end()) throw ValidationError("cost: unknown component '" + c.get<std::string>() + "'");
      t.component = static_cast<int>(it - names.begin());
    } else {
      t.component = c.get<int>();
    }
    t.degree = need(e, "degree").get<int>();
    t.coeff = need(e, "coeff").get<double>();
    terms.push_back(t);
  }
  return CostFunction(components, terms);
}

json to_json(const GoalSpec& g) {
  json j{{"outcome_goal", g.outcome_goal ? json(*g.outcome_goal) : json(nullptr)},
         {"direction", to_string(g.direction)},
         {"alpha", g.alpha},
         {"approach", to_string(g.approach)},
         {"test", to_string(g.test)},
         {"conditional_scale", to_string(g.conditional_scale)},
         {"per_center", g.per_center}};
  j["power_goal"] = g.power_goal ? json(*g.power_goal) : json(nullptr);
  return j;
}

GoalSpec goals_from_json(const json& j) {
  GoalSpec g;
  if (j.contains("outcome_goal") && !j["outcome_goal"].is_null()) g.outcome_goal = j["outcome_goal"].get<double>();
  g.direction = direction_from_string(get_or<std::string>(j, "direction", "increase"));
  if (j.contains("power_goal") && !j["power_goal"].is_null()) g.power_goal = j["power_goal"].get<double>();
  g.alpha = get_or<double>(j, "alpha", 0.05);
  g.approach = approach_from_string(get_or<std::string>(j, "approach", "unconditional"));
  g.test = test_from_string(get_or<std::string>(j, "test", "z_unpooled"));
  g.conditional_scale = conditional_scale_from_string(get_or<std::string>(j, "conditional_scale", "sd"));
  g.per_center = get_or<bool>(j, "per_center", false);
  return g;
}

json to_json(const TrialConfig& cfg) {
  json stages = json::array();
  for (const auto& st : cfg.stages) stages.push_back(planned_to_json(st));
  json j{{"version", kConfigVersion},
         {"outcome", cfg.outcome == OutcomeKind::binary ? "binary" : "continuous"},
         {"link", to_json(cfg.link)},
         {"components", cfg.components},
         {"bounds", {{"lower", to_json(cfg.bounds.lower)}, {"upper", to_json(cfg.bounds.upper)}}},
         {"cost", to_json(cfg.cost, cfg.components)},
         {"goals", to_json(cfg.goals)},
         {"stages", stages},
         {"stage1_x", to_json(cfg.stage1_x)},
         {"assumed_variance", cfg.assumed_variance}};
  if (cfg.beta) j["beta"] = to_json(*cfg.beta);
  return j;
}

TrialConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  int version = get_or<int>(j, "version", kConfigVersion);
  if (version != kConfigVersion) throw ValidationError("unsupported config version " + std::to_string(version));
  TrialConfig cfg;
  cfg.outcome = outcome_from_string(get_or<std::string>(j, "outcome", "binary"));
  cfg.link = j.contains("link") ? link_from_json(j["link"])
                                : (cfg.outcome == OutcomeKind::binary ? Link::logit() : Link::identity());
  const json& b = need(j, "bounds");
  cfg.bounds.lower = vec_from_json(need(b, "lower"));
  cfg.bounds.upper = vec_from_json(need(b, "upper"));
  cfg.bounds.validate();
  const int P = cfg.P();
  cfg.components = get_or<std::vector<std::string>>(j, "components", {});
  if (cfg.components.empty())
    for (int p = 0; p < P; ++p) cfg.components.push_back("x" + std::to_string(p + 1));
  cfg.cost = cost_from_json(need(j, "cost"), P, cfg.components);
  cfg.goals = goals_from_json(need(j, "goals"));
  for (const auto& st : need(j, "stages")) cfg.stages.push_back(planned_from_json(st));
  cfg.stage1_x = j.contains("stage1_x") ? vec_from_json(j["stage1_x"]) : Vec(0.5 * (cfg.bounds.lower + cfg.bounds.upper));
  if (j.contains("beta") && !j["beta"].is_null()) cfg.beta = vec_from_json(j["beta"]);
  cfg.assumed_variance = get_or<double>(j, "assumed_variance", 0.0);
  cfg.validate();
  return cfg;
}

json to_json(const Recommendation& r, const std::vector<std::string>& names) {
  json j{{"x_hat", to_json(r.x_hat)},
         {"regime", to_string(r.regime)},
         {"achieved_outcome", r.achieved_outcome},
         {"required_threshold", r.required_threshold},
         {"cost", r.cost},
         {"power_binding", r.power_binding}};
  if (!names.empty()) j["components"] = names;
  j["power_threshold"] = r.power_threshold ? json(*r.power_threshold) : json(nullptr);
  j["projected_power"] = r.projected_power ? json(*r.projected_power) : json(nullptr);
  j["futile"] = r.futile ? json(*r.futile) : json(nullptr);
  if (!r.per_center.empty()) {
    json pc = json::array();
    for (const auto& x : r.per_center) pc.push_back(to_json(x));
    j["per_center"] = pc;
  }
  return j;
}

Recommendation recommendation_from_json(const json& j) {
  Recommendation r;
  r.x_hat = vec_from_json(need(j, "x_hat"));
  std::string reg = need(j, "regime").get<std::string>();
  if (reg == "goal-feasible") r.regime = Regime::goal_feasible;
  else if (reg == "pmax-fallback") r.regime = Regime::pmax_fallback;
  else if (reg == "shrinking-fallback") r.regime = Regime::shrinking_fallback;
  else throw ValidationError("unknown regime '" + reg + "'");
  r.achieved_outcome = need(j, "achieved_outcome").get<double>();
  r.required_threshold = need(j, "required_threshold").get<double>();
  r.cost = need(j, "cost").get<double>();
  r.power_binding = get_or<bool>(j, "power_binding", false);
  if (j.contains("power_threshold") && !j["power_threshold"].is_null())
    r.power_threshold = j["power_threshold"].get<double>();
  if (j.contains("projected_power") && !j["projected_power"].is_null())
    r.projected_power = j["projected_power"].get<double>();
  if (j.contains("futile") && !j["futile"].is_null()) r.futile = j["futile"].get<bool>();
  if (j.contains("per_center"))
    for (const auto& x : j["per_center"]) r.per_center.push_back(vec_from_json(x));
  return r;
}

json to_json(const StageRecord& s) {
  json centers = json::array();
  for (const auto& c : s.centers)
    centers.push_back(
        {{"arm", to_string(c.arm)}, {"a", to_json(c.a)}, {"n", c.n}, {"sum", c.sum}, {"sumsq", c.sumsq}});
  return {{"stage", s.stage}, {"centers", centers}};
}

StageRecord stage_from_json(const json& j) {
  StageRecord s;
  s.stage = need(j, "stage").get<int>();
  for (const auto& c : need(j, "centers")) {
    Arm arm = arm_from_string(need(c, "arm").get<std::string>());
    Vec a = vec_from_json(need(c, "a"));
    int n = need(c, "n").get<int>();
    if (c.contains("successes")) {
      s.centers.push_back(Center::binary(arm, std::move(a), n, c["successes"].get<int>()));
      continue;
    }
    Center ctr;
    ctr.arm = arm;
    ctr.a = std::move(a);
    ctr.n = n;
    ctr.sum = need(c, "sum").get<double>();
    ctr.sumsq = need(c, "sumsq").get<double>();
    s.centers.push_back(std::move(ctr));
  }
  return s;
}

json to_json(const TrialState& st) {
  json completed = json::array(), recs = json::array();
  for (const auto& s : st.completed) completed.push_back(to_json(s));
  for (const auto& r : st.recommendations) recs.push_back(to_json(r));
  return {{"version", kConfigVersion},   {"config", to_json(st.config)}, {"completed", completed},
          {"recommendations", recs},     {"status", to_string(st.status)}, {"warnings", st.warnings}};
}

TrialState state_from_json(const json& j) {
  int version = get_or<int>(j, "version", kConfigVersion);
  if (version != kConfigVersion) throw ValidationError("unsupported state version " + std::to_string(version));
  TrialState st;
  st.config = config_from_json(need(j, "config"));
  for (const auto& s : get_or<json>(j, "completed", json::array())) st.completed.push_back(stage_from_json(s));
  for (const auto& r : get_or<json>(j, "recommendations", json::array()))
    st.recommendations.push_back(recommendation_from_json(r));
  st.status = trial_status_from_string(get_or<std::string>(j, "status", "awaiting"));
  st.warnings = get_or<std::vector<std::string>>(j, "warnings", {});
  return st;
}

namespace {

json planned_to_json(const std::vector<PlannedCenter>& st) {
  json s = json::array();
  for (const auto& c : st) s.push_back({{"arm", to_string(c.arm)}, {"n", c.n}});
  return s;
}

std::vector<PlannedCenter> planned_from_json(const json& st) {
  if (!st.is_array()) throw ValidationError("config: a stage must be an array of centers");
  std::vector<PlannedCenter> centers;
  for (const auto& c : st) {
    PlannedCenter pc{arm_from_string(need(c, "arm").get<std::string>()), need(c, "n").get<int>()};
    int count = get_or<int>(c, "count", 1);
    if (count < 1) throw ValidationError("config: center count must be positive");
    for (int r = 0; r < count; ++r) centers.push_back(pc);
  }
  return centers;
}

}  // namespace

json to_json(const ScenarioSpec& s) {
  json stage1 = json::array(), later = json::array();
  for (const auto& c : s.stage1) stage1.push_back({{"arm", to_string(c.arm)}, {"a", to_json(c.a)}, {"n", c.n}});
  for (const auto& st : s.later) later.push_back(planned_to_json(st));
  return {{"version", kConfigVersion},
          {"name", s.name},
          {"true_beta", to_json(s.true_beta)},
          {"outcome", s.outcome == OutcomeKind::binary ? "binary" : "continuous"},
          {"link", to_json(s.link)},
          {"sigma", s.sigma},
          {"stage1", stage1},
          {"later", later},
          {"cost", to_json(s.cost)},
          {"bounds", {{"lower", to_json(s.bounds.lower)}, {"upper", to_json(s.bounds.upper)}}},
          {"goals", to_json(s.goals)},
          {"replicates", s.replicates},
          {"seed", s.seed},
          {"baseline", s.baseline},
          {"se", s.se == SeKind::naive ? "naive" : "sandwich"}};
}

ScenarioSpec scenario_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("scenario must be a JSON object");
  int version = get_or<int>(j, "version", kConfigVersion);
  if (version != kConfigVersion) throw ValidationError("unsupported scenario version " + std::to_string(version));
  ScenarioSpec s;
  s.name = get_or<std::string>(j, "name", "scenario");
  s.true_beta = vec_from_json(need(j, "true_beta"));
  s.outcome = outcome_from_string(get_or<std::string>(j, "outcome", "binary"));
  s.link = j.contains("link") ? link_from_json(j["link"])
                              : (s.outcome == OutcomeKind::binary ? Link::logit() : Link::identity());
  s.sigma = get_or<double>(j, "sigma", 1.0);
  const json& b = need(j, "bounds");
  s.bounds.lower = vec_from_json(need(b, "lower"));
  s.bounds.upper = vec_from_json(need(b, "upper"));
  s.bounds.validate();
  const int P = static_cast<int>(s.bounds.size());
  for (const auto& c : need(j, "stage1"))
    s.stage1.push_back({arm_from_string(need(c, "arm").get<std::string>()), vec_from_json(need(c, "a")),
                        need(c, "n").get<int>()});
  for (const auto& st : need(j, "later")) s.later.push_back(planned_from_json(st));
  s.cost = cost_from_json(need(j, "cost"), P);
  s.goals = goals_from_json(need(j, "goals"));
  s.replicates = get_or<int>(j, "replicates", 2000);
  s.seed = need(j, "seed").get<std::uint64_t>();
  s.baseline = get_or<bool>(j, "baseline", false);
  std::string se = get_or<std::string>(j, "se", "naive");
  if (se == "naive") s.se = SeKind::naive;
  else if (se == "sandwich") s.se = SeKind::sandwich;
  else throw ValidationError("unknown se kind '" + se + "'");
  s.validate();
  return s;
}

json to_json(const MetricsReport& m) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json coefs = json::array();
  for (const auto& c : m.coefficients)
    coefs.push_back({{"true", c.true_value}, {"mean", num(c.mean)}, {"rel_bias", num(c.rel_bias)},
                     {"se_empsd", num(c.se_ratio)}, {"cp95", num(c.coverage)}});
  json opt1 = json::array(), optf = json::array();
  for (double v : m.opt_rel_bias_stage1) opt1.push_back(num(v));
  for (double v : m.opt_rel_bias_final) optf.push_back(num(v));
  json topt = json::array();
  for (Eigen::Index i = 0; i < m.true_optimum.size(); ++i) topt.push_back(num(m.true_optimum(i)));
  auto q = [&](const QuantileSummary& s) { return json{{"mean", num(s.mean)}, {"q025", num(s.q025)}, {"q975", num(s.q975)}}; };
  return {{"name", m.name},
          {"replicates", m.replicates},
          {"failures", m.failures},
          {"seed", m.seed},
          {"coefficients", coefs},
          {"power", num(m.power)},
          {"power_mcse", num(m.power_mcse)},
          {"true_optimum", topt},
          {"xopt_relbias_stage1", opt1},
          {"xopt_relbias_all", optf},
          {"propt_stage1", q(m.propt_stage1)},
          {"propt_all", q(m.propt_final)},
          {"regimes",
           {{"goal-feasible", m.regime_counts.at(0)},
            {"pmax-fallback", m.regime_counts.at(1)},
            {"shrinking-fallback", m.regime_counts.at(2)}}},
          {"failure_messages", m.failure_messages}};
}

ArmSummary observed_summary_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("observed_summary must be an object");
  ArmSummary s;
  s.n1_obs = need(j, "n1").get<double>();
  s.s1_obs = need(j, "s1").get<double>();
  s.n0_obs = need(j, "n0").get<double>();
  s.s0_obs = need(j, "s0").get<double>();
  if (!(s.n1_obs >= 2 && s.n0_obs >= 2)) throw ValidationError("observed_summary: each arm needs at least 2 subjects");
  if (s.s1_obs < 0 || s.s1_obs > s.n1_obs || s.s0_obs < 0 || s.s0_obs > s.n0_obs)
    throw ValidationError("observed_summary: event counts out of range");
  s.mean1_obs = s.s1_obs / s.n1_obs;
  s.mean0_obs = s.s0_obs / s.n0_obs;
  s.var1_obs = s.mean1_obs * (1 - s.mean1_obs) * s.n1_obs / (s.n1_obs - 1);
  s.var0_obs = s.mean0_obs * (1 - s.mean0_obs) * s.n0_obs / (s.n0_obs - 1);
  return s;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("'" + path + "': " + e.what());
  }
}

std::vector<StageRecord> read_stage_csv(std::istream& in, int components) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("csv: empty input");
  auto header = split_csv(line);
  auto col = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ValidationError("csv: missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t cs = col("stage"), cc = col("center"), ca = col("arm"), cy = col("y");
  std::vector<std::size_t> cx;
  for (int p = 0; p < components; ++p) cx.push_back(col("x_" + std::to_string(p + 1)));

  struct Acc {
    Arm arm;
    Vec a;
    std::vector<double> y;
  };
  std::map<int, std::vector<std::pair<std::string, Acc>>> stages;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw ValidationError("csv line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                            " fields");
    double sv = to_double(cells[cs], "stage");
    if (sv < 1 || sv != std::floor(sv)) throw ValidationError("csv line " + std::to_string(lineno) + ": bad stage");
    int stage = static_cast<int>(sv);
    Arm arm = arm_from_string(cells[ca]);
    Vec a(components);
    for (int p = 0; p < components; ++p) a(p) = to_double(cells[cx[p]], header[cx[p]]);
    double y = to_double(cells[cy], "y");
    auto& list = stages[stage];
    auto it = std::find_if(list.begin(), list.end(), [&](const auto& e) { return e.first == cells[cc]; });
    if (it == list.end()) {
      list.push_back({cells[cc], Acc{arm, a, {}}});
      it = list.end() - 1;
    } else if (it->second.arm != arm || (it->second.a.array() != a.array()).any()) {
      throw ValidationError("csv line " + std::to_string(lineno) + ": center changes arm or package within a stage");
    }
    it->second.y.push_back(y);
  }
  std::vector<StageRecord> out;
  for (auto& [k, list] : stages) {
    StageRecord s;
    s.stage = k;
    for (auto& [id, acc] : list) s.centers.push_back(Center::from_outcomes(acc.arm, acc.a, acc.y));
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<StageRecord> read_stage_csv_file(const std::string& path, int components) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return read_stage_csv(in, components);
}

}  // namespace lago
