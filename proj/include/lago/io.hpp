#ifndef LAGO_IO_HPP
#define LAGO_IO_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "lago/sim.hpp"
#include "lago/trial.hpp"

namespace lago {

using json = nlohmann::json;

constexpr int kConfigVersion = 1;

json to_json(const Vec& v);
Vec vec_from_json(const json& j);

json to_json(const Link& link);
Link link_from_json(const json& j);

json to_json(const CostFunction& cost, const std::vector<std::string>& names = {});
CostFunction cost_from_json(const json& j, int components, const std::vector<std::string>& names = {});

json to_json(const GoalSpec& g);
GoalSpec goals_from_json(const json& j);

json to_json(const TrialConfig& cfg);
TrialConfig config_from_json(const json& j);

json to_json(const Recommendation& r, const std::vector<std::string>& names = {});
Recommendation recommendation_from_json(const json& j);

json to_json(const StageRecord& s);
StageRecord stage_from_json(const json& j);

// Versioned document for resuming a trial between stages.
json to_json(const TrialState& st);
TrialState state_from_json(const json& j);

// The distortion hook is not serialized.
json to_json(const ScenarioSpec& s);
ScenarioSpec scenario_from_json(const json& j);

json to_json(const MetricsReport& m);

/// Binary arm totals {n1, s1, n0, s0} of completed stages, for trials whose
/// per-center data are not available.
ArmSummary observed_summary_from_json(const json& j);

json read_json_file(const std::string& path);

/// Reads per-subject rows `stage,center,arm,x_1..x_P,y` with a header line.
/// `arm` is `intervention`/`control` or 1/0. Rows of one (stage, center)
/// must agree on arm and package; stages come back sorted and centers keep
/// their first-seen order.
std::vector<StageRecord> read_stage_csv(std::istream& in, int components);
std::vector<StageRecord> read_stage_csv_file(const std::string& path, int components);

}  // namespace lago

#endif
