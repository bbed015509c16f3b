#pragma once

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

#include "hadcal/spectral.hpp"

namespace hadcal {
namespace report {

using Json = nlohmann::ordered_json;

struct CheckResult {
  std::string name;
  std::string anchor;  // the certified identity or bound, stated mathematically
  double measured = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  bool lower_bound = false;  // control checks pass when measured >= tolerance
  std::string note;
};

inline CheckResult check(std::string name, std::string anchor, double measured,
                         double tolerance, std::string note = "") {
  CheckResult c;
  c.name = std::move(name);
  c.anchor = std::move(anchor);
  c.measured = measured;
  c.tolerance = tolerance;
  c.pass = measured <= tolerance;
  c.note = std::move(note);
  return c;
}

inline CheckResult control(std::string name, std::string anchor, double measured,
                           double threshold, std::string note = "") {
  CheckResult c;
  c.name = std::move(name);
  c.anchor = std::move(anchor);
  c.measured = measured;
  c.tolerance = threshold;
  c.lower_bound = true;
  c.pass = measured >= threshold;
  c.note = std::move(note);
  return c;
}

struct Report {
  std::string schema_version = "1";
  std::string tool_version = "0.1.0";
  Json scenario;
  unsigned long long seed = 0;
  std::vector<CheckResult> checks;
  std::vector<std::string> notes;
  std::map<std::string, std::string> decay_csv;  // name -> csv body

  bool all_passed() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }

  const CheckResult& find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return c;
    throw PipelineError("report", "unknown check " + name);
  }

  Json to_json() const {
    Json j;
    j["schema_version"] = schema_version;
    j["tool_version"] = tool_version;
    j["scenario"] = scenario;
    j["seed"] = seed;
    Json cs = Json::array();
    for (const auto& c : checks) {
      Json jc;
      jc["name"] = c.name;
      jc["anchor"] = c.anchor;
      jc["measured"] = c.measured;
      jc["tolerance"] = c.tolerance;
      jc["kind"] = c.lower_bound ? "control (pass when measured >= tolerance)"
                                 : "bound (pass when measured <= tolerance)";
      jc["pass"] = c.pass;
      if (!c.note.empty()) jc["note"] = c.note;
      cs.push_back(std::move(jc));
    }
    j["checks"] = std::move(cs);
    j["notes"] = notes;
    Json tables = Json::array();
    for (const auto& [name, _] : decay_csv) tables.push_back("decay_" + name + ".csv");
    j["decay_tables"] = std::move(tables);
    return j;
  }

  std::string serialize() const { return to_json().dump(2) + "\n"; }
};

}  // namespace report
}  // namespace hadcal
