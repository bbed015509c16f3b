#pragma once

#include <json.hpp>

#include <optional>
#include <string>

#include "hadcal/metric.hpp"

namespace hadcal {

// Scenario configuration: validated before any computation. Defaults match
// the bundled presets; the tolerances map may override any check tolerance.
struct Scenario {
  std::string name;
  std::string model = "scalar";  // "scalar" or "gravity"
  int dim = 1;
  int n_per_axis = 64;
  std::string metric_preset = "static-flat";
  double H = 1.0;         // de Sitter rate
  double c1 = 0.0, c2 = 0.0;  // polynomial perturbation coefficients
  double mass2 = 1.0;     // scalar model mass term
  double lambda = 0.0;
  int taylor_order = 6;
  double T_half = 1.0;
  int s_nodes = 48;
  double time_window = 0.5;
  int time_steps = 200;
  int band = 3;            // band limit of the spacetime test sections
  int unitarity_band = 6;  // band on which pseudo-unitarity is measured
  int kernel_band = 2;     // band of the constraint-kernel slice
  std::map<std::string, double> tolerances;
  unsigned long long seed = 20240808ULL;

  double tol(const std::string& check, double fallback) const {
    auto it = tolerances.find(check);
    return it == tolerances.end() ? fallback : it->second;
  }

  MetricFamily metric(int order) const {
    GridSpec g(dim, n_per_axis);
    if (metric_preset == "static-flat") return MetricFamily::static_flat(g, order);
    if (metric_preset == "desitter") return MetricFamily::desitter(g, order, H);
    if (metric_preset == "poly-perturbation")
      return MetricFamily::poly_perturbation(g, order, c1, c2);
    throw PipelineError("scenario", "unknown metric preset " + metric_preset);
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["name"] = name;
    j["model"] = model;
    j["dim"] = dim;
    j["n_per_axis"] = n_per_axis;
    j["metric"] = {{"preset", metric_preset},
                   {"params", {{"H", H}, {"c1", c1}, {"c2", c2}, {"mass2", mass2}}}};
    j["lambda"] = lambda;
    j["taylor_order"] = taylor_order;
    j["T_half"] = T_half;
    j["s_nodes"] = s_nodes;
    j["time_window"] = time_window;
    j["time_steps"] = time_steps;
    j["band"] = band;
    j["unitarity_band"] = unitarity_band;
    j["kernel_band"] = kernel_band;
    j["tolerances"] = tolerances;
    j["seed"] = seed;
    return j;
  }
};

// Field-level validation error; the CLI maps it to exit code 2.
class SchemaError : public std::runtime_error {
 public:
  SchemaError(const std::string& field, const std::string& what)
      : std::runtime_error("scenario field '" + field + "': " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

inline Scenario parse_scenario(const nlohmann::json& j) {
  Scenario s;
  auto need = [&](const char* key) {
    if (!j.contains(key)) throw SchemaError(key, "missing required field");
    return j.at(key);
  };
  auto opt = [&](const char* key, auto fallback) {
    using T = decltype(fallback);
    if (!j.contains(key)) return fallback;
    try {
      return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw SchemaError(key, "wrong type");
    }
  };

  try {
    s.name = need("name").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError("name", "must be a string");
  }
  s.model = opt("model", std::string("scalar"));
  if (s.model != "scalar" && s.model != "gravity")
    throw SchemaError("model", "must be 'scalar' or 'gravity'");
  s.dim = opt("dim", 1);
  if (s.dim < 1 || s.dim > 3) throw SchemaError("dim", "must be 1, 2 or 3");
  s.n_per_axis = opt("n_per_axis", 64);
  if (s.n_per_axis < 2 || s.n_per_axis % 2 != 0)
    throw SchemaError("n_per_axis", "must be even and >= 2");
  if (s.model == "gravity" && s.dim == 1)
    throw SchemaError("dim", "the gravity bundles need d >= 2 (trace reversal is "
                             "singular on 1 spatial dimension)");

  if (j.contains("metric")) {
    const auto& m = j.at("metric");
    if (!m.contains("preset")) throw SchemaError("metric.preset", "missing");
    s.metric_preset = m.at("preset").get<std::string>();
    if (s.metric_preset != "static-flat" && s.metric_preset != "desitter" &&
        s.metric_preset != "poly-perturbation")
      throw SchemaError("metric.preset", "unknown preset " + s.metric_preset);
    if (m.contains("params")) {
      const auto& p = m.at("params");
      if (p.contains("H")) s.H = p.at("H").get<double>();
      if (p.contains("c1")) s.c1 = p.at("c1").get<double>();
      if (p.contains("c2")) s.c2 = p.at("c2").get<double>();
      if (p.contains("mass2")) s.mass2 = p.at("mass2").get<double>();
    }
  }
  s.lambda = opt("lambda", 0.0);
  s.taylor_order = opt("taylor_order", 6);
  if (s.taylor_order < 2 || s.taylor_order > 16)
    throw SchemaError("taylor_order", "must be between 2 and 16");
  s.T_half = opt("T_half", 1.0);
  if (s.T_half <= 0) throw SchemaError("T_half", "must be positive");
  s.s_nodes = opt("s_nodes", 48);
  if (s.s_nodes < 8 || s.s_nodes > 256) throw SchemaError("s_nodes", "must be in [8, 256]");
  s.time_window = opt("time_window", 0.5);
  if (s.time_window <= 0) throw SchemaError("time_window", "must be positive");
  s.time_steps = opt("time_steps", 200);
  if (s.time_steps < 8 || s.time_steps % 2 != 0)
    throw SchemaError("time_steps", "must be even and >= 8");
  s.band = opt("band", 3);
  s.unitarity_band = opt("unitarity_band", 6);
  s.kernel_band = opt("kernel_band", 2);
  s.seed = opt("seed", 20240808ULL);
  if (j.contains("tolerances")) {
    for (auto it = j.at("tolerances").begin(); it != j.at("tolerances").end(); ++it) {
      if (!it.value().is_number())
        throw SchemaError("tolerances." + it.key(), "must be a number");
      s.tolerances[it.key()] = it.value().get<double>();
    }
  }
  return s;
}

inline std::vector<Scenario> bundled_scenarios() {
  std::vector<Scenario> out;
  {
    Scenario s;
    s.name = "flat-static-1d";
    s.model = "scalar";
    s.dim = 1;
    s.n_per_axis = 64;
    s.mass2 = 1.0;
    out.push_back(s);
  }
  {
    Scenario s;
    s.name = "flat-static-2d";
    s.model = "gravity";
    s.dim = 2;
    s.n_per_axis = 8;
    s.metric_preset = "static-flat";
    s.lambda = 0.0;
    s.taylor_order = 8;
    s.s_nodes = 40;
    out.push_back(s);
  }
  {
    Scenario s;
    s.name = "desitter-3d";
    s.model = "gravity";
    s.dim = 3;
    s.n_per_axis = 8;
    s.metric_preset = "desitter";
    s.H = 1.0;
    s.lambda = 3.0;
    s.taylor_order = 6;
    s.s_nodes = 40;
    out.push_back(s);
  }
  {
    Scenario s;
    s.name = "non-einstein-control";
    s.model = "gravity";
    s.dim = 3;
    s.n_per_axis = 4;
    s.metric_preset = "poly-perturbation";
    s.c1 = 0.0;
    s.c2 = 1.0;
    s.lambda = 0.0;
    s.taylor_order = 6;
    out.push_back(s);
  }
  return out;
}

inline std::optional<Scenario> bundled_scenario(const std::string& name) {
  for (auto& s : bundled_scenarios())
    if (s.name == name) return s;
  return std::nullopt;
}

}  // namespace hadcal
