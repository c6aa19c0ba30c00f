#include "qvar/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace qvar {

namespace {

using nlohmann::json;

// One visitor per section lists (key, member) pairs; reading and writing both
// walk it, so the two directions cannot drift apart.
template <class S, class F>
void visit(S& s, F&& f) {
  if constexpr (std::is_same_v<std::remove_const_t<S>, ModelParams>) {
    f("r", s.r);
    f("sigma", s.sigma);
    f("mu_l", s.mu_l);
    f("mu_h", s.mu_h);
    f("p", s.p);
    f("T", s.T);
    f("x0", s.x0);
    f("theta", s.theta);
    f("L", s.L);
    f("epsilon", s.epsilon);
  } else if constexpr (std::is_same_v<std::remove_const_t<S>, UtilitySpec>) {
    f("gamma1", s.gamma1);
    f("gamma2", s.gamma2);
    f("theta", s.theta);
    f("L", s.L);
  } else if constexpr (std::is_same_v<std::remove_const_t<S>, QuadratureSpec>) {
    f("node_count", s.node_count);
    f("truncation", s.truncation);
    f("split_tolerance", s.split_tolerance);
  } else if constexpr (std::is_same_v<std::remove_const_t<S>, SimConfig>) {
    f("M", s.M);
    f("N", s.N);
    f("seed", s.seed);
    f("delta", s.delta);
    f("descent_steps", s.descent_steps);
    f("lambda_grid_size", s.lambda_grid_size);
    f("lambda_max", s.lambda_max);
    f("y_init", s.y_init);
  } else if constexpr (std::is_same_v<std::remove_const_t<S>, PinnConfig>) {
    f("nodes", s.nodes);
    f("collocation", s.collocation);
    f("boundary", s.boundary);
    f("delta", s.delta);
    f("max_steps", s.max_steps);
    f("loss_tol", s.loss_tol);
    f("y", s.y);
    f("mu", s.mu);
    f("lambda", s.lambda);
    f("seed", s.seed);
    f("resample", s.resample);
    f("log_every", s.log_every);
  } else {
    f("output_dir", s.output_dir);
    f("epsilon_grid", s.epsilon_grid);
    f("dist_lambdas", s.dist_lambdas);
    f("dist_bins", s.dist_bins);
    f("feasibility_epsilon", s.feasibility_epsilon);
    f("feasibility_x0", s.feasibility_x0);
    f("pinn_checkpoint", s.pinn_checkpoint);
  }
}

template <class T>
void read_value(const json& j, T& out) {
  out = j.get<T>();
}

void read_value(const json& j, Interval& out) {
  if (!j.is_array() || j.size() != 2) throw InvalidParameter("interval must be [lo, hi]");
  out = {j[0].get<double>(), j[1].get<double>()};
}

void read_value(const json& j, std::filesystem::path& out) { out = j.get<std::string>(); }

void read_value(const json& j, std::optional<std::filesystem::path>& out) {
  if (j.is_null()) {
    out.reset();
  } else {
    out = std::filesystem::path(j.get<std::string>());
  }
}

json write_value(const auto& v) { return v; }
json write_value(const Interval& v) { return json::array({v.lo, v.hi}); }
json write_value(const std::filesystem::path& v) { return v.string(); }
json write_value(const std::optional<std::filesystem::path>& v) {
  return v ? json(v->string()) : json(nullptr);
}

template <class S>
void read_section(const json& j, const std::string& name, S& s) {
  if (!j.is_object()) throw InvalidParameter("config section '" + name + "' must be an object");
  std::set<std::string> known;
  visit(s, [&](const char* key, auto& member) {
    known.insert(key);
    if (auto it = j.find(key); it != j.end()) {
      try {
        read_value(*it, member);
      } catch (const json::exception& e) {
        throw InvalidParameter("config key '" + name + "." + key + "': " + e.what());
      }
    }
  });
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw InvalidParameter("unknown config key '" + name + "." + key + "'");
  }
}

template <class S>
json write_section(const S& s) {
  json j = json::object();
  S copy = s;
  visit(copy, [&](const char* key, auto& member) { j[key] = write_value(member); });
  return j;
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  for (int i = 0; i <= 40; ++i) epsilon_grid.push_back(i / 40.0);
}

void ExperimentConfig::validate() const {
  model.validate();
  utility.validate();
  quadrature.validate();
  sim.validate();
  pinn.validate();
  if (utility.theta != model.theta || utility.L != model.L) {
    throw InvalidParameter("utility.theta and utility.L must match the model section");
  }
  if (epsilon_grid.empty()) throw InvalidParameter("epsilon_grid must be nonempty");
  for (double e : epsilon_grid) {
    if (!(e >= 0.0 && e <= 1.0)) throw InvalidParameter("epsilon_grid entries must lie in [0, 1]");
  }
  for (double l : dist_lambdas) {
    if (!(l >= 0.0)) throw InvalidParameter("dist_lambdas must be nonnegative");
  }
  if (dist_bins < 1) throw InvalidParameter("dist_bins must be positive");
  if (!(feasibility_epsilon >= 0.0 && feasibility_epsilon <= 1.0)) {
    throw InvalidParameter("feasibility_epsilon must lie in [0, 1]");
  }
  for (double x : feasibility_x0) {
    if (!(x > 0.0)) throw InvalidParameter("feasibility_x0 entries must be positive");
  }
  if (output_dir.empty()) throw InvalidParameter("output_dir must be set");
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text.empty() ? "{}" : json_text);
  } catch (const json::parse_error& e) {
    throw InvalidParameter(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw InvalidParameter("config must be a JSON object");

  ExperimentConfig cfg;
  json top = json::object();
  for (const auto& [key, value] : j.items()) {
    if (key == "model") {
      read_section(value, key, cfg.model);
    } else if (key != "utility" && key != "quadrature" && key != "sim" && key != "pinn") {
      top[key] = value;
    }
  }
  // Utility inherits the reference level and floor from the model unless overridden.
  cfg.utility.theta = cfg.model.theta;
  cfg.utility.L = cfg.model.L;
  if (j.contains("utility")) read_section(j["utility"], "utility", cfg.utility);
  if (j.contains("quadrature")) read_section(j["quadrature"], "quadrature", cfg.quadrature);
  if (j.contains("sim")) read_section(j["sim"], "sim", cfg.sim);
  if (j.contains("pinn")) read_section(j["pinn"], "pinn", cfg.pinn);
  read_section(top, "config", cfg);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidParameter("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string dump_config(const ExperimentConfig& cfg) {
  json j = write_section(cfg);
  j["model"] = write_section(cfg.model);
  j["utility"] = write_section(cfg.utility);
  j["quadrature"] = write_section(cfg.quadrature);
  j["sim"] = write_section(cfg.sim);
  j["pinn"] = write_section(cfg.pinn);
  return j.dump(2);
}

}  // namespace qvar
