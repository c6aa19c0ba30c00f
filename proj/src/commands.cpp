#include "qvar/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "qvar/parallel.hpp"

#ifndef QVAR_BUILD_ID
#define QVAR_BUILD_ID "unknown"
#endif

namespace qvar {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Reference values, keyed by (epsilon, method).
struct RefRow {
  double epsilon;
  Method method;
  double lambda_star, y_star, u, u_c, p_at_L, p_at_0;
};

constexpr RefRow kRefTable[] = {
    {0.0, Method::Mc, 1.65, 1.883, -0.561, 1.086, 0.746, 0.003},
    {0.0, Method::Pinn, 1.7, 1.911, -0.601, 1.13, 0.782, 0.0},
    {0.0, Method::Lagrange, 1.659, 1.885, -0.564, 1.095, 0.751, 0.0},
    {0.1, Method::Mc, 1.453, 1.795, -0.411, 0.898, 0.5, 0.102},
    {0.1, Method::Pinn, 1.464, 1.806, -0.435, 0.91, 0.52, 0.1},
    {0.1, Method::Lagrange, 1.452, 1.794, -0.411, 0.896, 0.5, 0.1},
    {0.35, Method::Mc, 0.478, 1.214, -0.095, 0.216, 0.0, 0.35},
    {0.35, Method::Pinn, 0.614, 1.295, -0.114, 0.31, 0.0, 0.35},
    {0.35, Method::Lagrange, 0.483, 1.216, -0.095, 0.219, 0.0, 0.35},
    {1.0, Method::Mc, 0.0, 0.946, -0.086, -0.085, 0.0, 0.395},
    {1.0, Method::Pinn, 0.0, 0.94, -0.046, -0.084, 0.0, 0.374},
    {1.0, Method::Lagrange, 0.0, 0.945, -0.085, -0.085, 0.0, 0.395},
};

class CsvWriter {
 public:
  explicit CsvWriter(std::initializer_list<std::string> header) {
    bool first = true;
    for (const auto& h : header) {
      if (!first) text_ += ',';
      text_ += h;
      first = false;
    }
    text_ += '\n';
  }

  CsvWriter& cell(double v) { return raw(fmt6(v)); }
  CsvWriter& cell(const std::string& s) { return raw(s); }
  CsvWriter& cell(const char* s) { return raw(s); }

  void end_row() {
    text_ += '\n';
    fresh_ = true;
  }

  const std::string& text() const { return text_; }

 private:
  CsvWriter& raw(const std::string& s) {
    if (!fresh_) text_ += ',';
    text_ += s;
    fresh_ = false;
    return *this;
  }

  std::string text_;
  bool fresh_ = true;
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidParameter("cannot write " + path.string());
  out << text;
  if (!out) throw InvalidParameter("failed writing " + path.string());
}

fs::path prepare_output(const ExperimentConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec || !fs::is_directory(cfg.output_dir)) {
    throw InvalidParameter("output_dir is not writable: " + cfg.output_dir.string());
  }
  return cfg.output_dir;
}

void write_manifest(const ExperimentConfig& cfg, const std::string& command,
                    const ordered_json& args, const std::vector<std::string>& outputs) {
  ordered_json m;
  m["command"] = command;
  m["arguments"] = args;
  m["build_id"] = build_id();
  m["outputs"] = outputs;
  m["config"] = ordered_json::parse(dump_config(cfg));
  write_file(cfg.output_dir / ("manifest_" + command + ".json"), m.dump(2) + "\n");
}

std::string status_of(const SolveRecord& r) { return r.feasible ? "ok" : "infeasible"; }

void log(std::ostream* progress, const std::string& line) {
  if (progress) *progress << line << std::endl;
}

SolveRecord from_mc(Method method, const McSolution& s, double x_hat) {
  SolveRecord r;
  r.method = method;
  r.epsilon = s.epsilon;
  r.x0 = s.x0;
  r.feasible = s.feasible;
  r.x_hat = x_hat;
  r.lambda_star = s.lambda_star;
  r.y_star = s.y_star;
  r.u = s.u;
  r.u_c = s.u_c;
  r.u_c_se = s.u_c_se;
  r.p_at_L = s.p_at_L;
  r.p_at_0 = s.p_at_0;
  r.p_at_least_L = s.h;
  return r;
}

ordered_json record_json(const SolveRecord& r) {
  // Non-finite values (an infeasible solve) become null.
  auto num = [](double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); };
  ordered_json j;
  j["method"] = to_string(r.method);
  j["epsilon"] = r.epsilon;
  j["x0"] = r.x0;
  j["status"] = status_of(r);
  j["x_hat"] = num(r.x_hat);
  j["lambda_star"] = num(r.lambda_star);
  j["y_star"] = num(r.y_star);
  j["u"] = num(r.u);
  j["u_c"] = num(r.u_c);
  j["u_c_se"] = num(r.u_c_se);
  j["p_at_L"] = num(r.p_at_L);
  j["p_at_0"] = num(r.p_at_0);
  j["p_at_least_L"] = num(r.p_at_least_L);
  return j;
}

// A lambda grid for one initial wealth, filled by the requested method.
LambdaGrid method_grid(Workbench& wb, double x0, Method method);

}  // namespace

Method parse_method(const std::string& name) {
  if (name == "lagrange") return Method::Lagrange;
  if (name == "mc") return Method::Mc;
  if (name == "pinn") return Method::Pinn;
  throw InvalidParameter("unknown method '" + name + "' (lagrange, mc, pinn)");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::Lagrange:
      return "lagrange";
    case Method::Mc:
      return "mc";
    case Method::Pinn:
      return "pinn";
  }
  return "?";
}

std::string fmt6(double v) {
  if (v == 0.0) return "0";  // no "-0"
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string build_id() { return QVAR_BUILD_ID; }

struct Workbench::State {
  std::unique_ptr<LagrangeSolver> lagrange;
  std::unique_ptr<SamplePool> pool;
  std::unique_ptr<ConcavifiedUtility> utility;
  std::unique_ptr<PinnModel> pinn;
  std::map<std::pair<int, double>, LambdaGrid> grids;
};

Workbench::Workbench(const ExperimentConfig& cfg, std::ostream* progress)
    : cfg_(cfg), progress_(progress), state_(std::make_unique<State>()) {
  cfg_.validate();
  state_->utility = std::make_unique<ConcavifiedUtility>(cfg_.utility);
}

Workbench::~Workbench() = default;

const ConcavifiedUtility& Workbench::utility() const { return *state_->utility; }

const LagrangeSolver& Workbench::lagrange() {
  if (!state_->lagrange) {
    state_->lagrange = std::make_unique<LagrangeSolver>(cfg_.model, cfg_.utility, cfg_.quadrature);
  }
  return *state_->lagrange;
}

const SamplePool& Workbench::pool() {
  if (!state_->pool) {
    log(progress_, "simulating " + std::to_string(cfg_.sim.M) + " paths");
    state_->pool = std::make_unique<SamplePool>(simulate_paths(cfg_.sim, cfg_.model));
  }
  return *state_->pool;
}

const PinnModel& Workbench::pinn() {
  if (state_->pinn) return *state_->pinn;
  if (cfg_.pinn_checkpoint) {
    log(progress_, "loading " + cfg_.pinn_checkpoint->string());
    PinnModel m = load_checkpoint(*cfg_.pinn_checkpoint);
    ExperimentConfig want = cfg_;
    want.pinn = m.config;
    want.model = m.params;
    if (dump_config(want) != dump_config(cfg_)) {
      throw InvalidParameter("checkpoint was trained with a different model or pinn section");
    }
    state_->pinn = std::make_unique<PinnModel>(std::move(m));
  } else {
    const fs::path dir = prepare_output(cfg_);
    log(progress_, "training network (" + std::to_string(cfg_.pinn.max_steps) + " steps max)");
    std::ostream* progress = progress_;
    PinnModel m = train(
        cfg_.pinn, cfg_.model, cfg_.utility,
        [progress](const TrainRecord& r) {
          if (progress && r.step % 1000 == 0) {
            log(progress, "  step " + std::to_string(r.step) + " loss " + fmt6(r.loss.total));
          }
        },
        dir / "pinn_snapshot.json");
    save_checkpoint(m, dir / "pinn_model.json");
    write_training_log(m, dir / "pinn_training_log.csv");
    log(progress_, "trained: " + std::to_string(m.steps) + " steps, loss " +
                       fmt6(m.history.back().loss.total));
    state_->pinn = std::make_unique<PinnModel>(std::move(m));
  }
  return *state_->pinn;
}

double Workbench::y_for_lambda(double lambda, Method method) {
  const double x0 = cfg_.model.x0;
  switch (method) {
    case Method::Lagrange:
      return lagrange().y_for_lambda(x0, lambda);
    case Method::Mc:
      return optimize_y(lambda, x0, pool(), cfg_.sim, utility()).y_star;
    case Method::Pinn:
      return solve_y_star(lambda, x0, pinn()).y;
  }
  return kNaN;
}

namespace {

LambdaGrid method_grid(Workbench& wb, double x0, Method method) {
  const ExperimentConfig& cfg = wb.config();
  switch (method) {
    case Method::Lagrange: {
      // Same multipliers as the simulation grid, each solved by quadrature.
      const LagrangeSolver& ls = wb.lagrange();
      const int J = cfg.sim.lambda_grid_size;
      LambdaGrid g;
      g.x0 = x0;
      g.points.resize(J);
      parallel_for(static_cast<std::size_t>(J), [&](std::size_t j) {
        SweepPoint& pt = g.points[j];
        pt.lambda = cfg.sim.lambda_max * static_cast<double>(j) / (J - 1);
        pt.y_star = ls.y_for_lambda(x0, pt.lambda);
        const WealthStats st = ls.dual_stats(pt.y_star, pt.lambda);
        pt.est.u = st.u;
        pt.est.u_c = st.u_c;
        pt.est.h = st.p_at_least_L;
        pt.est.p_at_L = st.p_at_L;
        pt.est.p_at_0 = st.p_at_0;
      });
      for (int j = 1; j < J; ++j) {
        if (g.points[j].est.h < g.points[j - 1].est.h) g.h_monotone = false;
      }
      return g;
    }
    case Method::Mc:
      return lambda_grid(x0, wb.pool(), cfg.sim, wb.utility());
    case Method::Pinn:
      return coupled_solve(x0, 1.0, wb.pinn(), wb.pool(), wb.utility(), cfg.sim.lambda_grid_size)
          .grid;
  }
  return {};
}

}  // namespace

SolveRecord Workbench::solve(double epsilon, Method method) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw InvalidParameter("epsilon must lie in [0, 1]");
  const double x0 = cfg_.model.x0;
  if (method == Method::Lagrange) {
    const Solution s = lagrange().solve(x0, epsilon);
    SolveRecord r;
    r.method = method;
    r.epsilon = epsilon;
    r.x0 = x0;
    r.feasible = s.feasibility != Feasibility::Infeasible;
    r.x_hat = s.x_hat;
    r.lambda_star = s.lambda_star;
    r.y_star = s.y0;
    r.u = s.u;
    r.u_c = s.u_c;
    r.p_at_L = s.p_at_L;
    r.p_at_0 = s.p_at_0;
    r.p_at_least_L = s.p_at_least_L;
    return r;
  }
  const auto key = std::make_pair(static_cast<int>(method), x0);
  auto it = state_->grids.find(key);
  if (it == state_->grids.end()) it = state_->grids.emplace(key, method_grid(*this, x0, method)).first;
  return from_mc(method, invert_grid(it->second, epsilon), lagrange().x_hat(epsilon));
}

int cmd_solve(const ExperimentConfig& cfg, double epsilon, Method method, std::ostream& out,
              std::ostream* progress) {
  Workbench wb(cfg, progress);
  const fs::path dir = prepare_output(cfg);
  const SolveRecord r = wb.solve(epsilon, method);
  const std::string name = "solve_" + to_string(method) + ".json";
  const std::string text = record_json(r).dump(2) + "\n";
  write_file(dir / name, text);
  out << text;
  write_manifest(cfg, "solve", {{"epsilon", epsilon}, {"method", to_string(method)}}, {name});
  return r.feasible ? kExitOk : kExitInfeasible;
}

int cmd_sweep(const ExperimentConfig& cfg, Method method, std::ostream* progress) {
  Workbench wb(cfg, progress);
  const fs::path dir = prepare_output(cfg);
  const auto& grid = cfg.epsilon_grid;
  std::vector<SolveRecord> rows(grid.size());
  if (method == Method::Lagrange) {
    wb.lagrange();  // build before the workers share it
    parallel_for(grid.size(), [&](std::size_t i) { rows[i] = wb.solve(grid[i], method); });
  } else {
    for (std::size_t i = 0; i < grid.size(); ++i) rows[i] = wb.solve(grid[i], method);
  }
  CsvWriter csv({"epsilon", "status", "lambda_star", "y_star", "u_c", "u", "p_at_least_L",
                 "p_at_L", "p_at_0"});
  bool all_feasible = true;
  for (const SolveRecord& r : rows) {
    all_feasible = all_feasible && r.feasible;
    csv.cell(r.epsilon).cell(status_of(r)).cell(r.lambda_star).cell(r.y_star).cell(r.u_c).cell(r.u)
        .cell(r.p_at_least_L).cell(r.p_at_L).cell(r.p_at_0);
    csv.end_row();
  }
  const std::string name = "sweep_" + to_string(method) + ".csv";
  write_file(dir / name, csv.text());
  write_manifest(cfg, "sweep", {{"method", to_string(method)}}, {name});
  return all_feasible ? kExitOk : kExitInfeasible;
}

int cmd_dist(const ExperimentConfig& cfg, Method method, std::ostream* progress) {
  Workbench wb(cfg, progress);
  const fs::path dir = prepare_output(cfg);
  const SamplePool& pool = wb.pool();
  const ConcavifiedUtility& cu = wb.utility();
  const double L = cfg.model.L;
  const double M = static_cast<double>(pool.size());

  CsvWriter hist({"lambda", "kind", "lo", "hi", "count", "frequency"});
  CsvWriter summary({"lambda", "y_star", "envelope_case", "p_at_0", "p_at_L", "support_min",
                     "knot", "support_max"});
  for (double lambda : cfg.dist_lambdas) {
    const double y = wb.y_for_lambda(lambda, method);
    const EnvelopeCase c = cu.envelope_case(lambda);
    std::size_t at0 = 0;
    std::size_t atL = 0;
    std::vector<double> cont;
    for (double zeta : pool.zeta_terminal) {
      const double x = cu.x_star(y * zeta, c);
      if (x == 0.0) {
        ++at0;
      } else if (x == L) {
        ++atL;
      } else {
        cont.push_back(x);
      }
    }
    const bool one = c.tag == EnvelopeTag::OneSegment;
    const double knot = one ? c.z_tilde0 : cu.z_tilde();
    double lo = kNaN;
    double hi = kNaN;
    if (!cont.empty()) {
      lo = *std::min_element(cont.begin(), cont.end());
      hi = *std::max_element(cont.begin(), cont.end());
    }
    summary.cell(lambda).cell(y).cell(one ? "one_segment" : "two_segment").cell(at0 / M)
        .cell(atL / M).cell(lo).cell(knot).cell(hi);
    summary.end_row();

    hist.cell(lambda).cell("atom").cell(0.0).cell(0.0).cell(fmt6(static_cast<double>(at0)))
        .cell(at0 / M);
    hist.end_row();
    hist.cell(lambda).cell("atom").cell(L).cell(L).cell(fmt6(static_cast<double>(atL))).cell(atL / M);
    hist.end_row();
    if (cont.empty()) continue;
    // Log-spaced bins from the knot-side minimum to the largest sample.
    const int B = cfg.dist_bins;
    const double a = std::log(lo);
    const double b = std::log(hi);
    std::vector<std::size_t> counts(B, 0);
    for (double x : cont) {
      int k = b > a ? static_cast<int>((std::log(x) - a) / (b - a) * B) : 0;
      counts[std::clamp(k, 0, B - 1)]++;
    }
    for (int k = 0; k < B; ++k) {
      const double e0 = k == 0 ? lo : std::exp(a + (b - a) * k / B);
      const double e1 = k == B - 1 ? hi : std::exp(a + (b - a) * (k + 1) / B);
      hist.cell(lambda).cell("bin").cell(e0).cell(e1).cell(fmt6(static_cast<double>(counts[k])))
          .cell(counts[k] / M);
      hist.end_row();
    }
  }
  const std::string hname = "dist_" + to_string(method) + ".csv";
  const std::string sname = "dist_" + to_string(method) + "_summary.csv";
  write_file(dir / hname, hist.text());
  write_file(dir / sname, summary.text());
  write_manifest(cfg, "dist", {{"method", to_string(method)}}, {hname, sname});
  return kExitOk;
}

int cmd_feasibility(const ExperimentConfig& cfg, Method method, std::ostream* progress) {
  Workbench wb(cfg, progress);
  const fs::path dir = prepare_output(cfg);
  const double eps = cfg.feasibility_epsilon;
  const LagrangeSolver& ls = wb.lagrange();
  const double x_hat = ls.x_hat(eps);

  CsvWriter curves({"x0", "lambda", "y_star", "constraint", "u_c", "full_value"});
  CsvWriter summary({"x0", "epsilon", "x_hat", "classification", "status", "lambda_star"});
  for (double x0 : cfg.feasibility_x0) {
    log(progress, "x0 = " + fmt6(x0));
    const LambdaGrid g = method_grid(wb, x0, method);
    for (const SweepPoint& pt : g.points) {
      curves.cell(x0).cell(pt.lambda).cell(pt.y_star).cell(pt.est.h).cell(pt.est.u_c)
          .cell(pt.est.u_c - pt.lambda * (1.0 - eps));
      curves.end_row();
    }
    const McSolution s = invert_grid(g, eps);
    summary.cell(x0).cell(eps).cell(x_hat).cell(to_string(ls.classify_feasibility(x0, eps)))
        .cell(s.feasible ? "ok" : "infeasible").cell(s.lambda_star);
    summary.end_row();
  }
  const std::string cname = "feasibility_" + to_string(method) + ".csv";
  const std::string sname = "feasibility_" + to_string(method) + "_summary.csv";
  write_file(dir / cname, curves.text());
  write_file(dir / sname, summary.text());
  write_manifest(cfg, "feasibility", {{"method", to_string(method)}}, {cname, sname});
  return kExitOk;
}

int cmd_table1(const ExperimentConfig& cfg, std::ostream* progress) {
  Workbench wb(cfg, progress);
  const fs::path dir = prepare_output(cfg);
  CsvWriter csv({"epsilon", "method", "status", "lambda_star", "y_star", "u", "u_c", "p_at_L",
                 "p_at_0", "ref_lambda_star", "ref_y_star", "ref_u", "ref_u_c",
                 "ref_p_at_L", "ref_p_at_0", "diff_lambda_star", "diff_y_star", "diff_u",
                 "diff_u_c", "diff_p_at_L", "diff_p_at_0"});
  bool numerical = false;
  for (const RefRow& p : kRefTable) {
    SolveRecord r;
    std::string status;
    try {
      log(progress, to_string(p.method) + " eps=" + fmt6(p.epsilon));
      r = wb.solve(p.epsilon, p.method);
      status = status_of(r);
    } catch (const NumericalFailure& e) {
      numerical = true;
      status = "numerical_failure";
      r = SolveRecord{p.method, p.epsilon, cfg.model.x0, false, kNaN, kNaN, kNaN, kNaN, kNaN,
                      kNaN,     kNaN,      kNaN,         kNaN};
      log(progress, std::string("  failed: ") + e.what());
    } catch (const std::exception& e) {
      status = "error";
      r = SolveRecord{p.method, p.epsilon, cfg.model.x0, false, kNaN, kNaN, kNaN, kNaN, kNaN,
                      kNaN,     kNaN,      kNaN,         kNaN};
      log(progress, std::string("  failed: ") + e.what());
    }
    csv.cell(p.epsilon).cell(to_string(p.method)).cell(status).cell(r.lambda_star).cell(r.y_star)
        .cell(r.u).cell(r.u_c).cell(r.p_at_L).cell(r.p_at_0);
    csv.cell(p.lambda_star).cell(p.y_star).cell(p.u).cell(p.u_c).cell(p.p_at_L).cell(p.p_at_0);
    csv.cell(r.lambda_star - p.lambda_star).cell(r.y_star - p.y_star).cell(r.u - p.u)
        .cell(r.u_c - p.u_c).cell(r.p_at_L - p.p_at_L).cell(r.p_at_0 - p.p_at_0);
    csv.end_row();
  }
  write_file(dir / "table1.csv", csv.text());
  write_manifest(cfg, "table1", ordered_json::object(), {"table1.csv"});
  return numerical ? kExitNumerical : kExitOk;
}

}  // namespace qvar
