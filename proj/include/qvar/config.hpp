#pragma once

// Experiment configuration: one JSON document whose sections override the
// embedded defaults key by key. An empty document gives the reference setup.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qvar/dual_mc.hpp"
#include "qvar/model.hpp"
#include "qvar/pinn.hpp"
#include "qvar/utility.hpp"

namespace qvar {

struct ExperimentConfig {
  ModelParams model;
  UtilitySpec utility;
  QuadratureSpec quadrature;
  SimConfig sim;
  PinnConfig pinn;
  std::filesystem::path output_dir = "out";
  std::vector<double> epsilon_grid;              // sweep; default 0, 0.025, ..., 1
  std::vector<double> dist_lambdas{0.0, 1.5, 2.5};
  int dist_bins = 40;
  double feasibility_epsilon = 0.2;
  std::vector<double> feasibility_x0{0.6, 0.66, 0.73, 0.8};
  std::optional<std::filesystem::path> pinn_checkpoint;  // reuse a trained model

  ExperimentConfig();

  /// Throws InvalidParameter on the first violated invariant.
  void validate() const;
};

/// Parses a JSON document. Unknown keys are rejected so typos do not silently
/// fall back to defaults.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Fully resolved configuration as pretty-printed JSON.
std::string dump_config(const ExperimentConfig& cfg);

}  // namespace qvar
