/// @file  serialize.hpp
/// @brief Model persistence: matrix text files plus a JSON metadata file
///        recording the configuration and objective trace.

#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>

#include "mvml/solver.hpp"

namespace mvml {

nlohmann::json config_to_json(const SolverConfig& cfg);
SolverConfig config_from_json(const nlohmann::json& j);

/// Writes transform.txt, metric_<t>.txt and model.json into dir
/// (created if missing).
void save_model(const std::filesystem::path& dir, const TrainedModel& model);
TrainedModel load_model(const std::filesystem::path& dir);

}  // namespace mvml
