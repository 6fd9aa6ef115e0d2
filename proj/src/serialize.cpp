#include "mvml/serialize.hpp"

#include <fstream>

#include "mvml/io.hpp"

namespace mvml {

nlohmann::json config_to_json(const SolverConfig& cfg) {
  nlohmann::json j;
  j["embed_dim"] = cfg.embed_dim;
  j["beta"] = cfg.beta;
  j["gamma"] = cfg.gamma;
  j["eta0"] = cfg.eta0;
  j["m_max"] = cfg.m_max;
  j["outer_max"] = cfg.outer_max;
  j["rel_tol"] = cfg.rel_tol;
  j["mode"] = to_string(cfg.mode);
  j["baseline_param"] = to_string(cfg.baseline_param);
  j["seed"] = cfg.seed;
  j["deterministic"] = cfg.deterministic;
  j["threads"] = cfg.threads;
  j["divergence_factor"] = cfg.divergence_factor;
  j["step_reset_per_phase"] = cfg.step_reset_per_phase;
  j["freeze_transform"] = cfg.freeze_transform;
  return j;
}

SolverConfig config_from_json(const nlohmann::json& j) {
  SolverConfig cfg;
  try {
    cfg.embed_dim = j.value("embed_dim", cfg.embed_dim);
    cfg.beta = j.value("beta", cfg.beta);
    cfg.gamma = j.value("gamma", cfg.gamma);
    cfg.eta0 = j.value("eta0", cfg.eta0);
    cfg.m_max = j.value("m_max", cfg.m_max);
    cfg.outer_max = j.value("outer_max", cfg.outer_max);
    cfg.rel_tol = j.value("rel_tol", cfg.rel_tol);
    if (j.contains("mode")) cfg.mode = train_mode_from_string(j["mode"].get<std::string>());
    if (j.contains("baseline_param")) {
      cfg.baseline_param = baseline_param_from_string(j["baseline_param"].get<std::string>());
    }
    cfg.seed = j.value("seed", cfg.seed);
    cfg.deterministic = j.value("deterministic", cfg.deterministic);
    cfg.threads = j.value("threads", cfg.threads);
    cfg.divergence_factor = j.value("divergence_factor", cfg.divergence_factor);
    cfg.step_reset_per_phase = j.value("step_reset_per_phase", cfg.step_reset_per_phase);
    cfg.freeze_transform = j.value("freeze_transform", cfg.freeze_transform);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad config json: ") + e.what());
  }
  return cfg;
}

void save_model(const std::filesystem::path& dir, const TrainedModel& model) {
  std::filesystem::create_directories(dir);
  save_matrix(dir / "transform.txt", model.transform.matrix);
  for (Index t = 0; t < model.num_views(); ++t) {
    save_matrix(dir / ("metric_" + std::to_string(t) + ".txt"), model.metrics[t].matrix);
  }
  nlohmann::json j;
  j["version"] = kVersion;
  j["mode"] = to_string(model.mode);
  j["baseline_param"] = to_string(model.baseline_param);
  j["num_views"] = model.num_views();
  j["identity_transform"] = model.identity_transform;
  j["config"] = config_to_json(model.config);
  j["objective_trace"] = model.objective_trace;
  std::ofstream out(dir / "model.json");
  if (!out) throw DataError("cannot open for writing: " + (dir / "model.json").string());
  out << j.dump(2) << '\n';
}

TrainedModel load_model(const std::filesystem::path& dir) {
  std::ifstream in(dir / "model.json");
  if (!in) throw DataError("cannot open for reading: " + (dir / "model.json").string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError((dir / "model.json").string() + ": " + e.what());
  }
  TrainedModel model;
  model.mode = train_mode_from_string(j.at("mode").get<std::string>());
  model.baseline_param = baseline_param_from_string(j.at("baseline_param").get<std::string>());
  model.identity_transform = j.value("identity_transform", false);
  model.config = config_from_json(j.at("config"));
  model.objective_trace = j.at("objective_trace").get<std::vector<double>>();
  model.transform = GlobalTransform(load_matrix(dir / "transform.txt"));
  const auto num_views = j.at("num_views").get<Index>();
  for (Index t = 0; t < num_views; ++t) {
    model.metrics.emplace_back(load_matrix(dir / ("metric_" + std::to_string(t) + ".txt")),
                               static_cast<int>(t));
  }
  return model;
}

}  // namespace mvml
