#ifndef COWSYNTH_RUN_CONFIG_HPP
#define COWSYNTH_RUN_CONFIG_HPP

#include <string>

#include "cowsynth/nn/model.hpp"
#include "cowsynth/phantom.hpp"
#include "cowsynth/training.hpp"
#include "json.hpp"

namespace cow {

struct RunPaths {
    std::string data_dir;
    std::string out_dir;
    std::string checkpoint;
};

// Everything a run needs, serialisable as one JSON document. Every command
// writes its resolved copy next to its outputs so the run can be replayed.
struct RunConfig {
    nn::ArchitectureConfig arch = nn::desk_scale_config();
    TrainingConfig training;
    PhantomConfig phantom;
    RunPaths paths;
};

nlohmann::json architecture_to_json(const nn::ArchitectureConfig& c);
nn::ArchitectureConfig architecture_from_json(const nlohmann::json& j);
nlohmann::json training_to_json(const TrainingConfig& c);
TrainingConfig training_from_json(const nlohmann::json& j);
nlohmann::json phantom_to_json(const PhantomConfig& c);
PhantomConfig phantom_from_json(const nlohmann::json& j);

nlohmann::json run_config_to_json(const RunConfig& c);
// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);

RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& c, const std::string& path);

}  // namespace cow

#endif
