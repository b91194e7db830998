#include "cowsynth/run_config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

using nlohmann::json;

namespace cow {
namespace {

void reject_unknown(const json& j, const std::set<std::string>& known,
                    const std::string& where) {
    if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw std::invalid_argument("unknown key '" + it.key() + "' in " + where);
}

}  // namespace

json architecture_to_json(const nn::ArchitectureConfig& c) {
    return json{{"input_h", c.input_h},
                {"input_w", c.input_w},
                {"base_channels", c.base_channels},
                {"channel_multipliers", c.channel_multipliers},
                {"latent_residual_blocks", c.latent_residual_blocks},
                {"convs_per_block", c.convs_per_block},
                {"kernel_size", c.kernel_size},
                {"leaky_slope", c.leaky_slope},
                {"seg_output_activation", c.seg_output_activation},
                {"recon_output_activation", c.recon_output_activation},
                {"modalities", c.modalities}};
}

nn::ArchitectureConfig architecture_from_json(const json& j) {
    reject_unknown(j,
                   {"input_h", "input_w", "base_channels", "channel_multipliers",
                    "latent_residual_blocks", "convs_per_block", "kernel_size",
                    "leaky_slope", "seg_output_activation", "recon_output_activation",
                    "modalities"},
                   "architecture config");
    nn::ArchitectureConfig c;
    c.input_h = j.value("input_h", c.input_h);
    c.input_w = j.value("input_w", c.input_w);
    c.base_channels = j.value("base_channels", c.base_channels);
    if (j.contains("channel_multipliers"))
        c.channel_multipliers = j.at("channel_multipliers").get<std::array<int, 4>>();
    c.latent_residual_blocks = j.value("latent_residual_blocks", c.latent_residual_blocks);
    c.convs_per_block = j.value("convs_per_block", c.convs_per_block);
    c.kernel_size = j.value("kernel_size", c.kernel_size);
    c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
    c.seg_output_activation = j.value("seg_output_activation", c.seg_output_activation);
    c.recon_output_activation = j.value("recon_output_activation", c.recon_output_activation);
    if (j.contains("modalities"))
        c.modalities = j.at("modalities").get<std::vector<std::string>>();
    return c;
}

json training_to_json(const TrainingConfig& c) {
    return json{{"batch_size", c.batch_size},
                {"learning_rate", c.learning_rate},
                {"max_epochs", c.max_epochs},
                {"momentum", c.momentum},
                {"dilation_radius", c.dilation_radius},
                {"seg_threshold", c.seg_threshold},
                {"early_stop",
                 {{"window_epochs", c.early_stop.window_epochs},
                  {"slope_tol", c.early_stop.slope_tol}}},
                {"seed", c.seed},
                {"phase", c.phase},
                {"dice_smooth", c.dice_smooth},
                {"use_local_loss", c.use_local_loss}};
}

TrainingConfig training_from_json(const json& j) {
    reject_unknown(j,
                   {"batch_size", "learning_rate", "max_epochs", "momentum",
                    "dilation_radius", "seg_threshold", "early_stop", "seed", "phase",
                    "dice_smooth", "use_local_loss"},
                   "training config");
    TrainingConfig c;
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.momentum = j.value("momentum", c.momentum);
    c.dilation_radius = j.value("dilation_radius", c.dilation_radius);
    c.seg_threshold = j.value("seg_threshold", c.seg_threshold);
    if (j.contains("early_stop")) {
        const json& e = j.at("early_stop");
        reject_unknown(e, {"window_epochs", "slope_tol"}, "early_stop config");
        c.early_stop.window_epochs = e.value("window_epochs", c.early_stop.window_epochs);
        c.early_stop.slope_tol = e.value("slope_tol", c.early_stop.slope_tol);
    }
    c.seed = j.value("seed", c.seed);
    c.phase = j.value("phase", c.phase);
    c.dice_smooth = j.value("dice_smooth", c.dice_smooth);
    c.use_local_loss = j.value("use_local_loss", c.use_local_loss);
    return c;
}

json phantom_to_json(const PhantomConfig& c) {
    return json{{"depth", c.depth},
                {"height", c.height},
                {"width", c.width},
                {"spacing", c.spacing},
                {"void_contrast", c.void_contrast},
                {"noise_sigma", c.noise_sigma},
                {"branches", c.branches},
                {"tube_radius", c.tube_radius},
                {"decoys", c.decoys},
                {"seed", c.seed}};
}

PhantomConfig phantom_from_json(const json& j) {
    reject_unknown(j,
                   {"depth", "height", "width", "spacing", "void_contrast",
                    "noise_sigma", "branches", "tube_radius", "decoys", "seed"},
                   "phantom config");
    PhantomConfig c;
    c.depth = j.value("depth", c.depth);
    c.height = j.value("height", c.height);
    c.width = j.value("width", c.width);
    if (j.contains("spacing"))
        c.spacing = j.at("spacing").get<std::array<float, 3>>();
    c.void_contrast = j.value("void_contrast", c.void_contrast);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.branches = j.value("branches", c.branches);
    c.tube_radius = j.value("tube_radius", c.tube_radius);
    c.decoys = j.value("decoys", c.decoys);
    c.seed = j.value("seed", c.seed);
    return c;
}

json run_config_to_json(const RunConfig& c) {
    return json{{"architecture", architecture_to_json(c.arch)},
                {"training", training_to_json(c.training)},
                {"phantom", phantom_to_json(c.phantom)},
                {"paths",
                 {{"data_dir", c.paths.data_dir},
                  {"out_dir", c.paths.out_dir},
                  {"checkpoint", c.paths.checkpoint}}}};
}

RunConfig run_config_from_json(const json& j) {
    reject_unknown(j, {"architecture", "training", "phantom", "paths"}, "run config");
    RunConfig c;
    if (j.contains("architecture")) c.arch = architecture_from_json(j.at("architecture"));
    if (j.contains("training")) c.training = training_from_json(j.at("training"));
    if (j.contains("phantom")) c.phantom = phantom_from_json(j.at("phantom"));
    if (j.contains("paths")) {
        const json& p = j.at("paths");
        reject_unknown(p, {"data_dir", "out_dir", "checkpoint"}, "paths config");
        c.paths.data_dir = p.value("data_dir", "");
        c.paths.out_dir = p.value("out_dir", "");
        c.paths.checkpoint = p.value("checkpoint", "");
    }
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config file not found: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::invalid_argument("config " + path + " is not valid JSON: " + e.what());
    }
    try {
        return run_config_from_json(j);
    } catch (const json::exception& e) {
        throw std::invalid_argument("config " + path + ": " + e.what());
    }
}

void save_run_config(const RunConfig& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << run_config_to_json(c).dump(2) << "\n";
    if (!out.good()) throw std::runtime_error("write failure: " + path);
}

}  // namespace cow
