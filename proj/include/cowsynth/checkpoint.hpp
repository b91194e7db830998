#ifndef COWSYNTH_CHECKPOINT_HPP
#define COWSYNTH_CHECKPOINT_HPP

#include <cstdint>
#include <map>
#include <string>

#include "cowsynth/nn/model.hpp"

namespace cow {

// Extra per-parameter state saved alongside the weights (optimiser
// momentum buffers, keyed by parameter name).
using TensorMap = std::map<std::string, nn::Tensor<float>>;

struct CheckpointMeta {
    nn::ArchitectureConfig cfg;
    int phase = 1;
    int epoch = 0;
    double log_sigma1_sq = 0.0;
    double log_sigma2_sq = 0.0;
    uint64_t seed = 0;
};

// Binary weight archive at `path`, float32, bit-exact round-trip; JSON
// sidecar at `path` + ".json" with the architecture config, phase, epoch,
// uncertainty parameters, and seed.
void save_checkpoint(nn::SynthModel<float>& model, const std::string& path,
                     int epoch, const TensorMap& optimizer_state = {});

nn::SynthModel<float> load_checkpoint(const std::string& path,
                                      CheckpointMeta* meta_out = nullptr,
                                      TensorMap* optimizer_state_out = nullptr);

nn::ArchitectureConfig architecture_from_json_file(const std::string& path);

}  // namespace cow

#endif
