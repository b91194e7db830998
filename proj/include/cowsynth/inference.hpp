#ifndef COWSYNTH_INFERENCE_HPP
#define COWSYNTH_INFERENCE_HPP

#include <vector>

#include "cowsynth/manifest.hpp"
#include "cowsynth/metrics.hpp"
#include "cowsynth/nn/model.hpp"
#include "cowsynth/volume.hpp"

namespace cow {

struct InferenceResult {
    Volume recon;      // synthesized T2 reconstruction
    Volume seg_prob;   // vessel probabilities in [0,1]
    BinaryMask seg;    // seg_prob thresholded
};

// Slice-wise forward pass over a whole volume; spacing and id carry over.
InferenceResult infer_volume(nn::SynthModel<float>& model, const Volume& t2,
                             double threshold = 0.5, int batch_slices = 8);

// Dice + hd95 per case of one manifest split.
std::vector<EvalRecord> evaluate_split(nn::SynthModel<float>& model,
                                       const DatasetManifest& m, SplitTag tag,
                                       double threshold = 0.5);

}  // namespace cow

#endif
