#include "cowsynth/inference.hpp"

#include <algorithm>
#include <stdexcept>

namespace cow {

InferenceResult infer_volume(nn::SynthModel<float>& model, const Volume& t2,
                             double threshold, int batch_slices) {
    if (t2.depth < 1) throw std::invalid_argument("infer_volume: empty volume");
    if (batch_slices < 1) throw std::invalid_argument("batch_slices must be >= 1");

    InferenceResult r;
    r.recon = Volume(t2.depth, t2.height, t2.width);
    r.seg_prob = Volume(t2.depth, t2.height, t2.width);
    r.seg = BinaryMask(t2.depth, t2.height, t2.width);
    r.recon.spacing = r.seg_prob.spacing = r.seg.spacing = t2.spacing;
    r.recon.id = r.seg_prob.id = r.seg.id = t2.id;

    size_t plane = static_cast<size_t>(t2.height) * t2.width;
    float thr = static_cast<float>(threshold);
    for (int z0 = 0; z0 < t2.depth; z0 += batch_slices) {
        int n = std::min(batch_slices, t2.depth - z0);
        nn::Tensor<float> x(n, 1, t2.height, t2.width);
        std::copy_n(t2.data.data() + z0 * plane, n * plane, x.data.data());
        auto out = model.forward(x, /*with_synthesis=*/true);
        std::copy_n(out.recon.data.data(), n * plane, r.recon.data.data() + z0 * plane);
        std::copy_n(out.seg.data.data(), n * plane, r.seg_prob.data.data() + z0 * plane);
        for (size_t i = 0; i < n * plane; ++i)
            r.seg.data[z0 * plane + i] = out.seg.data[i] > thr ? 1 : 0;
    }
    return r;
}

std::vector<EvalRecord> evaluate_split(nn::SynthModel<float>& model,
                                       const DatasetManifest& m, SplitTag tag,
                                       double threshold) {
    std::vector<EvalRecord> records;
    for (const auto& e : m.split(tag)) {
        PairedSample s = load_sample(e);
        InferenceResult r = infer_volume(model, s.t2, threshold);
        EvalRecord rec;
        rec.id = e.id;
        rec.dice = dice_score(r.seg, s.seg);
        rec.hd95 = hd95(r.seg, s.seg);
        records.push_back(std::move(rec));
    }
    return records;
}

}  // namespace cow
