#include "cowsynth/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace cow {
namespace {

void crop_offsets(int src_h, int src_w, int tgt_h, int tgt_w, int* off_y, int* off_x) {
    if (tgt_h < 1 || tgt_w < 1)
        throw std::invalid_argument("crop target must be at least 1x1");
    if (tgt_h > src_h || tgt_w > src_w)
        throw std::invalid_argument("crop target larger than source");
    // (src - tgt) / 2 rounds down: the extra pixel goes to the high side
    *off_y = (src_h - tgt_h) / 2;
    *off_x = (src_w - tgt_w) / 2;
}

template <typename V>
V crop_impl(const V& v, int target_h, int target_w) {
    int oy, ox;
    crop_offsets(v.height, v.width, target_h, target_w, &oy, &ox);
    V out(v.depth, target_h, target_w);
    out.spacing = v.spacing;
    out.id = v.id;
    for (int z = 0; z < v.depth; ++z)
        for (int y = 0; y < target_h; ++y)
            for (int x = 0; x < target_w; ++x)
                out.at(z, y, x) = v.at(z, oy + y, ox + x);
    return out;
}

}  // namespace

Volume center_crop(const Volume& v, int target_h, int target_w) {
    return crop_impl(v, target_h, target_w);
}

BinaryMask center_crop(const BinaryMask& m, int target_h, int target_w) {
    return crop_impl(m, target_h, target_w);
}

Volume normalize_intensity(const Volume& v) {
    Volume out = v;
    float lo = std::numeric_limits<float>::infinity();
    float hi = -std::numeric_limits<float>::infinity();
    for (float x : v.data) {
        if (!std::isfinite(x))
            throw std::invalid_argument("non-finite intensity in volume '" + v.id + "'");
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    if (v.data.empty()) return out;
    float range = hi - lo;
    if (range <= 0.f) {
        std::fill(out.data.begin(), out.data.end(), 0.f);
        return out;
    }
    // divide rather than multiply by the reciprocal: the extrema then map
    // to exactly 0 and 1
    for (float& x : out.data) x = (x - lo) / range;
    return out;
}

void dilate_slice(const uint8_t* in, uint8_t* out, int h, int w, int radius) {
    if (radius < 0) throw std::invalid_argument("dilation radius must be >= 0");
    if (radius == 0) {
        std::copy(in, in + static_cast<size_t>(h) * w, out);
        return;
    }
    // square SE is separable: horizontal segment then vertical segment
    std::vector<uint8_t> tmp(static_cast<size_t>(h) * w, 0);
    for (int y = 0; y < h; ++y) {
        const uint8_t* row = in + static_cast<size_t>(y) * w;
        uint8_t* trow = tmp.data() + static_cast<size_t>(y) * w;
        for (int x = 0; x < w; ++x) {
            if (!row[x]) continue;
            int x0 = std::max(0, x - radius);
            int x1 = std::min(w - 1, x + radius);
            std::fill(trow + x0, trow + x1 + 1, uint8_t(1));
        }
    }
    std::fill(out, out + static_cast<size_t>(h) * w, uint8_t(0));
    for (int y = 0; y < h; ++y) {
        const uint8_t* trow = tmp.data() + static_cast<size_t>(y) * w;
        int y0 = std::max(0, y - radius);
        int y1 = std::min(h - 1, y + radius);
        for (int x = 0; x < w; ++x) {
            if (!trow[x]) continue;
            for (int yy = y0; yy <= y1; ++yy)
                out[static_cast<size_t>(yy) * w + x] = 1;
        }
    }
}

AttentionMask dilate_mask(const BinaryMask& seg, int radius) {
    if (radius < 0) throw std::invalid_argument("dilation radius must be >= 0");
    AttentionMask am;
    am.radius = radius;
    am.mask = BinaryMask(seg.depth, seg.height, seg.width);
    am.mask.spacing = seg.spacing;
    am.mask.id = seg.id;
    size_t slice = static_cast<size_t>(seg.height) * seg.width;
    for (int z = 0; z < seg.depth; ++z)
        dilate_slice(seg.data.data() + z * slice, am.mask.data.data() + z * slice,
                     seg.height, seg.width, radius);
    return am;
}

AttentionMap make_attention_map(const Volume& t2, const BinaryMask& seg, int radius) {
    if (!seg.same_shape(t2))
        throw std::invalid_argument("t2/seg shape mismatch in make_attention_map");
    AttentionMask am = dilate_mask(seg, radius);
    AttentionMap out;
    out.radius = radius;
    out.map = Volume(t2.depth, t2.height, t2.width);
    out.map.spacing = t2.spacing;
    out.map.id = t2.id;
    for (size_t i = 0; i < t2.size(); ++i)
        out.map.data[i] = am.mask.data[i] ? t2.data[i] : 0.f;
    return out;
}

double mask_coverage(const AttentionMask& mask) {
    if (mask.mask.size() == 0) return 0.0;
    return static_cast<double>(mask.mask.count_positive()) /
           static_cast<double>(mask.mask.size());
}

}  // namespace cow
