#ifndef COWSYNTH_PREPROCESS_HPP
#define COWSYNTH_PREPROCESS_HPP

#include <cstdint>

#include "cowsynth/volume.hpp"

namespace cow {

// Binary mask obtained by dilating a vessel segmentation.
struct AttentionMask {
    BinaryMask mask;
    int radius = 0;
};

// Elementwise product of an attention mask with the (normalised) T2 volume.
struct AttentionMap {
    Volume map;
    int radius = 0;
};

// Centered spatial crop, slice count unchanged. When source-target is odd
// the extra pixel is dropped from the high-index side.
Volume center_crop(const Volume& v, int target_h, int target_w);
BinaryMask center_crop(const BinaryMask& m, int target_h, int target_w);

// Per-volume min-max scaling to [0,1]; constant volumes map to all zeros.
Volume normalize_intensity(const Volume& v);

// 2D binary dilation of one slice with a square (Chebyshev) structuring
// element of size (2*radius+1)^2. in/out are h*w arrays and must not alias.
void dilate_slice(const uint8_t* in, uint8_t* out, int h, int w, int radius);

// Per-slice dilation of a full mask; slices are independent.
AttentionMask dilate_mask(const BinaryMask& seg, int radius);

// dilate_mask(seg, radius) * t2, elementwise; zero outside the mask.
AttentionMap make_attention_map(const Volume& t2, const BinaryMask& seg, int radius);

// Positive-voxel fraction in [0,1].
double mask_coverage(const AttentionMask& mask);

}  // namespace cow

#endif
