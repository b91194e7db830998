#ifndef COWSYNTH_PHANTOM_HPP
#define COWSYNTH_PHANTOM_HPP

#include <array>
#include <cstdint>
#include <string>

#include "cowsynth/manifest.hpp"
#include "cowsynth/volume.hpp"

namespace cow {

// Synthetic T2 head slab with a circle-of-Willis-like vessel loop. Vessels
// appear as flow voids: darker than the surrounding tissue by
// void_contrast, with a softer one-pixel rim. Every case is a deterministic
// function of (seed, case_index).
struct PhantomConfig {
    int depth = 16;
    int height = 96;
    int width = 96;
    std::array<float, 3> spacing{1.2f, 0.8f, 0.8f};
    double void_contrast = 0.55;  // vessel intensity multiplier is 1 - this
    double noise_sigma = 0.05;
    int branches = 5;
    double tube_radius = 1.6;  // in-plane pixels
    int decoys = 5;            // dark non-vessel blobs (sinus/bone mimics)
    uint64_t seed = 7;

    void validate() const;
};

PairedSample generate_phantom(const PhantomConfig& cfg, int case_index);

// Writes <out_dir>/phantomNNN_{t2,seg}.nii.gz for n_cases cases plus a
// manifest.json splitting them with split_fracs. Regenerating into a fresh
// directory reproduces the files byte for byte.
DatasetManifest generate_dataset(const PhantomConfig& cfg, int n_cases,
                                 const std::string& out_dir,
                                 const std::array<double, 3>& split_fracs);

}  // namespace cow

#endif
