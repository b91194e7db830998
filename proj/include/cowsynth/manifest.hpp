#ifndef COWSYNTH_MANIFEST_HPP
#define COWSYNTH_MANIFEST_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cowsynth/volume.hpp"

namespace cow {

struct ManifestEntry {
    std::string id;
    std::string t2_path;
    std::string seg_path;
    SplitTag split = SplitTag::Train;
};

// Immutable after construction. Paths are stored relative to the manifest
// file location when possible and resolved on load.
struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    uint64_t seed = 0;

    std::vector<ManifestEntry> split(SplitTag tag) const;
    size_t count(SplitTag tag) const;
};

// Scans data_dir for <case>_t2.nii[.gz] / <case>_seg.nii[.gz] pairs and
// assigns split tags by seeded shuffle. Split sizes are round(frac * n) for
// train and val; test takes the remainder. Deterministic in (listing,
// fracs, seed). Throws on an empty directory or unmatched pairs.
DatasetManifest build_manifest(const std::string& data_dir,
                               const std::array<double, 3>& split_fracs,
                               uint64_t seed);

// Default fractions: 150/181 train, 20/181 val, 11/181 test.
std::array<double, 3> default_split_fracs();

void save_manifest(const DatasetManifest& m, const std::string& path);

// Verifies that every referenced file exists; throws naming the first
// missing case otherwise.
DatasetManifest load_manifest(const std::string& path);

// Loads the t2/seg pair of one entry from disk.
PairedSample load_sample(const ManifestEntry& e);

}  // namespace cow

#endif
