#ifndef COWSYNTH_VOLUME_HPP
#define COWSYNTH_VOLUME_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace cow {

// 3D scalar field, slice-major: data[(z*height + y)*width + x].
// Spacing is (dz, dy, dx) in mm.
struct Volume {
    int depth = 0;
    int height = 0;
    int width = 0;
    std::array<float, 3> spacing{1.f, 1.f, 1.f};
    std::string id;
    std::vector<float> data;

    Volume() = default;
    Volume(int d, int h, int w, float fill = 0.f)
        : depth(d), height(h), width(w),
          data(static_cast<size_t>(d) * h * w, fill) {}

    size_t size() const { return data.size(); }
    bool same_shape(const Volume& o) const {
        return depth == o.depth && height == o.height && width == o.width;
    }
    float& at(int z, int y, int x) {
        return data[(static_cast<size_t>(z) * height + y) * width + x];
    }
    float at(int z, int y, int x) const {
        return data[(static_cast<size_t>(z) * height + y) * width + x];
    }
};

// Binary companion of a Volume; same layout, values are exactly 0 or 1.
struct BinaryMask {
    int depth = 0;
    int height = 0;
    int width = 0;
    std::array<float, 3> spacing{1.f, 1.f, 1.f};
    std::string id;
    std::vector<uint8_t> data;

    BinaryMask() = default;
    BinaryMask(int d, int h, int w, uint8_t fill = 0)
        : depth(d), height(h), width(w),
          data(static_cast<size_t>(d) * h * w, fill) {}

    size_t size() const { return data.size(); }
    bool same_shape(const BinaryMask& o) const {
        return depth == o.depth && height == o.height && width == o.width;
    }
    bool same_shape(const Volume& o) const {
        return depth == o.depth && height == o.height && width == o.width;
    }
    uint8_t& at(int z, int y, int x) {
        return data[(static_cast<size_t>(z) * height + y) * width + x];
    }
    uint8_t at(int z, int y, int x) const {
        return data[(static_cast<size_t>(z) * height + y) * width + x];
    }
    size_t count_positive() const {
        size_t n = 0;
        for (uint8_t v : data) n += (v != 0);
        return n;
    }
};

enum class SplitTag { Train, Val, Test };

const char* to_string(SplitTag t);
SplitTag split_tag_from_string(const std::string& s);

// Registered (T2, vessel segmentation) pair. Shapes must match.
struct PairedSample {
    Volume t2;
    BinaryMask seg;
    SplitTag split = SplitTag::Train;
};

}  // namespace cow

#endif
