#include "cowsynth/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <stdexcept>

#include "cowsynth/nifti.hpp"
#include "cowsynth/preprocess.hpp"

namespace cow {
namespace {

constexpr double kPi = 3.14159265358979323846;

uint64_t mix_seed(uint64_t seed, uint64_t index) {
    // splitmix64 step keeps per-case streams independent
    uint64_t z = seed + (index + 1) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Smooth tissue background: coarse uniform grid, trilinear upsampling.
Volume smooth_background(const PhantomConfig& cfg, std::mt19937_64& rng) {
    const int cd = 4, ch = 7, cw = 7;
    std::vector<double> grid(cd * ch * cw);
    std::uniform_real_distribution<double> level(0.35, 0.75);
    for (auto& g : grid) g = level(rng);

    Volume bg(cfg.depth, cfg.height, cfg.width);
    auto at = [&](int z, int y, int x) { return grid[(z * ch + y) * cw + x]; };
    for (int z = 0; z < cfg.depth; ++z) {
        double gz = double(z) / (cfg.depth - 1) * (cd - 1);
        int z0 = std::min(int(gz), cd - 2);
        double fz = gz - z0;
        for (int y = 0; y < cfg.height; ++y) {
            double gy = double(y) / (cfg.height - 1) * (ch - 1);
            int y0 = std::min(int(gy), ch - 2);
            double fy = gy - y0;
            for (int x = 0; x < cfg.width; ++x) {
                double gx = double(x) / (cfg.width - 1) * (cw - 1);
                int x0 = std::min(int(gx), cw - 2);
                double fx = gx - x0;
                double c00 = at(z0, y0, x0) * (1 - fx) + at(z0, y0, x0 + 1) * fx;
                double c01 = at(z0, y0 + 1, x0) * (1 - fx) + at(z0, y0 + 1, x0 + 1) * fx;
                double c10 = at(z0 + 1, y0, x0) * (1 - fx) + at(z0 + 1, y0, x0 + 1) * fx;
                double c11 =
                    at(z0 + 1, y0 + 1, x0) * (1 - fx) + at(z0 + 1, y0 + 1, x0 + 1) * fx;
                double c0 = c00 * (1 - fy) + c01 * fy;
                double c1 = c10 * (1 - fy) + c11 * fy;
                bg.at(z, y, x) = float(c0 * (1 - fz) + c1 * fz);
            }
        }
    }
    return bg;
}

struct Vec3 {
    double z, y, x;
};

// Stamps all voxels within r_mm of p (physical distance) into the mask.
void stamp(BinaryMask& seg, const Vec3& p, double r_mm,
           const std::array<float, 3>& sp) {
    int z0 = std::max(0, int(std::ceil(p.z - r_mm / sp[0])));
    int z1 = std::min(seg.depth - 1, int(std::floor(p.z + r_mm / sp[0])));
    int y0 = std::max(0, int(std::ceil(p.y - r_mm / sp[1])));
    int y1 = std::min(seg.height - 1, int(std::floor(p.y + r_mm / sp[1])));
    int x0 = std::max(0, int(std::ceil(p.x - r_mm / sp[2])));
    int x1 = std::min(seg.width - 1, int(std::floor(p.x + r_mm / sp[2])));
    double r2 = r_mm * r_mm;
    for (int z = z0; z <= z1; ++z)
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                double dz = (z - p.z) * sp[0];
                double dy = (y - p.y) * sp[1];
                double dx = (x - p.x) * sp[2];
                if (dz * dz + dy * dy + dx * dx <= r2) seg.at(z, y, x) = 1;
            }
}

// Rasterises the arterial loop plus branch vessels as tubes.
BinaryMask vessel_tree(const PhantomConfig& cfg, std::mt19937_64& rng) {
    BinaryMask seg(cfg.depth, cfg.height, cfg.width);
    seg.spacing = cfg.spacing;
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    double cz = cfg.depth / 2.0 + (u01(rng) - 0.5) * 2.0;
    double cy = cfg.height / 2.0 + (u01(rng) - 0.5) * 8.0;
    double cx = cfg.width / 2.0 + (u01(rng) - 0.5) * 8.0;
    double ry = (0.17 + 0.06 * u01(rng)) * cfg.height;
    double rx = (0.17 + 0.06 * u01(rng)) * cfg.width;
    double amp_z = 1.0 + 1.2 * u01(rng);
    double phase = 2 * kPi * u01(rng);
    double r_mm = cfg.tube_radius * cfg.spacing[2];

    // the loop
    int steps = int(8 * (ry + rx));
    for (int i = 0; i <= steps; ++i) {
        double t = 2 * kPi * i / steps;
        Vec3 p{cz + amp_z * std::sin(2 * t + phase), cy + ry * std::sin(t),
               cx + rx * std::cos(t)};
        stamp(seg, p, r_mm, cfg.spacing);
    }

    // branch vessels leaving the loop
    for (int b = 0; b < cfg.branches; ++b) {
        double t = 2 * kPi * (b + u01(rng) * 0.6) / cfg.branches;
        Vec3 start{cz + amp_z * std::sin(2 * t + phase), cy + ry * std::sin(t),
                   cx + rx * std::cos(t)};
        double out_y = std::sin(t), out_x = std::cos(t);
        double drift_z = (u01(rng) - 0.5) * 0.3;
        double bend = (u01(rng) - 0.5) * 0.02;
        double len = 12.0 + 14.0 * u01(rng);
        double br_mm = 0.75 * r_mm;
        int n = int(len * 4);
        for (int i = 0; i <= n; ++i) {
            double s = len * i / n;
            Vec3 p{start.z + drift_z * s,
                   start.y + out_y * s + bend * s * s,
                   start.x + out_x * s - bend * s * s};
            if (p.y < 2 || p.y > cfg.height - 3 || p.x < 2 || p.x > cfg.width - 3 ||
                p.z < 0.5 || p.z > cfg.depth - 1.5)
                break;
            stamp(seg, p, br_mm, cfg.spacing);
        }
    }
    return seg;
}

// Dark ellipsoids with the same intensity depth as the flow voids. They
// pull a pure darkness threshold away from the vessels; only shape and
// position tell them apart. Voxels near real vessels are left alone.
void stamp_decoys(Volume& t2, const std::vector<uint8_t>& protect,
                  const PhantomConfig& cfg, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    float core = float(1.0 - cfg.void_contrast);
    for (int i = 0; i < cfg.decoys; ++i) {
        double rz = 1.2 + 1.0 * u01(rng);
        double ry = 4.0 + 4.0 * u01(rng);
        double rx = 4.0 + 4.0 * u01(rng);
        double cz = rz + 1 + u01(rng) * (cfg.depth - 2 * rz - 2);
        double cy = ry + 2 + u01(rng) * (cfg.height - 2 * ry - 4);
        double cx = rx + 2 + u01(rng) * (cfg.width - 2 * rx - 4);
        for (int z = int(cz - rz); z <= int(cz + rz) + 1; ++z)
            for (int y = int(cy - ry); y <= int(cy + ry) + 1; ++y)
                for (int x = int(cx - rx); x <= int(cx + rx) + 1; ++x) {
                    if (z < 0 || z >= cfg.depth || y < 0 || y >= cfg.height || x < 0 ||
                        x >= cfg.width)
                        continue;
                    double dz = (z - cz) / rz, dy = (y - cy) / ry, dx = (x - cx) / rx;
                    if (dz * dz + dy * dy + dx * dx > 1.0) continue;
                    size_t idx = (static_cast<size_t>(z) * cfg.height + y) * cfg.width + x;
                    if (!protect[idx]) t2.data[idx] *= core;
                }
    }
}

}  // namespace

void PhantomConfig::validate() const {
    if (depth < 4 || height < 32 || width < 32)
        throw std::invalid_argument("phantom volume too small");
    if (void_contrast <= 0.0 || void_contrast >= 1.0)
        throw std::invalid_argument("void_contrast must lie in (0,1)");
    if (noise_sigma < 0.0) throw std::invalid_argument("noise_sigma must be >= 0");
    if (branches < 0) throw std::invalid_argument("branches must be >= 0");
    if (decoys < 0) throw std::invalid_argument("decoys must be >= 0");
    if (tube_radius <= 0.0) throw std::invalid_argument("tube_radius must be > 0");
}

PairedSample generate_phantom(const PhantomConfig& cfg, int case_index) {
    cfg.validate();
    if (case_index < 0) throw std::invalid_argument("case_index must be >= 0");
    std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<uint64_t>(case_index)));

    Volume t2 = smooth_background(cfg, rng);
    t2.spacing = cfg.spacing;
    BinaryMask seg = vessel_tree(cfg, rng);

    // flow voids: dark core, softer one-pixel rim (partial volume)
    AttentionMask rim = dilate_mask(seg, 1);
    float core = float(1.0 - cfg.void_contrast);
    float edge = float(1.0 - 0.45 * cfg.void_contrast);
    for (size_t i = 0; i < t2.size(); ++i) {
        if (seg.data[i])
            t2.data[i] *= core;
        else if (rim.mask.data[i])
            t2.data[i] *= edge;
    }
    stamp_decoys(t2, rim.mask.data, cfg, rng);

    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    for (auto& v : t2.data) v = float(v + noise(rng));

    t2 = normalize_intensity(t2);
    t2.spacing = cfg.spacing;
    return PairedSample{std::move(t2), std::move(seg), SplitTag::Train};
}

DatasetManifest generate_dataset(const PhantomConfig& cfg, int n_cases,
                                 const std::string& out_dir,
                                 const std::array<double, 3>& split_fracs) {
    if (n_cases < 1) throw std::invalid_argument("n_cases must be >= 1");
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    for (int i = 0; i < n_cases; ++i) {
        PairedSample s = generate_phantom(cfg, i);
        char name[32];
        std::snprintf(name, sizeof(name), "phantom%03d", i);
        s.t2.id = name;
        s.seg.id = name;
        save_volume(s.t2, (fs::path(out_dir) / (std::string(name) + "_t2.nii.gz")).string());
        save_mask(s.seg, (fs::path(out_dir) / (std::string(name) + "_seg.nii.gz")).string());
    }

    DatasetManifest m = build_manifest(out_dir, split_fracs, cfg.seed);
    save_manifest(m, (fs::path(out_dir) / "manifest.json").string());
    return m;
}

}  // namespace cow
