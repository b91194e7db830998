#include "cowsynth/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>

#include "cowsynth/nifti.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cow {
namespace {

bool nifti_name(const std::string& name, std::string* stem_out) {
    std::string s = name;
    if (s.size() > 3 && s.compare(s.size() - 3, 3, ".gz") == 0)
        s.resize(s.size() - 3);
    if (s.size() > 4 && s.compare(s.size() - 4, 4, ".nii") == 0) {
        *stem_out = s.substr(0, s.size() - 4);
        return true;
    }
    return false;
}

std::string relative_or_absolute(const fs::path& file, const fs::path& base) {
    std::error_code ec;
    fs::path rel = fs::relative(file, base, ec);
    if (ec || rel.empty()) return file.string();
    return rel.string();
}

}  // namespace

std::vector<ManifestEntry> DatasetManifest::split(SplitTag tag) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
        if (e.split == tag) out.push_back(e);
    return out;
}

size_t DatasetManifest::count(SplitTag tag) const {
    size_t n = 0;
    for (const auto& e : entries) n += (e.split == tag);
    return n;
}

std::array<double, 3> default_split_fracs() {
    return {150.0 / 181.0, 20.0 / 181.0, 11.0 / 181.0};
}

DatasetManifest build_manifest(const std::string& data_dir,
                               const std::array<double, 3>& split_fracs,
                               uint64_t seed) {
    if (!fs::is_directory(data_dir))
        throw std::runtime_error("data directory not found: " + data_dir);
    for (double f : split_fracs)
        if (!(f >= 0.0) || !std::isfinite(f))
            throw std::runtime_error("split fractions must be finite and >= 0");
    double fsum = split_fracs[0] + split_fracs[1] + split_fracs[2];
    if (std::abs(fsum - 1.0) > 1e-6)
        throw std::runtime_error("split fractions must sum to 1");

    struct Pair {
        std::string t2, seg;
    };
    std::map<std::string, Pair> cases;  // ordered -> deterministic listing
    for (const auto& entry : fs::directory_iterator(data_dir)) {
        if (!entry.is_regular_file()) continue;
        std::string name = entry.path().filename().string();
        std::string stem;
        if (!nifti_name(name, &stem)) continue;
        if (stem.size() > 3 && stem.compare(stem.size() - 3, 3, "_t2") == 0)
            cases[stem.substr(0, stem.size() - 3)].t2 = name;
        else if (stem.size() > 4 && stem.compare(stem.size() - 4, 4, "_seg") == 0)
            cases[stem.substr(0, stem.size() - 4)].seg = name;
    }
    if (cases.empty())
        throw std::runtime_error("no <case>_t2/<case>_seg NIfTI pairs in " + data_dir);
    for (const auto& [id, p] : cases) {
        if (p.t2.empty())
            throw std::runtime_error("case '" + id + "' has a seg file but no t2 file");
        if (p.seg.empty())
            throw std::runtime_error("case '" + id + "' has a t2 file but no seg file");
    }

    std::vector<std::string> ids;
    ids.reserve(cases.size());
    for (const auto& [id, p] : cases) ids.push_back(id);

    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);

    size_t n = ids.size();
    size_t n_train = static_cast<size_t>(std::llround(split_fracs[0] * n));
    size_t n_val = static_cast<size_t>(std::llround(split_fracs[1] * n));
    n_train = std::min(n_train, n);
    n_val = std::min(n_val, n - n_train);

    DatasetManifest m;
    m.seed = seed;
    for (size_t i = 0; i < n; ++i) {
        const Pair& p = cases.at(ids[i]);
        ManifestEntry e;
        e.id = ids[i];
        e.t2_path = p.t2;
        e.seg_path = p.seg;
        e.split = i < n_train               ? SplitTag::Train
                  : i < n_train + n_val     ? SplitTag::Val
                                            : SplitTag::Test;
        m.entries.push_back(std::move(e));
    }
    // stable on-disk order: by case id
    std::sort(m.entries.begin(), m.entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.id < b.id; });

    // resolve relative paths against data_dir for callers that use the
    // manifest in memory without saving it
    for (auto& e : m.entries) {
        e.t2_path = (fs::path(data_dir) / e.t2_path).string();
        e.seg_path = (fs::path(data_dir) / e.seg_path).string();
    }
    return m;
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
    fs::path base = fs::path(path).parent_path();
    if (base.empty()) base = ".";
    json j;
    j["seed"] = m.seed;
    j["cases"] = json::array();
    for (const auto& e : m.entries) {
        j["cases"].push_back({{"id", e.id},
                              {"t2", relative_or_absolute(e.t2_path, base)},
                              {"seg", relative_or_absolute(e.seg_path, base)},
                              {"split", to_string(e.split)}});
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << j.dump(2) << "\n";
    if (!out.good()) throw std::runtime_error("write failure: " + path);
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("manifest not found: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed manifest " + path + ": " + e.what());
    }
    fs::path base = fs::path(path).parent_path();
    if (base.empty()) base = ".";

    DatasetManifest m;
    m.seed = j.value("seed", 0ULL);
    std::vector<std::string> seen;
    for (const auto& c : j.at("cases")) {
        ManifestEntry e;
        e.id = c.at("id").get<std::string>();
        fs::path t2 = c.at("t2").get<std::string>();
        fs::path seg = c.at("seg").get<std::string>();
        e.t2_path = t2.is_absolute() ? t2.string() : (base / t2).string();
        e.seg_path = seg.is_absolute() ? seg.string() : (base / seg).string();
        e.split = split_tag_from_string(c.at("split").get<std::string>());
        if (!fs::exists(e.t2_path))
            throw std::runtime_error("case '" + e.id + "': missing t2 file " + e.t2_path);
        if (!fs::exists(e.seg_path))
            throw std::runtime_error("case '" + e.id + "': missing seg file " + e.seg_path);
        if (std::find(seen.begin(), seen.end(), e.id) != seen.end())
            throw std::runtime_error("duplicate case id in manifest: " + e.id);
        seen.push_back(e.id);
        m.entries.push_back(std::move(e));
    }
    return m;
}

PairedSample load_sample(const ManifestEntry& e) {
    PairedSample s;
    s.t2 = load_volume(e.t2_path);
    s.seg = load_mask(e.seg_path);
    s.split = e.split;
    s.t2.id = e.id;
    s.seg.id = e.id;
    if (!s.seg.same_shape(s.t2))
        throw std::runtime_error("case '" + e.id + "': t2/seg shape mismatch");
    return s;
}

}  // namespace cow
