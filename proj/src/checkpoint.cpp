#include "cowsynth/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "cowsynth/run_config.hpp"
#include "json.hpp"

using nlohmann::json;

namespace cow {
namespace {

constexpr char kMagic[8] = {'C', 'W', 'S', 'Y', 'N', 'C', 'K', '1'};

void write_entry(std::ofstream& out, const std::string& name,
                 const nn::Tensor<float>& t) {
    uint32_t len = static_cast<uint32_t>(name.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(name.data(), len);
    int32_t dims[4] = {t.n, t.c, t.h, t.w};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.size() * sizeof(float)));
}

}  // namespace

void save_checkpoint(nn::SynthModel<float>& model, const std::string& path,
                     int epoch, const TensorMap& optimizer_state) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kMagic, sizeof(kMagic));

    auto params = model.parameters();
    uint32_t n = static_cast<uint32_t>(params.size() + optimizer_state.size());
    out.write(reinterpret_cast<const char*>(&n), 4);
    for (auto* p : params) write_entry(out, p->name, p->value);
    for (const auto& [name, t] : optimizer_state)
        write_entry(out, "momentum/" + name, t);
    if (!out.good()) throw std::runtime_error("write failure: " + path);
    out.close();

    json j;
    j["format_version"] = 1;
    j["architecture"] = architecture_to_json(model.config());
    j["phase"] = model.phase();
    j["epoch"] = epoch;
    j["log_sigma1_sq"] = static_cast<double>(model.log_sigma1_sq());
    j["log_sigma2_sq"] = static_cast<double>(model.log_sigma2_sq());
    j["seed"] = model.seed();
    std::ofstream side(path + ".json");
    if (!side) throw std::runtime_error("cannot write checkpoint sidecar: " + path + ".json");
    side << j.dump(2) << "\n";
    if (!side.good()) throw std::runtime_error("write failure: " + path + ".json");
}

nn::SynthModel<float> load_checkpoint(const std::string& path, CheckpointMeta* meta_out,
                                      TensorMap* optimizer_state_out) {
    std::ifstream side_in(path + ".json");
    if (!side_in)
        throw std::runtime_error("checkpoint sidecar not found: " + path + ".json");
    json j;
    try {
        side_in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed checkpoint sidecar: " + std::string(e.what()));
    }

    CheckpointMeta meta;
    meta.cfg = architecture_from_json(j.at("architecture"));
    meta.cfg.validate();
    meta.phase = j.value("phase", 1);
    meta.epoch = j.value("epoch", 0);
    meta.log_sigma1_sq = j.value("log_sigma1_sq", 0.0);
    meta.log_sigma2_sq = j.value("log_sigma2_sq", 0.0);
    meta.seed = j.value("seed", 0ULL);

    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint not found: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in.good() || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("not a cowsynth checkpoint: " + path);

    nn::SynthModel<float> model(meta.cfg, meta.seed);
    model.set_phase(meta.phase);
    std::map<std::string, nn::Parameter<float>*> by_name;
    for (auto* p : model.parameters()) by_name[p->name] = p;

    uint32_t n = 0;
    in.read(reinterpret_cast<char*>(&n), 4);
    std::map<std::string, bool> seen;
    for (uint32_t i = 0; i < n; ++i) {
        uint32_t len = 0;
        in.read(reinterpret_cast<char*>(&len), 4);
        if (!in.good() || len > 4096)
            throw std::runtime_error("corrupt checkpoint entry: " + path);
        std::string name(len, '\0');
        in.read(name.data(), len);
        int32_t dims[4];
        in.read(reinterpret_cast<char*>(dims), sizeof(dims));
        nn::Tensor<float> t(dims[0], dims[1], dims[2], dims[3]);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.size() * sizeof(float)));
        if (!in.good()) throw std::runtime_error("truncated checkpoint: " + path);

        if (name.rfind("momentum/", 0) == 0) {
            if (optimizer_state_out)
                (*optimizer_state_out)[name.substr(9)] = std::move(t);
            continue;
        }
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw std::runtime_error("checkpoint parameter '" + name +
                                     "' does not exist in the architecture");
        if (!it->second->value.same_shape(t))
            throw std::runtime_error("checkpoint parameter '" + name + "' has shape " +
                                     t.shape_str() + ", expected " +
                                     it->second->value.shape_str());
        it->second->value = std::move(t);
        seen[name] = true;
    }
    for (const auto& [name, p] : by_name)
        if (!seen.count(name))
            throw std::runtime_error("checkpoint is missing parameter '" + name + "'");

    if (meta_out) *meta_out = meta;
    return model;
}

nn::ArchitectureConfig architecture_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read architecture config: " + path);
    json j;
    in >> j;
    auto cfg = architecture_from_json(j.contains("architecture") ? j.at("architecture") : j);
    cfg.validate();
    return cfg;
}

}  // namespace cow
