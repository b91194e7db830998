// Release gate: one pass/fail line per criterion, nonzero exit if any fail.
// Criteria 5 and 6 share one desk-scale phantom run (the radius-10 cell of
// the ablation doubles as the end-to-end pipeline check).
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cowsynth/ablation.hpp"
#include "cowsynth/losses.hpp"
#include "cowsynth/metrics.hpp"
#include "cowsynth/phantom.hpp"
#include "cowsynth/preprocess.hpp"
#include "cowsynth/training.hpp"

namespace fs = std::filesystem;
using namespace cow;

namespace {

const std::string kCli = COWSYNTH_CLI;

int g_failed = 0;

void report(int idx, const char* name, bool ok, const std::string& detail) {
    size_t len = std::strlen(name);
    std::string dots(len < 38 ? 38 - len : 2, '.');
    std::printf("criterion %d: %s %s %s%s\n", idx, name, dots.c_str(),
                ok ? "PASS" : "FAIL",
                detail.empty() ? "" : ("  [" + detail + "]").c_str());
    std::fflush(stdout);
    if (!ok) ++g_failed;
}

template <typename F>
void run_criterion(int idx, const char* name, F body) {
    std::string detail;
    bool ok = false;
    try {
        ok = body(detail);
    } catch (const std::exception& e) {
        ok = false;
        detail = std::string("exception: ") + e.what();
    }
    report(idx, name, ok, detail);
}

double secs_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v, int prec = 3) {
    char b[64];
    std::snprintf(b, sizeof b, "%.*f", prec, v);
    return b;
}

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

// ---- criterion 1: closed-form values, identities, gradients ----

bool crit_math(std::string& detail) {
    auto t0 = std::chrono::steady_clock::now();
    bool ok = true;

    BinaryMask m1100(1, 1, 4), m1000(1, 1, 4), m0011(1, 1, 4);
    m1100.data = {1, 1, 0, 0};
    m1000.data = {1, 0, 0, 0};
    m0011.data = {0, 0, 1, 1};
    ok &= near(dice_score(m1100, m1100), 1.0, 1e-12);
    ok &= near(dice_score(m1100, m0011), 0.0, 1e-12);
    ok &= near(dice_score(m1100, m1000), 2.0 / 3.0, 1e-12);

    nn::Tensor<float> a(1, 1, 2, 2), b(1, 1, 2, 2);
    a.fill(0.5f);
    b.fill(0.75f);
    ok &= mae_loss(a, a) == 0.0;
    ok &= near(mae_loss(a, b), 0.25, 1e-12);
    ok &= mae_loss(a, b) == mae_loss(b, a);

    // combined loss at unit sigmas and at sigma^2 = (2, 1)
    ok &= near(uncertainty_weighted_loss(0.4, 0.2, 0.0, 0.0), 0.3, 1e-12);
    ok &= near(uncertainty_weighted_loss(0.4, 0.2, std::log(2.0), 0.0), 0.5466, 1e-4);

    // analytic gradients vs central differences
    const double ls = 0.4, ll = 0.2, x1 = 0.3, x2 = -0.2, h = 1e-6;
    UncertaintyGrads g = uncertainty_weighted_loss_grads(ls, ll, x1, x2);
    double fd1 = (uncertainty_weighted_loss(ls, ll, x1 + h, x2) -
                  uncertainty_weighted_loss(ls, ll, x1 - h, x2)) /
                 (2 * h);
    double fd2 = (uncertainty_weighted_loss(ls, ll, x1, x2 + h) -
                  uncertainty_weighted_loss(ls, ll, x1, x2 - h)) /
                 (2 * h);
    ok &= std::abs(fd1 - g.d_log_sigma1_sq) / std::abs(fd1) <= 1e-4;
    ok &= std::abs(fd2 - g.d_log_sigma2_sq) / std::abs(fd2) <= 1e-4;

    // gradient descent on log sigma^2 finds the closed-form optimum
    // sigma_i^2 = l_i
    double y1 = 0.0, y2 = 0.0;
    for (int i = 0; i < 4000; ++i) {
        UncertaintyGrads gg = uncertainty_weighted_loss_grads(ls, ll, y1, y2);
        y1 -= 0.1 * gg.d_log_sigma1_sq;
        y2 -= 0.1 * gg.d_log_sigma2_sq;
    }
    ok &= std::abs(std::exp(y1) - ls) / ls <= 0.01;
    ok &= std::abs(std::exp(y2) - ll) / ll <= 0.01;

    double dt = secs_since(t0);
    ok &= dt < 60.0;
    detail = "sigma^2 -> (" + num(std::exp(y1), 4) + ", " + num(std::exp(y2), 4) +
             "), " + num(dt, 2) + " s";
    return ok;
}

// ---- criterion 2: square-structuring-element dilation properties ----

BinaryMask brute_dilate(const BinaryMask& m, int r) {
    BinaryMask out(m.depth, m.height, m.width);
    for (int z = 0; z < m.depth; ++z)
        for (int y = 0; y < m.height; ++y)
            for (int x = 0; x < m.width; ++x) {
                uint8_t v = 0;
                for (int dy = -r; dy <= r && !v; ++dy)
                    for (int dx = -r; dx <= r && !v; ++dx) {
                        int yy = y + dy, xx = x + dx;
                        if (yy >= 0 && yy < m.height && xx >= 0 && xx < m.width &&
                            m.at(z, yy, xx))
                            v = 1;
                    }
                out.at(z, y, x) = v;
            }
    return out;
}

bool crit_morph(std::string& detail) {
    std::mt19937 rng(2026);
    std::bernoulli_distribution fg(0.08);
    bool ok = true;
    for (int t = 0; t < 50; ++t) {
        BinaryMask m(1, 16, 16);
        for (auto& v : m.data) v = fg(rng) ? 1 : 0;
        for (int r = 0; r <= 3; ++r) {
            BinaryMask d = dilate_mask(m, r).mask;
            ok &= d.data == brute_dilate(m, r).data;
            BinaryMask d_next = dilate_mask(m, r + 1).mask;
            for (size_t i = 0; i < m.data.size(); ++i) {
                if (m.data[i] && !d.data[i]) ok = false;       // containment
                if (d.data[i] && !d_next.data[i]) ok = false;  // monotonicity
            }
        }
        for (int r1 = 0; r1 <= 3; ++r1)
            for (int r2 = 0; r2 <= 3; ++r2)  // radii add under composition
                ok &= dilate_mask(dilate_mask(m, r1).mask, r2).mask.data ==
                      dilate_mask(m, r1 + r2).mask.data;
    }
    detail = "50 random 16x16 masks, radii 0..3";
    return ok;
}

// ---- criterion 3: hd95 against an exhaustive all-pairs oracle ----

struct Vox {
    int z, y, x;
};

std::vector<Vox> surface_voxels(const BinaryMask& m) {
    auto fgat = [&](int z, int y, int x) {
        if (z < 0 || z >= m.depth || y < 0 || y >= m.height || x < 0 || x >= m.width)
            return false;
        return m.at(z, y, x) != 0;
    };
    std::vector<Vox> out;
    for (int z = 0; z < m.depth; ++z)
        for (int y = 0; y < m.height; ++y)
            for (int x = 0; x < m.width; ++x)
                if (fgat(z, y, x) &&
                    (!fgat(z - 1, y, x) || !fgat(z + 1, y, x) || !fgat(z, y - 1, x) ||
                     !fgat(z, y + 1, x) || !fgat(z, y, x - 1) || !fgat(z, y, x + 1)))
                    out.push_back({z, y, x});
    return out;
}

double hd95_bruteforce(const BinaryMask& a, const BinaryMask& b) {
    auto sa = surface_voxels(a);
    auto sb = surface_voxels(b);
    auto spacing = a.spacing;
    auto directed = [&](const std::vector<Vox>& from, const std::vector<Vox>& to) {
        std::vector<double> d;
        for (const Vox& p : from) {
            double best = 1e300;
            for (const Vox& q : to) {
                double dz = (p.z - q.z) * double(spacing[0]);
                double dy = (p.y - q.y) * double(spacing[1]);
                double dx = (p.x - q.x) * double(spacing[2]);
                best = std::min(best, dz * dz + dy * dy + dx * dx);
            }
            d.push_back(std::sqrt(best));
        }
        return d;
    };
    return std::max(percentile(directed(sa, sb), 0.95),
                    percentile(directed(sb, sa), 0.95));
}

bool crit_hd95(std::string& detail) {
    std::mt19937 rng(404);
    std::uniform_int_distribution<int> dd(3, 5), dh(6, 10);
    std::bernoulli_distribution fg(0.07);
    const std::array<std::array<float, 3>, 4> spacings{{{1.f, 1.f, 1.f},
                                                        {2.5f, 0.75f, 0.75f},
                                                        {1.f, 0.5f, 2.f},
                                                        {0.8f, 1.3f, 0.6f}}};
    auto fill_mask = [&](BinaryMask& m) {
        for (auto& v : m.data) v = fg(rng) ? 1 : 0;
    };

    bool ok = true;
    int accepted = 0;
    BinaryMask pair_a(1, 1, 1), pair_b(1, 1, 1);  // first unit-spacing pair
    bool have_pair = false;
    for (int attempt = 0; attempt < 5000 && accepted < 200; ++attempt) {
        auto sp = spacings[attempt % spacings.size()];
        int d = dd(rng), h = dh(rng), w = dh(rng);
        BinaryMask a(d, h, w), b(d, h, w);
        a.spacing = sp;
        b.spacing = sp;
        fill_mask(a);
        fill_mask(b);
        if (a.count_positive() == 0 || b.count_positive() == 0) continue;
        if (surface_voxels(a).size() > 50 || surface_voxels(b).size() > 50) continue;
        auto fast = hd95(a, b);
        if (!fast.has_value()) {
            ok = false;
            break;
        }
        ok &= std::abs(*fast - hd95_bruteforce(a, b)) <= 1e-9;
        if (!have_pair && sp == spacings[0] && a.data != b.data) {
            pair_a = a;
            pair_b = b;
            have_pair = true;
        }
        ++accepted;
    }
    ok &= accepted == 200;

    // doubling the voxel spacing doubles the distance exactly
    ok &= have_pair;
    if (have_pair) {
        double base = *hd95(pair_a, pair_b);
        pair_a.spacing = {2.f, 2.f, 2.f};
        pair_b.spacing = {2.f, 2.f, 2.f};
        ok &= *hd95(pair_a, pair_b) == 2.0 * base;
    }
    detail = std::to_string(accepted) + " mask pairs within 1e-9";
    return ok;
}

// ---- criterion 4: network shape/freeze/gradient/size invariants ----

bool crit_arch(std::string& detail) {
    bool ok = true;

    {  // output geometry follows the input
        nn::SynthModel<float> m(nn::desk_scale_config(), 3);
        nn::Tensor<float> x(2, 1, 96, 96);
        std::mt19937 rng(9);
        std::uniform_real_distribution<float> u(0.f, 1.f);
        for (auto& v : x.data) v = u(rng);
        auto out = m.forward(x);
        ok &= out.recon.n == x.n && out.recon.c == x.c && out.recon.h == x.h &&
              out.recon.w == x.w;
        ok &= out.seg.n == x.n && out.seg.c == x.c && out.seg.h == x.h &&
              out.seg.w == x.w;
    }

    nn::ArchitectureConfig tiny;
    tiny.input_h = 48;
    tiny.input_w = 48;
    tiny.base_channels = 2;
    tiny.convs_per_block = 1;
    tiny.latent_residual_blocks = 1;

    PhantomConfig pc;
    pc.depth = 4;
    pc.height = 48;
    pc.width = 48;
    pc.seed = 11;
    std::vector<PairedSample> train_samples, val_samples;
    for (int i = 0; i < 6; ++i) train_samples.push_back(generate_phantom(pc, i));
    for (int i = 6; i < 8; ++i) val_samples.push_back(generate_phantom(pc, i));
    SliceDataset train = make_slice_dataset(train_samples);
    SliceDataset val = make_slice_dataset(val_samples);

    // real pretraining steps leave the frozen branch bit-identical
    nn::SynthModel<float> model(tiny, 5);
    std::vector<std::vector<float>> before;
    for (auto* p : model.synthesis_parameters()) before.push_back(p->value.data);

    TrainingConfig cfg;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.05;
    cfg.max_epochs = 2;
    cfg.seed = 5;
    TrainState st;
    SgdMomentum opt;
    train_phase1(model, train, val, cfg, st, opt);

    auto synth = model.synthesis_parameters();
    bool frozen = synth.size() == before.size();
    for (size_t i = 0; frozen && i < synth.size(); ++i)
        frozen = synth[i]->value.data.size() == before[i].size() &&
                 std::memcmp(synth[i]->value.data.data(), before[i].data(),
                             before[i].size() * sizeof(float)) == 0;
    ok &= frozen;

    // the local loss differentiates only the reconstruction output
    model.set_phase(2);
    std::vector<size_t> idx;
    for (size_t i = 0; i < std::min<size_t>(8, train.size()); ++i) idx.push_back(i);
    Batch batch = assemble_batch(train, idx, 3);
    auto out = model.forward(batch.t2, true);
    nn::Tensor<float> g_loc = local_loss_grad(out.recon, out.seg, batch.attn, 3, 0.5);
    model.zero_grad();
    model.backward(g_loc, nn::Tensor<float>::zeros_like(out.seg));
    bool zero_grads = true;
    for (auto* p : model.synthesis_parameters())
        for (float v : p->grad.data)
            if (v != 0.0f) zero_grads = false;
    ok &= zero_grads;

    // full-scale parameter budget
    size_t count = 0;
    {
        nn::SynthModel<float> full(nn::full_scale_config(), 1);
        count = full.parameter_count();
    }
    const double target = 26.7e6;
    ok &= std::abs(double(count) - target) <= 0.15 * target;
    detail = "full-scale params " + std::to_string(count) + " (target 26.7M +/- 15%)";
    return ok;
}

// ---- criteria 5 + 6: one desk-scale run shared by both checks ----

struct DeskResult {
    bool ok5 = false, ok6 = false;
    std::string d5, d6;
};

DeskResult run_desk(const fs::path& root) {
    DeskResult res;
    auto t0 = std::chrono::steady_clock::now();

    PhantomConfig pc;  // 16 x 96 x 96, seed 7
    DatasetManifest m =
        generate_dataset(pc, 150, (root / "data").string(), default_split_fracs());

    AblationPlan plan;
    plan.radii = {0, 10};
    plan.no_mask_control = true;
    plan.phase1.batch_size = 8;
    plan.phase1.learning_rate = 0.05;
    plan.phase1.momentum = 0.9;
    plan.phase1.max_epochs = 1;
    plan.phase1.seed = 7;
    plan.phase1.phase = 1;
    plan.phase2 = plan.phase1;
    plan.phase2.phase = 2;
    plan.phase2.dilation_radius = 10;

    fs::path abl = root / "ablation";
    std::vector<AblationRow> rows =
        run_dilation_ablation(m, nn::desk_scale_config(), plan, abl.string());
    write_ablation_csv((abl / "ablation.csv").string(), rows);
    double minutes = secs_since(t0) / 60.0;

    // the radius-10 cell is the end-to-end pipeline result
    auto records = read_metrics_csv((abl / "cell_r10" / "metrics.csv").string());
    double dsum = 0, dmin = 1;
    int finite = 0;
    for (const auto& r : records) {
        dsum += r.dice;
        dmin = std::min(dmin, r.dice);
        if (r.hd95 && std::isfinite(*r.hd95)) ++finite;
    }
    double mean_dice = records.empty() ? 0.0 : dsum / double(records.size());
    double finite_frac = records.empty() ? 0.0 : double(finite) / double(records.size());
    res.ok5 = !records.empty() && mean_dice >= 0.70 && finite_frac >= 0.9 &&
              minutes <= 30.0;
    res.d5 = "test dice mean " + num(mean_dice) + " min " + num(dmin) + ", hd95 finite " +
             std::to_string(finite) + "/" + std::to_string(records.size()) + ", " +
             num(minutes, 1) + " min";

    const AblationRow *r0 = nullptr, *r10 = nullptr, *ctl = nullptr;
    for (const auto& r : rows) {
        if (r.no_mask)
            ctl = &r;
        else if (r.radius == 0)
            r0 = &r;
        else if (r.radius == 10)
            r10 = &r;
    }
    res.ok6 = r0 && r10 && ctl && r10->dice > r0->dice && r10->dice > ctl->dice &&
              r0->coverage && r10->coverage && *r0->coverage < *r10->coverage;
    if (r0 && r10 && ctl)
        res.d6 = "dice r10 " + num(r10->dice) + " > r0 " + num(r0->dice) +
                 ", > no-mask " + num(ctl->dice) + "; coverage " +
                 num(r0->coverage.value_or(-1)) + " -> " +
                 num(r10->coverage.value_or(-1));
    else
        res.d6 = "missing ablation rows";
    return res;
}

// ---- criterion 7: byte-identical artifacts across repeated runs ----

int run_cli(const std::string& args) {
    int st = std::system(
        ("COWSYNTH_DETERMINISTIC=1 " + kCli + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in.good()) return {};
    return std::string(std::istreambuf_iterator<char>(in), {});
}

bool crit_repro(const fs::path& root, std::string& detail) {
    fs::path dir = root / "repro";
    fs::create_directories(dir);
    fs::path cfg = dir / "cfg.json";
    {
        std::ofstream out(cfg);
        out << R"({
  "architecture": {"input_h": 48, "input_w": 48, "base_channels": 2,
                   "convs_per_block": 1, "latent_residual_blocks": 1},
  "training": {"batch_size": 8, "max_epochs": 2, "dilation_radius": 3},
  "phantom": {"depth": 4, "height": 48, "width": 48}
})";
    }

    std::string data = (dir / "data").string();
    bool ok = run_cli("synth-data --config " + cfg.string() + " --n 8 --out " + data +
                      " --split-fracs 0.5,0.25,0.25") == 0;
    for (const char* name : {"a", "b"}) {
        std::string out = (dir / name).string();
        ok &= run_cli("train --phase 1 --config " + cfg.string() + " --data " + data +
                      " --out " + out) == 0;
        ok &= run_cli("train --phase 2 --config " + cfg.string() + " --data " + data +
                      " --out " + out + " --resume " + out + "/phase1.ckpt") == 0;
        ok &= run_cli("evaluate --checkpoint " + out + "/best.ckpt --data " + data +
                      " --out " + out + " --split test") == 0;
    }
    for (const char* f : {"training_log.csv", "summary.json", "metrics.csv"}) {
        std::string a = slurp(dir / "a" / f), b = slurp(dir / "b" / f);
        ok &= !a.empty() && a == b;
    }
    detail = "training logs and evaluation summaries byte-identical";
    return ok;
}

}  // namespace

int main() {
    fs::path root = fs::temp_directory_path() / "cowsynth_acceptance";
    fs::remove_all(root);
    fs::create_directories(root);

    run_criterion(1, "metric and loss arithmetic", crit_math);
    run_criterion(2, "chebyshev dilation morphology", crit_morph);
    run_criterion(3, "hd95 oracle equivalence", crit_hd95);
    run_criterion(4, "architecture invariants", crit_arch);

    DeskResult desk;
    try {
        desk = run_desk(root);
    } catch (const std::exception& e) {
        desk.d5 = desk.d6 = std::string("exception: ") + e.what();
    }
    report(5, "end-to-end phantom training", desk.ok5, desk.d5);
    report(6, "dilation ablation ordering", desk.ok6, desk.d6);

    run_criterion(7, "deterministic reproducibility",
                  [&](std::string& d) { return crit_repro(root, d); });

    std::printf("%d/7 criteria passed\n", 7 - g_failed);
    return g_failed ? 1 : 0;
}
