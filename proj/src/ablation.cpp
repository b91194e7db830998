#include "cowsynth/ablation.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cowsynth/checkpoint.hpp"
#include "cowsynth/inference.hpp"
#include "cowsynth/metrics.hpp"
#include "cowsynth/preprocess.hpp"
#include "cowsynth/report.hpp"

namespace cow {
namespace {

namespace fs = std::filesystem;

double mean_coverage(const DatasetManifest& m, int radius) {
    auto entries = m.split(SplitTag::Train);
    double s = 0;
    for (const auto& e : entries) {
        PairedSample sample = load_sample(e);
        s += mask_coverage(dilate_mask(sample.seg, radius));
    }
    return entries.empty() ? 0.0 : s / double(entries.size());
}

double cell_dice(const std::string& phase1_ckpt, const DatasetManifest& m,
                 const SliceDataset& train, const SliceDataset& val,
                 const TrainingConfig& cfg, const std::string& cell_dir) {
    fs::create_directories(cell_dir);
    nn::SynthModel<float> model = load_checkpoint(phase1_ckpt);

    std::string best_path = (fs::path(cell_dir) / "best.ckpt").string();
    TrainState state;
    SgdMomentum opt;
    EpochCallbacks cb;
    cb.on_best = [&](nn::SynthModel<float>& mdl, const TrainState& st) {
        save_checkpoint(mdl, best_path, st.epoch);
    };
    train_phase2(model, train, val, cfg, state, opt, cb);
    write_training_log((fs::path(cell_dir) / "training_log.csv").string(), state.log);

    nn::SynthModel<float> best = load_checkpoint(best_path);
    auto records = evaluate_split(best, m, SplitTag::Test, cfg.seg_threshold);
    write_metrics_csv((fs::path(cell_dir) / "metrics.csv").string(), records);
    return summarize_records(records).dice.mean;
}

}  // namespace

std::vector<AblationRow> run_dilation_ablation(const DatasetManifest& m,
                                               const nn::ArchitectureConfig& arch,
                                               const AblationPlan& plan,
                                               const std::string& out_dir) {
    if (plan.radii.empty()) throw std::invalid_argument("ablation: empty radius list");
    for (int r : plan.radii)
        if (r < 0) throw std::invalid_argument("ablation: negative radius");
    fs::create_directories(out_dir);

    SliceDataset train = load_slice_dataset(m, SplitTag::Train);
    SliceDataset val = load_slice_dataset(m, SplitTag::Val);

    // one shared autoencoder pretraining for every cell
    nn::SynthModel<float> model(arch, plan.phase1.seed);
    TrainState p1_state;
    SgdMomentum p1_opt;
    train_phase1(model, train, val, plan.phase1, p1_state, p1_opt);
    std::string p1_ckpt = (fs::path(out_dir) / "phase1.ckpt").string();
    save_checkpoint(model, p1_ckpt, p1_state.epoch);
    write_training_log((fs::path(out_dir) / "phase1_training_log.csv").string(),
                       p1_state.log);

    std::vector<AblationRow> rows;
    for (int r : plan.radii) {
        TrainingConfig cfg = plan.phase2;
        cfg.phase = 2;
        cfg.dilation_radius = r;
        cfg.use_local_loss = true;
        std::string cell = (fs::path(out_dir) / ("cell_r" + std::to_string(r))).string();
        AblationRow row;
        row.radius = r;
        row.dice = cell_dice(p1_ckpt, m, train, val, cfg, cell);
        row.coverage = mean_coverage(m, r);
        rows.push_back(row);
    }
    if (plan.no_mask_control) {
        TrainingConfig cfg = plan.phase2;
        cfg.phase = 2;
        cfg.use_local_loss = false;
        std::string cell = (fs::path(out_dir) / "cell_no_mask").string();
        AblationRow row;
        row.no_mask = true;
        row.dice = cell_dice(p1_ckpt, m, train, val, cfg, cell);
        rows.push_back(row);
    }
    return rows;
}

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "radius,dice,coverage\n";
    out.precision(17);
    for (const auto& r : rows) {
        if (r.no_mask)
            out << "no_mask";
        else
            out << r.radius;
        out << ',' << r.dice << ',';
        if (r.coverage) out << *r.coverage;
        out << '\n';
    }
    if (!out.good()) throw std::runtime_error("write failure: " + path);
}

std::vector<AblationRow> read_ablation_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string line;
    if (!std::getline(in, line) || line != "radius,dice,coverage")
        throw std::runtime_error("unexpected ablation header in " + path);
    std::vector<AblationRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string radius, dice, coverage;
        std::getline(ss, radius, ',');
        std::getline(ss, dice, ',');
        std::getline(ss, coverage, ',');
        AblationRow r;
        if (radius == "no_mask")
            r.no_mask = true;
        else
            r.radius = std::stoi(radius);
        r.dice = std::stod(dice);
        if (!coverage.empty()) r.coverage = std::stod(coverage);
        rows.push_back(r);
    }
    return rows;
}

void plot_dice_vs_radius(const std::string& path, const std::vector<AblationRow>& rows) {
    PlotSeries dilated{"local attention", {}, {}};
    std::optional<double> control;
    for (const auto& r : rows) {
        if (r.no_mask)
            control = r.dice;
        else {
            dilated.x.push_back(r.radius);
            dilated.y.push_back(r.dice);
        }
    }
    if (dilated.x.empty()) throw std::invalid_argument("no radius rows to plot");
    std::vector<PlotSeries> series{dilated};
    if (control) {
        PlotSeries flat{"no-mask control", dilated.x,
                        std::vector<double>(dilated.x.size(), *control)};
        series.push_back(std::move(flat));
    }
    render_line_plot(path, "Dice vs dilation radius", "radius (pixels)", "dice",
                     series);
}

}  // namespace cow
