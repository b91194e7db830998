#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cowsynth/ablation.hpp"
#include "cowsynth/checkpoint.hpp"
#include "cowsynth/inference.hpp"
#include "cowsynth/manifest.hpp"
#include "cowsynth/metrics.hpp"
#include "cowsynth/nifti.hpp"
#include "cowsynth/phantom.hpp"
#include "cowsynth/preprocess.hpp"
#include "cowsynth/report.hpp"
#include "cowsynth/run_config.hpp"
#include "cowsynth/training.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace cow;

namespace {

// exit codes: 0 success, 1 runtime failure, 2 usage/config error
struct usage_error : std::runtime_error {
    explicit usage_error(const std::string& what) : std::runtime_error(what) {}
};

// Deterministic unless COWSYNTH_DETERMINISTIC=0, in which case seeds are
// drawn fresh and printed so a surprising run can still be replayed.
bool deterministic_mode() {
    const char* v = std::getenv("COWSYNTH_DETERMINISTIC");
    return !(v && std::string(v) == "0");
}

void apply_seed_policy(RunConfig& cfg) {
    if (deterministic_mode()) return;
    std::random_device rd;
    auto draw = [&] { return (uint64_t(rd()) << 32) ^ uint64_t(rd()); };
    cfg.training.seed = draw();
    cfg.phantom.seed = draw();
    std::cout << "deterministic mode off; seeds randomised: training="
              << cfg.training.seed << " phantom=" << cfg.phantom.seed << "\n";
}

RunConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return {};
    try {
        return load_run_config(path);
    } catch (const std::invalid_argument& e) {
        throw usage_error(e.what());
    }
}

void validate_as_usage(const RunConfig& cfg) {
    try {
        cfg.arch.validate();
        cfg.training.validate();
        cfg.phantom.validate();
    } catch (const std::invalid_argument& e) {
        throw usage_error(e.what());
    }
}

void write_resolved(const RunConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    save_run_config(cfg, (fs::path(out_dir) / "resolved_config.json").string());
}

DatasetManifest manifest_from_dir(const std::string& data_dir) {
    fs::path p = fs::path(data_dir) / "manifest.json";
    if (!fs::exists(p))
        throw std::runtime_error("no manifest.json in " + data_dir +
                                 " (run synth-data or preprocess first)");
    return load_manifest(p.string());
}

SplitTag parse_split(const std::string& name) {
    if (name == "train") return SplitTag::Train;
    if (name == "val") return SplitTag::Val;
    if (name == "test") return SplitTag::Test;
    throw usage_error("unknown split '" + name + "' (use train, val or test)");
}

// Merges this run's rows into out_dir/training_log.csv, keeping rows of the
// other phase from an earlier run in the same directory.
void merge_training_log(const std::string& out_dir, int phase,
                        const std::vector<TrainLogRow>& rows) {
    fs::path p = fs::path(out_dir) / "training_log.csv";
    std::vector<TrainLogRow> merged;
    if (fs::exists(p))
        for (const auto& r : read_training_log(p.string()))
            if (r.phase != phase) merged.push_back(r);
    std::stable_sort(merged.begin(), merged.end(),
                     [](const TrainLogRow& a, const TrainLogRow& b) {
                         return a.phase < b.phase;
                     });
    auto at = std::find_if(merged.begin(), merged.end(),
                           [&](const TrainLogRow& r) { return r.phase > phase; });
    merged.insert(at, rows.begin(), rows.end());
    write_training_log(p.string(), merged);
}

std::string state_path(const std::string& ckpt) { return ckpt + ".state.json"; }

struct CommonOpts {
    std::string config;
    std::string data_dir;
    std::string out_dir;
};

// Flags that were actually passed win over the config file.
template <typename T>
void override_if(const CLI::App* sub, const std::string& flag, T& into, const T& value) {
    if (sub->count(flag)) into = value;
}

struct TrainFlagValues {
    int batch_size = 0;
    double learning_rate = 0;
    int max_epochs = 0;
    double momentum = 0;
    int radius = 0;
    double threshold = 0;
    uint64_t seed = 0;
    int window = 0;
    double slope_tol = 0;
    double dice_smooth = 0;
    bool no_local_loss = false;
};

void add_training_flags(CLI::App* sub, TrainFlagValues& v) {
    sub->add_option("--batch-size", v.batch_size, "slices per optimisation step");
    sub->add_option("--learning-rate", v.learning_rate, "SGD learning rate");
    sub->add_option("--max-epochs", v.max_epochs, "epoch budget");
    sub->add_option("--momentum", v.momentum, "SGD momentum");
    sub->add_option("--dilation-radius", v.radius, "attention-mask dilation radius");
    sub->add_option("--seg-threshold", v.threshold, "binarisation threshold");
    sub->add_option("--seed", v.seed, "RNG seed");
    sub->add_option("--early-stop-window", v.window, "early-stop window (epochs)");
    sub->add_option("--early-stop-tol", v.slope_tol, "early-stop slope tolerance");
    sub->add_option("--dice-smooth", v.dice_smooth, "soft-Dice smoothing constant");
    sub->add_flag("--no-local-loss", v.no_local_loss,
                  "replace the local loss with plain reconstruction error");
}

void apply_training_flags(const CLI::App* sub, const TrainFlagValues& v,
                          TrainingConfig& cfg) {
    override_if(sub, "--batch-size", cfg.batch_size, v.batch_size);
    override_if(sub, "--learning-rate", cfg.learning_rate, v.learning_rate);
    override_if(sub, "--max-epochs", cfg.max_epochs, v.max_epochs);
    override_if(sub, "--momentum", cfg.momentum, v.momentum);
    override_if(sub, "--dilation-radius", cfg.dilation_radius, v.radius);
    override_if(sub, "--seg-threshold", cfg.seg_threshold, v.threshold);
    override_if(sub, "--seed", cfg.seed, v.seed);
    override_if(sub, "--early-stop-window", cfg.early_stop.window_epochs, v.window);
    override_if(sub, "--early-stop-tol", cfg.early_stop.slope_tol, v.slope_tol);
    override_if(sub, "--dice-smooth", cfg.dice_smooth, v.dice_smooth);
    if (sub->count("--no-local-loss")) cfg.use_local_loss = false;
}

int run_synth_data(const CommonOpts& common, const CLI::App* sub, int n_cases,
                   uint64_t seed, int depth, int height, int width,
                   const std::vector<double>& fracs) {
    RunConfig cfg = load_config_or_default(common.config);
    override_if(sub, "--seed", cfg.phantom.seed, seed);
    override_if(sub, "--depth", cfg.phantom.depth, depth);
    override_if(sub, "--height", cfg.phantom.height, height);
    override_if(sub, "--width", cfg.phantom.width, width);
    apply_seed_policy(cfg);
    try {
        cfg.phantom.validate();
    } catch (const std::invalid_argument& e) {
        throw usage_error(e.what());
    }
    std::array<double, 3> split = default_split_fracs();
    if (!fracs.empty()) {
        if (fracs.size() != 3)
            throw usage_error("--split-fracs needs exactly three values");
        split = {fracs[0], fracs[1], fracs[2]};
    }

    cfg.paths.out_dir = common.out_dir;
    write_resolved(cfg, common.out_dir);
    generate_dataset(cfg.phantom, n_cases, common.out_dir, split);
    std::cout << "wrote " << n_cases << " phantom cases\n"
              << "manifest: " << (fs::path(common.out_dir) / "manifest.json").string()
              << "\n";
    return 0;
}

int run_preprocess(const CommonOpts& common, int crop_h, int crop_w, bool no_normalize) {
    if ((crop_h == 0) != (crop_w == 0))
        throw usage_error("--crop-h and --crop-w must be given together");
    DatasetManifest in = manifest_from_dir(common.data_dir);
    fs::create_directories(common.out_dir);

    DatasetManifest out = in;
    for (size_t i = 0; i < in.entries.size(); ++i) {
        PairedSample s = load_sample(in.entries[i]);
        if (crop_h > 0) {
            s.t2 = center_crop(s.t2, crop_h, crop_w);
            s.seg = center_crop(s.seg, crop_h, crop_w);
        }
        if (!no_normalize) s.t2 = normalize_intensity(s.t2);
        fs::path t2_out = fs::path(common.out_dir) /
                          fs::path(in.entries[i].t2_path).filename();
        fs::path seg_out = fs::path(common.out_dir) /
                           fs::path(in.entries[i].seg_path).filename();
        save_volume(s.t2, t2_out.string());
        save_mask(s.seg, seg_out.string());
        out.entries[i].t2_path = t2_out.string();
        out.entries[i].seg_path = seg_out.string();
    }
    std::string manifest_path = (fs::path(common.out_dir) / "manifest.json").string();
    save_manifest(out, manifest_path);
    std::cout << "preprocessed " << in.entries.size() << " cases\n"
              << "manifest: " << manifest_path << "\n";
    return 0;
}

int run_train(const CommonOpts& common, const CLI::App* sub, const TrainFlagValues& fl,
              int phase, const std::string& resume) {
    RunConfig cfg = load_config_or_default(common.config);
    cfg.training.phase = phase;
    apply_training_flags(sub, fl, cfg.training);
    apply_seed_policy(cfg);
    cfg.paths.data_dir = common.data_dir;
    cfg.paths.out_dir = common.out_dir;
    cfg.paths.checkpoint = resume;

    DatasetManifest m = manifest_from_dir(common.data_dir);
    SliceDataset train = load_slice_dataset(m, SplitTag::Train);
    SliceDataset val = load_slice_dataset(m, SplitTag::Val);

    std::optional<nn::SynthModel<float>> model;
    TrainState state;
    SgdMomentum opt;
    if (phase == 2 && resume.empty())
        throw usage_error(
            "phase 2 starts from the phase-1 autoencoder; pass --resume "
            "<out>/phase1.ckpt");
    if (!resume.empty()) {
        CheckpointMeta meta;
        TensorMap velocity;
        model.emplace(load_checkpoint(resume, &meta, &velocity));
        if (meta.phase == phase) {  // continue an interrupted run
            state = load_train_state(state_path(resume));
            opt.velocity = std::move(velocity);
            std::cout << "resuming phase " << phase << " at epoch " << state.epoch
                      << "\n";
        } else if (phase == 1) {
            throw usage_error("--resume for phase 1 expects a phase-1 checkpoint");
        }
    } else {
        cfg.arch.validate();
        model.emplace(cfg.arch, cfg.training.seed);
    }
    validate_as_usage(cfg);
    write_resolved(cfg, common.out_dir);

    std::string ckpt =
        (fs::path(common.out_dir) / ("phase" + std::to_string(phase) + ".ckpt")).string();
    std::string best = (fs::path(common.out_dir) / "best.ckpt").string();

    EpochCallbacks cb;
    cb.on_epoch = [&](nn::SynthModel<float>& mdl, const TrainState& st,
                      const SgdMomentum& o) {
        save_checkpoint(mdl, ckpt, st.epoch, o.velocity);
        save_train_state(st, state_path(ckpt));
        const TrainLogRow& r = st.log.back();
        std::printf("[phase %d] epoch %d  l_recon %.5f", phase, r.epoch, r.l_recon);
        if (phase == 2)
            std::printf("  l_seg %.5f  l_loc %.5f  combined %.5f  val_dice %.4f",
                        r.l_seg, r.l_loc, r.combined, st.val_history.back());
        else
            std::printf("  val_mae %.5f", st.val_history.back());
        std::printf("\n");
        std::fflush(stdout);
    };
    if (phase == 2)
        cb.on_best = [&](nn::SynthModel<float>& mdl, const TrainState& st) {
            save_checkpoint(mdl, best, st.epoch);
        };

    if (phase == 1)
        train_phase1(*model, train, val, cfg.training, state, opt, cb);
    else
        train_phase2(*model, train, val, cfg.training, state, opt, cb);

    merge_training_log(common.out_dir, phase, state.log);
    std::cout << "checkpoint: " << ckpt << "\n";
    if (phase == 2) {
        std::cout << "best checkpoint: " << best << " (val dice "
                  << state.best_val_dice << " at epoch " << state.best_epoch << ")\n";
    } else if (state.stopped_early) {
        std::cout << "stopped early after " << state.epoch << " epochs\n";
    }
    std::cout << "training log: "
              << (fs::path(common.out_dir) / "training_log.csv").string() << "\n";
    return 0;
}

void print_eval_line(const EvalSummary& s) {
    std::printf("Dice %.3f ± %.3f", s.dice.mean, (s.dice.ci_hi - s.dice.ci_lo) / 2);
    if (s.n_hd95_missing < s.n_cases)
        std::printf(", HD95 %.3f ± %.3f", s.hd95.mean, (s.hd95.ci_hi - s.hd95.ci_lo) / 2);
    else
        std::printf(", HD95 n/a");
    std::printf("  (n=%d", s.n_cases);
    if (s.n_hd95_missing) std::printf(", hd95 missing for %d", s.n_hd95_missing);
    std::printf(")\n");
}

nlohmann::json summary_to_json(const EvalSummary& s) {
    auto metric = [](const MetricSummary& m) {
        return nlohmann::json{{"mean", m.mean},
                              {"ci_lo", m.ci_lo},
                              {"ci_hi", m.ci_hi},
                              {"ci_halfwidth", (m.ci_hi - m.ci_lo) / 2},
                              {"n", m.n}};
    };
    return nlohmann::json{{"dice", metric(s.dice)},
                          {"hd95", metric(s.hd95)},
                          {"n_cases", s.n_cases},
                          {"n_hd95_missing", s.n_hd95_missing}};
}

int run_evaluate(const CommonOpts& common, const std::string& ckpt,
                 const std::string& split, double threshold) {
    DatasetManifest m = manifest_from_dir(common.data_dir);
    SplitTag tag = parse_split(split);
    if (m.count(tag) == 0)
        throw std::runtime_error("split '" + split + "' is empty in this manifest");
    nn::SynthModel<float> model = load_checkpoint(ckpt);

    auto records = evaluate_split(model, m, tag, threshold);
    EvalSummary summary = summarize_records(records);

    fs::create_directories(common.out_dir);
    std::string csv = (fs::path(common.out_dir) / "metrics.csv").string();
    write_metrics_csv(csv, records);
    std::string js = (fs::path(common.out_dir) / "summary.json").string();
    std::ofstream out(js);
    if (!out) throw std::runtime_error("cannot write " + js);
    out << summary_to_json(summary).dump(2) << "\n";

    print_eval_line(summary);
    std::cout << "per-case metrics: " << csv << "\nsummary: " << js << "\n";
    return 0;
}

int run_infer(const std::string& ckpt, const std::string& input,
              const std::string& output, const std::string& prob_path,
              const std::string& recon_path, double threshold, bool no_normalize) {
    CheckpointMeta meta;
    nn::SynthModel<float> model = load_checkpoint(ckpt, &meta);
    Volume t2 = load_volume(input);
    if (t2.height != meta.cfg.input_h || t2.width != meta.cfg.input_w)
        throw std::runtime_error(
            "input slices are " + std::to_string(t2.height) + "x" +
            std::to_string(t2.width) + " but the checkpoint expects " +
            std::to_string(meta.cfg.input_h) + "x" + std::to_string(meta.cfg.input_w) +
            "; crop with the preprocess command first");
    if (!no_normalize) t2 = normalize_intensity(t2);

    InferenceResult r = infer_volume(model, t2, threshold);
    save_mask(r.seg, output);
    std::cout << "segmentation: " << output << "\n";
    if (!prob_path.empty()) {
        save_volume(r.seg_prob, prob_path);
        std::cout << "probabilities: " << prob_path << "\n";
    }
    if (!recon_path.empty()) {
        save_volume(r.recon, recon_path);
        std::cout << "reconstruction: " << recon_path << "\n";
    }
    return 0;
}

int run_ablate(const CommonOpts& common, const CLI::App* sub, const TrainFlagValues& fl,
               std::vector<int> radii, bool no_control, int p1_epochs, int p2_epochs) {
    RunConfig cfg = load_config_or_default(common.config);
    apply_training_flags(sub, fl, cfg.training);
    apply_seed_policy(cfg);
    if (radii.empty()) throw usage_error("--radii must name at least one radius");
    cfg.paths.data_dir = common.data_dir;
    cfg.paths.out_dir = common.out_dir;
    validate_as_usage(cfg);

    AblationPlan plan;
    plan.radii = std::move(radii);
    plan.no_mask_control = !no_control;
    plan.phase1 = cfg.training;
    plan.phase1.phase = 1;
    plan.phase2 = cfg.training;
    plan.phase2.phase = 2;
    if (p1_epochs > 0) plan.phase1.max_epochs = p1_epochs;
    if (p2_epochs > 0) plan.phase2.max_epochs = p2_epochs;

    DatasetManifest m = manifest_from_dir(common.data_dir);
    write_resolved(cfg, common.out_dir);
    auto rows = run_dilation_ablation(m, cfg.arch, plan, common.out_dir);

    std::string csv = (fs::path(common.out_dir) / "ablation.csv").string();
    write_ablation_csv(csv, rows);
    std::string plot = (fs::path(common.out_dir) / "dice_vs_radius.png").string();
    plot_dice_vs_radius(plot, rows);
    for (const auto& r : rows) {
        if (r.no_mask)
            std::printf("no_mask  dice %.4f\n", r.dice);
        else
            std::printf("radius %-3d dice %.4f  coverage %.4f\n", r.radius, r.dice,
                        r.coverage.value_or(0.0));
    }
    std::cout << "ablation table: " << csv << "\nplot: " << plot << "\n";
    return 0;
}

int run_report(const CommonOpts& common, const std::string& run_dir,
               const std::string& ckpt_flag, const std::string& split) {
    fs::path log_path = fs::path(run_dir) / "training_log.csv";
    if (!fs::exists(log_path))
        throw std::runtime_error("missing training log: " + log_path.string());
    auto log = read_training_log(log_path.string());

    std::string ckpt = ckpt_flag;
    if (ckpt.empty()) {
        for (const char* name : {"best.ckpt", "phase2.ckpt", "phase1.ckpt"}) {
            fs::path p = fs::path(run_dir) / name;
            if (fs::exists(p)) {
                ckpt = p.string();
                break;
            }
        }
        if (ckpt.empty())
            throw std::runtime_error("no checkpoint found in " + run_dir);
    }

    int radius = 10;
    double threshold = 0.5;
    fs::path rc = fs::path(run_dir) / "resolved_config.json";
    if (fs::exists(rc)) {
        RunConfig cfg = load_run_config(rc.string());
        radius = cfg.training.dilation_radius;
        threshold = cfg.training.seg_threshold;
    }

    DatasetManifest m = manifest_from_dir(common.data_dir);
    nn::SynthModel<float> model = load_checkpoint(ckpt);
    std::string out_dir = common.out_dir.empty() ? run_dir : common.out_dir;
    ReportFiles files =
        write_report(out_dir, log, model, m, parse_split(split), radius, threshold);
    if (files.sigma_skipped)
        std::cout << "no phase-2 rows in the log; sigma plot skipped\n";
    for (const auto& f : files.written) std::cout << "wrote " << f << "\n";
    return 0;
}

int run_grid_search(const CommonOpts& common, const CLI::App* sub,
                    const TrainFlagValues& fl, const std::vector<int>& batch_sizes,
                    const std::vector<double>& learning_rates,
                    const std::vector<int>& max_epochs,
                    const std::vector<double>& momentums) {
    RunConfig cfg = load_config_or_default(common.config);
    apply_training_flags(sub, fl, cfg.training);
    apply_seed_policy(cfg);
    cfg.paths.data_dir = common.data_dir;
    cfg.paths.out_dir = common.out_dir;
    validate_as_usage(cfg);

    GridSpace space;
    space.batch_sizes = batch_sizes;
    space.learning_rates = learning_rates;
    space.max_epochs = max_epochs;
    space.momentums = momentums;
    if (space.batch_sizes.empty()) space.batch_sizes = {cfg.training.batch_size};
    if (space.learning_rates.empty()) space.learning_rates = {cfg.training.learning_rate};
    if (space.max_epochs.empty()) space.max_epochs = {cfg.training.max_epochs};
    if (space.momentums.empty()) space.momentums = {cfg.training.momentum};

    DatasetManifest m = manifest_from_dir(common.data_dir);
    SliceDataset train = load_slice_dataset(m, SplitTag::Train);
    SliceDataset val = load_slice_dataset(m, SplitTag::Val);

    write_resolved(cfg, common.out_dir);
    GridResult res = grid_search(space, train, val, cfg.training, cfg.arch);

    std::string csv = (fs::path(common.out_dir) / "grid.csv").string();
    write_grid_csv(csv, res.rows);
    RunConfig best_cfg = cfg;
    best_cfg.training = res.best;
    save_run_config(best_cfg, (fs::path(common.out_dir) / "best_config.json").string());

    std::printf("best: batch_size=%d learning_rate=%g max_epochs=%d momentum=%g\n",
                res.best.batch_size, res.best.learning_rate, res.best.max_epochs,
                res.best.momentum);
    std::cout << "grid table: " << csv << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "cowsynth: synthesises circle-of-Willis vessel segmentations from T2 "
        "MRI slices with a two-phase multi-task encoder-decoder.\n"
        "Set COWSYNTH_DETERMINISTIC=0 to randomise seeds (default: deterministic)."};
    app.require_subcommand(1);
    int rc = 0;

    // synth-data
    auto* sd = app.add_subcommand("synth-data", "generate a phantom dataset");
    CommonOpts sd_common;
    int sd_n = 150, sd_depth = 0, sd_height = 0, sd_width = 0;
    uint64_t sd_seed = 0;
    std::vector<double> sd_fracs;
    sd->add_option("--config", sd_common.config, "run-config JSON");
    sd->add_option("--out", sd_common.out_dir, "output directory")->required();
    sd->add_option("--n", sd_n, "number of cases")->check(CLI::PositiveNumber);
    sd->add_option("--seed", sd_seed, "phantom seed");
    sd->add_option("--depth", sd_depth, "slices per volume");
    sd->add_option("--height", sd_height, "slice height");
    sd->add_option("--width", sd_width, "slice width");
    sd->add_option("--split-fracs", sd_fracs, "train,val,test fractions")
        ->delimiter(',')
        ->expected(3);
    sd->callback([&] {
        rc = run_synth_data(sd_common, sd, sd_n, sd_seed, sd_depth, sd_height,
                            sd_width, sd_fracs);
    });

    // preprocess
    auto* pp = app.add_subcommand("preprocess", "crop and normalise a dataset");
    CommonOpts pp_common;
    int pp_crop_h = 0, pp_crop_w = 0;
    bool pp_no_norm = false;
    pp->add_option("--in", pp_common.data_dir, "input dataset directory")->required();
    pp->add_option("--out", pp_common.out_dir, "output directory")->required();
    pp->add_option("--crop-h", pp_crop_h, "center-crop height");
    pp->add_option("--crop-w", pp_crop_w, "center-crop width");
    pp->add_flag("--no-normalize", pp_no_norm, "skip min-max normalisation");
    pp->callback([&] { rc = run_preprocess(pp_common, pp_crop_h, pp_crop_w, pp_no_norm); });

    // train
    auto* tr = app.add_subcommand("train", "train one phase");
    CommonOpts tr_common;
    TrainFlagValues tr_flags;
    int tr_phase = 0;
    std::string tr_resume;
    tr->add_option("--phase", tr_phase, "1 = autoencoder, 2 = multi-task")
        ->required()
        ->check(CLI::Range(1, 2));
    tr->add_option("--config", tr_common.config, "run-config JSON");
    tr->add_option("--data", tr_common.data_dir, "dataset directory")->required();
    tr->add_option("--out", tr_common.out_dir, "run output directory")->required();
    tr->add_option("--resume", tr_resume,
                   "checkpoint to start from (required for phase 2)");
    add_training_flags(tr, tr_flags);
    tr->callback([&] { rc = run_train(tr_common, tr, tr_flags, tr_phase, tr_resume); });

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Dice/HD95 over a manifest split");
    CommonOpts ev_common;
    std::string ev_ckpt, ev_split = "test";
    double ev_threshold = 0.5;
    ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
    ev->add_option("--data", ev_common.data_dir, "dataset directory")->required();
    ev->add_option("--out", ev_common.out_dir, "output directory")->required();
    ev->add_option("--split", ev_split, "train, val or test");
    ev->add_option("--seg-threshold", ev_threshold, "binarisation threshold");
    ev->callback([&] { rc = run_evaluate(ev_common, ev_ckpt, ev_split, ev_threshold); });

    // infer
    auto* in = app.add_subcommand("infer", "segment one T2 volume");
    std::string in_ckpt, in_input, in_output, in_prob, in_recon;
    double in_threshold = 0.5;
    bool in_no_norm = false;
    in->add_option("--checkpoint", in_ckpt, "model checkpoint")->required();
    in->add_option("--input", in_input, "T2 volume (NIfTI)")->required();
    in->add_option("--output", in_output, "predicted segmentation path")->required();
    in->add_option("--save-prob", in_prob, "also write the probability volume");
    in->add_option("--save-recon", in_recon, "also write the synthesised T2");
    in->add_option("--seg-threshold", in_threshold, "binarisation threshold");
    in->add_flag("--no-normalize", in_no_norm, "skip min-max normalisation");
    in->callback([&] {
        rc = run_infer(in_ckpt, in_input, in_output, in_prob, in_recon, in_threshold,
                       in_no_norm);
    });

    // ablate-dilation
    auto* ab = app.add_subcommand("ablate-dilation",
                                  "train per dilation radius and compare Dice");
    CommonOpts ab_common;
    TrainFlagValues ab_flags;
    std::vector<int> ab_radii{0, 5, 10, 15, 20};
    bool ab_no_control = false;
    int ab_p1_epochs = 0, ab_p2_epochs = 0;
    ab->add_option("--config", ab_common.config, "run-config JSON");
    ab->add_option("--data", ab_common.data_dir, "dataset directory")->required();
    ab->add_option("--out", ab_common.out_dir, "output directory")->required();
    ab->add_option("--radii", ab_radii, "dilation radii to test")->delimiter(',');
    ab->add_flag("--no-control", ab_no_control, "skip the no-mask control cell");
    ab->add_option("--phase1-epochs", ab_p1_epochs, "pretraining epoch budget");
    ab->add_option("--phase2-epochs", ab_p2_epochs, "per-cell epoch budget");
    add_training_flags(ab, ab_flags);
    ab->callback([&] {
        rc = run_ablate(ab_common, ab, ab_flags, ab_radii, ab_no_control, ab_p1_epochs,
                        ab_p2_epochs);
    });

    // report
    auto* rp = app.add_subcommand("report", "plots and montage for a finished run");
    CommonOpts rp_common;
    std::string rp_run, rp_ckpt, rp_split = "test";
    rp->add_option("--run", rp_run, "run directory with training_log.csv")->required();
    rp->add_option("--data", rp_common.data_dir, "dataset directory")->required();
    rp->add_option("--out", rp_common.out_dir, "output directory (default: run dir)");
    rp->add_option("--checkpoint", rp_ckpt, "explicit checkpoint for the montage");
    rp->add_option("--split", rp_split, "montage split");
    rp->callback([&] { rc = run_report(rp_common, rp_run, rp_ckpt, rp_split); });

    // grid-search
    auto* gs = app.add_subcommand("grid-search", "hyperparameter sweep by val Dice");
    CommonOpts gs_common;
    TrainFlagValues gs_flags;
    std::vector<int> gs_batches, gs_epochs;
    std::vector<double> gs_lrs, gs_momentums;
    gs->add_option("--config", gs_common.config, "run-config JSON");
    gs->add_option("--data", gs_common.data_dir, "dataset directory")->required();
    gs->add_option("--out", gs_common.out_dir, "output directory")->required();
    gs->add_option("--batch-sizes", gs_batches, "grid axis")->delimiter(',');
    gs->add_option("--learning-rates", gs_lrs, "grid axis")->delimiter(',');
    gs->add_option("--epochs", gs_epochs, "grid axis")->delimiter(',');
    gs->add_option("--momentums", gs_momentums, "grid axis")->delimiter(',');
    add_training_flags(gs, gs_flags);
    gs->callback([&] {
        rc = run_grid_search(gs_common, gs, gs_flags, gs_batches, gs_lrs, gs_epochs,
                             gs_momentums);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const usage_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
