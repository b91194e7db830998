#include "cowsynth/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "cowsynth/losses.hpp"
#include "cowsynth/preprocess.hpp"
#include "json.hpp"

namespace cow {
namespace {

uint64_t mix(uint64_t a, uint64_t b) {
    uint64_t z = a + (b + 1) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Epoch order depends only on (seed, phase, epoch): resuming mid-run
// replays exactly the batches a straight-through run would have seen.
std::vector<size_t> epoch_order(size_t n, uint64_t seed, int phase, int epoch) {
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t(0));
    std::mt19937_64 rng(mix(seed, uint64_t(phase) * 1000003ULL + uint64_t(epoch)));
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

void check_finite(double v, const char* what, int epoch) {
    if (!std::isfinite(v))
        throw std::runtime_error(std::string(what) + " became non-finite at epoch " +
                                 std::to_string(epoch) + "; lower the learning rate");
}

double batch_mean(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / double(v.size());
}

}  // namespace

void TrainingConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (learning_rate <= 0) throw std::invalid_argument("learning_rate must be > 0");
    if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
    if (momentum < 0 || momentum >= 1)
        throw std::invalid_argument("momentum must lie in [0,1)");
    if (dilation_radius < 0) throw std::invalid_argument("dilation_radius must be >= 0");
    if (seg_threshold <= 0 || seg_threshold >= 1)
        throw std::invalid_argument("seg_threshold must lie in (0,1)");
    if (early_stop.window_epochs < 2)
        throw std::invalid_argument("early-stop window must be >= 2 epochs");
    if (phase != 1 && phase != 2) throw std::invalid_argument("phase must be 1 or 2");
    if (dice_smooth < 0) throw std::invalid_argument("dice_smooth must be >= 0");
}

void write_training_log(const std::string& path, const std::vector<TrainLogRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "epoch,phase,l_recon,l_seg,l_loc,combined,sigma1_sq,sigma2_sq\n";
    out.precision(17);
    for (const auto& r : rows)
        out << r.epoch << ',' << r.phase << ',' << r.l_recon << ',' << r.l_seg << ','
            << r.l_loc << ',' << r.combined << ',' << r.sigma1_sq << ','
            << r.sigma2_sq << '\n';
    if (!out.good()) throw std::runtime_error("write failure: " + path);
}

std::vector<TrainLogRow> read_training_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string line;
    if (!std::getline(in, line) ||
        line != "epoch,phase,l_recon,l_seg,l_loc,combined,sigma1_sq,sigma2_sq")
        throw std::runtime_error("unexpected training log header in " + path);
    std::vector<TrainLogRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        TrainLogRow r;
        std::string f;
        auto next = [&]() {
            if (!std::getline(ss, f, ',')) throw std::runtime_error("malformed row: " + line);
            return f;
        };
        r.epoch = std::stoi(next());
        r.phase = std::stoi(next());
        r.l_recon = std::stod(next());
        r.l_seg = std::stod(next());
        r.l_loc = std::stod(next());
        r.combined = std::stod(next());
        r.sigma1_sq = std::stod(next());
        r.sigma2_sq = std::stod(next());
        rows.push_back(r);
    }
    return rows;
}

SliceDataset make_slice_dataset(const std::vector<PairedSample>& samples) {
    SliceDataset ds;
    for (const auto& s : samples) {
        if (!s.seg.same_shape(s.t2))
            throw std::invalid_argument("t2/seg shape mismatch for case '" + s.t2.id + "'");
        if (ds.h == 0) {
            ds.h = s.t2.height;
            ds.w = s.t2.width;
        } else if (s.t2.height != ds.h || s.t2.width != ds.w) {
            throw std::invalid_argument("inconsistent slice shapes across cases");
        }
        size_t plane = static_cast<size_t>(ds.h) * ds.w;
        for (int z = 0; z < s.t2.depth; ++z) {
            SliceRecord rec;
            rec.case_id = s.t2.id;
            rec.z = z;
            rec.t2 = nn::Tensor<float>(1, 1, ds.h, ds.w);
            std::copy_n(s.t2.data.data() + z * plane, plane, rec.t2.data.data());
            rec.seg.assign(s.seg.data.data() + z * plane,
                           s.seg.data.data() + (z + 1) * plane);
            ds.slices.push_back(std::move(rec));
        }
    }
    return ds;
}

SliceDataset load_slice_dataset(const DatasetManifest& m, SplitTag tag) {
    std::vector<PairedSample> samples;
    for (const auto& e : m.split(tag)) samples.push_back(load_sample(e));
    return make_slice_dataset(samples);
}

Batch assemble_batch(const SliceDataset& ds, const std::vector<size_t>& idx, int radius) {
    if (idx.empty()) throw std::invalid_argument("empty batch");
    int n = static_cast<int>(idx.size());
    Batch b{nn::Tensor<float>(n, 1, ds.h, ds.w), nn::Tensor<float>(n, 1, ds.h, ds.w),
            nn::Tensor<float>(n, 1, ds.h, ds.w)};
    size_t plane = static_cast<size_t>(ds.h) * ds.w;
    std::vector<uint8_t> dil(plane);
    for (int i = 0; i < n; ++i) {
        const SliceRecord& rec = ds.slices[idx[i]];
        std::copy(rec.t2.data.begin(), rec.t2.data.end(), b.t2.data.begin() + i * plane);
        dilate_slice(rec.seg.data(), dil.data(), ds.h, ds.w, radius);
        float* seg_out = b.seg.data.data() + i * plane;
        float* attn_out = b.attn.data.data() + i * plane;
        const float* t2 = rec.t2.data.data();
        for (size_t j = 0; j < plane; ++j) {
            seg_out[j] = rec.seg[j] ? 1.f : 0.f;
            attn_out[j] = dil[j] ? t2[j] : 0.f;
        }
    }
    return b;
}

bool early_stop_check(const std::vector<double>& loss_history, int window, double tol) {
    if (window < 2) throw std::invalid_argument("early-stop window must be >= 2");
    if (static_cast<int>(loss_history.size()) < window) return false;
    // least-squares slope over the last `window` points, x = 0..window-1
    double n = window;
    double sx = 0, sy = 0, sxy = 0, sxx = 0;
    size_t start = loss_history.size() - window;
    for (int i = 0; i < window; ++i) {
        double x = i, y = loss_history[start + i];
        sx += x;
        sy += y;
        sxy += x * y;
        sxx += x * x;
    }
    double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return slope > -tol;
}

void SgdMomentum::step(const std::vector<nn::Parameter<float>*>& params) {
    for (auto* p : params) {
        if (!p->trainable) continue;
        auto it = velocity.find(p->name);
        if (it == velocity.end())
            it = velocity.emplace(p->name, nn::Tensor<float>::zeros_like(p->value)).first;
        nn::Tensor<float>& v = it->second;
        float flr = static_cast<float>(lr), fmu = static_cast<float>(mu);
        for (size_t i = 0; i < v.size(); ++i) {
            v.data[i] = fmu * v.data[i] + p->grad.data[i];
            p->value.data[i] -= flr * v.data[i];
        }
    }
}

void save_train_state(const TrainState& s, const std::string& path) {
    nlohmann::json j;
    j["epoch"] = s.epoch;
    j["best_epoch"] = s.best_epoch;
    j["best_val_dice"] = s.best_val_dice;
    j["stopped_early"] = s.stopped_early;
    j["val_history"] = s.val_history;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : s.log)
        rows.push_back({{"epoch", r.epoch},
                        {"phase", r.phase},
                        {"l_recon", r.l_recon},
                        {"l_seg", r.l_seg},
                        {"l_loc", r.l_loc},
                        {"combined", r.combined},
                        {"sigma1_sq", r.sigma1_sq},
                        {"sigma2_sq", r.sigma2_sq}});
    j["log"] = rows;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
    if (!out.good()) throw std::runtime_error("write failure: " + path);
}

TrainState load_train_state(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    nlohmann::json j;
    in >> j;
    TrainState s;
    s.epoch = j.value("epoch", 0);
    s.best_epoch = j.value("best_epoch", -1);
    s.best_val_dice = j.value("best_val_dice", -1.0);
    s.stopped_early = j.value("stopped_early", false);
    s.val_history = j.value("val_history", std::vector<double>{});
    for (const auto& r : j.value("log", nlohmann::json::array())) {
        TrainLogRow row;
        row.epoch = r.value("epoch", 0);
        row.phase = r.value("phase", 1);
        row.l_recon = r.value("l_recon", 0.0);
        row.l_seg = r.value("l_seg", 0.0);
        row.l_loc = r.value("l_loc", 0.0);
        row.combined = r.value("combined", 0.0);
        row.sigma1_sq = r.value("sigma1_sq", 1.0);
        row.sigma2_sq = r.value("sigma2_sq", 1.0);
        s.log.push_back(row);
    }
    return s;
}

double validation_recon_mae(nn::SynthModel<float>& model, const SliceDataset& ds,
                            int batch_size) {
    if (ds.slices.empty()) throw std::invalid_argument("empty validation split");
    double total = 0;
    size_t count = 0;
    for (size_t at = 0; at < ds.size(); at += batch_size) {
        std::vector<size_t> idx;
        for (size_t i = at; i < std::min(ds.size(), at + batch_size); ++i) idx.push_back(i);
        Batch b = assemble_batch(ds, idx, 0);
        auto out = model.forward(b.t2, /*with_synthesis=*/false);
        total += mae_loss(out.recon, b.t2) * double(idx.size());
        count += idx.size();
    }
    return total / double(count);
}

double validation_dice(nn::SynthModel<float>& model, const SliceDataset& ds,
                       int batch_size, double threshold) {
    if (ds.slices.empty()) throw std::invalid_argument("empty validation split");
    // hard Dice accumulated over every slice of the split
    double inter = 0, psum = 0, gsum = 0;
    for (size_t at = 0; at < ds.size(); at += batch_size) {
        std::vector<size_t> idx;
        for (size_t i = at; i < std::min(ds.size(), at + batch_size); ++i) idx.push_back(i);
        Batch b = assemble_batch(ds, idx, 0);
        auto out = model.forward(b.t2, /*with_synthesis=*/true);
        for (size_t i = 0; i < out.seg.size(); ++i) {
            bool p = out.seg.data[i] > threshold;
            bool g = b.seg.data[i] > 0.5f;
            inter += p && g;
            psum += p;
            gsum += g;
        }
    }
    if (psum + gsum == 0) return 1.0;
    return 2.0 * inter / (psum + gsum);
}

void train_phase1(nn::SynthModel<float>& model, const SliceDataset& train,
                  const SliceDataset& val, const TrainingConfig& cfg, TrainState& state,
                  SgdMomentum& opt, const EpochCallbacks& cb) {
    cfg.validate();
    if (train.slices.empty()) throw std::invalid_argument("empty training split");
    model.set_phase(1);
    opt.lr = cfg.learning_rate;
    opt.mu = cfg.momentum;

    for (int epoch = state.epoch; epoch < cfg.max_epochs; ++epoch) {
        std::vector<size_t> order = epoch_order(train.size(), cfg.seed, 1, epoch);
        std::vector<double> losses;
        for (size_t at = 0; at < order.size(); at += cfg.batch_size) {
            std::vector<size_t> idx(order.begin() + at,
                                    order.begin() + std::min(order.size(),
                                                             at + cfg.batch_size));
            Batch b = assemble_batch(train, idx, cfg.dilation_radius);
            auto out = model.forward(b.t2, /*with_synthesis=*/false);
            double l = mae_loss(out.recon, b.t2);
            check_finite(l, "reconstruction loss", epoch + 1);
            model.zero_grad();
            model.backward_recon(mae_loss_grad(out.recon, b.t2));
            opt.step(model.parameters());
            losses.push_back(l);
        }

        TrainLogRow row;
        row.epoch = epoch + 1;
        row.phase = 1;
        row.l_recon = batch_mean(losses);
        row.combined = row.l_recon;
        row.sigma1_sq = std::exp(double(model.log_sigma1_sq()));
        row.sigma2_sq = std::exp(double(model.log_sigma2_sq()));
        state.log.push_back(row);

        double val_mae = validation_recon_mae(model, val, cfg.batch_size);
        check_finite(val_mae, "validation loss", epoch + 1);
        state.val_history.push_back(val_mae);
        state.epoch = epoch + 1;
        if (cb.on_epoch) cb.on_epoch(model, state, opt);

        if (early_stop_check(state.val_history, cfg.early_stop.window_epochs,
                             cfg.early_stop.slope_tol)) {
            state.stopped_early = true;
            break;
        }
    }
}

void train_phase2(nn::SynthModel<float>& model, const SliceDataset& train,
                  const SliceDataset& val, const TrainingConfig& cfg, TrainState& state,
                  SgdMomentum& opt, const EpochCallbacks& cb) {
    cfg.validate();
    if (train.slices.empty()) throw std::invalid_argument("empty training split");
    model.set_phase(2);
    opt.lr = cfg.learning_rate;
    opt.mu = cfg.momentum;

    for (int epoch = state.epoch; epoch < cfg.max_epochs; ++epoch) {
        std::vector<size_t> order = epoch_order(train.size(), cfg.seed, 2, epoch);
        std::vector<double> recons, segs, locs, combos;
        for (size_t at = 0; at < order.size(); at += cfg.batch_size) {
            std::vector<size_t> idx(order.begin() + at,
                                    order.begin() + std::min(order.size(),
                                                             at + cfg.batch_size));
            Batch b = assemble_batch(train, idx, cfg.dilation_radius);
            auto out = model.forward(b.t2, /*with_synthesis=*/true);

            double l_seg = dice_loss(out.seg, b.seg, cfg.dice_smooth);
            double l_loc, l_recon = mae_loss(out.recon, b.t2);  // diagnostic
            nn::Tensor<float> grad_loc;
            if (cfg.use_local_loss) {
                l_loc = local_loss(out.recon, out.seg, b.attn, cfg.dilation_radius,
                                   cfg.seg_threshold);
                grad_loc = local_loss_grad(out.recon, out.seg, b.attn,
                                           cfg.dilation_radius, cfg.seg_threshold);
            } else {
                // no-attention-mask control: train on plain reconstruction
                l_loc = l_recon;
                grad_loc = mae_loss_grad(out.recon, b.t2);
            }
            double ls1 = model.log_sigma1_sq(), ls2 = model.log_sigma2_sq();
            double combined = uncertainty_weighted_loss(l_seg, l_loc, ls1, ls2);
            check_finite(combined, "combined loss", epoch + 1);
            UncertaintyGrads ug = uncertainty_weighted_loss_grads(l_seg, l_loc, ls1, ls2);

            nn::Tensor<float> grad_seg = dice_loss_grad(out.seg, b.seg, cfg.dice_smooth);
            for (auto& g : grad_seg.data) g *= float(ug.d_l_seg);
            for (auto& g : grad_loc.data) g *= float(ug.d_l_loc);

            model.zero_grad();
            model.log_sigma1_sq_param().grad.data[0] += float(ug.d_log_sigma1_sq);
            model.log_sigma2_sq_param().grad.data[0] += float(ug.d_log_sigma2_sq);
            model.backward(grad_loc, grad_seg);
            opt.step(model.parameters());

            recons.push_back(l_recon);
            segs.push_back(l_seg);
            locs.push_back(l_loc);
            combos.push_back(combined);
        }

        TrainLogRow row;
        row.epoch = epoch + 1;
        row.phase = 2;
        row.l_recon = batch_mean(recons);
        row.l_seg = batch_mean(segs);
        row.l_loc = batch_mean(locs);
        row.combined = batch_mean(combos);
        row.sigma1_sq = std::exp(double(model.log_sigma1_sq()));
        row.sigma2_sq = std::exp(double(model.log_sigma2_sq()));
        state.log.push_back(row);

        double vdice = validation_dice(model, val, cfg.batch_size, cfg.seg_threshold);
        check_finite(vdice, "validation Dice", epoch + 1);
        state.val_history.push_back(vdice);
        state.epoch = epoch + 1;
        if (vdice > state.best_val_dice) {
            state.best_val_dice = vdice;
            state.best_epoch = epoch + 1;
            if (cb.on_best) cb.on_best(model, state);
        }
        if (cb.on_epoch) cb.on_epoch(model, state, opt);
    }
}

GridResult grid_search(const GridSpace& space, const SliceDataset& train,
                       const SliceDataset& val, const TrainingConfig& base,
                       const nn::ArchitectureConfig& arch) {
    if (space.batch_sizes.empty() || space.learning_rates.empty() ||
        space.max_epochs.empty() || space.momentums.empty())
        throw std::invalid_argument("grid search space has an empty axis");

    GridResult result;
    int best_at = -1;
    for (int bs : space.batch_sizes)
        for (double lr : space.learning_rates)
            for (int ep : space.max_epochs)
                for (double mu : space.momentums) {
                    TrainingConfig cfg = base;
                    cfg.batch_size = bs;
                    cfg.learning_rate = lr;
                    cfg.max_epochs = ep;
                    cfg.momentum = mu;

                    nn::SynthModel<float> model(arch, cfg.seed);
                    TrainState s1;
                    SgdMomentum opt1;
                    cfg.phase = 1;
                    train_phase1(model, train, val, cfg, s1, opt1);
                    TrainState s2;
                    SgdMomentum opt2;
                    cfg.phase = 2;
                    train_phase2(model, train, val, cfg, s2, opt2);

                    GridRow row{bs, lr, ep, mu, s2.best_val_dice};
                    result.rows.push_back(row);
                    if (best_at < 0 || row.val_dice > result.rows[best_at].val_dice) {
                        best_at = static_cast<int>(result.rows.size()) - 1;
                        result.best = cfg;
                    }
                }
    return result;
}

void write_grid_csv(const std::string& path, const std::vector<GridRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "batch_size,learning_rate,max_epochs,momentum,val_dice\n";
    out.precision(17);
    for (const auto& r : rows)
        out << r.batch_size << ',' << r.learning_rate << ',' << r.max_epochs << ','
            << r.momentum << ',' << r.val_dice << '\n';
    if (!out.good()) throw std::runtime_error("write failure: " + path);
}

}  // namespace cow
