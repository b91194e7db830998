#ifndef COWSYNTH_TRAINING_HPP
#define COWSYNTH_TRAINING_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cowsynth/checkpoint.hpp"
#include "cowsynth/manifest.hpp"
#include "cowsynth/nn/model.hpp"
#include "cowsynth/volume.hpp"

namespace cow {

struct EarlyStopConfig {
    int window_epochs = 10;
    double slope_tol = 1e-4;
};

// One training run = one phase. Phase 1 pretrains the autoencoder with the
// synthesis branch frozen; phase 2 trains everything under the
// uncertainty-weighted multi-task loss.
struct TrainingConfig {
    int batch_size = 8;
    double learning_rate = 1e-3;
    int max_epochs = 30;
    double momentum = 0.9;
    int dilation_radius = 10;
    double seg_threshold = 0.5;
    EarlyStopConfig early_stop;
    uint64_t seed = 7;
    int phase = 1;
    double dice_smooth = 1.0;
    // When false, phase 2 supervises the decoder with plain reconstruction
    // error instead of the local loss (the no-attention-mask control).
    bool use_local_loss = true;

    void validate() const;
};

// CSV schema: epoch,phase,l_recon,l_seg,l_loc,combined,sigma1_sq,sigma2_sq
struct TrainLogRow {
    int epoch = 0;
    int phase = 1;
    double l_recon = 0, l_seg = 0, l_loc = 0, combined = 0;
    double sigma1_sq = 1.0, sigma2_sq = 1.0;
};

void write_training_log(const std::string& path, const std::vector<TrainLogRow>& rows);
std::vector<TrainLogRow> read_training_log(const std::string& path);

// In-memory slice store. Ground-truth attention maps are cheap to derive,
// so only the T2 slice and the segmentation are kept; the map is built per
// batch for whatever radius the run asks for.
struct SliceRecord {
    nn::Tensor<float> t2;      // 1 x 1 x h x w
    std::vector<uint8_t> seg;  // h*w
    std::string case_id;
    int z = 0;
};

struct SliceDataset {
    int h = 0, w = 0;
    std::vector<SliceRecord> slices;
    size_t size() const { return slices.size(); }
};

SliceDataset make_slice_dataset(const std::vector<PairedSample>& samples);
SliceDataset load_slice_dataset(const DatasetManifest& m, SplitTag tag);

struct Batch {
    nn::Tensor<float> t2;    // n x 1 x h x w
    nn::Tensor<float> seg;   // ground-truth masks as floats
    nn::Tensor<float> attn;  // dilated ground truth times T2
};

Batch assemble_batch(const SliceDataset& ds, const std::vector<size_t>& idx, int radius);

// Least-squares slope of the trailing `window` losses; stop iff the slope
// exceeds -tol. Histories shorter than the window never stop.
bool early_stop_check(const std::vector<double>& loss_history, int window, double tol);

struct SgdMomentum {
    double lr = 1e-3;
    double mu = 0.9;
    TensorMap velocity;  // keyed by parameter name; persisted in checkpoints

    void step(const std::vector<nn::Parameter<float>*>& params);
};

struct TrainState {
    int epoch = 0;  // completed epochs across resumes
    std::vector<TrainLogRow> log;
    std::vector<double> val_history;  // recon MAE (phase 1) or Dice (phase 2)
    int best_epoch = -1;
    double best_val_dice = -1.0;
    bool stopped_early = false;
};

void save_train_state(const TrainState& s, const std::string& path);
TrainState load_train_state(const std::string& path);

struct EpochCallbacks {
    // best-so-far validation Dice improved (phase 2); write the best checkpoint here
    std::function<void(nn::SynthModel<float>&, const TrainState&)> on_best;
    // end of every epoch; write the resume checkpoint here
    std::function<void(nn::SynthModel<float>&, const TrainState&, const SgdMomentum&)> on_epoch;
};

// Runs epochs state.epoch .. cfg.max_epochs-1 (so a populated state resumes).
// Both throw on an empty training split and abort on non-finite losses.
void train_phase1(nn::SynthModel<float>& model, const SliceDataset& train,
                  const SliceDataset& val, const TrainingConfig& cfg, TrainState& state,
                  SgdMomentum& opt, const EpochCallbacks& cb = {});
void train_phase2(nn::SynthModel<float>& model, const SliceDataset& train,
                  const SliceDataset& val, const TrainingConfig& cfg, TrainState& state,
                  SgdMomentum& opt, const EpochCallbacks& cb = {});

// Validation metrics over a dataset (no parameter updates).
double validation_recon_mae(nn::SynthModel<float>& model, const SliceDataset& ds,
                            int batch_size);
double validation_dice(nn::SynthModel<float>& model, const SliceDataset& ds,
                       int batch_size, double threshold);

struct GridSpace {
    std::vector<int> batch_sizes;
    std::vector<double> learning_rates;
    std::vector<int> max_epochs;
    std::vector<double> momentums;
};

struct GridRow {
    int batch_size = 0;
    double learning_rate = 0;
    int max_epochs = 0;
    double momentum = 0;
    double val_dice = 0;
};

struct GridResult {
    TrainingConfig best;
    std::vector<GridRow> rows;  // enumeration order: batch, lr, epochs, momentum
};

// Trains phase 1 + phase 2 per grid point and ranks by validation Dice.
// Ties keep the earliest point in enumeration order.
GridResult grid_search(const GridSpace& space, const SliceDataset& train,
                       const SliceDataset& val, const TrainingConfig& base,
                       const nn::ArchitectureConfig& arch);

void write_grid_csv(const std::string& path, const std::vector<GridRow>& rows);

}  // namespace cow

#endif
