#ifndef COWSYNTH_ABLATION_HPP
#define COWSYNTH_ABLATION_HPP

#include <optional>
#include <string>
#include <vector>

#include "cowsynth/manifest.hpp"
#include "cowsynth/nn/model.hpp"
#include "cowsynth/training.hpp"

namespace cow {

struct AblationRow {
    bool no_mask = false;  // control: phase 2 uses plain reconstruction loss
    int radius = 0;
    double dice = 0.0;                // mean test-split Dice of the best model
    std::optional<double> coverage;   // mean attention-mask coverage; none for control
};

struct AblationPlan {
    std::vector<int> radii{0, 5, 10, 15, 20};
    bool no_mask_control = true;
    TrainingConfig phase1;
    TrainingConfig phase2;
};

// Pretrains the autoencoder once, then trains one phase-2 model per radius
// (and the control) from that shared checkpoint. Per-cell artifacts land in
// out_dir/cell_<name>/.
std::vector<AblationRow> run_dilation_ablation(const DatasetManifest& m,
                                               const nn::ArchitectureConfig& arch,
                                               const AblationPlan& plan,
                                               const std::string& out_dir);

// radius,dice,coverage rows; the control row writes "no_mask" for the radius
// and leaves coverage empty
void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows);
std::vector<AblationRow> read_ablation_csv(const std::string& path);

void plot_dice_vs_radius(const std::string& path, const std::vector<AblationRow>& rows);

}  // namespace cow

#endif
