#ifndef COWSYNTH_REPORT_HPP
#define COWSYNTH_REPORT_HPP

#include <string>
#include <vector>

#include "cowsynth/inference.hpp"
#include "cowsynth/manifest.hpp"
#include "cowsynth/nn/model.hpp"
#include "cowsynth/training.hpp"

namespace cow {

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

// Minimal static line plot (axes, ticks, legend) written as an image file.
void render_line_plot(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<PlotSeries>& series);

// Loss curves for one training phase, from training-log rows.
void plot_loss_curves(const std::string& path, const std::vector<TrainLogRow>& log,
                      int phase);

// sigma1^2 / sigma2^2 trajectories over phase-2 epochs.
void plot_sigma_trajectories(const std::string& path,
                             const std::vector<TrainLogRow>& log);

// One row per case: T2 | ground truth | prediction | attention map.
// Cases are the best, median, and worst of the split by Dice.
void save_montage(const std::string& path, nn::SynthModel<float>& model,
                  const DatasetManifest& m, SplitTag tag, int radius,
                  double threshold);

struct ReportFiles {
    std::vector<std::string> written;
    bool sigma_skipped = false;  // no phase-2 rows in the log
};

// Renders every plot the run's artifacts support: phase-1 and phase-2 loss
// curves, the sigma trajectory (when phase 2 ran), and the test-split montage.
ReportFiles write_report(const std::string& out_dir,
                         const std::vector<TrainLogRow>& log,
                         nn::SynthModel<float>& model, const DatasetManifest& m,
                         SplitTag tag, int radius, double threshold);

}  // namespace cow

#endif
