#ifndef COWSYNTH_METRICS_HPP
#define COWSYNTH_METRICS_HPP

#include <optional>
#include <string>
#include <vector>

#include "cowsynth/volume.hpp"

namespace cow {

// Overlap Dice on whole volumes. Two empty masks count as a perfect match.
double dice_score(const BinaryMask& pred, const BinaryMask& gt);

// 95th-percentile symmetric Hausdorff distance between mask surfaces, in mm
// (voxel spacing respected). Surface voxels are foreground voxels with at
// least one background face-neighbour; the volume border counts as
// background. Empty on either side -> no value.
std::optional<double> hd95(const BinaryMask& a, const BinaryMask& b);

// Linear-interpolated percentile of an unsorted sample, q in [0,1].
double percentile(std::vector<double> values, double q);

struct EvalRecord {
    std::string id;
    double dice = 0.0;
    std::optional<double> hd95;
};

// mean with a normal-approximation 95% confidence interval
struct MetricSummary {
    double mean = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    int n = 0;
};

struct EvalSummary {
    MetricSummary dice;
    MetricSummary hd95;
    int n_cases = 0;
    int n_hd95_missing = 0;  // cases skipped in the hd95 summary
};

MetricSummary summarize(const std::vector<double>& values);
EvalSummary summarize_records(const std::vector<EvalRecord>& records);

// case_id,dice,hd95 rows; a missing hd95 leaves the field empty
void write_metrics_csv(const std::string& path, const std::vector<EvalRecord>& records);
std::vector<EvalRecord> read_metrics_csv(const std::string& path);

}  // namespace cow

#endif
