#ifndef COWSYNTH_LOSSES_HPP
#define COWSYNTH_LOSSES_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cowsynth/nn/tensor.hpp"
#include "cowsynth/preprocess.hpp"

namespace cow {

// One training-log row; combined follows the homoscedastic-uncertainty
// weighting of the two phase-2 tasks.
struct LossReport {
    double l_recon = 0.0;
    double l_seg = 0.0;
    double l_loc = 0.0;
    double combined = 0.0;
    double sigma1_sq = 1.0;
    double sigma2_sq = 1.0;
};

// mean |a - b|
template <typename T>
double mae_loss(const nn::Tensor<T>& a, const nn::Tensor<T>& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("mae_loss: shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
    if (a.size() == 0) throw std::invalid_argument("mae_loss: empty input");
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i)
        s += std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]));
    return s / static_cast<double>(a.size());
}

// d mae / d a; sign(0) taken as 0
template <typename T>
nn::Tensor<T> mae_loss_grad(const nn::Tensor<T>& a, const nn::Tensor<T>& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("mae_loss_grad: shape mismatch");
    nn::Tensor<T> g = nn::Tensor<T>::zeros_like(a);
    T inv = T(1) / static_cast<T>(a.size());
    for (size_t i = 0; i < a.size(); ++i) {
        T d = a.data[i] - b.data[i];
        g.data[i] = d > T(0) ? inv : (d < T(0) ? -inv : T(0));
    }
    return g;
}

// Soft Dice loss over the whole field: 1 - (2*sum(p*g)+s)/(sum(p)+sum(g)+s).
template <typename T>
double dice_loss(const nn::Tensor<T>& pred, const nn::Tensor<T>& gt, double smooth) {
    if (!pred.same_shape(gt))
        throw std::invalid_argument("dice_loss: shape mismatch " + pred.shape_str() +
                                    " vs " + gt.shape_str());
    double inter = 0, psum = 0, gsum = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double p = pred.data[i];
        if (p < -1e-6 || p > 1.0 + 1e-6)
            throw std::invalid_argument("dice_loss: prediction outside [0,1]");
        inter += p * static_cast<double>(gt.data[i]);
        psum += p;
        gsum += gt.data[i];
    }
    return 1.0 - (2.0 * inter + smooth) / (psum + gsum + smooth);
}

template <typename T>
nn::Tensor<T> dice_loss_grad(const nn::Tensor<T>& pred, const nn::Tensor<T>& gt,
                             double smooth) {
    if (!pred.same_shape(gt))
        throw std::invalid_argument("dice_loss_grad: shape mismatch");
    double inter = 0, psum = 0, gsum = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        inter += static_cast<double>(pred.data[i]) * static_cast<double>(gt.data[i]);
        psum += pred.data[i];
        gsum += gt.data[i];
    }
    double den = psum + gsum + smooth;
    double num = 2.0 * inter + smooth;
    nn::Tensor<T> g = nn::Tensor<T>::zeros_like(pred);
    for (size_t i = 0; i < pred.size(); ++i)
        g.data[i] = static_cast<T>(-(2.0 * gt.data[i] * den - num) / (den * den));
    return g;
}

// Hard attention mask from the predicted segmentation: threshold, then
// per-slice Chebyshev dilation. Constant w.r.t. the network (no gradient
// flows through thresholding or dilation).
template <typename T>
std::vector<uint8_t> predicted_attention_mask(const nn::Tensor<T>& pred_seg,
                                              double threshold, int radius) {
    if (pred_seg.c != 1)
        throw std::invalid_argument("predicted_attention_mask expects single-channel input");
    std::vector<uint8_t> bin(pred_seg.size()), out(pred_seg.size());
    for (size_t i = 0; i < pred_seg.size(); ++i)
        bin[i] = pred_seg.data[i] > static_cast<T>(threshold) ? 1 : 0;
    size_t pl = pred_seg.plane();
    for (int in = 0; in < pred_seg.n; ++in)
        dilate_slice(bin.data() + in * pl, out.data() + in * pl, pred_seg.h,
                     pred_seg.w, radius);
    return out;
}

// Local loss of phase 2: mae(mask .* recon, gt attention map), where mask is
// the dilated thresholded prediction. Gradient flows only through recon.
template <typename T>
double local_loss(const nn::Tensor<T>& recon, const nn::Tensor<T>& pred_seg,
                  const nn::Tensor<T>& gt_attention_map, int radius, double threshold) {
    if (!recon.same_shape(pred_seg) || !recon.same_shape(gt_attention_map))
        throw std::invalid_argument("local_loss: shape mismatch");
    std::vector<uint8_t> mask = predicted_attention_mask(pred_seg, threshold, radius);
    double s = 0;
    for (size_t i = 0; i < recon.size(); ++i) {
        double masked = mask[i] ? static_cast<double>(recon.data[i]) : 0.0;
        s += std::abs(masked - static_cast<double>(gt_attention_map.data[i]));
    }
    return s / static_cast<double>(recon.size());
}

// d local_loss / d recon (the only differentiated argument).
template <typename T>
nn::Tensor<T> local_loss_grad(const nn::Tensor<T>& recon, const nn::Tensor<T>& pred_seg,
                              const nn::Tensor<T>& gt_attention_map, int radius,
                              double threshold) {
    if (!recon.same_shape(pred_seg) || !recon.same_shape(gt_attention_map))
        throw std::invalid_argument("local_loss_grad: shape mismatch");
    std::vector<uint8_t> mask = predicted_attention_mask(pred_seg, threshold, radius);
    nn::Tensor<T> g = nn::Tensor<T>::zeros_like(recon);
    T inv = T(1) / static_cast<T>(recon.size());
    for (size_t i = 0; i < recon.size(); ++i) {
        if (!mask[i]) continue;  // masked-out recon pixels get no gradient
        T d = recon.data[i] - gt_attention_map.data[i];
        g.data[i] = d > T(0) ? inv : (d < T(0) ? -inv : T(0));
    }
    return g;
}

// Homoscedastic-uncertainty task weighting, parameterised by log sigma^2:
//   L = l_seg/(2*s1^2) + l_loc/(2*s2^2) + log(s1*s2)
// with log(s1*s2) = (log s1^2 + log s2^2)/2.
inline double uncertainty_weighted_loss(double l_seg, double l_loc,
                                        double log_sigma1_sq, double log_sigma2_sq) {
    if (!std::isfinite(l_seg) || !std::isfinite(l_loc) ||
        !std::isfinite(log_sigma1_sq) || !std::isfinite(log_sigma2_sq))
        throw std::invalid_argument("uncertainty_weighted_loss: non-finite input");
    double s1 = std::exp(log_sigma1_sq);
    double s2 = std::exp(log_sigma2_sq);
    return l_seg / (2.0 * s1) + l_loc / (2.0 * s2) +
           0.5 * (log_sigma1_sq + log_sigma2_sq);
}

struct UncertaintyGrads {
    double d_l_seg;          // dL/dl_seg = 1/(2 s1^2)
    double d_l_loc;          // dL/dl_loc = 1/(2 s2^2)
    double d_log_sigma1_sq;  // dL/d log s1^2
    double d_log_sigma2_sq;  // dL/d log s2^2
};

inline UncertaintyGrads uncertainty_weighted_loss_grads(double l_seg, double l_loc,
                                                        double log_sigma1_sq,
                                                        double log_sigma2_sq) {
    double s1 = std::exp(log_sigma1_sq);
    double s2 = std::exp(log_sigma2_sq);
    UncertaintyGrads g;
    g.d_l_seg = 1.0 / (2.0 * s1);
    g.d_l_loc = 1.0 / (2.0 * s2);
    g.d_log_sigma1_sq = -l_seg / (2.0 * s1) + 0.5;
    g.d_log_sigma2_sq = -l_loc / (2.0 * s2) + 0.5;
    return g;
}

}  // namespace cow

#endif
