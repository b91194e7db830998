#ifndef COWSYNTH_NN_LAYERS_HPP
#define COWSYNTH_NN_LAYERS_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cowsynth/nn/tensor.hpp"

namespace cow::nn {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatCM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;

// Trainable tensor with accumulated gradient. Frozen parameters keep their
// gradient buffers but are skipped by the optimiser.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    bool trainable = true;

    void init_shape(int n, int c, int h, int w) {
        value = Tensor<T>(n, c, h, w);
        grad = Tensor<T>(n, c, h, w);
    }
    void zero_grad() { grad.fill(T(0)); }
    size_t count() const { return value.size(); }
};

template <typename T>
struct Layer {
    virtual ~Layer() = default;
    virtual void collect(std::vector<Parameter<T>*>& out) {}
};

// 3x3-style convolution, stride 1, zero padding k/2 (spatial shape
// preserved). im2col + GEMM; backward rebuilds the column buffer instead of
// caching it, trading a little compute for activation-sized memory.
template <typename T>
class Conv2d : public Layer<T> {
public:
    Conv2d() = default;
    Conv2d(int in_ch, int out_ch, int k, std::string name)
        : in_ch_(in_ch), out_ch_(out_ch), k_(k), pad_(k / 2) {
        weight_.name = name + ".weight";
        bias_.name = name + ".bias";
        weight_.init_shape(out_ch, in_ch, k, k);
        bias_.init_shape(1, out_ch, 1, 1);
    }

    void init(std::mt19937_64& rng, T leaky_slope) {
        // Kaiming uniform for the leaky rectifier
        T gain = std::sqrt(T(2) / (T(1) + leaky_slope * leaky_slope));
        T bound = gain * std::sqrt(T(3) / T(in_ch_ * k_ * k_));
        std::uniform_real_distribution<T> dist(-bound, bound);
        for (T& v : weight_.value.data) v = dist(rng);
        bias_.value.fill(T(0));
    }

    Tensor<T> forward(const Tensor<T>& x) {
        if (x.c != in_ch_)
            throw std::invalid_argument(weight_.name + ": expected " +
                                        std::to_string(in_ch_) + " channels, got " +
                                        x.shape_str());
        x_ = x;
        Tensor<T> y(x.n, out_ch_, x.h, x.w);
        const int hw = x.h * x.w;
        const int ck2 = in_ch_ * k_ * k_;
        col_buf_.resize(static_cast<size_t>(ck2) * hw);
        Eigen::Map<const MatRM<T>> wm(weight_.value.data.data(), out_ch_, ck2);
        for (int in = 0; in < x.n; ++in) {
            im2col(x.ptr(in), x.h, x.w, col_buf_.data());
            Eigen::Map<const MatCM<T>> cm(col_buf_.data(), ck2, hw);
            Eigen::Map<MatRM<T>> ym(y.ptr(in), out_ch_, hw);
            ym.noalias() = wm * cm;
            for (int oc = 0; oc < out_ch_; ++oc) {
                T b = bias_.value.data[oc];
                T* p = y.ptr(in, oc);
                for (int i = 0; i < hw; ++i) p[i] += b;
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        const int hw = x_.h * x_.w;
        const int ck2 = in_ch_ * k_ * k_;
        Tensor<T> gx = Tensor<T>::zeros_like(x_);
        col_buf_.resize(static_cast<size_t>(ck2) * hw);
        dcol_buf_.resize(static_cast<size_t>(ck2) * hw);
        Eigen::Map<const MatRM<T>> wm(weight_.value.data.data(), out_ch_, ck2);
        Eigen::Map<MatRM<T>> gwm(weight_.grad.data.data(), out_ch_, ck2);
        for (int in = 0; in < x_.n; ++in) {
            Eigen::Map<const MatRM<T>> gym(gy.ptr(in), out_ch_, hw);
            im2col(x_.ptr(in), x_.h, x_.w, col_buf_.data());
            Eigen::Map<const MatCM<T>> cm(col_buf_.data(), ck2, hw);
            gwm.noalias() += gym * cm.transpose();
            for (int oc = 0; oc < out_ch_; ++oc) {
                const T* p = gy.ptr(in, oc);
                T s = 0;
                for (int i = 0; i < hw; ++i) s += p[i];
                bias_.grad.data[oc] += s;
            }
            Eigen::Map<MatCM<T>> dcm(dcol_buf_.data(), ck2, hw);
            dcm.noalias() = wm.transpose() * gym;
            col2im(dcol_buf_.data(), gx.ptr(in), x_.h, x_.w);
        }
        return gx;
    }

    void collect(std::vector<Parameter<T>*>& out) override {
        out.push_back(&weight_);
        out.push_back(&bias_);
    }

    int in_channels() const { return in_ch_; }
    int out_channels() const { return out_ch_; }

private:
    // col is (in_ch*k*k) x (h*w), column-major: one column per output pixel.
    void im2col(const T* x, int h, int w, T* col) const {
        const int hw = h * w;
        const int k2 = k_ * k_;
        for (int y = 0; y < h; ++y) {
            for (int xx = 0; xx < w; ++xx) {
                T* dst = col + static_cast<size_t>(y * w + xx) * in_ch_ * k2;
                for (int ic = 0; ic < in_ch_; ++ic) {
                    const T* plane = x + static_cast<size_t>(ic) * hw;
                    for (int ky = 0; ky < k_; ++ky) {
                        int sy = y + ky - pad_;
                        if (sy < 0 || sy >= h) {
                            for (int kx = 0; kx < k_; ++kx) *dst++ = T(0);
                            continue;
                        }
                        const T* row = plane + static_cast<size_t>(sy) * w;
                        for (int kx = 0; kx < k_; ++kx) {
                            int sx = xx + kx - pad_;
                            *dst++ = (sx < 0 || sx >= w) ? T(0) : row[sx];
                        }
                    }
                }
            }
        }
    }

    void col2im(const T* col, T* gx, int h, int w) const {
        const int hw = h * w;
        const int k2 = k_ * k_;
        for (int y = 0; y < h; ++y) {
            for (int xx = 0; xx < w; ++xx) {
                const T* src = col + static_cast<size_t>(y * w + xx) * in_ch_ * k2;
                for (int ic = 0; ic < in_ch_; ++ic) {
                    T* plane = gx + static_cast<size_t>(ic) * hw;
                    for (int ky = 0; ky < k_; ++ky) {
                        int sy = y + ky - pad_;
                        if (sy < 0 || sy >= h) {
                            src += k_;
                            continue;
                        }
                        T* row = plane + static_cast<size_t>(sy) * w;
                        for (int kx = 0; kx < k_; ++kx) {
                            int sx = xx + kx - pad_;
                            if (sx >= 0 && sx < w) row[sx] += src[kx];
                        }
                        src += k_;
                    }
                }
            }
        }
    }

    int in_ch_ = 0, out_ch_ = 0, k_ = 3, pad_ = 1;
    Parameter<T> weight_, bias_;
    Tensor<T> x_;
    std::vector<T> col_buf_, dcol_buf_;
};

// Per-sample, per-channel normalisation with learnable affine.
template <typename T>
class InstanceNorm2d : public Layer<T> {
public:
    InstanceNorm2d() = default;
    InstanceNorm2d(int channels, std::string name) : channels_(channels) {
        gamma_.name = name + ".gamma";
        beta_.name = name + ".beta";
        gamma_.init_shape(1, channels, 1, 1);
        beta_.init_shape(1, channels, 1, 1);
        gamma_.value.fill(T(1));
        beta_.value.fill(T(0));
    }

    Tensor<T> forward(const Tensor<T>& x) {
        const size_t pl = x.plane();
        xhat_ = Tensor<T>::zeros_like(x);
        inv_std_.assign(static_cast<size_t>(x.n) * x.c, T(0));
        Tensor<T> y = Tensor<T>::zeros_like(x);
        for (int in = 0; in < x.n; ++in) {
            for (int ic = 0; ic < x.c; ++ic) {
                const T* p = x.ptr(in, ic);
                T mean = 0;
                for (size_t i = 0; i < pl; ++i) mean += p[i];
                mean /= T(pl);
                T var = 0;
                for (size_t i = 0; i < pl; ++i) {
                    T d = p[i] - mean;
                    var += d * d;
                }
                var /= T(pl);
                T inv = T(1) / std::sqrt(var + eps_);
                inv_std_[static_cast<size_t>(in) * x.c + ic] = inv;
                T g = gamma_.value.data[ic], b = beta_.value.data[ic];
                T* xh = xhat_.ptr(in, ic);
                T* yo = y.ptr(in, ic);
                for (size_t i = 0; i < pl; ++i) {
                    xh[i] = (p[i] - mean) * inv;
                    yo[i] = g * xh[i] + b;
                }
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        const size_t pl = gy.plane();
        Tensor<T> gx = Tensor<T>::zeros_like(gy);
        for (int in = 0; in < gy.n; ++in) {
            for (int ic = 0; ic < gy.c; ++ic) {
                const T* g = gy.ptr(in, ic);
                const T* xh = xhat_.ptr(in, ic);
                T inv = inv_std_[static_cast<size_t>(in) * gy.c + ic];
                T gamma = gamma_.value.data[ic];
                T sum_g = 0, sum_gx = 0;
                for (size_t i = 0; i < pl; ++i) {
                    sum_g += g[i];
                    sum_gx += g[i] * xh[i];
                }
                gamma_.grad.data[ic] += sum_gx;
                beta_.grad.data[ic] += sum_g;
                T mg = sum_g / T(pl);
                T mgx = sum_gx / T(pl);
                T* out = gx.ptr(in, ic);
                for (size_t i = 0; i < pl; ++i)
                    out[i] = gamma * inv * (g[i] - mg - xh[i] * mgx);
            }
        }
        return gx;
    }

    void collect(std::vector<Parameter<T>*>& out) override {
        out.push_back(&gamma_);
        out.push_back(&beta_);
    }

private:
    int channels_ = 0;
    T eps_ = T(1e-5);
    Parameter<T> gamma_, beta_;
    Tensor<T> xhat_;
    std::vector<T> inv_std_;
};

template <typename T>
class LeakyReLU : public Layer<T> {
public:
    explicit LeakyReLU(T slope = T(0.2)) : slope_(slope) {}

    Tensor<T> forward(const Tensor<T>& x) {
        mask_.assign(x.size(), 0);
        Tensor<T> y = Tensor<T>::zeros_like(x);
        for (size_t i = 0; i < x.size(); ++i) {
            bool pos = x.data[i] > T(0);
            mask_[i] = pos;
            y.data[i] = pos ? x.data[i] : slope_ * x.data[i];
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx = Tensor<T>::zeros_like(gy);
        for (size_t i = 0; i < gy.size(); ++i)
            gx.data[i] = mask_[i] ? gy.data[i] : slope_ * gy.data[i];
        return gx;
    }

private:
    T slope_;
    std::vector<uint8_t> mask_;
};

template <typename T>
class Sigmoid : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x) {
        y_ = Tensor<T>::zeros_like(x);
        for (size_t i = 0; i < x.size(); ++i)
            y_.data[i] = T(1) / (T(1) + std::exp(-x.data[i]));
        return y_;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx = Tensor<T>::zeros_like(gy);
        for (size_t i = 0; i < gy.size(); ++i)
            gx.data[i] = gy.data[i] * y_.data[i] * (T(1) - y_.data[i]);
        return gx;
    }

private:
    Tensor<T> y_;
};

// 2x2 max pooling, stride 2. Requires even spatial dims.
template <typename T>
class MaxPool2d : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x) {
        if (x.h % 2 || x.w % 2)
            throw std::invalid_argument("max-pool needs even spatial dims, got " +
                                        x.shape_str());
        in_h_ = x.h;
        in_w_ = x.w;
        Tensor<T> y(x.n, x.c, x.h / 2, x.w / 2);
        argmax_.assign(y.size(), 0);
        size_t o = 0;
        for (int in = 0; in < x.n; ++in) {
            for (int ic = 0; ic < x.c; ++ic) {
                const T* p = x.ptr(in, ic);
                for (int y2 = 0; y2 < y.h; ++y2) {
                    for (int x2 = 0; x2 < y.w; ++x2) {
                        int base = (2 * y2) * x.w + 2 * x2;
                        int cand[4] = {base, base + 1, base + x.w, base + x.w + 1};
                        int best = cand[0];
                        for (int i = 1; i < 4; ++i)
                            if (p[cand[i]] > p[best]) best = cand[i];
                        argmax_[o] = best;
                        y.data[o] = p[best];
                        ++o;
                    }
                }
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx(gy.n, gy.c, in_h_, in_w_);
        size_t o = 0;
        for (int in = 0; in < gy.n; ++in)
            for (int ic = 0; ic < gy.c; ++ic) {
                T* p = gx.ptr(in, ic);
                for (size_t i = 0; i < gy.plane(); ++i, ++o)
                    p[argmax_[o]] += gy.data[o];
            }
        return gx;
    }

private:
    int in_h_ = 0, in_w_ = 0;
    std::vector<int> argmax_;
};

// Nearest-neighbour 2x upsampling.
template <typename T>
class Upsample2d : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x) {
        Tensor<T> y(x.n, x.c, x.h * 2, x.w * 2);
        for (int in = 0; in < x.n; ++in)
            for (int ic = 0; ic < x.c; ++ic) {
                const T* p = x.ptr(in, ic);
                T* q = y.ptr(in, ic);
                for (int yy = 0; yy < x.h; ++yy)
                    for (int xx = 0; xx < x.w; ++xx) {
                        T v = p[yy * x.w + xx];
                        int o = (2 * yy) * (2 * x.w) + 2 * xx;
                        q[o] = v;
                        q[o + 1] = v;
                        q[o + 2 * x.w] = v;
                        q[o + 2 * x.w + 1] = v;
                    }
            }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx(gy.n, gy.c, gy.h / 2, gy.w / 2);
        for (int in = 0; in < gy.n; ++in)
            for (int ic = 0; ic < gy.c; ++ic) {
                const T* g = gy.ptr(in, ic);
                T* p = gx.ptr(in, ic);
                for (int yy = 0; yy < gx.h; ++yy)
                    for (int xx = 0; xx < gx.w; ++xx) {
                        int o = (2 * yy) * gy.w + 2 * xx;
                        p[yy * gx.w + xx] =
                            g[o] + g[o + 1] + g[o + gy.w] + g[o + gy.w + 1];
                    }
            }
        return gx;
    }
};

}  // namespace cow::nn

#endif
