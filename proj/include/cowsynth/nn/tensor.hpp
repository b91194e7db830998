#ifndef COWSYNTH_NN_TENSOR_HPP
#define COWSYNTH_NN_TENSOR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cow::nn {

// Dense NCHW tensor. Contiguous, x fastest.
template <typename T>
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          data(static_cast<size_t>(n_) * c_ * h_ * w_, T(0)) {}

    size_t size() const { return data.size(); }
    size_t plane() const { return static_cast<size_t>(h) * w; }
    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    std::string shape_str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }

    T* ptr(int in, int ic = 0) {
        return data.data() + (static_cast<size_t>(in) * c + ic) * plane();
    }
    const T* ptr(int in, int ic = 0) const {
        return data.data() + (static_cast<size_t>(in) * c + ic) * plane();
    }
    T& at(int in, int ic, int iy, int ix) {
        return data[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
    }
    T at(int in, int ic, int iy, int ix) const {
        return data[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }
    static Tensor zeros_like(const Tensor& o) { return Tensor(o.n, o.c, o.h, o.w); }
};

// Channel-wise concat of two tensors with matching N/H/W.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.n != b.n || a.h != b.h || a.w != b.w)
        throw std::invalid_argument("concat_channels: shape mismatch " +
                                    a.shape_str() + " vs " + b.shape_str());
    Tensor<T> out(a.n, a.c + b.c, a.h, a.w);
    size_t pl = a.plane();
    for (int in = 0; in < a.n; ++in) {
        std::copy(a.ptr(in), a.ptr(in) + a.c * pl, out.ptr(in));
        std::copy(b.ptr(in), b.ptr(in) + b.c * pl, out.ptr(in, a.c));
    }
    return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& c) {
    return concat_channels(concat_channels(a, b), c);
}

// Copies channels [c0, c0+count) of src into a new tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& src, int c0, int count) {
    if (c0 < 0 || count < 0 || c0 + count > src.c)
        throw std::invalid_argument("slice_channels: bad range");
    Tensor<T> out(src.n, count, src.h, src.w);
    size_t pl = src.plane();
    for (int in = 0; in < src.n; ++in)
        std::copy(src.ptr(in, c0), src.ptr(in, c0) + count * pl, out.ptr(in));
    return out;
}

template <typename T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src) {
    if (!dst.same_shape(src))
        throw std::invalid_argument("add_inplace: shape mismatch " +
                                    dst.shape_str() + " vs " + src.shape_str());
    for (size_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
}

}  // namespace cow::nn

#endif
