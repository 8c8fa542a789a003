#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "weldsign/tensor.hpp"

namespace weldsign {

struct Padding {
    int top = 0, bottom = 0, left = 0, right = 0;

    /// Symmetric "same" padding for an odd kernel at stride 1.
    static Padding same(int kernel) { return {(kernel - 1) / 2, (kernel - 1) / 2, (kernel - 1) / 2, (kernel - 1) / 2}; }
    bool operator==(const Padding&) const = default;
};

/// Output extent of a conv/pool window sweep; rejects empty outputs.
inline int window_out_extent(int in, int pad_a, int pad_b, int kernel, int stride, const char* what) {
    const int padded = in + pad_a + pad_b;
    if (padded < kernel) {
        throw std::invalid_argument(std::string(what) + ": padded extent " + std::to_string(padded) +
                                    " smaller than kernel " + std::to_string(kernel));
    }
    const int out = (padded - kernel) / stride + 1;
    if (out < 1) throw std::invalid_argument(std::string(what) + ": zero-size output");
    return out;
}

/// Grouped 2-D convolution parameters. Kernel layout is K×K×(Cin/g)×Cout with
/// the output channel fastest-varying; group j maps input channels
/// [j·Cin/g, (j+1)·Cin/g) to output channels [j·Cout/g, (j+1)·Cout/g).
struct ConvParams {
    Tensor kernel;               // K×K×(Cin/g)×Cout
    std::optional<Tensor> bias;  // length Cout
    int stride = 1;
    Padding pad;
    int groups = 1;

    int kernel_size() const { return kernel.dim(0); }
    int group_in_channels() const { return kernel.dim(2); }
    int in_channels() const { return kernel.dim(2) * groups; }
    int out_channels() const { return kernel.dim(3); }

    void validate() const {
        if (kernel.rank() != 4 || kernel.dim(0) != kernel.dim(1)) {
            throw std::invalid_argument("conv: kernel must be square K×K×(Cin/g)×Cout, got " + kernel.shape_str());
        }
        if (groups < 1 || out_channels() % groups != 0) {
            throw std::invalid_argument("conv: groups " + std::to_string(groups) +
                                        " must divide out channels " + std::to_string(out_channels()));
        }
        if (stride < 1) throw std::invalid_argument("conv: stride must be >= 1");
        if (bias && (bias->rank() != 1 || bias->dim(0) != out_channels())) {
            throw std::invalid_argument("conv: bias shape " + bias->shape_str() + " does not match out channels");
        }
    }

    int64_t param_count() const {
        int64_t n = static_cast<int64_t>(kernel_size()) * kernel_size() * group_in_channels() * out_channels();
        if (bias) n += out_channels();
        return n;
    }
};

inline Tensor conv2d(const Tensor& input, const ConvParams& p) {
    p.validate();
    const int h = input.height(), w = input.width(), cin = input.channels();
    if (cin != p.in_channels()) {
        throw std::invalid_argument("conv: input channels " + std::to_string(cin) + " != groups*" +
                                    std::to_string(p.group_in_channels()) + " expected by kernel " +
                                    p.kernel.shape_str() + " with g=" + std::to_string(p.groups));
    }
    const int k = p.kernel_size(), stride = p.stride, g = p.groups;
    const int cin_g = cin / g;
    const int cout = p.out_channels();
    const int cout_g = cout / g;
    const int oh = window_out_extent(h, p.pad.top, p.pad.bottom, k, stride, "conv");
    const int ow = window_out_extent(w, p.pad.left, p.pad.right, k, stride, "conv");

    Tensor out({oh, ow, cout});
    const float* in = input.raw();
    const float* ker = p.kernel.raw();
    const float* bias = p.bias ? p.bias->raw() : nullptr;
    float* dst = out.raw();

#pragma omp parallel for schedule(static)
    for (int y = 0; y < oh; ++y) {
        std::vector<float> acc(static_cast<size_t>(cout));
        for (int x = 0; x < ow; ++x) {
            if (bias) {
                std::copy(bias, bias + cout, acc.begin());
            } else {
                std::fill(acc.begin(), acc.end(), 0.0f);
            }
            const int iy0 = y * stride - p.pad.top;
            const int ix0 = x * stride - p.pad.left;
            const int ky_lo = std::max(0, -iy0), ky_hi = std::min(k, h - iy0);
            const int kx_lo = std::max(0, -ix0), kx_hi = std::min(k, w - ix0);
            for (int ky = ky_lo; ky < ky_hi; ++ky) {
                const float* in_row = in + (static_cast<int64_t>(iy0 + ky) * w + ix0) * cin;
                for (int kx = kx_lo; kx < kx_hi; ++kx) {
                    const float* in_px = in_row + static_cast<int64_t>(kx) * cin;
                    const float* ker_px = ker + (static_cast<int64_t>(ky) * k + kx) * cin_g * cout;
                    for (int j = 0; j < g; ++j) {
                        float* acc_j = acc.data() + j * cout_g;
                        for (int ci = 0; ci < cin_g; ++ci) {
                            const float v = in_px[j * cin_g + ci];
                            const float* kr = ker_px + static_cast<int64_t>(ci) * cout + j * cout_g;
                            for (int co = 0; co < cout_g; ++co) acc_j[co] += v * kr[co];
                        }
                    }
                }
            }
            std::copy(acc.begin(), acc.end(), dst + (static_cast<int64_t>(y) * ow + x) * cout);
        }
    }
    return out;
}

struct BatchNormParams {
    Tensor gamma, beta, running_mean, running_var;  // each length C
    float epsilon = 1e-5f;

    int channels() const { return gamma.dim(0); }

    void validate() const {
        const int c = channels();
        for (const Tensor* t : {&gamma, &beta, &running_mean, &running_var}) {
            if (t->rank() != 1 || t->dim(0) != c) {
                throw std::invalid_argument("batchnorm: parameter lengths differ");
            }
        }
        for (int i = 0; i < c; ++i) {
            if (running_var[i] < 0.0f) throw std::invalid_argument("batchnorm: negative running variance");
        }
    }
};

inline Tensor batchnorm_infer(const Tensor& input, const BatchNormParams& p) {
    p.validate();
    const int c = input.channels();
    if (c != p.channels()) {
        throw std::invalid_argument("batchnorm: input channels " + std::to_string(c) + " != parameter length " +
                                    std::to_string(p.channels()));
    }
    std::vector<float> scale(static_cast<size_t>(c)), shift(static_cast<size_t>(c));
    for (int i = 0; i < c; ++i) {
        scale[i] = p.gamma[i] / std::sqrt(p.running_var[i] + p.epsilon);
        shift[i] = p.beta[i] - scale[i] * p.running_mean[i];
    }
    Tensor out(input.shape());
    const float* in = input.raw();
    float* dst = out.raw();
    const int64_t pixels = input.size() / c;
    for (int64_t px = 0; px < pixels; ++px) {
        for (int i = 0; i < c; ++i) dst[px * c + i] = in[px * c + i] * scale[i] + shift[i];
    }
    return out;
}

inline Tensor relu(const Tensor& input) {
    Tensor out(input.shape());
    for (int64_t i = 0; i < input.size(); ++i) out[i] = std::max(0.0f, input[i]);
    return out;
}

/// Max pooling. Out-of-bounds window cells act as -infinity so padding never
/// wins over real (possibly negative) activations.
inline Tensor maxpool(const Tensor& input, int kernel, int stride, Padding pad = {},
                      std::vector<int64_t>* argmax = nullptr) {
    const int h = input.height(), w = input.width(), c = input.channels();
    const int oh = window_out_extent(h, pad.top, pad.bottom, kernel, stride, "maxpool");
    const int ow = window_out_extent(w, pad.left, pad.right, kernel, stride, "maxpool");
    Tensor out({oh, ow, c});
    if (argmax) argmax->assign(static_cast<size_t>(out.size()), -1);
    const float* in = input.raw();
    float* dst = out.raw();
#pragma omp parallel for schedule(static)
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            const int iy0 = y * stride - pad.top;
            const int ix0 = x * stride - pad.left;
            const int ky_lo = std::max(0, -iy0), ky_hi = std::min(kernel, h - iy0);
            const int kx_lo = std::max(0, -ix0), kx_hi = std::min(kernel, w - ix0);
            float* out_px = dst + (static_cast<int64_t>(y) * ow + x) * c;
            int64_t* am_px = argmax ? argmax->data() + (static_cast<int64_t>(y) * ow + x) * c : nullptr;
            for (int ci = 0; ci < c; ++ci) out_px[ci] = -std::numeric_limits<float>::infinity();
            for (int ky = ky_lo; ky < ky_hi; ++ky) {
                for (int kx = kx_lo; kx < kx_hi; ++kx) {
                    const int64_t in_idx = (static_cast<int64_t>(iy0 + ky) * w + (ix0 + kx)) * c;
                    const float* in_px = in + in_idx;
                    for (int ci = 0; ci < c; ++ci) {
                        if (in_px[ci] > out_px[ci]) {
                            out_px[ci] = in_px[ci];
                            if (am_px) am_px[ci] = in_idx + ci;
                        }
                    }
                }
            }
        }
    }
    return out;
}

/// Per-channel spatial mean, 1×1×C output.
inline Tensor global_avgpool(const Tensor& input) {
    const int h = input.height(), w = input.width(), c = input.channels();
    std::vector<double> acc(static_cast<size_t>(c), 0.0);
    const float* in = input.raw();
    const int64_t pixels = static_cast<int64_t>(h) * w;
    for (int64_t px = 0; px < pixels; ++px) {
        for (int i = 0; i < c; ++i) acc[i] += in[px * c + i];
    }
    Tensor out({1, 1, c});
    for (int i = 0; i < c; ++i) out[i] = static_cast<float>(acc[i] / static_cast<double>(pixels));
    return out;
}

/// Dense layer on the flattened input: out_j = sum_i x_i W_ij + b_j.
inline Tensor fully_connected(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    if (weights.rank() != 2) throw std::invalid_argument("fc: weights must be N×M, got " + weights.shape_str());
    const int n = weights.dim(0), m = weights.dim(1);
    if (input.size() != n) {
        throw std::invalid_argument("fc: input size " + std::to_string(input.size()) + " != weight rows " +
                                    std::to_string(n));
    }
    if (bias.rank() != 1 || bias.dim(0) != m) {
        throw std::invalid_argument("fc: bias shape " + bias.shape_str() + " != output size " + std::to_string(m));
    }
    Tensor out({m});
    std::copy(bias.raw(), bias.raw() + m, out.raw());
    const float* x = input.raw();
    const float* wt = weights.raw();
    float* dst = out.raw();
    for (int i = 0; i < n; ++i) {
        const float v = x[i];
        const float* row = wt + static_cast<int64_t>(i) * m;
        for (int j = 0; j < m; ++j) dst[j] += v * row[j];
    }
    return out;
}

inline Tensor softmax(const Tensor& input) {
    if (input.size() < 1) throw std::invalid_argument("softmax: empty input");
    Tensor out(input.shape());
    float mx = input[0];
    for (int64_t i = 1; i < input.size(); ++i) mx = std::max(mx, input[i]);
    double sum = 0.0;
    for (int64_t i = 0; i < input.size(); ++i) {
        const float e = std::exp(input[i] - mx);
        out[i] = e;
        sum += e;
    }
    const float inv = static_cast<float>(1.0 / sum);
    for (int64_t i = 0; i < input.size(); ++i) out[i] *= inv;
    return out;
}

inline float sigmoid_scalar(float x) {
    const double v = 1.0 / (1.0 + std::exp(-static_cast<double>(x)));
    // keep the open interval (0,1) even in saturation
    const float lo = std::numeric_limits<float>::min();
    const float hi = 1.0f - std::numeric_limits<float>::epsilon() / 2.0f;
    return std::min(hi, std::max(lo, static_cast<float>(v)));
}

inline Tensor sigmoid(const Tensor& input) {
    Tensor out(input.shape());
    for (int64_t i = 0; i < input.size(); ++i) out[i] = sigmoid_scalar(input[i]);
    return out;
}

inline Tensor upsample_nearest_2x(const Tensor& input) {
    const int h = input.height(), w = input.width(), c = input.channels();
    Tensor out({2 * h, 2 * w, c});
    for (int y = 0; y < 2 * h; ++y) {
        for (int x = 0; x < 2 * w; ++x) {
            const float* src = input.raw() + (static_cast<int64_t>(y / 2) * w + x / 2) * c;
            float* dst = out.raw() + (static_cast<int64_t>(y) * 2 * w + x) * c;
            std::copy(src, src + c, dst);
        }
    }
    return out;
}

}  // namespace weldsign
