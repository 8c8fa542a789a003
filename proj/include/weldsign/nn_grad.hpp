#pragma once

#include "weldsign/nn_ops.hpp"

namespace weldsign {

struct ConvGrads {
    Tensor input;
    Tensor kernel;
    std::optional<Tensor> bias;
};

/// Gradients of conv2d w.r.t. input, kernel and bias. `input` is the saved
/// forward input, `grad_out` the upstream gradient at the conv output.
inline ConvGrads conv2d_bwd(const Tensor& input, const ConvParams& p, const Tensor& grad_out) {
    p.validate();
    const int h = input.height(), w = input.width(), cin = input.channels();
    const int k = p.kernel_size(), stride = p.stride, g = p.groups;
    const int cin_g = cin / g;
    const int cout = p.out_channels();
    const int cout_g = cout / g;
    const int oh = grad_out.height(), ow = grad_out.width();
    if (grad_out.channels() != cout) {
        throw std::invalid_argument("conv_bwd: upstream gradient channels " +
                                    std::to_string(grad_out.channels()) + " != " + std::to_string(cout));
    }

    ConvGrads grads;
    grads.input = Tensor(input.shape());
    grads.kernel = Tensor(p.kernel.shape());
    const float* ker = p.kernel.raw();
    const float* gout = grad_out.raw();
    const float* in = input.raw();

    float* gin = grads.input.raw();
#pragma omp parallel for schedule(static)
    for (int iy = 0; iy < h; ++iy) {
        for (int ix = 0; ix < w; ++ix) {
            float* gin_px = gin + (static_cast<int64_t>(iy) * w + ix) * cin;
            for (int ky = 0; ky < k; ++ky) {
                const int ty = iy + p.pad.top - ky;
                if (ty < 0 || ty % stride != 0) continue;
                const int y = ty / stride;
                if (y >= oh) continue;
                for (int kx = 0; kx < k; ++kx) {
                    const int tx = ix + p.pad.left - kx;
                    if (tx < 0 || tx % stride != 0) continue;
                    const int x = tx / stride;
                    if (x >= ow) continue;
                    const float* g_px = gout + (static_cast<int64_t>(y) * ow + x) * cout;
                    const float* ker_px = ker + (static_cast<int64_t>(ky) * k + kx) * cin_g * cout;
                    for (int j = 0; j < g; ++j) {
                        for (int ci = 0; ci < cin_g; ++ci) {
                            const float* kr = ker_px + static_cast<int64_t>(ci) * cout + j * cout_g;
                            const float* gr = g_px + j * cout_g;
                            float acc = 0.0f;
                            for (int co = 0; co < cout_g; ++co) acc += kr[co] * gr[co];
                            gin_px[j * cin_g + ci] += acc;
                        }
                    }
                }
            }
        }
    }

    float* gk = grads.kernel.raw();
#pragma omp parallel for collapse(2) schedule(static)
    for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
            float* gk_px = gk + (static_cast<int64_t>(ky) * k + kx) * cin_g * cout;
            for (int y = 0; y < oh; ++y) {
                const int iy = y * stride - p.pad.top + ky;
                if (iy < 0 || iy >= h) continue;
                for (int x = 0; x < ow; ++x) {
                    const int ix = x * stride - p.pad.left + kx;
                    if (ix < 0 || ix >= w) continue;
                    const float* in_px = in + (static_cast<int64_t>(iy) * w + ix) * cin;
                    const float* g_px = gout + (static_cast<int64_t>(y) * ow + x) * cout;
                    for (int j = 0; j < g; ++j) {
                        for (int ci = 0; ci < cin_g; ++ci) {
                            const float v = in_px[j * cin_g + ci];
                            float* row = gk_px + static_cast<int64_t>(ci) * cout + j * cout_g;
                            const float* gr = g_px + j * cout_g;
                            for (int co = 0; co < cout_g; ++co) row[co] += v * gr[co];
                        }
                    }
                }
            }
        }
    }

    if (p.bias) {
        grads.bias = Tensor({cout});
        float* gb = grads.bias->raw();
        const int64_t positions = static_cast<int64_t>(oh) * ow;
        for (int64_t px = 0; px < positions; ++px) {
            for (int co = 0; co < cout; ++co) gb[co] += gout[px * cout + co];
        }
    }
    return grads;
}

inline Tensor relu_bwd(const Tensor& forward_input, const Tensor& grad_out) {
    if (!forward_input.same_shape(grad_out)) {
        throw std::invalid_argument("relu_bwd: shape mismatch " + forward_input.shape_str() + " vs " +
                                    grad_out.shape_str());
    }
    Tensor out(grad_out.shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = forward_input[i] > 0.0f ? grad_out[i] : 0.0f;
    return out;
}

/// Routes each upstream gradient element to the argmax recorded by the
/// forward maxpool; overlapping windows accumulate.
inline Tensor maxpool_bwd(const std::vector<int>& input_shape, const std::vector<int64_t>& argmax, const Tensor& grad_out) {
    Tensor out(input_shape);
    if (static_cast<int64_t>(argmax.size()) != grad_out.size()) {
        throw std::invalid_argument("maxpool_bwd: argmax record does not match upstream gradient");
    }
    for (int64_t i = 0; i < grad_out.size(); ++i) {
        if (argmax[i] >= 0) out[argmax[i]] += grad_out[i];
    }
    return out;
}

inline Tensor global_avgpool_bwd(const std::vector<int>& input_shape, const Tensor& grad_out) {
    Tensor out(input_shape);
    const int h = input_shape[0], w = input_shape[1], c = input_shape[2];
    if (grad_out.size() != c) throw std::invalid_argument("avgpool_bwd: gradient length != channels");
    const float scale = 1.0f / (static_cast<float>(h) * static_cast<float>(w));
    float* dst = out.raw();
    for (int64_t px = 0; px < static_cast<int64_t>(h) * w; ++px) {
        for (int i = 0; i < c; ++i) dst[px * c + i] = grad_out[i] * scale;
    }
    return out;
}

struct FcGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};

inline FcGrads fully_connected_bwd(const Tensor& input, const Tensor& weights, const Tensor& grad_out) {
    const int n = weights.dim(0), m = weights.dim(1);
    if (input.size() != n || grad_out.size() != m) {
        throw std::invalid_argument("fc_bwd: sizes disagree with weight matrix " + weights.shape_str());
    }
    FcGrads g;
    g.input = Tensor(input.shape());
    g.weights = Tensor(weights.shape());
    g.bias = Tensor({m});
    std::copy(grad_out.raw(), grad_out.raw() + m, g.bias.raw());
    for (int i = 0; i < n; ++i) {
        const float* row = weights.raw() + static_cast<int64_t>(i) * m;
        float* grow = g.weights.raw() + static_cast<int64_t>(i) * m;
        float acc = 0.0f;
        const float xi = input[i];
        for (int j = 0; j < m; ++j) {
            acc += row[j] * grad_out[j];
            grow[j] = xi * grad_out[j];
        }
        g.input[i] = acc;
    }
    return g;
}

/// Per-channel batch statistics cache from the training-mode forward.
struct BnTrainCache {
    std::vector<float> mean;
    std::vector<float> inv_std;  // 1/sqrt(var + eps), biased variance
};

/// Training-mode batch norm over a batch of same-shaped tensors. Normalizes
/// with the batch statistics and folds them into the running estimates with
/// the given momentum.
inline std::vector<Tensor> batchnorm_train_fwd(const std::vector<Tensor>& xs, BatchNormParams& p, float momentum,
                                               BnTrainCache* cache) {
    if (xs.empty()) throw std::invalid_argument("batchnorm_train: empty batch");
    p.validate();
    const int c = xs[0].channels();
    if (c != p.channels()) throw std::invalid_argument("batchnorm_train: channel mismatch");
    const int64_t per_image = xs[0].size() / c;
    const int64_t count = per_image * static_cast<int64_t>(xs.size());

    std::vector<double> sum(static_cast<size_t>(c), 0.0), sq(static_cast<size_t>(c), 0.0);
    for (const Tensor& x : xs) {
        if (!x.same_shape(xs[0])) throw std::invalid_argument("batchnorm_train: ragged batch");
        const float* px = x.raw();
        for (int64_t i = 0; i < per_image; ++i) {
            for (int ch = 0; ch < c; ++ch) {
                const double v = px[i * c + ch];
                sum[ch] += v;
                sq[ch] += v * v;
            }
        }
    }
    std::vector<float> mean(static_cast<size_t>(c)), inv_std(static_cast<size_t>(c));
    for (int ch = 0; ch < c; ++ch) {
        const double m = sum[ch] / static_cast<double>(count);
        const double var = std::max(0.0, sq[ch] / static_cast<double>(count) - m * m);
        mean[ch] = static_cast<float>(m);
        inv_std[ch] = static_cast<float>(1.0 / std::sqrt(var + p.epsilon));
        p.running_mean[ch] = (1.0f - momentum) * p.running_mean[ch] + momentum * static_cast<float>(m);
        p.running_var[ch] = (1.0f - momentum) * p.running_var[ch] + momentum * static_cast<float>(var);
    }

    std::vector<Tensor> ys;
    ys.reserve(xs.size());
    for (const Tensor& x : xs) {
        Tensor y(x.shape());
        const float* px = x.raw();
        float* py = y.raw();
        for (int64_t i = 0; i < per_image; ++i) {
            for (int ch = 0; ch < c; ++ch) {
                py[i * c + ch] = p.gamma[ch] * (px[i * c + ch] - mean[ch]) * inv_std[ch] + p.beta[ch];
            }
        }
        ys.push_back(std::move(y));
    }
    if (cache) {
        cache->mean = std::move(mean);
        cache->inv_std = std::move(inv_std);
    }
    return ys;
}

struct BnGrads {
    std::vector<Tensor> inputs;
    Tensor gamma;
    Tensor beta;
};

inline BnGrads batchnorm_train_bwd(const std::vector<Tensor>& xs, const BatchNormParams& p,
                                   const BnTrainCache& cache, const std::vector<Tensor>& grad_out) {
    const int c = xs[0].channels();
    const int64_t per_image = xs[0].size() / c;
    const double count = static_cast<double>(per_image) * static_cast<double>(xs.size());

    std::vector<double> g_sum(static_cast<size_t>(c), 0.0), gx_sum(static_cast<size_t>(c), 0.0);
    for (size_t b = 0; b < xs.size(); ++b) {
        const float* px = xs[b].raw();
        const float* pg = grad_out[b].raw();
        for (int64_t i = 0; i < per_image; ++i) {
            for (int ch = 0; ch < c; ++ch) {
                const double g = pg[i * c + ch];
                g_sum[ch] += g;
                gx_sum[ch] += g * (px[i * c + ch] - cache.mean[ch]) * cache.inv_std[ch];
            }
        }
    }

    BnGrads grads;
    grads.gamma = Tensor({c});
    grads.beta = Tensor({c});
    for (int ch = 0; ch < c; ++ch) {
        grads.gamma[ch] = static_cast<float>(gx_sum[ch]);
        grads.beta[ch] = static_cast<float>(g_sum[ch]);
    }
    grads.inputs.reserve(xs.size());
    for (size_t b = 0; b < xs.size(); ++b) {
        Tensor gx(xs[b].shape());
        const float* px = xs[b].raw();
        const float* pg = grad_out[b].raw();
        float* pd = gx.raw();
        for (int64_t i = 0; i < per_image; ++i) {
            for (int ch = 0; ch < c; ++ch) {
                const double xhat = (px[i * c + ch] - cache.mean[ch]) * cache.inv_std[ch];
                const double v = pg[i * c + ch] - g_sum[ch] / count - xhat * gx_sum[ch] / count;
                pd[i * c + ch] = static_cast<float>(p.gamma[ch] * cache.inv_std[ch] * v);
            }
        }
        grads.inputs.push_back(std::move(gx));
    }
    return grads;
}

}  // namespace weldsign
