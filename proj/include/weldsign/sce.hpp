#pragma once

#include "weldsign/nn_ops.hpp"

namespace weldsign {

/// Spatial-and-channel enhancement block: a stride-1 maxpool pyramid whose
/// branches are concatenated, followed by a squeeze/excite style per-channel
/// weighting of the concatenated map.
struct SceParams {
    std::vector<int> pyramid_kernels{1, 5, 9, 13};
    int reduction = 4;
    Tensor w1, b1;  // (P·C) × (P·C/r), P·C/r
    Tensor w2, b2;  // (P·C/r) × (P·C), P·C

    int pyramid_channels(int in_channels) const {
        return in_channels * static_cast<int>(pyramid_kernels.size());
    }

    void validate(int in_channels) const {
        if (pyramid_kernels.empty()) throw std::invalid_argument("sce: empty pyramid");
        for (size_t i = 0; i < pyramid_kernels.size(); ++i) {
            if (pyramid_kernels[i] % 2 == 0 || (i > 0 && pyramid_kernels[i] <= pyramid_kernels[i - 1])) {
                throw std::invalid_argument("sce: pyramid kernels must be odd and ascending");
            }
        }
        const int pc = pyramid_channels(in_channels);
        if (pc % reduction != 0) {
            throw std::invalid_argument("sce: reduction " + std::to_string(reduction) +
                                        " must divide pyramid channels " + std::to_string(pc));
        }
        const int mid = pc / reduction;
        if (w1.rank() != 2 || w1.dim(0) != pc || w1.dim(1) != mid || w2.dim(0) != mid || w2.dim(1) != pc) {
            throw std::invalid_argument("sce: weight shapes inconsistent with " + std::to_string(pc) +
                                        " pyramid channels and r=" + std::to_string(reduction));
        }
    }

    static int64_t param_count(int in_channels, int num_kernels, int reduction, bool biases = true) {
        const int64_t pc = static_cast<int64_t>(in_channels) * num_kernels;
        const int64_t mid = pc / reduction;
        int64_t n = pc * mid + mid * pc;
        if (biases) n += mid + pc;
        return n;
    }

    static SceParams zeros(int in_channels, std::vector<int> kernels = {1, 5, 9, 13}, int reduction = 4) {
        SceParams p;
        p.pyramid_kernels = std::move(kernels);
        p.reduction = reduction;
        const int pc = p.pyramid_channels(in_channels);
        const int mid = pc / reduction;
        p.w1 = Tensor({pc, mid});
        p.b1 = Tensor({mid});
        p.w2 = Tensor({mid, pc});
        p.b2 = Tensor({pc});
        return p;
    }
};

/// Concatenation of same-size stride-1 maxpools over the given kernels
/// (kernel 1 is the identity branch). H×W×C -> H×W×(P·C).
inline Tensor spatial_integration(const Tensor& input, const std::vector<int>& kernels = {1, 5, 9, 13}) {
    std::vector<Tensor> branches;
    branches.reserve(kernels.size());
    for (int k : kernels) {
        branches.push_back(maxpool(input, k, 1, Padding::same(k)));
    }
    return concat_channels(branches);
}

/// Per-channel weights S = sigmoid(W2 relu(W1 z)) from the global average
/// descriptor of the concatenated map. Returns 1×1×C'.
inline Tensor channel_weights(const Tensor& pyramid_out, const SceParams& p) {
    const int pc = p.w1.dim(0);
    if (pyramid_out.channels() != pc) {
        throw std::invalid_argument("sce: channel weights expect " + std::to_string(pc) + " channels, got " +
                                    std::to_string(pyramid_out.channels()));
    }
    Tensor z = global_avgpool(pyramid_out);
    Tensor mid = relu(fully_connected(z, p.w1, p.b1));
    Tensor s = sigmoid(fully_connected(mid, p.w2, p.b2));
    return Tensor({1, 1, pc}, std::vector<float>(s.raw(), s.raw() + s.size()));
}

/// Channel-wise multiplication: every spatial position of channel c scaled
/// by weights[c]. `weights` is 1×1×C or length C.
inline Tensor scale_channels(const Tensor& map, const Tensor& weights) {
    const int c = map.channels();
    if (weights.size() != c) {
        throw std::invalid_argument("scale_channels: " + std::to_string(weights.size()) + " weights for " +
                                    std::to_string(c) + " channels");
    }
    Tensor out(map.shape());
    const float* src = map.raw();
    const float* w = weights.raw();
    float* dst = out.raw();
    const int64_t pixels = map.size() / c;
    for (int64_t px = 0; px < pixels; ++px) {
        for (int i = 0; i < c; ++i) dst[px * c + i] = src[px * c + i] * w[i];
    }
    return out;
}

/// Full SCE forward: pyramid, then each channel of the concatenated map
/// scaled by its learned weight across all spatial positions.
inline Tensor sce_forward(const Tensor& input, const SceParams& p) {
    p.validate(input.channels());
    Tensor pyramid = spatial_integration(input, p.pyramid_kernels);
    return scale_channels(pyramid, channel_weights(pyramid, p));
}

}  // namespace weldsign
