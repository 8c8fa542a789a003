#pragma once

#include "weldsign/graph.hpp"
#include "weldsign/sce.hpp"
#include "weldsign/weights.hpp"

namespace weldsign {

namespace detail {

inline const Tensor& weight_for(const WeightStore& w, const std::string& layer_id, const std::string& suffix) {
    const std::string name = layer_id + "." + suffix;
    if (!w.contains(name)) {
        throw std::invalid_argument("execute: layer '" + layer_id + "' is missing weight '" + name + "'");
    }
    return w.get(name);
}

inline ConvParams conv_params_for(const LayerSpec& l, const WeightStore& w) {
    ConvParams p;
    p.kernel = weight_for(w, l.id, "weight");
    if (l.bias) p.bias = weight_for(w, l.id, "bias");
    p.stride = l.stride;
    p.pad = l.pad;
    p.groups = l.groups;
    if (p.kernel.rank() != 4 || p.kernel.dim(0) != l.kernel || p.kernel.dim(3) != l.filters) {
        throw std::invalid_argument("execute: layer '" + l.id + "' kernel shape " + p.kernel.shape_str() +
                                    " does not match spec k=" + std::to_string(l.kernel) +
                                    " filters=" + std::to_string(l.filters));
    }
    return p;
}

inline BatchNormParams bn_params_for(const LayerSpec& l, const WeightStore& w) {
    BatchNormParams p;
    p.gamma = weight_for(w, l.id, "gamma");
    p.beta = weight_for(w, l.id, "beta");
    p.running_mean = weight_for(w, l.id, "mean");
    p.running_var = weight_for(w, l.id, "var");
    return p;
}

inline SceParams sce_params_for(const LayerSpec& l, const WeightStore& w) {
    SceParams p;
    p.pyramid_kernels = l.pyramid;
    p.reduction = l.reduction;
    p.w1 = weight_for(w, l.id, "w1");
    p.b1 = weight_for(w, l.id, "b1");
    p.w2 = weight_for(w, l.id, "w2");
    p.b2 = weight_for(w, l.id, "b2");
    return p;
}

}  // namespace detail

/// Deterministic forward pass. Returns the tensor of every layer listed in
/// g.outputs. Weight lookups and shape mismatches fail naming the layer.
inline std::map<std::string, Tensor> execute(const NetGraph& g, const WeightStore& weights, const Tensor& input) {
    g.validate();
    std::map<std::string, Tensor> env;
    env.emplace("input", input);
    auto arg = [&](const LayerSpec& l, size_t i = 0) -> const Tensor& { return env.at(l.inputs[i]); };

    for (const auto& l : g.layers) {
        Tensor out;
        switch (l.kind) {
            case LayerKind::Conv:
            case LayerKind::GroupConv:
                out = conv2d(arg(l), detail::conv_params_for(l, weights));
                break;
            case LayerKind::BatchNorm:
                out = batchnorm_infer(arg(l), detail::bn_params_for(l, weights));
                break;
            case LayerKind::Relu:
                out = relu(arg(l));
                break;
            case LayerKind::MaxPool:
                out = maxpool(arg(l), l.kernel, l.stride, l.pad);
                break;
            case LayerKind::GlobalAvgPool:
                out = global_avgpool(arg(l));
                break;
            case LayerKind::FullyConnected:
                out = fully_connected(arg(l), detail::weight_for(weights, l.id, "weight"),
                                      detail::weight_for(weights, l.id, "bias"));
                break;
            case LayerKind::Softmax:
                out = softmax(arg(l));
                break;
            case LayerKind::Sigmoid:
                out = sigmoid(arg(l));
                break;
            case LayerKind::Upsample2x:
                out = upsample_nearest_2x(arg(l));
                break;
            case LayerKind::Concat: {
                std::vector<Tensor> parts;
                for (size_t i = 0; i < l.inputs.size(); ++i) parts.push_back(arg(l, i));
                out = concat_channels(parts);
                break;
            }
            case LayerKind::Add:
                out = elementwise_add(arg(l), arg(l, 1));
                break;
            case LayerKind::Sce:
                if (l.weighted) {
                    out = sce_forward(arg(l), detail::sce_params_for(l, weights));
                } else {
                    out = spatial_integration(arg(l), l.pyramid);
                }
                break;
        }
        env.emplace(l.id, std::move(out));
    }

    std::map<std::string, Tensor> result;
    for (const auto& id : g.outputs) result.emplace(id, env.at(id));
    return result;
}

}  // namespace weldsign
