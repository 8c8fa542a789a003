#pragma once

#include <cmath>
#include <functional>

#include "weldsign/executor.hpp"
#include "weldsign/nn_grad.hpp"
#include "weldsign/rng.hpp"
#include "weldsign/synth.hpp"

namespace weldsign {

struct TrainConfig {
    float lr0 = 0.1f;
    float momentum = 0.9f;
    float weight_decay = 5e-4f;
    int epochs = 80;
    int lr_step = 50;  // divide the learning rate by 10 every lr_step epochs
    float label_smoothing = 0.1f;
    int batch_size = 32;
    uint64_t seed = 7;
    float bn_momentum = 0.1f;
};

inline float lr_at_epoch(const TrainConfig& cfg, int epoch) {
    return cfg.lr0 * static_cast<float>(std::pow(10.0, -(epoch / cfg.lr_step)));
}

struct SmoothedCeResult {
    float loss = 0;
    Tensor grad_logits;  // d loss / d logits = probs - target
};

/// Cross entropy against the smoothed target (1-eps)·onehot + eps/K, taking
/// softmax probabilities as input. The returned gradient is w.r.t. the
/// logits feeding that softmax.
inline SmoothedCeResult smoothed_cross_entropy(const Tensor& probs, int label, float eps) {
    const int k = static_cast<int>(probs.size());
    if (k < 2) throw std::invalid_argument("cross entropy: need at least 2 classes");
    if (label < 0 || label >= k) throw std::invalid_argument("cross entropy: label out of range");
    SmoothedCeResult r;
    r.grad_logits = Tensor(probs.shape());
    double loss = 0.0;
    for (int i = 0; i < k; ++i) {
        const double target = eps / k + (i == label ? 1.0 - eps : 0.0);
        loss -= target * std::log(std::max(static_cast<double>(probs[i]), 1e-12));
        r.grad_logits[i] = probs[i] - static_cast<float>(target);
    }
    r.loss = static_cast<float>(loss);
    return r;
}

/// SGD with momentum and decoupled-from-nothing classic weight decay:
/// g' = g + wd·p;  v = mu·v + g';  p -= lr·v.
inline void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, float lr, float momentum,
                     float weight_decay) {
    if (!param.same_shape(grad) || !param.same_shape(velocity)) {
        throw std::invalid_argument("sgd: parameter/gradient/velocity shapes disagree");
    }
    for (int64_t i = 0; i < param.size(); ++i) {
        const float g = grad[i] + weight_decay * param[i];
        velocity[i] = momentum * velocity[i] + g;
        param[i] -= lr * velocity[i];
    }
}

/// Uniform(-b, b) fan-in init for conv/fc weights with b = sqrt(6/fan_in);
/// batch norm starts at identity (gamma 1, beta 0, stats (0,1)); biases at 0.
/// Deterministic for a given seed.
inline WeightStore init_weights(const NetGraph& g, uint64_t seed, const Shape& input_shape = {64, 64, 3}) {
    const auto shapes = infer_shapes(g, input_shape);
    XorShift64Star rng(XorShift64Star::substream(seed, 0xF17ull));
    WeightStore store;
    auto uniform_tensor = [&rng](Shape shape, float bound) {
        Tensor t(std::move(shape));
        for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
        return t;
    };

    for (const auto& l : g.layers) {
        const Shape& in = shapes.at(l.inputs[0]);
        switch (l.kind) {
            case LayerKind::Conv:
            case LayerKind::GroupConv: {
                const int cin_g = in[2] / l.groups;
                const float bound = std::sqrt(6.0f / (static_cast<float>(l.kernel) * l.kernel * cin_g));
                store.add(l.id + ".weight", uniform_tensor({l.kernel, l.kernel, cin_g, l.filters}, bound));
                if (l.bias) store.add(l.id + ".bias", Tensor({l.filters}));
                break;
            }
            case LayerKind::BatchNorm: {
                const int c = in[2];
                store.add(l.id + ".gamma", Tensor::full({c}, 1.0f));
                store.add(l.id + ".beta", Tensor({c}));
                store.add(l.id + ".mean", Tensor({c}));
                store.add(l.id + ".var", Tensor::full({c}, 1.0f));
                break;
            }
            case LayerKind::FullyConnected: {
                const int n = static_cast<int>(
                    std::accumulate(in.begin(), in.end(), int64_t{1}, std::multiplies<>()));
                const float bound = std::sqrt(6.0f / static_cast<float>(n));
                store.add(l.id + ".weight", uniform_tensor({n, l.filters}, bound));
                store.add(l.id + ".bias", Tensor({l.filters}));
                break;
            }
            case LayerKind::Sce: {
                if (!l.weighted) break;
                const int pc = in[2] * static_cast<int>(l.pyramid.size());
                const int mid = pc / l.reduction;
                store.add(l.id + ".w1", uniform_tensor({pc, mid}, std::sqrt(6.0f / pc)));
                store.add(l.id + ".b1", Tensor({mid}));
                store.add(l.id + ".w2", uniform_tensor({mid, pc}, std::sqrt(6.0f / mid)));
                store.add(l.id + ".b2", Tensor({pc}));
                break;
            }
            default:
                break;
        }
    }
    return store;
}

/// Anything that can hand out labeled classification images.
struct LabeledImageSource {
    virtual ~LabeledImageSource() = default;
    virtual int size() const = 0;
    virtual OrientationSample item(int index) const = 0;
};

struct GeneratedOrientationSource final : LabeledImageSource {
    int count;
    uint64_t seed;
    int image_size;
    int index_offset;

    GeneratedOrientationSource(int count, uint64_t seed, int image_size = 224, int index_offset = 0)
        : count(count), seed(seed), image_size(image_size), index_offset(index_offset) {}

    int size() const override { return count; }
    OrientationSample item(int index) const override {
        return gen_orientation_sample(seed, index_offset + index, image_size);
    }
};

struct InMemorySource final : LabeledImageSource {
    std::vector<OrientationSample> samples;
    explicit InMemorySource(std::vector<OrientationSample> s) : samples(std::move(s)) {}
    int size() const override { return static_cast<int>(samples.size()); }
    OrientationSample item(int index) const override { return samples.at(static_cast<size_t>(index)); }
};

namespace detail {

inline void add_into(Tensor& dst, const Tensor& src) {
    if (dst.empty()) {
        dst = src;
        return;
    }
    if (!dst.same_shape(src)) throw std::invalid_argument("train: gradient shape mismatch");
    for (int64_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

/// One forward+backward pass over a mini-batch with explicit per-layer
/// reverse-mode differentiation. Supports the layer kinds the classifier
/// uses; the trailing softmax is folded into the loss gradient.
struct BatchStep {
    const NetGraph& graph;
    WeightStore& weights;
    float bn_momentum;

    std::map<std::string, std::vector<Tensor>> outs;
    std::map<std::string, std::vector<std::vector<int64_t>>> argmax;
    std::map<std::string, BnTrainCache> bn_cache;

    std::vector<Tensor> forward(const std::vector<Tensor>& images) {
        const int b = static_cast<int>(images.size());
        outs["input"] = images;
        for (const auto& l : graph.layers) {
            const std::vector<Tensor>& in = outs.at(l.inputs[0]);
            std::vector<Tensor> out(static_cast<size_t>(b));
            switch (l.kind) {
                case LayerKind::Conv:
                case LayerKind::GroupConv: {
                    const ConvParams p = weldsign::detail::conv_params_for(l, weights);
#pragma omp parallel for schedule(dynamic)
                    for (int i = 0; i < b; ++i) out[static_cast<size_t>(i)] = conv2d(in[static_cast<size_t>(i)], p);
                    break;
                }
                case LayerKind::BatchNorm: {
                    BatchNormParams p = weldsign::detail::bn_params_for(l, weights);
                    out = batchnorm_train_fwd(in, p, bn_momentum, &bn_cache[l.id]);
                    weights.get(l.id + ".mean") = p.running_mean;
                    weights.get(l.id + ".var") = p.running_var;
                    break;
                }
                case LayerKind::Relu:
#pragma omp parallel for schedule(static)
                    for (int i = 0; i < b; ++i) out[static_cast<size_t>(i)] = relu(in[static_cast<size_t>(i)]);
                    break;
                case LayerKind::MaxPool: {
                    auto& am = argmax[l.id];
                    am.assign(static_cast<size_t>(b), {});
#pragma omp parallel for schedule(static)
                    for (int i = 0; i < b; ++i) {
                        out[static_cast<size_t>(i)] =
                            maxpool(in[static_cast<size_t>(i)], l.kernel, l.stride, l.pad, &am[static_cast<size_t>(i)]);
                    }
                    break;
                }
                case LayerKind::GlobalAvgPool:
                    for (int i = 0; i < b; ++i) out[static_cast<size_t>(i)] = global_avgpool(in[static_cast<size_t>(i)]);
                    break;
                case LayerKind::FullyConnected:
                    for (int i = 0; i < b; ++i) {
                        out[static_cast<size_t>(i)] =
                            fully_connected(in[static_cast<size_t>(i)], weights.get(l.id + ".weight"),
                                            weights.get(l.id + ".bias"));
                    }
                    break;
                case LayerKind::Add: {
                    const std::vector<Tensor>& rhs = outs.at(l.inputs[1]);
                    for (int i = 0; i < b; ++i) {
                        out[static_cast<size_t>(i)] = elementwise_add(in[static_cast<size_t>(i)], rhs[static_cast<size_t>(i)]);
                    }
                    break;
                }
                case LayerKind::Softmax:
                    for (int i = 0; i < b; ++i) out[static_cast<size_t>(i)] = softmax(in[static_cast<size_t>(i)]);
                    break;
                default:
                    throw std::invalid_argument(std::string("train: layer kind '") + kind_name(l.kind) +
                                                "' has no backward implementation");
            }
            outs[l.id] = std::move(out);
        }
        return outs.at(graph.outputs.at(0));
    }

    /// `logit_grads` are the loss gradients at the input of the trailing
    /// softmax layer. Returns parameter-name -> summed gradient.
    std::map<std::string, Tensor> backward(std::vector<Tensor> logit_grads) {
        const int b = static_cast<int>(logit_grads.size());
        const LayerSpec& last = graph.layers.back();
        if (last.kind != LayerKind::Softmax) {
            throw std::invalid_argument("train: graph must end in softmax");
        }
        std::map<std::string, std::vector<Tensor>> grads;
        grads[last.inputs[0]] = std::move(logit_grads);
        std::map<std::string, Tensor> param_grads;

        for (auto it = graph.layers.rbegin(); it != graph.layers.rend(); ++it) {
            const LayerSpec& l = *it;
            if (l.kind == LayerKind::Softmax) continue;  // folded into the loss gradient
            auto git = grads.find(l.id);
            if (git == grads.end()) continue;
            std::vector<Tensor>& gout = git->second;
            const std::vector<Tensor>& in = outs.at(l.inputs[0]);
            std::vector<Tensor>& gin = grads[l.inputs[0]];
            if (gin.empty()) gin.resize(static_cast<size_t>(b));

            switch (l.kind) {
                case LayerKind::Conv:
                case LayerKind::GroupConv: {
                    const ConvParams p = weldsign::detail::conv_params_for(l, weights);
                    std::vector<ConvGrads> per_image(static_cast<size_t>(b));
#pragma omp parallel for schedule(dynamic)
                    for (int i = 0; i < b; ++i) {
                        per_image[static_cast<size_t>(i)] =
                            conv2d_bwd(in[static_cast<size_t>(i)], p, gout[static_cast<size_t>(i)]);
                    }
                    Tensor kernel_grad(p.kernel.shape());
                    Tensor bias_grad = l.bias ? Tensor({p.out_channels()}) : Tensor();
                    for (int i = 0; i < b; ++i) {
                        auto& pg = per_image[static_cast<size_t>(i)];
                        add_into(gin[static_cast<size_t>(i)], pg.input);
                        for (int64_t j = 0; j < kernel_grad.size(); ++j) kernel_grad[j] += pg.kernel[j];
                        if (l.bias) {
                            for (int64_t j = 0; j < bias_grad.size(); ++j) bias_grad[j] += (*pg.bias)[j];
                        }
                    }
                    param_grads[l.id + ".weight"] = std::move(kernel_grad);
                    if (l.bias) param_grads[l.id + ".bias"] = std::move(bias_grad);
                    break;
                }
                case LayerKind::BatchNorm: {
                    const BatchNormParams p = weldsign::detail::bn_params_for(l, weights);
                    BnGrads bg = batchnorm_train_bwd(in, p, bn_cache.at(l.id), gout);
                    for (int i = 0; i < b; ++i) add_into(gin[static_cast<size_t>(i)], bg.inputs[static_cast<size_t>(i)]);
                    param_grads[l.id + ".gamma"] = std::move(bg.gamma);
                    param_grads[l.id + ".beta"] = std::move(bg.beta);
                    break;
                }
                case LayerKind::Relu: {
                    std::vector<Tensor> local(static_cast<size_t>(b));
#pragma omp parallel for schedule(static)
                    for (int i = 0; i < b; ++i) {
                        local[static_cast<size_t>(i)] = relu_bwd(in[static_cast<size_t>(i)], gout[static_cast<size_t>(i)]);
                    }
                    for (int i = 0; i < b; ++i) add_into(gin[static_cast<size_t>(i)], local[static_cast<size_t>(i)]);
                    break;
                }
                case LayerKind::MaxPool: {
                    const auto& am = argmax.at(l.id);
                    for (int i = 0; i < b; ++i) {
                        add_into(gin[static_cast<size_t>(i)],
                                 maxpool_bwd(in[static_cast<size_t>(i)].shape(), am[static_cast<size_t>(i)],
                                             gout[static_cast<size_t>(i)]));
                    }
                    break;
                }
                case LayerKind::GlobalAvgPool:
                    for (int i = 0; i < b; ++i) {
                        add_into(gin[static_cast<size_t>(i)],
                                 global_avgpool_bwd(in[static_cast<size_t>(i)].shape(), gout[static_cast<size_t>(i)]));
                    }
                    break;
                case LayerKind::FullyConnected: {
                    Tensor w_grad(weights.get(l.id + ".weight").shape());
                    Tensor b_grad(weights.get(l.id + ".bias").shape());
                    for (int i = 0; i < b; ++i) {
                        FcGrads fg = fully_connected_bwd(in[static_cast<size_t>(i)], weights.get(l.id + ".weight"),
                                                         gout[static_cast<size_t>(i)]);
                        add_into(gin[static_cast<size_t>(i)], fg.input);
                        for (int64_t j = 0; j < w_grad.size(); ++j) w_grad[j] += fg.weights[j];
                        for (int64_t j = 0; j < b_grad.size(); ++j) b_grad[j] += fg.bias[j];
                    }
                    param_grads[l.id + ".weight"] = std::move(w_grad);
                    param_grads[l.id + ".bias"] = std::move(b_grad);
                    break;
                }
                case LayerKind::Add: {
                    std::vector<Tensor>& gin2 = grads[l.inputs[1]];
                    if (gin2.empty()) gin2.resize(static_cast<size_t>(b));
                    for (int i = 0; i < b; ++i) {
                        add_into(gin[static_cast<size_t>(i)], gout[static_cast<size_t>(i)]);
                        add_into(gin2[static_cast<size_t>(i)], gout[static_cast<size_t>(i)]);
                    }
                    break;
                }
                default:
                    throw std::invalid_argument(std::string("train: layer kind '") + kind_name(l.kind) +
                                                "' has no backward implementation");
            }
            grads.erase(l.id);
            outs.erase(l.id);
        }
        return param_grads;
    }
};

}  // namespace detail

struct EpochLog {
    int epoch = 0;
    double train_loss = 0;
    double val_accuracy = 0;
    double lr = 0;
};

struct TrainResult {
    WeightStore best_weights;
    std::vector<EpochLog> log;
    int best_epoch = 0;
    double best_val_accuracy = 0;
    double final_val_accuracy = 0;

    nlohmann::json log_to_json() const {
        nlohmann::json epochs = nlohmann::json::array();
        for (const auto& e : log) {
            epochs.push_back(
                {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_accuracy", e.val_accuracy}, {"lr", e.lr}});
        }
        return {{"epochs", epochs},
                {"best_epoch", best_epoch},
                {"best_val_accuracy", best_val_accuracy},
                {"final_val_accuracy", final_val_accuracy}};
    }
};

inline int predict_class(const NetGraph& g, const WeightStore& weights, const Tensor& image) {
    const Tensor probs = execute(g, weights, image).at(g.outputs.at(0));
    int best = 0;
    for (int64_t i = 1; i < probs.size(); ++i) {
        if (probs[i] > probs[best]) best = static_cast<int>(i);
    }
    return best;
}

/// Full classification training run: SGD with momentum, step learning-rate
/// schedule, label smoothing, per-epoch validation. Deterministic for a
/// given config seed; returns the best-validation weights and the epoch log.
inline TrainResult train(const NetGraph& g, const LabeledImageSource& train_data,
                         const LabeledImageSource& val_data, const TrainConfig& cfg) {
    if (train_data.size() < 1) throw std::invalid_argument("train: empty dataset");
    const Shape input_shape = train_data.item(0).image.shape();
    WeightStore weights = init_weights(g, cfg.seed, input_shape);
    std::map<std::string, Tensor> velocity;

    TrainResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int> order(static_cast<size_t>(train_data.size()));
        std::iota(order.begin(), order.end(), 0);
        XorShift64Star shuffle_rng(XorShift64Star::substream(cfg.seed, 0xE70C + static_cast<uint64_t>(epoch)));
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(shuffle_rng.uniform_int(0, i))]);
        }

        const float lr = lr_at_epoch(cfg, epoch);
        double loss_sum = 0.0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            const int b = static_cast<int>(end - start);
            std::vector<Tensor> images(static_cast<size_t>(b));
            std::vector<int> labels(static_cast<size_t>(b));
            for (int i = 0; i < b; ++i) {
                OrientationSample s = train_data.item(order[start + static_cast<size_t>(i)]);
                images[static_cast<size_t>(i)] = std::move(s.image);
                labels[static_cast<size_t>(i)] = s.label;
            }

            detail::BatchStep step{g, weights, cfg.bn_momentum};
            const std::vector<Tensor> probs = step.forward(images);
            std::vector<Tensor> logit_grads(static_cast<size_t>(b));
            for (int i = 0; i < b; ++i) {
                SmoothedCeResult ce =
                    smoothed_cross_entropy(probs[static_cast<size_t>(i)], labels[static_cast<size_t>(i)],
                                           cfg.label_smoothing);
                loss_sum += ce.loss;
                for (int64_t j = 0; j < ce.grad_logits.size(); ++j) {
                    ce.grad_logits[j] /= static_cast<float>(b);
                }
                logit_grads[static_cast<size_t>(i)] = std::move(ce.grad_logits);
            }
            const std::map<std::string, Tensor> param_grads = step.backward(std::move(logit_grads));
            for (auto& [name, tensor] : weights) {
                auto pg = param_grads.find(name);
                if (pg == param_grads.end()) continue;  // running stats are not trained
                Tensor& vel = velocity.try_emplace(name, Tensor(tensor.shape())).first->second;
                sgd_step(tensor, pg->second, vel, lr, cfg.momentum, cfg.weight_decay);
            }
        }

        int correct = 0;
        for (int i = 0; i < val_data.size(); ++i) {
            const OrientationSample s = val_data.item(i);
            correct += predict_class(g, weights, s.image) == s.label;
        }
        const double val_acc = val_data.size() > 0 ? static_cast<double>(correct) / val_data.size() : 0.0;

        EpochLog entry;
        entry.epoch = epoch;
        entry.train_loss = loss_sum / train_data.size();
        entry.val_accuracy = val_acc;
        entry.lr = lr;
        result.log.push_back(entry);
        if (result.log.size() == 1 || val_acc > result.best_val_accuracy) {
            result.best_val_accuracy = val_acc;
            result.best_epoch = epoch;
            result.best_weights = weights;
        }
        result.final_val_accuracy = val_acc;
    }
    return result;
}

}  // namespace weldsign
