#pragma once

#include <map>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "weldsign/nn_ops.hpp"

namespace weldsign {

enum class LayerKind {
    Conv,
    GroupConv,
    BatchNorm,
    Relu,
    MaxPool,
    GlobalAvgPool,
    FullyConnected,
    Softmax,
    Sigmoid,
    Upsample2x,
    Concat,
    Add,
    Sce,
};

inline const char* kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv: return "conv";
        case LayerKind::GroupConv: return "group-conv";
        case LayerKind::BatchNorm: return "bn";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::GlobalAvgPool: return "avgpool-global";
        case LayerKind::FullyConnected: return "fc";
        case LayerKind::Softmax: return "softmax";
        case LayerKind::Sigmoid: return "sigmoid";
        case LayerKind::Upsample2x: return "upsample2x";
        case LayerKind::Concat: return "concat";
        case LayerKind::Add: return "add";
        case LayerKind::Sce: return "sce";
    }
    return "?";
}

/// One node of a network DAG. `inputs` name earlier layers; the reserved id
/// "input" denotes the graph input.
struct LayerSpec {
    std::string id;
    LayerKind kind = LayerKind::Relu;
    std::vector<std::string> inputs;

    // conv / maxpool / fc attributes (unused fields stay at defaults)
    int kernel = 0;
    int stride = 1;
    Padding pad;
    int filters = 0;  // conv output channels / fc output size
    int groups = 1;
    bool bias = false;

    // sce attributes
    std::vector<int> pyramid;
    int reduction = 4;
    bool weighted = true;  // false: pyramid only, no channel weighting
};

struct NetGraph {
    std::vector<LayerSpec> layers;
    std::vector<std::string> outputs;

    const LayerSpec& layer(const std::string& id) const {
        for (const auto& l : layers) {
            if (l.id == id) return l;
        }
        throw std::invalid_argument("graph: no layer named '" + id + "'");
    }

    void validate() const {
        std::unordered_set<std::string> seen{"input"};
        for (const auto& l : layers) {
            if (l.id.empty() || seen.count(l.id)) {
                throw std::invalid_argument("graph: duplicate or empty layer id '" + l.id + "'");
            }
            if (l.inputs.empty()) throw std::invalid_argument("graph: layer '" + l.id + "' has no inputs");
            for (const auto& in : l.inputs) {
                if (!seen.count(in)) {
                    throw std::invalid_argument("graph: layer '" + l.id + "' uses undefined input '" + in + "'");
                }
            }
            switch (l.kind) {
                case LayerKind::Conv:
                case LayerKind::GroupConv:
                    if (l.kernel < 1 || l.filters < 1 || l.groups < 1) {
                        throw std::invalid_argument("graph: conv '" + l.id + "' missing kernel/filters");
                    }
                    break;
                case LayerKind::MaxPool:
                    if (l.kernel < 1) throw std::invalid_argument("graph: maxpool '" + l.id + "' missing kernel");
                    break;
                case LayerKind::FullyConnected:
                    if (l.filters < 1) throw std::invalid_argument("graph: fc '" + l.id + "' missing output size");
                    break;
                case LayerKind::Sce:
                    if (l.pyramid.empty()) throw std::invalid_argument("graph: sce '" + l.id + "' missing pyramid");
                    break;
                default:
                    break;
            }
            seen.insert(l.id);
        }
        for (const auto& out : outputs) {
            if (!seen.count(out)) throw std::invalid_argument("graph: unknown output '" + out + "'");
        }
    }
};

using Shape = std::vector<int>;

/// Static shape propagation; throws naming the offending layer on conflict.
inline std::map<std::string, Shape> infer_shapes(const NetGraph& g, const Shape& input_shape) {
    g.validate();
    std::map<std::string, Shape> shapes;
    shapes["input"] = input_shape;
    auto shape_of = [&](const std::string& id) -> const Shape& { return shapes.at(id); };

    for (const auto& l : g.layers) {
        const Shape& in = shape_of(l.inputs[0]);
        auto fail = [&](const std::string& msg) {
            throw std::invalid_argument("graph: layer '" + l.id + "': " + msg + " (input " +
                                        Tensor::shape_string(in) + ")");
        };
        Shape out;
        switch (l.kind) {
            case LayerKind::Conv:
            case LayerKind::GroupConv: {
                if (in.size() != 3) fail("conv expects rank-3 input");
                if (in[2] % l.groups != 0 || l.filters % l.groups != 0) fail("groups do not divide channels");
                out = {window_out_extent(in[0], l.pad.top, l.pad.bottom, l.kernel, l.stride, "conv"),
                       window_out_extent(in[1], l.pad.left, l.pad.right, l.kernel, l.stride, "conv"), l.filters};
                break;
            }
            case LayerKind::MaxPool: {
                if (in.size() != 3) fail("maxpool expects rank-3 input");
                out = {window_out_extent(in[0], l.pad.top, l.pad.bottom, l.kernel, l.stride, "maxpool"),
                       window_out_extent(in[1], l.pad.left, l.pad.right, l.kernel, l.stride, "maxpool"), in[2]};
                break;
            }
            case LayerKind::BatchNorm:
            case LayerKind::Relu:
            case LayerKind::Sigmoid:
            case LayerKind::Softmax:
                out = in;
                break;
            case LayerKind::GlobalAvgPool:
                if (in.size() != 3) fail("avgpool expects rank-3 input");
                out = {1, 1, in[2]};
                break;
            case LayerKind::FullyConnected:
                out = {l.filters};
                break;
            case LayerKind::Upsample2x:
                if (in.size() != 3) fail("upsample expects rank-3 input");
                out = {2 * in[0], 2 * in[1], in[2]};
                break;
            case LayerKind::Concat: {
                if (in.size() != 3) fail("concat expects rank-3 inputs");
                int c = 0;
                for (const auto& src : l.inputs) {
                    const Shape& s = shape_of(src);
                    if (s.size() != 3 || s[0] != in[0] || s[1] != in[1]) fail("concat spatial mismatch");
                    c += s[2];
                }
                out = {in[0], in[1], c};
                break;
            }
            case LayerKind::Add: {
                for (const auto& src : l.inputs) {
                    if (shape_of(src) != in) fail("add operand shapes differ");
                }
                out = in;
                break;
            }
            case LayerKind::Sce: {
                if (in.size() != 3) fail("sce expects rank-3 input");
                const int pc = in[2] * static_cast<int>(l.pyramid.size());
                if (l.weighted && pc % l.reduction != 0) fail("sce reduction does not divide channels");
                out = {in[0], in[1], pc};
                break;
            }
        }
        shapes[l.id] = std::move(out);
    }
    return shapes;
}

namespace detail {

struct GraphBuilder {
    NetGraph g;

    std::string conv(const std::string& id, const std::string& in, int k, int stride, Padding pad, int cin,
                     int cout, int groups, bool bias) {
        LayerSpec l;
        l.id = id;
        l.kind = groups > 1 ? LayerKind::GroupConv : LayerKind::Conv;
        l.inputs = {in};
        l.kernel = k;
        l.stride = stride;
        l.pad = pad;
        l.filters = cout;
        l.groups = groups;
        l.bias = bias;
        (void)cin;
        g.layers.push_back(std::move(l));
        return id;
    }
    std::string bn(const std::string& id, const std::string& in) {
        g.layers.push_back({.id = id, .kind = LayerKind::BatchNorm, .inputs = {in}});
        return id;
    }
    std::string relu(const std::string& id, const std::string& in) {
        g.layers.push_back({.id = id, .kind = LayerKind::Relu, .inputs = {in}});
        return id;
    }
    std::string maxpool(const std::string& id, const std::string& in, int k, int stride, Padding pad = {}) {
        LayerSpec l;
        l.id = id;
        l.kind = LayerKind::MaxPool;
        l.inputs = {in};
        l.kernel = k;
        l.stride = stride;
        l.pad = pad;
        g.layers.push_back(std::move(l));
        return id;
    }
    std::string add(const std::string& id, const std::string& a, const std::string& b) {
        g.layers.push_back({.id = id, .kind = LayerKind::Add, .inputs = {a, b}});
        return id;
    }

    /// CBR: 3×3 grouped conv + BN + ReLU; returns the relu id.
    std::string cbr(const std::string& prefix, const std::string& in, int cin, int cout, int stride) {
        const int g_ = std::gcd(cin, cout);
        conv(prefix + ".conv", in, 3, stride, Padding::same(3), cin, cout, g_, /*bias=*/false);
        bn(prefix + ".bn", prefix + ".conv");
        return relu(prefix + ".relu", prefix + ".bn");
    }

    /// Residual unit: CBR + 3×3 conv + BN, fused with the block input by
    /// element-wise add.
    std::string basic_block(const std::string& prefix, const std::string& in, int channels) {
        const std::string mid = cbr(prefix + ".1", in, channels, channels, 1);
        conv(prefix + ".2.conv", mid, 3, 1, Padding::same(3), channels, channels, std::gcd(channels, channels),
             false);
        bn(prefix + ".2.bn", prefix + ".2.conv");
        return add(prefix + ".add", in, prefix + ".2.bn");
    }

    /// Downsampling unit: stride-2 residual branch (CBR s2 + conv + BN)
    /// added to a maxpool branch (2×2 s2 pool + 3×3 conv + BN).
    std::string bdb(const std::string& prefix, const std::string& in, int cin, int cout) {
        const std::string a_mid = cbr(prefix + ".a.1", in, cin, cout, 2);
        conv(prefix + ".a.2.conv", a_mid, 3, 1, Padding::same(3), cout, cout, std::gcd(cout, cout), false);
        bn(prefix + ".a.2.bn", prefix + ".a.2.conv");
        maxpool(prefix + ".b.pool", in, 2, 2);
        conv(prefix + ".b.conv", prefix + ".b.pool", 3, 1, Padding::same(3), cin, cout, std::gcd(cin, cout),
             false);
        bn(prefix + ".b.bn", prefix + ".b.conv");
        return add(prefix + ".add", prefix + ".a.2.bn", prefix + ".b.bn");
    }
};

}  // namespace detail

/// Classification network: stem CBR, residual blocks with two downsampling
/// units, global average pool, 4-way dense head. All 3×3 convs use
/// gcd(C_in, C_out) groups. `width_divisor` scales every channel count down
/// for miniature variants (1 = the full network).
inline NetGraph build_grnet(int width_divisor = 1) {
    if (width_divisor < 1 || 64 % width_divisor != 0) {
        throw std::invalid_argument("build_grnet: width divisor must divide 64");
    }
    const int c1 = 64 / width_divisor, c2 = 256 / width_divisor, c3 = 512 / width_divisor;
    detail::GraphBuilder b;
    std::string cur = b.cbr("stem", "input", 3, c1, 1);
    cur = b.basic_block("b1", cur, c1);
    cur = b.basic_block("b2", cur, c1);
    cur = b.bdb("d1", cur, c1, c2);
    cur = b.basic_block("b3", cur, c2);
    cur = b.bdb("d2", cur, c2, c3);
    cur = b.basic_block("b4", cur, c3);
    b.g.layers.push_back({.id = "gap", .kind = LayerKind::GlobalAvgPool, .inputs = {cur}});
    LayerSpec fc;
    fc.id = "fc";
    fc.kind = LayerKind::FullyConnected;
    fc.inputs = {"gap"};
    fc.filters = 4;
    fc.bias = true;
    b.g.layers.push_back(std::move(fc));
    b.g.layers.push_back({.id = "prob", .kind = LayerKind::Softmax, .inputs = {"fc"}});
    b.g.outputs = {"prob"};
    b.g.validate();
    return b.g;
}

enum class GynetVariant {
    Full,      // spatial pyramid + channel weighting
    Baseline,  // no enhancement block
    SibOnly,   // pyramid concat without channel weighting
    CwbOnly,   // channel weighting on the raw 512-channel map
};

/// Detection network: narrow conv/maxpool backbone, enhancement block at the
/// backbone tail, 13×13 and 26×26 prediction heads of 3·(5+num_classes)
/// channels each. Head convs carry biases and no batch norm.
inline NetGraph build_gynet(GynetVariant variant = GynetVariant::Full, int num_classes = 40) {
    const int head_ch = 3 * (5 + num_classes);
    detail::GraphBuilder b;
    auto backbone_conv = [&](const std::string& prefix, const std::string& in, int cin, int cout) {
        b.conv(prefix + ".conv", in, 3, 1, Padding::same(3), cin, cout, 1, false);
        b.bn(prefix + ".bn", prefix + ".conv");
        return b.relu(prefix + ".relu", prefix + ".bn");
    };
    auto head_conv = [&](const std::string& prefix, const std::string& in, int cin, int cout, int k,
                         bool activated) {
        b.conv(prefix + ".conv", in, k, 1, k == 1 ? Padding{} : Padding::same(k), cin, cout, 1, /*bias=*/true);
        return activated ? b.relu(prefix + ".relu", prefix + ".conv") : prefix + ".conv";
    };

    std::string cur = backbone_conv("s1", "input", 3, 16);
    cur = b.maxpool("s2.pool", cur, 2, 2);
    cur = backbone_conv("s3", cur, 16, 32);
    cur = b.maxpool("s4.pool", cur, 2, 2);
    cur = backbone_conv("s5", cur, 32, 64);
    cur = b.maxpool("s6.pool", cur, 2, 2);
    cur = backbone_conv("s7", cur, 64, 64);
    cur = b.maxpool("s8.pool", cur, 2, 2);
    const std::string s9 = backbone_conv("s9", cur, 64, 128);
    cur = b.maxpool("s10.pool", s9, 2, 2);
    cur = backbone_conv("s11", cur, 128, 256);
    cur = b.maxpool("s12.pool", cur, 2, 1, Padding{0, 1, 0, 1});
    cur = backbone_conv("s13", cur, 256, 512);

    int head_in = 512;
    if (variant != GynetVariant::Baseline) {
        LayerSpec sce;
        sce.id = "s14.sce";
        sce.kind = LayerKind::Sce;
        sce.inputs = {cur};
        sce.pyramid = variant == GynetVariant::CwbOnly ? std::vector<int>{1} : std::vector<int>{1, 5, 9, 13};
        sce.reduction = 4;
        sce.weighted = variant != GynetVariant::SibOnly;
        b.g.layers.push_back(std::move(sce));
        cur = "s14.sce";
        head_in = 512 * static_cast<int>(b.g.layers.back().pyramid.size());
    }

    const std::string s15 = head_conv("s15", cur, head_in, 128, 1, true);
    const std::string s16 = head_conv("s16", s15, 128, 256, 1, true);
    const std::string out13 = head_conv("s17", s16, 256, head_ch, 1, false);
    const std::string s18 = head_conv("s18", s15, 128, 128, 1, true);
    b.g.layers.push_back({.id = "s19.up", .kind = LayerKind::Upsample2x, .inputs = {s18}});
    b.g.layers.push_back({.id = "s20.concat", .kind = LayerKind::Concat, .inputs = {"s19.up", s9}});
    const std::string s21 = head_conv("s21", "s20.concat", 256, 256, 3, true);
    const std::string out26 = head_conv("s22", s21, 256, head_ch, 3, false);

    b.g.outputs = {out13, out26};
    b.g.validate();
    return b.g;
}

inline nlohmann::json graph_to_json(const NetGraph& g) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : g.layers) {
        nlohmann::json j{{"id", l.id}, {"kind", kind_name(l.kind)}, {"inputs", l.inputs}};
        switch (l.kind) {
            case LayerKind::Conv:
            case LayerKind::GroupConv:
                j["kernel"] = l.kernel;
                j["stride"] = l.stride;
                j["padding"] = {l.pad.top, l.pad.bottom, l.pad.left, l.pad.right};
                j["filters"] = l.filters;
                j["groups"] = l.groups;
                j["bias"] = l.bias;
                break;
            case LayerKind::MaxPool:
                j["kernel"] = l.kernel;
                j["stride"] = l.stride;
                j["padding"] = {l.pad.top, l.pad.bottom, l.pad.left, l.pad.right};
                break;
            case LayerKind::FullyConnected:
                j["filters"] = l.filters;
                j["bias"] = l.bias;
                break;
            case LayerKind::Sce:
                j["pyramid"] = l.pyramid;
                j["reduction"] = l.reduction;
                j["weighted"] = l.weighted;
                break;
            default:
                break;
        }
        layers.push_back(std::move(j));
    }
    return nlohmann::json{{"layers", layers}, {"outputs", g.outputs}};
}

}  // namespace weldsign
