#pragma once

#include <iomanip>

#include "weldsign/graph.hpp"
#include "weldsign/sce.hpp"

namespace weldsign {

/// Counting conventions, recorded in every report. One FLOP is one
/// multiply-accumulate; madds counts multiplies and adds separately, so
/// madds = 2·flops. Batch norm contributes its four stored vectors
/// (gamma/beta/mean/var) to the parameter column so that the total equals
/// the element count of a weight store for the same graph.
struct CostConventions {
    std::string flop = "MAC";
    int bytes_per_param = 4;
    bool bn_counted = false;    // include batch-norm element work in flops
    bool pool_counted = false;  // include pooling window work in flops
};

struct CostRow {
    std::string id;
    std::string kind;
    Shape out_shape;
    int64_t params = 0;
    int64_t flops = 0;
    int64_t madds = 0;
};

struct CostReport {
    std::vector<CostRow> rows;
    int64_t total_params = 0;
    int64_t total_flops = 0;
    int64_t total_madds = 0;
    int64_t size_bytes = 0;
    CostConventions conventions;

    nlohmann::json to_json() const {
        nlohmann::json rows_json = nlohmann::json::array();
        for (const auto& r : rows) {
            rows_json.push_back({{"id", r.id},
                                 {"kind", r.kind},
                                 {"out_shape", r.out_shape},
                                 {"params", r.params},
                                 {"flops", r.flops},
                                 {"madds", r.madds}});
        }
        return {{"layers", rows_json},
                {"totals",
                 {{"params", total_params},
                  {"flops", total_flops},
                  {"madds", total_madds},
                  {"size_bytes", size_bytes}}},
                {"conventions",
                 {{"flop", conventions.flop},
                  {"bytes_per_param", conventions.bytes_per_param},
                  {"bn_counted", conventions.bn_counted},
                  {"pool_counted", conventions.pool_counted}}}};
    }

    std::string to_table() const {
        std::ostringstream os;
        os << std::left << std::setw(16) << "layer" << std::setw(16) << "kind" << std::setw(16) << "out"
           << std::right << std::setw(12) << "params" << std::setw(16) << "flops" << std::setw(16) << "madds"
           << "\n";
        for (const auto& r : rows) {
            os << std::left << std::setw(16) << r.id << std::setw(16) << r.kind << std::setw(16)
               << Tensor::shape_string(r.out_shape) << std::right << std::setw(12) << r.params << std::setw(16)
               << r.flops << std::setw(16) << r.madds << "\n";
        }
        os << std::left << std::setw(48) << "TOTAL" << std::right << std::setw(12) << total_params
           << std::setw(16) << total_flops << std::setw(16) << total_madds << "\n";
        os << "size_bytes " << size_bytes << " (" << std::fixed << std::setprecision(2)
           << static_cast<double>(size_bytes) / 1e6 << " MB)\n";
        return os.str();
    }
};

/// Static per-layer cost accounting over an already shape-checked graph.
inline CostReport analyze(const NetGraph& g, const Shape& input_shape, CostConventions conventions = {}) {
    const auto shapes = infer_shapes(g, input_shape);
    CostReport report;
    report.conventions = conventions;

    for (const auto& l : g.layers) {
        CostRow row;
        row.id = l.id;
        row.kind = kind_name(l.kind);
        row.out_shape = shapes.at(l.id);
        const Shape& in = shapes.at(l.inputs[0]);
        const int64_t out_elems =
            std::accumulate(row.out_shape.begin(), row.out_shape.end(), int64_t{1}, std::multiplies<>());

        switch (l.kind) {
            case LayerKind::Conv:
            case LayerKind::GroupConv: {
                const int64_t per_position =
                    static_cast<int64_t>(l.kernel) * l.kernel * (in[2] / l.groups) * l.filters +
                    (l.bias ? l.filters : 0);
                row.params = per_position;
                row.flops = static_cast<int64_t>(row.out_shape[0]) * row.out_shape[1] * per_position;
                break;
            }
            case LayerKind::FullyConnected: {
                const int64_t n = std::accumulate(in.begin(), in.end(), int64_t{1}, std::multiplies<>());
                row.params = n * l.filters + l.filters;
                row.flops = n * l.filters;
                break;
            }
            case LayerKind::BatchNorm: {
                row.params = 4LL * in[2];  // gamma, beta, running mean, running var
                if (conventions.bn_counted) row.flops = out_elems;
                break;
            }
            case LayerKind::MaxPool: {
                if (conventions.pool_counted) row.flops = out_elems * l.kernel * l.kernel;
                break;
            }
            case LayerKind::GlobalAvgPool: {
                if (conventions.pool_counted) {
                    row.flops = static_cast<int64_t>(in[0]) * in[1] * in[2];
                }
                break;
            }
            case LayerKind::Sce: {
                const int pyramid_c = row.out_shape[2];
                if (l.weighted) {
                    row.params =
                        SceParams::param_count(in[2], static_cast<int>(l.pyramid.size()), l.reduction);
                    const int64_t mid = static_cast<int64_t>(pyramid_c) / l.reduction;
                    row.flops = static_cast<int64_t>(pyramid_c) * mid * 2;  // both dense layers
                }
                if (conventions.pool_counted) {
                    int64_t window = 0;
                    for (int k : l.pyramid) window += static_cast<int64_t>(k) * k;
                    row.flops += static_cast<int64_t>(in[0]) * in[1] * in[2] * window;
                }
                break;
            }
            case LayerKind::Relu:
            case LayerKind::Softmax:
            case LayerKind::Sigmoid:
            case LayerKind::Upsample2x:
            case LayerKind::Concat:
            case LayerKind::Add:
                break;
        }
        row.madds = 2 * row.flops;
        report.total_params += row.params;
        report.total_flops += row.flops;
        report.total_madds += row.madds;
        report.rows.push_back(std::move(row));
    }
    report.size_bytes = static_cast<int64_t>(conventions.bytes_per_param) * report.total_params;
    return report;
}

struct ReferenceTotal {
    std::string metric;  // params | flops | madds | size_mb
    double expected = 0;
    double tolerance = 0;      // relative fraction or absolute, per is_relative
    bool is_relative = true;
};

struct ReferenceCheck {
    std::string metric;
    double expected = 0;
    double actual = 0;
    double rel_err = 0;
    bool pass = false;
};

inline std::vector<ReferenceCheck> compare_to_reference(const CostReport& report,
                                                        const std::vector<ReferenceTotal>& reference) {
    std::vector<ReferenceCheck> checks;
    for (const auto& ref : reference) {
        ReferenceCheck c;
        c.metric = ref.metric;
        c.expected = ref.expected;
        if (ref.metric == "params") {
            c.actual = static_cast<double>(report.total_params);
        } else if (ref.metric == "flops") {
            c.actual = static_cast<double>(report.total_flops);
        } else if (ref.metric == "madds") {
            c.actual = static_cast<double>(report.total_madds);
        } else if (ref.metric == "size_mb") {
            c.actual = static_cast<double>(report.size_bytes) / 1e6;
        } else {
            throw std::invalid_argument("compare_to_reference: unknown metric '" + ref.metric + "'");
        }
        c.rel_err = ref.expected != 0 ? std::abs(c.actual - ref.expected) / std::abs(ref.expected)
                                      : std::abs(c.actual);
        const double abs_err = std::abs(c.actual - ref.expected);
        c.pass = ref.is_relative ? (c.rel_err <= ref.tolerance) : (abs_err <= ref.tolerance);
        checks.push_back(c);
    }
    return checks;
}

/// Published totals for the full detection network (params 4.9M, 19.9 MB,
/// 2.8 GFLOPs, 5.6 G madds).
inline std::vector<ReferenceTotal> gynet_reference() {
    return {{"params", 4.9e6, 0.02, true},
            {"size_mb", 19.9, 0.02, true},
            {"flops", 2.8e9, 0.10, true},
            {"madds", 5.6e9, 0.10, true}};
}

/// Published ablation totals: enhancement block removed entirely.
inline std::vector<ReferenceTotal> gynet_baseline_reference() {
    return {{"params", 2.6e6, 0.1e6, false}, {"size_mb", 10.7, 0.5, false}};
}

/// Published ablation totals: pyramid only, no channel weighting.
inline std::vector<ReferenceTotal> gynet_sib_reference() {
    return {{"params", 2.8e6, 0.1e6, false}, {"size_mb", 11.5, 0.5, false}};
}

/// Published ablation totals: channel weighting only, no pyramid.
inline std::vector<ReferenceTotal> gynet_cwb_reference() {
    return {{"params", 2.8e6, 0.1e6, false}, {"size_mb", 11.2, 0.5, false}};
}

}  // namespace weldsign
