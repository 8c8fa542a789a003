#pragma once

#include <map>
#include <set>

#include "weldsign/detect.hpp"

namespace weldsign {

struct GroundTruthBox {
    std::string image;
    Box box;
    int class_id = 0;
};

struct MatchResult {
    std::vector<Detection> ranked;  // detections sorted by score descending
    std::vector<char> is_tp;        // aligned with `ranked`; 1 = TP, 0 = FP
    int fn = 0;                     // ground-truth boxes never matched
};

/// Greedy score-ranked matching: a detection is a true positive when a not
/// yet matched ground-truth box of the same class and image overlaps it with
/// IoU >= threshold; among candidates the highest-IoU box is taken.
inline MatchResult match_detections(std::vector<Detection> dets, const std::vector<GroundTruthBox>& gts,
                                    float iou_threshold) {
    MatchResult result;
    std::stable_sort(dets.begin(), dets.end(), score_order);
    std::vector<char> gt_used(gts.size(), 0);
    result.is_tp.assign(dets.size(), 0);
    for (size_t di = 0; di < dets.size(); ++di) {
        const Detection& d = dets[di];
        int best = -1;
        float best_iou = 0.0f;
        for (size_t gi = 0; gi < gts.size(); ++gi) {
            if (gt_used[gi] || gts[gi].class_id != d.class_id || gts[gi].image != d.image) continue;
            const float v = iou(d.box, gts[gi].box);
            if (v >= iou_threshold && v > best_iou) {
                best_iou = v;
                best = static_cast<int>(gi);
            }
        }
        if (best >= 0) {
            gt_used[best] = 1;
            result.is_tp[di] = 1;
        }
    }
    result.fn = static_cast<int>(std::count(gt_used.begin(), gt_used.end(), 0));
    result.ranked = std::move(dets);
    return result;
}

/// Eq.-style exact ratios, taken as 0 when the denominator vanishes.
inline std::pair<double, double> precision_recall(int tp, int fp, int fn) {
    const double precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    return {precision, recall};
}

struct PrCurve {
    std::vector<std::pair<double, double>> points;  // (recall, precision) down the ranking
    double ap = 0.0;
};

/// Area under the precision envelope versus recall (all-point
/// interpolation: precision at recall r is the maximum precision attained at
/// any recall >= r).
inline PrCurve average_precision(const std::vector<char>& ranked_tp, int num_gt) {
    PrCurve curve;
    if (num_gt <= 0) return curve;
    curve.points.reserve(ranked_tp.size());
    int tp = 0, fp = 0;
    for (char label : ranked_tp) {
        (label ? tp : fp) += 1;
        curve.points.emplace_back(static_cast<double>(tp) / num_gt, static_cast<double>(tp) / (tp + fp));
    }
    double ap = 0.0;
    double envelope = 0.0;
    for (size_t i = curve.points.size(); i-- > 0;) {
        envelope = std::max(envelope, curve.points[i].second);
        const double prev_recall = i > 0 ? curve.points[i - 1].first : 0.0;
        ap += (curve.points[i].first - prev_recall) * envelope;
    }
    curve.ap = ap;
    return curve;
}

/// Unweighted mean over classes that have at least one ground-truth box.
inline double mean_ap(const std::map<int, PrCurve>& per_class) {
    if (per_class.empty()) throw std::invalid_argument("mean_ap: no classes with ground truth");
    double sum = 0.0;
    for (const auto& [cls, curve] : per_class) sum += curve.ap;
    return sum / static_cast<double>(per_class.size());
}

struct EvalReport {
    std::map<int, PrCurve> per_class;
    double map = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    int tp = 0, fp = 0, fn = 0;
    double iou_threshold = 0.5;

    nlohmann::json to_json() const {
        nlohmann::json per_class_json = nlohmann::json::object();
        for (const auto& [cls, curve] : per_class) per_class_json[std::to_string(cls)] = curve.ap;
        return {{"per_class_ap", per_class_json}, {"map", map},       {"precision", precision},
                {"recall", recall},               {"tp", tp},         {"fp", fp},
                {"fn", fn},                       {"iou", iou_threshold}};
    }
};

/// Full detection evaluation: per-class ranked matching pooled across
/// images, per-class AP, their mean, and the operating-point precision and
/// recall over all supplied detections.
inline EvalReport evaluate_detections(const std::vector<Detection>& dets, const std::vector<GroundTruthBox>& gts,
                                      double iou_threshold) {
    std::set<int> classes;
    for (const auto& g : gts) classes.insert(g.class_id);

    EvalReport report;
    report.iou_threshold = iou_threshold;
    for (int cls : classes) {
        std::vector<Detection> cls_dets;
        std::vector<GroundTruthBox> cls_gts;
        for (const auto& d : dets) {
            if (d.class_id == cls) cls_dets.push_back(d);
        }
        for (const auto& g : gts) {
            if (g.class_id == cls) cls_gts.push_back(g);
        }
        const MatchResult match = match_detections(std::move(cls_dets), cls_gts,
                                                   static_cast<float>(iou_threshold));
        const int cls_tp = static_cast<int>(std::count(match.is_tp.begin(), match.is_tp.end(), 1));
        report.tp += cls_tp;
        report.fp += static_cast<int>(match.is_tp.size()) - cls_tp;
        report.fn += match.fn;
        report.per_class[cls] = average_precision(match.is_tp, static_cast<int>(cls_gts.size()));
    }
    // detections of classes absent from the ground truth are all false positives
    for (const auto& d : dets) {
        if (!classes.count(d.class_id)) report.fp += 1;
    }
    std::tie(report.precision, report.recall) = precision_recall(report.tp, report.fp, report.fn);
    report.map = classes.empty() ? 0.0 : mean_ap(report.per_class);
    return report;
}

inline double classification_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size()) {
        throw std::invalid_argument("accuracy: " + std::to_string(predictions.size()) + " predictions vs " +
                                    std::to_string(labels.size()) + " labels");
    }
    if (predictions.empty()) return 0.0;
    int64_t correct = 0;
    for (size_t i = 0; i < predictions.size(); ++i) correct += predictions[i] == labels[i];
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

inline nlohmann::json gt_to_json(const GroundTruthBox& g) {
    return {{"image", g.image}, {"class_id", g.class_id}, {"box", {g.box.x0, g.box.y0, g.box.x1, g.box.y1}}};
}

inline GroundTruthBox gt_from_json(const nlohmann::json& j) {
    GroundTruthBox g;
    g.image = j.value("image", "");
    g.class_id = j.at("class_id").get<int>();
    const auto& b = j.at("box");
    g.box = {b.at(0).get<float>(), b.at(1).get<float>(), b.at(2).get<float>(), b.at(3).get<float>()};
    return g;
}

}  // namespace weldsign
