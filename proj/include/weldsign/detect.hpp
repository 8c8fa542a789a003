#pragma once

#include <algorithm>
#include <array>

#include <json.hpp>

#include "weldsign/nn_ops.hpp"

namespace weldsign {

struct Box {
    float x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    float area() const { return std::max(0.0f, x1 - x0) * std::max(0.0f, y1 - y0); }
    bool valid() const { return x0 < x1 && y0 < y1; }
};

inline float iou(const Box& a, const Box& b) {
    const float ix = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
    const float iy = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
    if (ix <= 0.0f || iy <= 0.0f) return 0.0f;
    const float inter = ix * iy;
    const float uni = a.area() + b.area() - inter;
    return uni > 0.0f ? inter / uni : 0.0f;
}

/// Prior box size in input-image pixels.
struct Anchor {
    float w = 0, h = 0;
};

struct Detection {
    Box box;
    int class_id = 0;
    float score = 0;
    std::string image;  // identifier used by the evaluation tooling
};

inline bool score_order(const Detection& a, const Detection& b) { return a.score > b.score; }

/// Decode one raw head map of shape S×S×(3·(5+num_classes)). Per cell and
/// anchor: center = (cell + sigmoid(txy))·stride, size = anchor·exp(twh),
/// score = sigmoid(t_obj)·max_c sigmoid(t_class). Boxes are clamped to the
/// input square; entries below conf_threshold are dropped.
inline std::vector<Detection> decode_head(const Tensor& raw, const std::array<Anchor, 3>& anchors,
                                          int input_size, float conf_threshold) {
    const int s = raw.height();
    if (raw.width() != s) throw std::invalid_argument("decode: head map must be square, got " + raw.shape_str());
    if (input_size % s != 0) {
        throw std::invalid_argument("decode: grid " + std::to_string(s) + " does not divide input size " +
                                    std::to_string(input_size));
    }
    const int c = raw.channels();
    if (c % 3 != 0 || c / 3 < 6) {
        throw std::invalid_argument("decode: channel count " + std::to_string(c) +
                                    " is not 3·(5+num_classes)");
    }
    const int per_anchor = c / 3;
    const int num_classes = per_anchor - 5;
    const float stride = static_cast<float>(input_size) / static_cast<float>(s);

    std::vector<Detection> dets;
    for (int cy = 0; cy < s; ++cy) {
        for (int cx = 0; cx < s; ++cx) {
            for (int a = 0; a < 3; ++a) {
                const float* t = raw.raw() + ((static_cast<int64_t>(cy) * s + cx) * c) + a * per_anchor;
                const float obj = sigmoid_scalar(t[4]);
                int best_class = 0;
                float best_cls_score = sigmoid_scalar(t[5]);
                for (int k = 1; k < num_classes; ++k) {
                    const float v = sigmoid_scalar(t[5 + k]);
                    if (v > best_cls_score) {
                        best_cls_score = v;
                        best_class = k;
                    }
                }
                const float score = obj * best_cls_score;
                if (score < conf_threshold) continue;

                const float center_x = (static_cast<float>(cx) + sigmoid_scalar(t[0])) * stride;
                const float center_y = (static_cast<float>(cy) + sigmoid_scalar(t[1])) * stride;
                const float bw = anchors[a].w * static_cast<float>(std::exp(static_cast<double>(t[2])));
                const float bh = anchors[a].h * static_cast<float>(std::exp(static_cast<double>(t[3])));

                Detection d;
                d.box.x0 = std::clamp(center_x - bw / 2.0f, 0.0f, static_cast<float>(input_size));
                d.box.y0 = std::clamp(center_y - bh / 2.0f, 0.0f, static_cast<float>(input_size));
                d.box.x1 = std::clamp(center_x + bw / 2.0f, 0.0f, static_cast<float>(input_size));
                d.box.y1 = std::clamp(center_y + bh / 2.0f, 0.0f, static_cast<float>(input_size));
                d.class_id = best_class;
                d.score = score;
                if (d.box.valid()) dets.push_back(std::move(d));
            }
        }
    }
    return dets;
}

/// Greedy per-class NMS: keep the highest-scored box of each class and drop
/// same-class boxes overlapping it above the IoU threshold. Output is sorted
/// by score descending.
inline std::vector<Detection> nms(std::vector<Detection> dets, float iou_threshold) {
    std::stable_sort(dets.begin(), dets.end(), score_order);
    std::vector<Detection> kept;
    kept.reserve(dets.size());
    for (const Detection& d : dets) {
        bool suppressed = false;
        for (const Detection& k : kept) {
            if (k.class_id == d.class_id && k.image == d.image && iou(k.box, d.box) > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(d);
    }
    return kept;
}

inline nlohmann::json detection_to_json(const Detection& d, const std::vector<std::string>& class_names = {}) {
    nlohmann::json j{{"image", d.image},
                     {"class_id", d.class_id},
                     {"score", d.score},
                     {"box", {d.box.x0, d.box.y0, d.box.x1, d.box.y1}}};
    if (d.class_id >= 0 && d.class_id < static_cast<int>(class_names.size())) {
        j["class_name"] = class_names[d.class_id];
    }
    return j;
}

inline Detection detection_from_json(const nlohmann::json& j) {
    Detection d;
    d.image = j.value("image", "");
    d.class_id = j.at("class_id").get<int>();
    d.score = j.value("score", 1.0f);
    const auto& b = j.at("box");
    d.box = {b.at(0).get<float>(), b.at(1).get<float>(), b.at(2).get<float>(), b.at(3).get<float>()};
    return d;
}

}  // namespace weldsign
