#pragma once

#include <chrono>

#include "weldsign/detect.hpp"
#include "weldsign/executor.hpp"
#include "weldsign/image.hpp"

namespace weldsign {

/// Every threshold and constant the end-to-end pipeline uses, echoed into
/// results for provenance. Defaults follow the YOLO-family conventions; the
/// anchor sets are the Tiny-YOLO-v3 defaults for the 13×13 and 26×26 heads.
struct PipelineConfig {
    float conf_threshold = 0.25f;
    float nms_iou = 0.45f;
    float eval_iou = 0.5f;
    int det_input = 416;
    int cls_input = 224;
    float pixel_scale = 255.0f;  // inputs are stored as pixel/255
    std::array<Anchor, 3> anchors_coarse{{{81, 82}, {135, 169}, {344, 319}}};   // 13×13 head
    std::array<Anchor, 3> anchors_fine{{{10, 14}, {23, 27}, {37, 58}}};         // 26×26 head
    std::vector<std::string> class_names = default_class_names();

    static std::vector<std::string> default_class_names() {
        std::vector<std::string> names;
        for (int i = 0; i < 10; ++i) names.push_back(std::string(1, static_cast<char>('0' + i)));
        for (int i = 0; i < 26; ++i) names.push_back(std::string(1, static_cast<char>('A' + i)));
        names.insert(names.end(), {"IQI", "ARROW", "CROSS", "DASH"});
        return names;
    }

    nlohmann::json to_json() const {
        auto anchors_json = [](const std::array<Anchor, 3>& a) {
            nlohmann::json j = nlohmann::json::array();
            for (const auto& an : a) j.push_back({an.w, an.h});
            return j;
        };
        return {{"conf_threshold", conf_threshold},
                {"nms_iou", nms_iou},
                {"eval_iou", eval_iou},
                {"det_input", det_input},
                {"cls_input", cls_input},
                {"pixel_scale", pixel_scale},
                {"anchors_coarse", anchors_json(anchors_coarse)},
                {"anchors_fine", anchors_json(anchors_fine)},
                {"class_names", class_names}};
    }

    static PipelineConfig from_json(const nlohmann::json& j) {
        PipelineConfig c;
        c.conf_threshold = j.value("conf_threshold", c.conf_threshold);
        c.nms_iou = j.value("nms_iou", c.nms_iou);
        c.eval_iou = j.value("eval_iou", c.eval_iou);
        c.det_input = j.value("det_input", c.det_input);
        c.cls_input = j.value("cls_input", c.cls_input);
        c.pixel_scale = j.value("pixel_scale", c.pixel_scale);
        auto read_anchors = [&j](const char* key, std::array<Anchor, 3>& out) {
            if (!j.contains(key)) return;
            const auto& a = j.at(key);
            for (size_t i = 0; i < 3; ++i) out[i] = {a.at(i).at(0).get<float>(), a.at(i).at(1).get<float>()};
        };
        read_anchors("anchors_coarse", c.anchors_coarse);
        read_anchors("anchors_fine", c.anchors_fine);
        if (j.contains("class_names")) c.class_names = j.at("class_names").get<std::vector<std::string>>();
        return c;
    }
};

/// Classify the cross-mark pose: the image is tiled into det_input squares,
/// each tile resized to the classifier input, and the most confident tile
/// wins. Returns (class, confidence).
inline std::pair<int, float> classify_orientation(const Tensor& image, const NetGraph& grnet,
                                                  const WeightStore& weights, const PipelineConfig& cfg = {}) {
    int best_class = 0;
    float best_conf = -1.0f;
    for (const TileRef& ref : tile_image(image, cfg.det_input)) {
        const Tensor input = resize_bilinear(ref.tile, cfg.cls_input, cfg.cls_input);
        const Tensor probs = execute(grnet, weights, input).at(grnet.outputs.at(0));
        for (int64_t i = 0; i < probs.size(); ++i) {
            if (probs[i] > best_conf) {
                best_conf = probs[i];
                best_class = static_cast<int>(i);
            }
        }
    }
    return {best_class, best_conf};
}

/// Undo the pose indicated by the classifier: label k means the image is the
/// canonical pose rotated k·90° clockwise, so rotate k·90° counter-clockwise.
inline Tensor redirect(const Tensor& image, int orientation_class) {
    if (orientation_class < 0 || orientation_class > 3) {
        throw std::invalid_argument("redirect: class must be 0..3");
    }
    return rotate90_ccw(image, orientation_class);
}

/// Detection stage: resize to the detector input, run both heads, decode,
/// merge, NMS, and map boxes back to the original image scale.
inline std::vector<Detection> recognize(const Tensor& image, const NetGraph& gynet, const WeightStore& weights,
                                        const PipelineConfig& cfg = {}) {
    const Tensor input = resize_bilinear(image, cfg.det_input, cfg.det_input);
    const auto outputs = execute(gynet, weights, input);
    std::vector<Detection> dets;
    for (const auto& [id, raw] : outputs) {
        const bool coarse = raw.height() <= cfg.det_input / 32 + 1;
        auto decoded = decode_head(raw, coarse ? cfg.anchors_coarse : cfg.anchors_fine, cfg.det_input,
                                   cfg.conf_threshold);
        dets.insert(dets.end(), decoded.begin(), decoded.end());
    }
    dets = nms(std::move(dets), cfg.nms_iou);

    const float sx = static_cast<float>(image.width()) / static_cast<float>(cfg.det_input);
    const float sy = static_cast<float>(image.height()) / static_cast<float>(cfg.det_input);
    for (Detection& d : dets) {
        d.box.x0 *= sx;
        d.box.x1 *= sx;
        d.box.y0 *= sy;
        d.box.y1 *= sy;
    }
    return dets;
}

struct PipelineResult {
    int orientation_class = 0;
    float orientation_confidence = 0;
    int applied_rotation_deg = 0;
    std::vector<Detection> detections;
    double classify_ms = 0;
    double recognize_ms = 0;

    nlohmann::json to_json(const PipelineConfig& cfg) const {
        nlohmann::json det_json = nlohmann::json::array();
        for (const auto& d : detections) det_json.push_back(detection_to_json(d, cfg.class_names));
        return {{"orientation",
                 {{"class", orientation_class},
                  {"confidence", orientation_confidence},
                  {"applied_rotation_deg", applied_rotation_deg}}},
                {"detections", det_json},
                {"config", cfg.to_json()},
                {"timing_ms", {{"classify", classify_ms}, {"recognize", recognize_ms}}}};
    }
};

/// classify -> redirect -> recognize on one image.
inline PipelineResult run_pipeline(const Tensor& image, const NetGraph& grnet, const WeightStore& cls_weights,
                                   const NetGraph& gynet, const WeightStore& det_weights,
                                   const PipelineConfig& cfg = {}) {
    using clock = std::chrono::steady_clock;
    PipelineResult result;

    const auto t0 = clock::now();
    std::tie(result.orientation_class, result.orientation_confidence) =
        classify_orientation(image, grnet, cls_weights, cfg);
    result.applied_rotation_deg = result.orientation_class * 90;
    const Tensor corrected = redirect(image, result.orientation_class);
    const auto t1 = clock::now();
    result.detections = recognize(corrected, gynet, det_weights, cfg);
    const auto t2 = clock::now();

    result.classify_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    result.recognize_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
    return result;
}

}  // namespace weldsign
