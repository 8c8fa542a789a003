#pragma once

#include <filesystem>

#include "weldsign/image.hpp"
#include "weldsign/metrics.hpp"
#include "weldsign/rng.hpp"

namespace weldsign {

struct OrientationSample {
    Tensor image;  // 224×224×3 in [0,1]
    int label = 0;  // k = image is the canonical pose rotated k·90° clockwise
};

namespace detail {

inline void fill_noise_background(Tensor& img, XorShift64Star& rng, float mean, float stddev) {
    const int h = img.height(), w = img.width();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const float v = std::min(1.0f, std::max(0.0f, mean + stddev * rng.gaussian()));
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = v;
        }
    }
}

inline void fill_rect(Tensor& img, int y0, int x0, int y1, int x1, float value) {
    y0 = std::max(y0, 0);
    x0 = std::max(x0, 0);
    y1 = std::min(y1, img.height());
    x1 = std::min(x1, img.width());
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = value;
        }
    }
}

}  // namespace detail

/// Canonical-pose ("right & up") rendering for dataset element `index`: a
/// chirally asymmetric cross on a noise background. All four arms have
/// distinct lengths, so the four 90° rotations are pairwise distinguishable.
inline Tensor orientation_canonical(uint64_t seed, int index, int size = 224) {
    XorShift64Star rng(XorShift64Star::substream(seed, static_cast<uint64_t>(index)));
    Tensor img({size, size, 3});
    detail::fill_noise_background(img, rng, rng.uniform(0.25f, 0.45f), rng.uniform(0.05f, 0.12f));

    const float scale = static_cast<float>(size) / 224.0f;
    const int arm = static_cast<int>(rng.uniform(30.0f, 72.0f) * scale);
    const int margin = arm + 4;
    const int cy = rng.uniform_int(margin, size - 1 - margin);
    const int cx = rng.uniform_int(margin, size - 1 - margin);
    const int thick = std::max(3, static_cast<int>(arm * 0.20f));
    const float bright = rng.uniform(0.82f, 1.0f);

    const int right = arm;
    const int up = static_cast<int>(arm * 0.78f);
    const int left = static_cast<int>(arm * 0.50f);
    const int down = static_cast<int>(arm * 0.30f);

    detail::fill_rect(img, cy - thick / 2, cx - left, cy - thick / 2 + thick, cx + right + 1, bright);
    detail::fill_rect(img, cy - up, cx - thick / 2, cy + down + 1, cx - thick / 2 + thick, bright);
    // arrow-like tip on the long (right) arm keeps the glyph unambiguous
    detail::fill_rect(img, cy - thick, cx + right - thick, cy + thick + 1, cx + right + 1, bright);
    return img;
}

inline OrientationSample gen_orientation_sample(uint64_t seed, int index, int size = 224) {
    const int label = index % 4;
    return {rotate90_cw(orientation_canonical(seed, index, size), label), label};
}

/// Deterministic class-balanced dataset: element i carries label i mod 4.
inline std::vector<OrientationSample> gen_orientation_dataset(int n, uint64_t seed, int size = 224) {
    if (n < 1) throw std::invalid_argument("orientation dataset: n must be >= 1");
    std::vector<OrientationSample> samples;
    samples.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) samples.push_back(gen_orientation_sample(seed, i, size));
    return samples;
}

struct SceneSample {
    Tensor image;  // 416×416×3
    std::vector<GroundTruthBox> boxes;
    std::string id;
};

namespace detail {

/// Deterministic 5×7 bit pattern for a glyph class.
inline uint8_t glyph_row_bits(int class_id, int row) {
    const uint64_t bits = XorShift64Star::substream(0xC1A55u, static_cast<uint64_t>(class_id) * 7 + row);
    uint8_t v = static_cast<uint8_t>(bits & 0x1F);
    if (row == 3) v |= 0b00100;  // never an empty glyph
    return v;
}

}  // namespace detail

/// One detection scene: 3..12 disjoint glyph boxes over 40 classes, every
/// box strictly smaller than a quarter of the image in both dimensions.
/// Ground-truth boxes are the exact render extents.
inline SceneSample gen_scene_sample(uint64_t seed, int index, int size = 416, int num_classes = 40) {
    XorShift64Star rng(XorShift64Star::substream(seed ^ 0x5CE4E5ull, static_cast<uint64_t>(index)));
    SceneSample scene;
    scene.id = "scene_" + std::to_string(index);
    scene.image = Tensor({size, size, 3});
    detail::fill_noise_background(scene.image, rng, rng.uniform(0.25f, 0.45f), rng.uniform(0.04f, 0.10f));

    const int target = rng.uniform_int(3, 12);
    for (int tries = 0; tries < 200 && static_cast<int>(scene.boxes.size()) < target; ++tries) {
        const int cell = rng.uniform_int(4, 14);
        const int w = 5 * cell, h = 7 * cell;
        const int x0 = rng.uniform_int(2, size - w - 3);
        const int y0 = rng.uniform_int(2, size - h - 3);
        bool clear = true;
        for (const auto& b : scene.boxes) {
            // keep a 2 px gap so recorded boxes never touch
            if (static_cast<float>(x0 - 2) < b.box.x1 && static_cast<float>(x0 + w + 2) > b.box.x0 &&
                static_cast<float>(y0 - 2) < b.box.y1 && static_cast<float>(y0 + h + 2) > b.box.y0) {
                clear = false;
                break;
            }
        }
        if (!clear) continue;

        const int class_id = rng.uniform_int(0, num_classes - 1);
        const float bright = rng.uniform(0.80f, 1.0f);
        for (int row = 0; row < 7; ++row) {
            const uint8_t bits = detail::glyph_row_bits(class_id, row);
            for (int col = 0; col < 5; ++col) {
                if (bits & (1u << (4 - col))) {
                    detail::fill_rect(scene.image, y0 + row * cell, x0 + col * cell, y0 + (row + 1) * cell,
                                      x0 + (col + 1) * cell, bright);
                }
            }
        }
        GroundTruthBox gt;
        gt.image = scene.id;
        gt.class_id = class_id;
        gt.box = {static_cast<float>(x0), static_cast<float>(y0), static_cast<float>(x0 + w),
                  static_cast<float>(y0 + h)};
        scene.boxes.push_back(std::move(gt));
    }
    return scene;
}

inline std::vector<SceneSample> gen_scene_dataset(int n, uint64_t seed, int size = 416, int num_classes = 40) {
    if (n < 1) throw std::invalid_argument("scene dataset: n must be >= 1");
    std::vector<SceneSample> scenes;
    scenes.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) scenes.push_back(gen_scene_sample(seed, i, size, num_classes));
    return scenes;
}

/// Controllable stand-in detector: re-emits each ground-truth box with
/// probability 1-drop_rate, jittered by at most `jitter` pixels per
/// coordinate, with a random score in (0,1]; adds Poisson(false_rate)
/// spurious boxes per scene.
inline std::vector<Detection> jittered_oracle_detector(const SceneSample& scene, double drop_rate, double jitter,
                                                       uint64_t seed, double false_rate = 1.0) {
    if (drop_rate < 0 || drop_rate > 1) throw std::invalid_argument("oracle detector: drop_rate outside [0,1]");
    XorShift64Star rng(seed ? seed : 1);
    const float size = static_cast<float>(scene.image.height());
    std::vector<Detection> dets;
    for (const auto& gt : scene.boxes) {
        if (rng.next_unit() < drop_rate) continue;
        Detection d;
        d.image = scene.id;
        d.class_id = gt.class_id;
        d.score = static_cast<float>(1.0 - rng.next_unit() * 0.999);
        const float j = static_cast<float>(jitter);
        d.box.x0 = std::clamp(gt.box.x0 + rng.uniform(-j, j), 0.0f, size - 1.0f);
        d.box.y0 = std::clamp(gt.box.y0 + rng.uniform(-j, j), 0.0f, size - 1.0f);
        d.box.x1 = std::clamp(gt.box.x1 + rng.uniform(-j, j), d.box.x0 + 1.0f, size);
        d.box.y1 = std::clamp(gt.box.y1 + rng.uniform(-j, j), d.box.y0 + 1.0f, size);
        dets.push_back(std::move(d));
    }
    if (false_rate > 0) {
        const int extra = rng.poisson(false_rate);
        for (int i = 0; i < extra; ++i) {
            Detection d;
            d.image = scene.id;
            d.class_id = rng.uniform_int(0, 39);
            d.score = static_cast<float>(1.0 - rng.next_unit() * 0.999);
            const float w = rng.uniform(15.0f, 90.0f);
            const float h = rng.uniform(15.0f, 90.0f);
            d.box.x0 = rng.uniform(0.0f, size - w - 1.0f);
            d.box.y0 = rng.uniform(0.0f, size - h - 1.0f);
            d.box.x1 = d.box.x0 + w;
            d.box.y1 = d.box.y0 + h;
            dets.push_back(std::move(d));
        }
    }
    return dets;
}

/// Write `n` orientation samples as PPM files plus a labels.jsonl manifest.
inline void write_orientation_dataset(const std::string& dir, int n, uint64_t seed) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir + "/labels.jsonl");
    if (!manifest) throw std::runtime_error("synth: cannot write manifest in '" + dir + "'");
    for (int i = 0; i < n; ++i) {
        const OrientationSample s = gen_orientation_sample(seed, i);
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05d.ppm", i);
        save_ppm(dir + "/" + name, s.image);
        manifest << nlohmann::json{{"image", name}, {"label", s.label}}.dump() << "\n";
    }
}

/// Write `n` scenes as PPM files plus a gt.jsonl box manifest.
inline void write_scene_dataset(const std::string& dir, int n, uint64_t seed) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir + "/gt.jsonl");
    if (!manifest) throw std::runtime_error("synth: cannot write manifest in '" + dir + "'");
    for (int i = 0; i < n; ++i) {
        const SceneSample s = gen_scene_sample(seed, i);
        save_ppm(dir + "/" + s.id + ".ppm", s.image);
        for (const auto& gt : s.boxes) manifest << gt_to_json(gt).dump() << "\n";
    }
}

}  // namespace weldsign
