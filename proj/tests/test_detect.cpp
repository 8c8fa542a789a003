#include <gtest/gtest.h>

#include "oracles.hpp"
#include "weldsign/detect.hpp"

using namespace weldsign;

TEST(Iou, KnownValues) {
    const Box a{0, 0, 1, 1};
    EXPECT_FLOAT_EQ(iou(a, a), 1.0f);
    EXPECT_FLOAT_EQ(iou(a, Box{2, 2, 3, 3}), 0.0f);
    // unit squares overlapping half: intersection 0.5, union 1.5
    EXPECT_NEAR(iou(a, Box{0.5f, 0, 1.5f, 1}), 1.0f / 3.0f, 1e-6f);
}

TEST(Iou, SymmetricAndScaleInvariant) {
    XorShift64Star rng(81);
    for (int trial = 0; trial < 50; ++trial) {
        auto random_box = [&rng] {
            const float x0 = rng.uniform(0.0f, 10.0f), y0 = rng.uniform(0.0f, 10.0f);
            return Box{x0, y0, x0 + rng.uniform(0.5f, 5.0f), y0 + rng.uniform(0.5f, 5.0f)};
        };
        const Box a = random_box(), b = random_box();
        EXPECT_FLOAT_EQ(iou(a, b), iou(b, a));
        const float lambda = rng.uniform(0.5f, 4.0f);
        const Box as{a.x0 * lambda, a.y0 * lambda, a.x1 * lambda, a.y1 * lambda};
        const Box bs{b.x0 * lambda, b.y0 * lambda, b.x1 * lambda, b.y1 * lambda};
        EXPECT_NEAR(iou(as, bs), iou(a, b), 1e-5f);
        EXPECT_GE(iou(a, b), 0.0f);
        EXPECT_LE(iou(a, b), 1.0f);
    }
}

TEST(DecodeHead, SaturatedNegativeLogitsGiveNothing) {
    const Tensor raw = Tensor::full({13, 13, 135}, -1e9f);
    EXPECT_TRUE(decode_head(raw, {{{81, 82}, {135, 169}, {344, 319}}}, 416, 0.25f).empty());
}

TEST(DecodeHead, NeutralCellDecodesToCellCenterAndAnchorSize) {
    Tensor raw = Tensor::full({13, 13, 135}, -1e9f);
    // cell (4, 7), anchor 1: zero geometry logits, saturated objectness/class
    const int base = 1 * 45;
    float* cell = raw.raw() + ((4 * 13 + 7) * 135);
    cell[base + 0] = 0.0f;
    cell[base + 1] = 0.0f;
    cell[base + 2] = 0.0f;
    cell[base + 3] = 0.0f;
    cell[base + 4] = 1000.0f;
    cell[base + 5 + 11] = 1000.0f;
    const auto dets = decode_head(raw, {{{81, 82}, {135, 169}, {344, 319}}}, 416, 0.25f);
    ASSERT_EQ(dets.size(), 1u);
    const Detection& d = dets[0];
    EXPECT_EQ(d.class_id, 11);
    EXPECT_GT(d.score, 0.999f);
    const float stride = 416.0f / 13.0f;
    EXPECT_NEAR((d.box.x0 + d.box.x1) / 2, (7 + 0.5f) * stride, 1e-3f);
    EXPECT_NEAR((d.box.y0 + d.box.y1) / 2, (4 + 0.5f) * stride, 1e-3f);
    EXPECT_NEAR(d.box.x1 - d.box.x0, 135.0f, 1e-3f);
    EXPECT_NEAR(d.box.y1 - d.box.y0, 169.0f, 1e-3f);
}

TEST(DecodeHead, MatchesAnIndependentPerCellOracle) {
    XorShift64Star rng(82);
    const int s = 4, classes = 2, channels = 3 * (5 + classes), input = 128;
    const std::array<Anchor, 3> anchors{{{20, 30}, {50, 40}, {90, 100}}};
    const Tensor raw = oracles::random_tensor({s, s, channels}, rng, -3.0f, 3.0f);
    auto dets = decode_head(raw, anchors, input, 0.0f);

    std::vector<Detection> want;
    const double stride = static_cast<double>(input) / s;
    for (int cy = 0; cy < s; ++cy) {
        for (int cx = 0; cx < s; ++cx) {
            for (int a = 0; a < 3; ++a) {
                auto at = [&](int k) {
                    return static_cast<double>(raw.at(cy, cx, a * (5 + classes) + k));
                };
                auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
                double best = sig(at(5));
                int best_c = 0;
                for (int c = 1; c < classes; ++c) {
                    if (sig(at(5 + c)) > best) {
                        best = sig(at(5 + c));
                        best_c = c;
                    }
                }
                Detection d;
                d.score = static_cast<float>(sig(at(4)) * best);
                d.class_id = best_c;
                const double mx = (cx + sig(at(0))) * stride;
                const double my = (cy + sig(at(1))) * stride;
                const double w = anchors[static_cast<size_t>(a)].w * std::exp(at(2));
                const double h = anchors[static_cast<size_t>(a)].h * std::exp(at(3));
                d.box.x0 = static_cast<float>(std::clamp(mx - w / 2, 0.0, static_cast<double>(input)));
                d.box.y0 = static_cast<float>(std::clamp(my - h / 2, 0.0, static_cast<double>(input)));
                d.box.x1 = static_cast<float>(std::clamp(mx + w / 2, 0.0, static_cast<double>(input)));
                d.box.y1 = static_cast<float>(std::clamp(my + h / 2, 0.0, static_cast<double>(input)));
                want.push_back(d);
            }
        }
    }
    ASSERT_EQ(dets.size(), want.size());
    for (size_t i = 0; i < dets.size(); ++i) {
        EXPECT_EQ(dets[i].class_id, want[i].class_id) << i;
        EXPECT_TRUE(oracles::close_rel(dets[i].score, want[i].score, 1e-5f)) << i;
        EXPECT_TRUE(oracles::close_rel(dets[i].box.x0, want[i].box.x0, 1e-4f)) << i;
        EXPECT_TRUE(oracles::close_rel(dets[i].box.y1, want[i].box.y1, 1e-4f)) << i;
    }
}

TEST(DecodeHead, EveryBoxStaysInsideTheInputSquare) {
    XorShift64Star rng(83);
    const Tensor raw = oracles::random_tensor({13, 13, 135}, rng, -6.0f, 6.0f);
    const auto dets = decode_head(raw, {{{81, 82}, {135, 169}, {344, 319}}}, 416, 0.0f);
    EXPECT_EQ(dets.size(), 3u * 13 * 13);  // pre-threshold candidate budget
    for (const auto& d : dets) {
        EXPECT_GE(d.box.x0, 0.0f);
        EXPECT_GE(d.box.y0, 0.0f);
        EXPECT_LE(d.box.x1, 416.0f);
        EXPECT_LE(d.box.y1, 416.0f);
        EXPECT_TRUE(d.box.valid());
    }
}

TEST(DecodeHead, RejectsBadChannelCounts) {
    EXPECT_THROW(decode_head(Tensor({13, 13, 134}), {{{1, 1}, {1, 1}, {1, 1}}}, 416, 0.5f),
                 std::invalid_argument);
    EXPECT_THROW(decode_head(Tensor({13, 13, 135}), {{{1, 1}, {1, 1}, {1, 1}}}, 415, 0.5f),
                 std::invalid_argument);
}

TEST(Nms, SingleBoxUnchanged) {
    Detection d;
    d.box = {10, 10, 50, 50};
    d.score = 0.7f;
    const auto kept = nms({d}, 0.45f);
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_FLOAT_EQ(kept[0].score, 0.7f);
}

TEST(Nms, HighOverlapSameClassKeepsOnlyTheStronger) {
    Detection a, b;
    a.box = {0, 0, 10, 10};
    a.score = 0.9f;
    b.box = {0, 1, 10, 11};  // IoU 9/11 ≈ 0.82
    b.score = 0.7f;
    const auto kept = nms({b, a}, 0.45f);
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_FLOAT_EQ(kept[0].score, 0.9f);
}

TEST(Nms, DisjointBoxesAndOtherClassesSurvive) {
    Detection a, b, c;
    a.box = {0, 0, 10, 10};
    a.score = 0.9f;
    b.box = {100, 100, 120, 130};
    b.score = 0.2f;
    c.box = {0, 1, 10, 11};
    c.score = 0.5f;
    c.class_id = 1;  // overlaps `a` but is another class
    const auto kept = nms({a, b, c}, 0.0f);
    EXPECT_EQ(kept.size(), 3u);
    EXPECT_GE(kept[0].score, kept[1].score);
    EXPECT_GE(kept[1].score, kept[2].score);
}

TEST(Nms, OutputIsASubsetWithNoSameClassOverlapAboveThreshold) {
    XorShift64Star rng(84);
    std::vector<Detection> dets;
    for (int i = 0; i < 60; ++i) {
        Detection d;
        const float x0 = rng.uniform(0.0f, 300.0f), y0 = rng.uniform(0.0f, 300.0f);
        d.box = {x0, y0, x0 + rng.uniform(10.0f, 80.0f), y0 + rng.uniform(10.0f, 80.0f)};
        d.class_id = rng.uniform_int(0, 2);
        d.score = rng.uniform(0.01f, 1.0f);
        dets.push_back(d);
    }
    const float thr = 0.45f;
    const auto kept = nms(dets, thr);
    EXPECT_LE(kept.size(), dets.size());
    for (size_t i = 0; i < kept.size(); ++i) {
        for (size_t j = i + 1; j < kept.size(); ++j) {
            if (kept[i].class_id == kept[j].class_id) {
                EXPECT_LE(iou(kept[i].box, kept[j].box), thr);
            }
        }
    }
}

TEST(DetectionJson, RoundTripsAndNamesClasses) {
    Detection d;
    d.image = "scene_3";
    d.class_id = 2;
    d.score = 0.625f;
    d.box = {1, 2, 3, 4};
    const nlohmann::json j = detection_to_json(d, {"A", "B", "C"});
    EXPECT_EQ(j.at("class_name"), "C");
    const Detection back = detection_from_json(j);
    EXPECT_EQ(back.image, d.image);
    EXPECT_EQ(back.class_id, d.class_id);
    EXPECT_FLOAT_EQ(back.score, d.score);
    EXPECT_FLOAT_EQ(back.box.x1, 3.0f);
}
