#include <gtest/gtest.h>

#include "oracles.hpp"
#include "weldsign/cost.hpp"
#include "weldsign/train.hpp"

using namespace weldsign;

TEST(Analyze, GynetTotalsMatchTheHandDerivedCount) {
    const CostReport r = analyze(build_gynet(), {416, 416, 3});
    // conv weights 1,608,624 + BN 4·1072 + enhancement block 2,099,712 +
    // biased head convs 1,247,758
    EXPECT_EQ(r.total_params, 4960382);
    EXPECT_EQ(r.size_bytes, 4960382LL * 4);
    // conv MACs 1,539,635,968 + bias MACs 373,659 + excitation MACs 2,097,152
    EXPECT_EQ(r.total_flops, 1542106779);
    EXPECT_EQ(r.total_madds, 2 * r.total_flops);
}

TEST(Analyze, AblationVariantTotals) {
    EXPECT_EQ(analyze(build_gynet(GynetVariant::Baseline), {416, 416, 3}).total_params, 2664062);
    EXPECT_EQ(analyze(build_gynet(GynetVariant::SibOnly), {416, 416, 3}).total_params, 2860670);
    EXPECT_EQ(analyze(build_gynet(GynetVariant::CwbOnly), {416, 416, 3}).total_params, 2795774);
}

TEST(Analyze, ParamsEqualWeightStoreFloatCount) {
    for (const auto& [graph, input] :
         {std::pair{build_grnet(), Shape{224, 224, 3}}, std::pair{build_gynet(), Shape{416, 416, 3}},
          std::pair{build_gynet(GynetVariant::Baseline), Shape{416, 416, 3}},
          std::pair{build_grnet(4), Shape{224, 224, 3}}}) {
        const CostReport r = analyze(graph, input);
        const WeightStore store = init_weights(graph, 9, input);
        EXPECT_EQ(r.total_params, store.total_floats());
    }
}

TEST(Analyze, EmptyGraphGivesAllZeroReport) {
    const CostReport r = analyze(NetGraph{}, {32, 32, 3});
    EXPECT_EQ(r.total_params, 0);
    EXPECT_EQ(r.total_flops, 0);
    EXPECT_EQ(r.total_madds, 0);
    EXPECT_EQ(r.size_bytes, 0);
    EXPECT_TRUE(r.rows.empty());
}

TEST(Analyze, AddingAParameterizedLayerStrictlyIncreasesParams) {
    NetGraph g;
    LayerSpec conv;
    conv.id = "c1";
    conv.kind = LayerKind::Conv;
    conv.inputs = {"input"};
    conv.kernel = 3;
    conv.pad = Padding::same(3);
    conv.filters = 4;
    g.layers.push_back(conv);
    g.outputs = {"c1"};
    const int64_t before = analyze(g, {8, 8, 2}).total_params;

    LayerSpec conv2 = conv;
    conv2.id = "c2";
    conv2.inputs = {"c1"};
    g.layers.push_back(conv2);
    g.outputs = {"c2"};
    EXPECT_GT(analyze(g, {8, 8, 2}).total_params, before);
}

TEST(Analyze, DoublingSpatialExtentQuadruplesConvFlopsOnly) {
    const NetGraph g = build_gynet();
    const CostReport small = analyze(g, {416, 416, 3});
    const CostReport big = analyze(g, {832, 832, 3});
    EXPECT_EQ(small.total_params, big.total_params);
    for (size_t i = 0; i < small.rows.size(); ++i) {
        const auto& a = small.rows[i];
        const auto& b = big.rows[i];
        if (a.kind == "conv" || a.kind == "group-conv") {
            EXPECT_EQ(4 * a.flops, b.flops) << a.id;
        }
    }
}

TEST(Analyze, GroupParamRatioIsExactlyTheGroupCount) {
    for (int c : {8, 64, 512}) {
        auto single_conv_graph = [&](int groups) {
            NetGraph g;
            LayerSpec conv;
            conv.id = "c";
            conv.kind = groups > 1 ? LayerKind::GroupConv : LayerKind::Conv;
            conv.inputs = {"input"};
            conv.kernel = 3;
            conv.pad = Padding::same(3);
            conv.filters = c;
            conv.groups = groups;
            g.layers.push_back(conv);
            g.outputs = {"c"};
            return analyze(g, {16, 16, c}).total_params;
        };
        EXPECT_EQ(single_conv_graph(1), static_cast<int64_t>(c) * single_conv_graph(c));
    }
}

TEST(Analyze, OptionalBnPoolCountingIsRecordedAndAdds) {
    CostConventions counted;
    counted.bn_counted = true;
    counted.pool_counted = true;
    const CostReport base = analyze(build_gynet(), {416, 416, 3});
    const CostReport more = analyze(build_gynet(), {416, 416, 3}, counted);
    EXPECT_GT(more.total_flops, base.total_flops);
    EXPECT_FALSE(base.conventions.bn_counted);
    EXPECT_TRUE(more.conventions.bn_counted);
    EXPECT_EQ(base.to_json().at("conventions").at("flop"), "MAC");
}

TEST(CompareToReference, PassAndFailRows) {
    const CostReport r = analyze(build_gynet(), {416, 416, 3});
    const auto ok = compare_to_reference(r, {{"params", 4.9e6, 0.02, true}});
    ASSERT_EQ(ok.size(), 1u);
    EXPECT_TRUE(ok[0].pass);

    const auto doubled = compare_to_reference(r, {{"params", 2 * 4960382.0, 0.02, true}});
    EXPECT_FALSE(doubled[0].pass);
    EXPECT_NEAR(doubled[0].rel_err, 0.5, 1e-6);  // half of the doubled expectation

    const auto vs_half = compare_to_reference(r, {{"params", 4960382.0 / 2, 0.02, true}});
    EXPECT_FALSE(vs_half[0].pass);
    EXPECT_NEAR(vs_half[0].rel_err, 1.0, 1e-6);  // got twice the expectation
}

TEST(CompareToReference, AbsoluteToleranceRows) {
    const CostReport r = analyze(build_gynet(GynetVariant::Baseline), {416, 416, 3});
    const auto checks = compare_to_reference(r, gynet_baseline_reference());
    for (const auto& c : checks) EXPECT_TRUE(c.pass) << c.metric;
}

TEST(CostReport, TableAndJsonCarryTotals) {
    const CostReport r = analyze(build_grnet(), {224, 224, 3});
    const std::string table = r.to_table();
    EXPECT_NE(table.find("TOTAL"), std::string::npos);
    const nlohmann::json j = r.to_json();
    EXPECT_EQ(j.at("totals").at("params").get<int64_t>(), r.total_params);
    EXPECT_EQ(j.at("totals").at("size_bytes").get<int64_t>(), 4 * r.total_params);
}
