#include <gtest/gtest.h>

#include <functional>

#include "oracles.hpp"
#include "weldsign/nn_grad.hpp"

using namespace weldsign;

namespace {

// Scalar probe loss: sum_i r_i * out_i with a fixed random projection r, so
// the upstream gradient at the op output is exactly r.
double probe_loss(const Tensor& out, const Tensor& r) {
    double acc = 0.0;
    for (int64_t i = 0; i < out.size(); ++i) acc += static_cast<double>(out[i]) * r[i];
    return acc;
}

// Central finite difference of loss(x) w.r.t. x[i].
double central_diff(const std::function<double(const Tensor&)>& loss, Tensor x, int64_t i, float eps) {
    const float saved = x[i];
    x[i] = saved + eps;
    const double hi = loss(x);
    x[i] = saved - eps;
    const double lo = loss(x);
    return (hi - lo) / (2.0 * static_cast<double>(eps));
}

void expect_grad_matches_fd(const std::function<double(const Tensor&)>& loss, const Tensor& x,
                            const Tensor& analytic, float eps = 1e-3f, float rel = 1e-2f, float floor = 1e-3f) {
    ASSERT_EQ(analytic.size(), x.size());
    for (int64_t i = 0; i < x.size(); ++i) {
        const double fd = central_diff(loss, x, i, eps);
        const double a = analytic[i];
        EXPECT_NEAR(a, fd, rel * std::max(std::abs(a), std::abs(fd)) + floor)
            << "element " << i << " analytic " << a << " fd " << fd;
    }
}

ConvParams random_conv(XorShift64Star& rng, int k, int cin, int cout, int groups, int stride, Padding pad,
                       bool bias) {
    ConvParams p;
    p.kernel = oracles::random_tensor({k, k, cin / groups, cout}, rng);
    if (bias) p.bias = oracles::random_tensor({cout}, rng);
    p.stride = stride;
    p.pad = pad;
    p.groups = groups;
    return p;
}

}  // namespace

TEST(ConvBwd, IdentityKernelPassesUpstreamGradient) {
    XorShift64Star rng(41);
    const Tensor in = oracles::random_tensor({4, 4, 1}, rng);
    ConvParams p;
    p.kernel = Tensor({1, 1, 1, 1}, {1.0f});
    const Tensor gout = oracles::random_tensor({4, 4, 1}, rng);
    const ConvGrads g = conv2d_bwd(in, p, gout);
    EXPECT_TRUE(oracles::tensors_close(g.input, gout, 0.0f));
}

TEST(ConvBwd, InputGradientMatchesFiniteDifferences) {
    XorShift64Star rng(42);
    for (const int groups : {1, 2}) {
        const Tensor in = oracles::random_tensor({5, 5, 2}, rng);
        const ConvParams p = random_conv(rng, 3, 2, 4, groups, 1, Padding::same(3), true);
        const Tensor r = oracles::random_tensor(conv2d(in, p).shape(), rng);
        const ConvGrads g = conv2d_bwd(in, p, r);
        expect_grad_matches_fd([&](const Tensor& x) { return probe_loss(conv2d(x, p), r); }, in, g.input);
    }
}

TEST(ConvBwd, KernelAndBiasGradientsMatchFiniteDifferences) {
    XorShift64Star rng(43);
    const Tensor in = oracles::random_tensor({5, 4, 2}, rng);
    const ConvParams p = random_conv(rng, 3, 2, 2, 1, 2, Padding::same(3), true);
    const Tensor r = oracles::random_tensor(conv2d(in, p).shape(), rng);
    const ConvGrads g = conv2d_bwd(in, p, r);

    expect_grad_matches_fd(
        [&](const Tensor& k) {
            ConvParams q = p;
            q.kernel = k;
            return probe_loss(conv2d(in, q), r);
        },
        p.kernel, g.kernel);
    expect_grad_matches_fd(
        [&](const Tensor& b) {
            ConvParams q = p;
            q.bias = b;
            return probe_loss(conv2d(in, q), r);
        },
        *p.bias, *g.bias);
}

TEST(ReluBwd, PositiveSidePassesGradientUnchanged) {
    XorShift64Star rng(44);
    const Tensor in = oracles::random_tensor({3, 3, 2}, rng, 0.1f, 2.0f);
    const Tensor gout = oracles::random_tensor({3, 3, 2}, rng);
    const Tensor g = relu_bwd(in, gout);
    EXPECT_TRUE(oracles::tensors_close(g, gout, 0.0f));
}

TEST(ReluBwd, MatchesFiniteDifferences) {
    XorShift64Star rng(45);
    Tensor in = oracles::random_tensor({4, 4, 3}, rng);
    for (int64_t i = 0; i < in.size(); ++i) {
        if (std::abs(in[i]) < 0.05f) in[i] = 0.1f;  // keep away from the kink
    }
    const Tensor r = oracles::random_tensor(in.shape(), rng);
    const Tensor g = relu_bwd(in, r);
    expect_grad_matches_fd([&](const Tensor& x) { return probe_loss(relu(x), r); }, in, g);
}

TEST(MaxPoolBwd, MatchesFiniteDifferences) {
    XorShift64Star rng(46);
    const Tensor in = oracles::random_tensor({5, 5, 3}, rng);
    std::vector<int64_t> argmax;
    const Tensor out = maxpool(in, 2, 2, {}, &argmax);
    const Tensor r = oracles::random_tensor(out.shape(), rng);
    const Tensor g = maxpool_bwd(in.shape(), argmax, r);
    expect_grad_matches_fd([&](const Tensor& x) { return probe_loss(maxpool(x, 2, 2), r); }, in, g);
}

TEST(MaxPoolBwd, OverlappingWindowsAccumulate) {
    // one dominant element under a stride-1 3×3 pool receives every window's gradient
    Tensor in = Tensor::full({3, 3, 1}, -1.0f);
    in.at(1, 1, 0) = 5.0f;
    std::vector<int64_t> argmax;
    const Tensor out = maxpool(in, 3, 1, Padding::same(3), &argmax);
    const Tensor ones = Tensor::full(out.shape(), 1.0f);
    const Tensor g = maxpool_bwd(in.shape(), argmax, ones);
    EXPECT_FLOAT_EQ(g.at(1, 1, 0), 9.0f);
}

TEST(GlobalAvgPoolBwd, MatchesFiniteDifferences) {
    XorShift64Star rng(47);
    const Tensor in = oracles::random_tensor({5, 3, 4}, rng);
    const Tensor r = oracles::random_tensor({1, 1, 4}, rng);
    const Tensor g = global_avgpool_bwd(in.shape(), r);
    expect_grad_matches_fd([&](const Tensor& x) { return probe_loss(global_avgpool(x), r); }, in, g);
}

TEST(FcBwd, MatchesFiniteDifferences) {
    XorShift64Star rng(48);
    const Tensor in = oracles::random_tensor({6}, rng);
    const Tensor w = oracles::random_tensor({6, 3}, rng);
    const Tensor b = oracles::random_tensor({3}, rng);
    const Tensor r = oracles::random_tensor({3}, rng);
    const FcGrads g = fully_connected_bwd(in, w, r);

    expect_grad_matches_fd([&](const Tensor& x) { return probe_loss(fully_connected(x, w, b), r); }, in, g.input);
    expect_grad_matches_fd([&](const Tensor& wt) { return probe_loss(fully_connected(in, wt, b), r); }, w,
                           g.weights);
    expect_grad_matches_fd([&](const Tensor& bb) { return probe_loss(fully_connected(in, w, bb), r); }, b, g.bias);
}

TEST(BatchNormTrain, NormalizesToZeroMeanUnitVariance) {
    XorShift64Star rng(49);
    std::vector<Tensor> xs;
    for (int i = 0; i < 3; ++i) xs.push_back(oracles::random_tensor({4, 4, 2}, rng, -2.0f, 3.0f));
    BatchNormParams p;
    p.gamma = Tensor::full({2}, 1.0f);
    p.beta = Tensor({2});
    p.running_mean = Tensor({2});
    p.running_var = Tensor::full({2}, 1.0f);
    BnTrainCache cache;
    const std::vector<Tensor> ys = batchnorm_train_fwd(xs, p, 0.1f, &cache);

    for (int ch = 0; ch < 2; ++ch) {
        double sum = 0, sq = 0;
        int64_t n = 0;
        for (const Tensor& y : ys) {
            for (int yy = 0; yy < 4; ++yy) {
                for (int xx = 0; xx < 4; ++xx) {
                    sum += y.at(yy, xx, ch);
                    sq += y.at(yy, xx, ch) * y.at(yy, xx, ch);
                    ++n;
                }
            }
        }
        const double mean = sum / n;
        const double var = sq / n - mean * mean;
        EXPECT_NEAR(mean, 0.0, 1e-4);
        EXPECT_NEAR(var, 1.0, 1e-4);
    }
}

TEST(BatchNormTrain, RunningStatsFoldWithMomentum) {
    std::vector<Tensor> xs{Tensor::full({2, 2, 1}, 3.0f)};
    BatchNormParams p;
    p.gamma = Tensor::full({1}, 1.0f);
    p.beta = Tensor({1});
    p.running_mean = Tensor({1});
    p.running_var = Tensor::full({1}, 1.0f);
    batchnorm_train_fwd(xs, p, 0.1f, nullptr);
    EXPECT_NEAR(p.running_mean[0], 0.3f, 1e-6f);  // 0.9*0 + 0.1*3
    EXPECT_NEAR(p.running_var[0], 0.9f, 1e-6f);   // 0.9*1 + 0.1*0
}

TEST(BatchNormTrainBwd, MatchesFiniteDifferences) {
    XorShift64Star rng(50);
    std::vector<Tensor> xs;
    for (int i = 0; i < 2; ++i) xs.push_back(oracles::random_tensor({3, 3, 2}, rng));
    BatchNormParams p;
    p.gamma = oracles::random_tensor({2}, rng, 0.5f, 1.5f);
    p.beta = oracles::random_tensor({2}, rng);
    p.running_mean = Tensor({2});
    p.running_var = Tensor::full({2}, 1.0f);
    std::vector<Tensor> rs;
    for (int i = 0; i < 2; ++i) rs.push_back(oracles::random_tensor({3, 3, 2}, rng));

    auto batch_loss = [&](const std::vector<Tensor>& batch, const Tensor& gamma, const Tensor& beta) {
        BatchNormParams q = p;
        q.gamma = gamma;
        q.beta = beta;
        const std::vector<Tensor> ys = batchnorm_train_fwd(batch, q, 0.1f, nullptr);
        double acc = 0;
        for (size_t i = 0; i < ys.size(); ++i) acc += probe_loss(ys[i], rs[i]);
        return acc;
    };

    BnTrainCache cache;
    BatchNormParams run = p;
    batchnorm_train_fwd(xs, run, 0.1f, &cache);
    const BnGrads g = batchnorm_train_bwd(xs, p, cache, rs);

    for (size_t b = 0; b < xs.size(); ++b) {
        expect_grad_matches_fd(
            [&](const Tensor& x) {
                std::vector<Tensor> batch = xs;
                batch[b] = x;
                return batch_loss(batch, p.gamma, p.beta);
            },
            xs[b], g.inputs[b]);
    }
    expect_grad_matches_fd([&](const Tensor& gm) { return batch_loss(xs, gm, p.beta); }, p.gamma, g.gamma);
    expect_grad_matches_fd([&](const Tensor& bt) { return batch_loss(xs, p.gamma, bt); }, p.beta, g.beta);
}

TEST(AddBwd, SplitsUpstreamGradientToBothBranches) {
    // the residual add passes the upstream gradient through unchanged on
    // both operands: loss = sum r*(a+b) has d/da = d/db = r
    XorShift64Star rng(51);
    const Tensor a = oracles::random_tensor({3, 3, 2}, rng);
    const Tensor b = oracles::random_tensor({3, 3, 2}, rng);
    const Tensor r = oracles::random_tensor({3, 3, 2}, rng);
    expect_grad_matches_fd([&](const Tensor& x) { return probe_loss(elementwise_add(x, b), r); }, a, r);
    expect_grad_matches_fd([&](const Tensor& x) { return probe_loss(elementwise_add(a, x), r); }, b, r);
}
