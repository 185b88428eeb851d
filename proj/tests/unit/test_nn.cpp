#include "gradcheck.hpp"

#include "gsw/nn.hpp"

#include <gtest/gtest.h>

using namespace gsw;
using namespace gsw::nn;
using gsw::testing::directional_check;
using gsw::testing::to_vector;
using gsw::testing::kFdTolerance;
using gsw::testing::kFdTrials;

namespace {

Tensor random_tensor(int c, int h, int w, std::mt19937_64& rng) {
    Tensor t(c, h, w);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double& v : t.data) v = u(rng);
    return t;
}

void randomize(Parameter& p, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (double& v : p.value) v = u(rng);
}

// Direct-loop convolution: zero padding k/2.
Tensor naive_conv(const Tensor& x, const Parameter& w, const Parameter& b, int out, int k, int stride) {
    const int pad = k / 2;
    const int ho = (x.height + 2 * pad - k) / stride + 1, wo = (x.width + 2 * pad - k) / stride + 1;
    Tensor y(out, ho, wo);
    for (int o = 0; o < out; ++o)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                double s = b.value[o];
                for (int c = 0; c < x.channels; ++c)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                            if (iy < 0 || ix < 0 || iy >= x.height || ix >= x.width) continue;
                            s += w.value[((o * x.channels + c) * k + ky) * k + kx] * x.at(c, iy, ix);
                        }
                y.at(o, oy, ox) = s;
            }
    return y;
}

double weighted_sum(const Tensor& t, const Tensor& g) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.data.size(); ++i) s += t.data[i] * g.data[i];
    return s;
}

}  // namespace

TEST(Conv2d, MatchesDirectLoopOracle) {
    std::mt19937_64 rng(41);
    for (int stride : {1, 2})
        for (int k : {1, 3}) {
            Conv2d conv("c", 3, 5, k, stride);
            randomize(conv.weight(), rng);
            randomize(conv.bias(), rng);
            const Tensor x = random_tensor(3, 9, 7, rng);
            RowMatrix cols;
            const Tensor y = conv.forward(x, cols);
            const Tensor e = naive_conv(x, conv.weight(), conv.bias(), 5, k, stride);
            ASSERT_TRUE(y.same_shape(e));
            for (std::size_t i = 0; i < y.data.size(); ++i) EXPECT_NEAR(y.data[i], e.data[i], 1e-12);
        }
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(42);
    for (int t = 0; t < kFdTrials; ++t) {
        const int stride = t % 2 ? 2 : 1;
        Conv2d conv("c", 2, 3, 3, stride);
        randomize(conv.weight(), rng);
        randomize(conv.bias(), rng);
        const Tensor x = random_tensor(2, 6, 5, rng);
        RowMatrix cols;
        const Tensor y = conv.forward(x, cols);
        const Tensor g = random_tensor(y.channels, y.height, y.width, rng);
        conv.weight().zero_grad();
        conv.bias().zero_grad();
        const Tensor dx = conv.backward(x, cols, g);

        std::vector<double> v = to_vector(x.data), grad = to_vector(dx.data);
        v.insert(v.end(), conv.weight().value.begin(), conv.weight().value.end());
        grad.insert(grad.end(), conv.weight().grad.begin(), conv.weight().grad.end());
        v.insert(v.end(), conv.bias().value.begin(), conv.bias().value.end());
        grad.insert(grad.end(), conv.bias().grad.begin(), conv.bias().grad.end());
        auto f = [&](const std::vector<double>& p) {
            Conv2d c2 = conv;
            Tensor xi = x;
            std::copy(p.begin(), p.begin() + x.data.size(), xi.data.begin());
            auto it = p.begin() + x.data.size();
            std::copy(it, it + c2.weight().size(), c2.weight().value.begin());
            it += c2.weight().size();
            std::copy(it, it + c2.bias().size(), c2.bias().value.begin());
            RowMatrix cc;
            return weighted_sum(c2.forward(xi, cc), g);
        };
        const auto r = directional_check(f, v, grad, rng);
        EXPECT_LE(r.error, kFdTolerance);
    }
}

TEST(Linear, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < kFdTrials; ++t) {
        Linear lin("l", 4, 3);
        randomize(lin.weight(), rng);
        randomize(lin.bias(), rng);
        RowMatrix x(5, 4), g(5, 3);
        for (int i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
        for (int i = 0; i < g.size(); ++i) g.data()[i] = u(rng);
        lin.weight().zero_grad();
        lin.bias().zero_grad();
        const RowMatrix dx = lin.backward(x, g);
        std::vector<double> v(x.data(), x.data() + x.size()), grad(dx.data(), dx.data() + dx.size());
        v.insert(v.end(), lin.weight().value.begin(), lin.weight().value.end());
        grad.insert(grad.end(), lin.weight().grad.begin(), lin.weight().grad.end());
        v.insert(v.end(), lin.bias().value.begin(), lin.bias().value.end());
        grad.insert(grad.end(), lin.bias().grad.begin(), lin.bias().grad.end());
        auto f = [&](const std::vector<double>& p) {
            Linear l2 = lin;
            RowMatrix xi(5, 4);
            std::copy(p.begin(), p.begin() + 20, xi.data());
            std::copy(p.begin() + 20, p.begin() + 32, l2.weight().value.begin());
            std::copy(p.begin() + 32, p.end(), l2.bias().value.begin());
            return (l2.forward(xi).array() * g.array()).sum();
        };
        EXPECT_LE(directional_check(f, v, grad, rng).error, kFdTolerance);
    }
}

TEST(Mlp, ZeroParametersGiveZeroOutput) {
    Mlp mlp("m", {5, 7, 3});
    RowMatrix x = RowMatrix::Ones(2, 5);
    EXPECT_TRUE(mlp.forward(x).isZero(0.0));
}

TEST(Mlp, GradientMatchesFiniteDifferencesAwayFromKinks) {
    std::mt19937_64 rng(44);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    int checked = 0;
    for (int t = 0; checked < kFdTrials && t < 10 * kFdTrials; ++t) {
        Mlp mlp("m", {6, 8, 5, 2});
        mlp.init_xavier(rng);
        for (auto* p : mlp.parameters())
            for (double& b : p->value) b += 0.1 * u(rng);
        RowMatrix x(3, 6), g(3, 2);
        for (int i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
        for (int i = 0; i < g.size(); ++i) g.data()[i] = u(rng);
        Mlp::Tape tape;
        mlp.forward(x, &tape);
        for (auto* p : mlp.parameters()) p->zero_grad();
        const RowMatrix dx = mlp.backward(tape, g);
        // Skip trials where any pre-activation sits within 1e-3 of the ReLU kink.
        bool near_kink = false;
        {
            RowMatrix h = x;
            auto params = mlp.parameters();
            for (std::size_t l = 0; l + 2 < params.size(); l += 2) {
                Eigen::Map<const RowMatrix> W(params[l]->value.data(), params[l]->shape[0], params[l]->shape[1]);
                Eigen::Map<const Eigen::RowVectorXd> b(params[l + 1]->value.data(), params[l + 1]->shape[0]);
                RowMatrix z = (h * W.transpose()).rowwise() + b;
                if ((z.array().abs() < 1e-3).any()) near_kink = true;
                h = z.cwiseMax(0.0);
            }
        }
        if (near_kink) continue;
        ++checked;
        std::vector<double> v(x.data(), x.data() + x.size()), grad(dx.data(), dx.data() + dx.size());
        for (auto* p : mlp.parameters()) {
            v.insert(v.end(), p->value.begin(), p->value.end());
            grad.insert(grad.end(), p->grad.begin(), p->grad.end());
        }
        auto f = [&](const std::vector<double>& pv) {
            Mlp m2 = mlp;
            RowMatrix xi(3, 6);
            std::copy(pv.begin(), pv.begin() + 18, xi.data());
            auto it = pv.begin() + 18;
            for (auto* p : m2.parameters()) {
                std::copy(it, it + p->size(), p->value.begin());
                it += p->size();
            }
            return (m2.forward(xi).array() * g.array()).sum();
        };
        EXPECT_LE(directional_check(f, v, grad, rng).error, kFdTolerance);
    }
    EXPECT_EQ(checked, kFdTrials);
}

TEST(TensorOps, UpsampleBackwardIsAdjoint) {
    std::mt19937_64 rng(45);
    for (int t = 0; t < 20; ++t) {
        const Tensor x = random_tensor(3, 4, 5, rng);
        const Tensor g = random_tensor(3, 8, 10, rng);
        EXPECT_NEAR(weighted_sum(upsample2x(x), g), weighted_sum(x, upsample2x_backward(g)), 1e-12);
    }
}

TEST(TensorOps, ConcatSplitRoundTrip) {
    std::mt19937_64 rng(46);
    const Tensor a = random_tensor(2, 3, 4, rng), b = random_tensor(5, 3, 4, rng);
    const Tensor c = concat_channels(a, b);
    EXPECT_EQ(c.channels, 7);
    Tensor a2, b2;
    split_channels(c, 2, a2, b2);
    EXPECT_EQ(a2.data, a.data);
    EXPECT_EQ(b2.data, b.data);
}

TEST(TensorOps, ReluBackwardMasksInactive) {
    Tensor x(1, 1, 4);
    x.data = {-1.0, 0.5, 0.0, 2.0};
    const Tensor y = relu(x);
    EXPECT_EQ(y.data, (AlignedBuffer{0.0, 0.5, 0.0, 2.0}));
    Tensor d(1, 1, 4, 1.0);
    EXPECT_EQ(relu_backward(y, d).data, (AlignedBuffer{0.0, 1.0, 0.0, 1.0}));
}
