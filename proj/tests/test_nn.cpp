#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support/oracles.hpp"
#include "tse/common.hpp"
#include "tse/nn.hpp"

using namespace tse;

namespace {

Tensor3 make_series(const std::vector<double>& vals) {
    Tensor3 t(1, 1, vals.size());
    std::copy(vals.begin(), vals.end(), t.data.begin());
    return t;
}

Tensor3 random_tensor(std::size_t b, std::size_t c, std::size_t t, Rng& rng) {
    Tensor3 out(b, c, t);
    for (double& v : out.data) v = rng.uniform(-1.0, 1.0);
    return out;
}

}  // namespace

TEST_CASE("causal conv matches the direct-summation oracle on the spec examples") {
    const Tensor3 x = make_series({1, 2, 3, 4});
    const std::vector<double> w = {1, 1, 1};
    const std::vector<double> bias = {0};

    Tensor3 out;
    nn::causal_conv1d_forward(x, w, bias, {1, 1, 3, 1}, out);
    CHECK(out.time == 4);
    const std::vector<double> expect1 = {1, 3, 6, 9};
    for (std::size_t t = 0; t < 4; ++t) CHECK(out.at(0, 0, t) == doctest::Approx(expect1[t]));

    nn::causal_conv1d_forward(x, w, bias, {1, 1, 3, 2}, out);
    const std::vector<double> expect2 = {1, 2, 4, 6};
    for (std::size_t t = 0; t < 4; ++t) CHECK(out.at(0, 0, t) == doctest::Approx(expect2[t]));

    // Same cases against the independent oracle.
    for (std::size_t dil : {1u, 2u, 3u}) {
        Tensor3 ref = oracles::conv_reference(x, w, bias, 1, 3, dil);
        Tensor3 got;
        nn::causal_conv1d_forward(x, w, bias, {1, 1, 3, dil}, got);
        for (std::size_t t = 0; t < 4; ++t) CHECK(got.at(0, 0, t) == ref.at(0, 0, t));
    }
}

TEST_CASE("conv with a last-tap-only kernel is the identity") {
    Rng rng(7);
    const Tensor3 x = random_tensor(2, 1, 9, rng);
    const std::vector<double> w = {0, 0, 1};
    const std::vector<double> zero_bias = {0.0};
    for (std::size_t dil : {1u, 2u, 5u}) {
        Tensor3 out;
        nn::causal_conv1d_forward(x, w, zero_bias, {1, 1, 3, dil}, out);
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t t = 0; t < 9; ++t) CHECK(out.at(b, 0, t) == x.at(b, 0, t));
    }
}

TEST_CASE("conv agrees with the oracle on random multichannel problems") {
    Rng rng(21);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t in_ch = 1 + rng.index(3), out_ch = 1 + rng.index(3);
        const std::size_t kernel = 1 + rng.index(4), dil = 1 + rng.index(4);
        const std::size_t T = 1 + rng.index(12);
        const Tensor3 x = random_tensor(1 + rng.index(2), in_ch, T, rng);
        std::vector<double> w(out_ch * in_ch * kernel), bias(out_ch);
        for (double& v : w) v = rng.uniform(-1.0, 1.0);
        for (double& v : bias) v = rng.uniform(-1.0, 1.0);
        ConvSpec spec{in_ch, out_ch, kernel, dil};
        Tensor3 got;
        nn::causal_conv1d_forward(x, w, bias, spec, got);
        Tensor3 ref = oracles::conv_reference(x, w, bias, out_ch, kernel, dil);
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv rejects bad inputs") {
    const Tensor3 x = make_series({1, 2});
    const std::vector<double> w2 = {1, 1};
    const std::vector<double> w1 = {1.0};
    const std::vector<double> zero_bias = {0.0};
    Tensor3 out;
    CHECK_THROWS_AS(nn::causal_conv1d_forward(x, w2, zero_bias, {2, 1, 1, 1}, out),
                    std::invalid_argument);  // channel mismatch
    Tensor3 empty(1, 1, 0);
    CHECK_THROWS_AS(nn::causal_conv1d_forward(empty, w1, zero_bias, {1, 1, 1, 1}, out),
                    std::invalid_argument);
}

TEST_CASE("causality: perturbing the future never changes the past") {
    Rng rng(99);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t T = 8 + rng.index(8);
        Tensor3 x = random_tensor(1, 2, T, rng);
        std::vector<double> w(3 * 2 * 3), bias(3);
        for (double& v : w) v = rng.uniform(-1.0, 1.0);
        ConvSpec spec{2, 3, 3, 1 + rng.index(3)};
        Tensor3 base;
        nn::causal_conv1d_forward(x, w, bias, spec, base);
        const std::size_t cut = rng.index(T);
        Tensor3 mutated = x;
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t t = cut + 1; t < T; ++t)
                mutated.at(0, c, t) += rng.uniform(0.5, 2.0);
        Tensor3 out;
        nn::causal_conv1d_forward(mutated, w, bias, spec, out);
        for (std::size_t o = 0; o < 3; ++o)
            for (std::size_t t = 0; t <= cut; ++t) CHECK(out.at(0, o, t) == base.at(0, o, t));
    }
}

TEST_CASE("weight normalization examples") {
    std::vector<double> w;
    nn::weight_norm_apply(std::vector<double>{3, 4}, std::vector<double>{10}, 1, 2, w);
    CHECK(w[0] == doctest::Approx(6));
    CHECK(w[1] == doctest::Approx(8));

    nn::weight_norm_apply(std::vector<double>{3, 4}, std::vector<double>{5}, 1, 2, w);
    CHECK(w[0] == doctest::Approx(3));  // g = ||v|| restores v
    CHECK(w[1] == doctest::Approx(4));

    nn::weight_norm_apply(std::vector<double>{3, 4}, std::vector<double>{0}, 1, 2, w);
    CHECK(w[0] == 0);
    CHECK(w[1] == 0);

    CHECK_THROWS_AS(nn::weight_norm_apply(std::vector<double>{0, 0}, std::vector<double>{1}, 1, 2, w),
                    std::domain_error);
}

TEST_CASE("leaky relu examples and adjoint at special points") {
    Tensor3 x(1, 1, 3);
    x.data = {5, -100, 0};
    Tensor3 y;
    nn::leaky_relu_forward(x, 0.01, y);
    CHECK(y.data[0] == 5);
    CHECK(y.data[1] == -1);
    CHECK(y.data[2] == 0);

    Tensor3 up(1, 1, 3);
    up.data = {1, 1, 1};
    Tensor3 grad(1, 1, 3);
    nn::leaky_relu_backward(x, 0.01, up, grad);
    CHECK(grad.data[0] == 1);
    CHECK(grad.data[1] == doctest::Approx(0.01));
    CHECK(grad.data[2] == doctest::Approx(0.01));  // slope at exactly zero

    Tensor3 neg(1, 1, 1);
    neg.data = {-2};
    Tensor3 up1(1, 1, 1);
    up1.data = {1};
    Tensor3 g1(1, 1, 1);
    nn::leaky_relu_backward(neg, 0.01, up1, g1);
    CHECK(g1.data[0] == doctest::Approx(0.01));

    CHECK_THROWS_AS(nn::leaky_relu_forward(x, 0.0, y), std::invalid_argument);
    CHECK_THROWS_AS(nn::leaky_relu_forward(x, 1.0, y), std::invalid_argument);
}

TEST_CASE("global max pool examples, tie rule, masking") {
    Tensor3 x(1, 3, 3);
    // channels: [1,5,3], [2,2,2], [-3,-1,-2]
    x.data = {1, 5, 3, 2, 2, 2, -3, -1, -2};
    Matrix out;
    std::vector<std::size_t> argmax;
    const std::size_t valid[1] = {3};
    nn::global_max_pool_forward(x, valid, out, argmax);
    CHECK(out.at(0, 0) == 5);
    CHECK(argmax[0] == 1);
    CHECK(out.at(0, 1) == 2);
    CHECK(argmax[1] == 0);  // all-equal: first index wins
    CHECK(out.at(0, 2) == -1);
    CHECK(argmax[2] == 1);

    const std::size_t shorter[1] = {2};
    nn::global_max_pool_forward(x, shorter, out, argmax);
    CHECK(out.at(0, 0) == 5);  // values past the valid prefix are ignored
    CHECK(out.at(0, 2) == -1);

    const std::size_t zero[1] = {0};
    CHECK_THROWS_AS(nn::global_max_pool_forward(x, zero, out, argmax), std::invalid_argument);

    // Adjoint routes the gradient to the argmax position only.
    nn::global_max_pool_forward(x, valid, out, argmax);
    Matrix up(1, 3);
    up.data = {1.0, 2.0, 3.0};
    Tensor3 grad(1, 3, 3);
    nn::global_max_pool_backward(up, argmax, grad);
    CHECK(grad.at(0, 0, 1) == 1.0);
    CHECK(grad.at(0, 0, 0) == 0.0);
    CHECK(grad.at(0, 1, 0) == 2.0);
    CHECK(grad.at(0, 2, 1) == 3.0);
}

TEST_CASE("linear layer examples") {
    Matrix x(1, 2);
    x.data = {1, 2};

    Matrix y;
    nn::linear_forward(x, std::vector<double>{1, 0, 0, 1}, std::vector<double>{0, 0}, 2, y);
    CHECK(y.at(0, 0) == 1);
    CHECK(y.at(0, 1) == 2);

    nn::linear_forward(x, std::vector<double>{0, 0, 0, 0}, std::vector<double>{1, 2}, 2, y);
    CHECK(y.at(0, 0) == 1);
    CHECK(y.at(0, 1) == 2);

    nn::linear_forward(x, std::vector<double>{1, 1, 0, 3}, std::vector<double>{0, 0}, 2, y);
    CHECK(y.at(0, 0) == 3);  // [[1,1],[0,3]] * [1,2]
    CHECK(y.at(0, 1) == 6);

    CHECK_THROWS_AS(nn::linear_forward(x, std::vector<double>{1, 0, 0}, std::vector<double>{0}, 2, y),
                    std::invalid_argument);
}

namespace {

// Loss = sum(out * coeff) through a conv layer; used for adjoint checks.
struct ConvProbe {
    Tensor3 x;
    ParamTensor w, bias;
    ConvSpec spec;
    Tensor3 coeff;

    ConvProbe(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t dil,
              std::size_t T, Rng& rng)
        : x(random_tensor(1, in_ch, T, rng)),
          w({out_ch, in_ch, kernel}),
          bias({out_ch}),
          spec{in_ch, out_ch, kernel, dil},
          coeff(random_tensor(1, out_ch, T, rng)) {
        for (double& v : w.value) v = rng.uniform(-1.0, 1.0);
        for (double& v : bias.value) v = rng.uniform(-1.0, 1.0);
    }

    double loss() const {
        Tensor3 out;
        nn::causal_conv1d_forward(x, w.value, bias.value, spec, out);
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += out.data[i] * coeff.data[i];
        return s;
    }

    void backward() {
        w.zero_grad();
        bias.zero_grad();
        nn::causal_conv1d_backward(x, w.value, spec, coeff, nullptr, w.grad.data(),
                                   bias.grad.data());
    }
};

}  // namespace

TEST_CASE("conv adjoint matches central differences on a random 5-step input") {
    Rng rng(1234);
    ConvProbe probe(2, 3, 3, 2, 5, rng);
    probe.backward();
    ParamTensor* params[] = {&probe.w, &probe.bias};
    const double err = nn::gradient_check([&] { return probe.loss(); }, params);
    CHECK(err <= 1e-4);
    CHECK(err < 1e-6);  // this small problem should be far below the gate
}

TEST_CASE("conv input adjoint matches central differences") {
    Rng rng(77);
    ConvProbe probe(2, 2, 3, 1, 6, rng);
    Tensor3 grad_x(1, 2, 6);
    nn::causal_conv1d_backward(probe.x, probe.w.value, probe.spec, probe.coeff, &grad_x, nullptr,
                               nullptr);
    const double h = 1e-6;
    for (std::size_t i = 0; i < probe.x.size(); ++i) {
        const double saved = probe.x.data[i];
        probe.x.data[i] = saved + h;
        const double lp = probe.loss();
        probe.x.data[i] = saved - h;
        const double lm = probe.loss();
        probe.x.data[i] = saved;
        const double fd = (lp - lm) / (2 * h);
        CHECK(std::abs(fd - grad_x.data[i]) / std::max(1.0, std::abs(grad_x.data[i])) <= 1e-6);
    }
}

TEST_CASE("weight norm adjoint matches central differences") {
    Rng rng(55);
    const std::size_t rows = 3, row = 4;
    ParamTensor v({rows, row}), g({rows});
    for (double& x : v.value) x = rng.uniform(-1.0, 1.0);
    for (double& x : g.value) x = rng.uniform(0.5, 2.0);
    std::vector<double> coeff(rows * row);
    for (double& x : coeff) x = rng.uniform(-1.0, 1.0);

    auto loss = [&] {
        std::vector<double> w;
        nn::weight_norm_apply(v.value, g.value, rows, row, w);
        double s = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * coeff[i];
        return s;
    };
    nn::weight_norm_backward(v.value, g.value, coeff, rows, row, v.grad.data(), g.grad.data());
    ParamTensor* params[] = {&v, &g};
    CHECK(nn::gradient_check(loss, params) <= 1e-6);
}

TEST_CASE("zero upstream gradient leaves parameter gradients unchanged") {
    Rng rng(3);
    ConvProbe probe(1, 2, 3, 1, 5, rng);
    probe.w.zero_grad();
    probe.bias.zero_grad();
    Tensor3 zero_up(1, 2, 5);
    nn::causal_conv1d_backward(probe.x, probe.w.value, probe.spec, zero_up, nullptr,
                               probe.w.grad.data(), probe.bias.grad.data());
    for (double gr : probe.w.grad) CHECK(gr == 0.0);
    for (double gr : probe.bias.grad) CHECK(gr == 0.0);
}

TEST_CASE("gradient accumulation is additive: twice g equals once 2g") {
    Rng rng(4);
    ConvProbe probe(2, 2, 3, 2, 7, rng);

    probe.w.zero_grad();
    nn::causal_conv1d_backward(probe.x, probe.w.value, probe.spec, probe.coeff, nullptr,
                               probe.w.grad.data(), nullptr);
    nn::causal_conv1d_backward(probe.x, probe.w.value, probe.spec, probe.coeff, nullptr,
                               probe.w.grad.data(), nullptr);
    const std::vector<double> twice = probe.w.grad;

    Tensor3 doubled = probe.coeff;
    for (double& v : doubled.data) v *= 2.0;
    probe.w.zero_grad();
    nn::causal_conv1d_backward(probe.x, probe.w.value, probe.spec, doubled, nullptr,
                               probe.w.grad.data(), nullptr);
    for (std::size_t i = 0; i < twice.size(); ++i)
        CHECK(twice[i] == doctest::Approx(probe.w.grad[i]).epsilon(1e-14));
}

TEST_CASE("linear layer adjoint passes the checker at 1e-6") {
    Rng rng(8);
    Matrix x(3, 4);
    for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
    ParamTensor w({2, 4}), b({2});
    for (double& v : w.value) v = rng.uniform(-1.0, 1.0);
    for (double& v : b.value) v = rng.uniform(-1.0, 1.0);
    Matrix coeff(3, 2);
    for (double& v : coeff.data) v = rng.uniform(-1.0, 1.0);

    auto loss = [&] {
        Matrix y;
        nn::linear_forward(x, w.value, b.value, 2, y);
        double s = 0.0;
        for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * coeff.data[i];
        return s;
    };
    w.zero_grad();
    b.zero_grad();
    nn::linear_backward(x, w.value, 2, coeff, nullptr, w.grad.data(), b.grad.data());
    ParamTensor* params[] = {&w, &b};
    CHECK(nn::gradient_check(loss, params) <= 1e-6);
}

TEST_CASE("the checker itself flags a corrupted adjoint") {
    Rng rng(12);
    ConvProbe probe(1, 1, 3, 1, 5, rng);
    probe.backward();
    for (double& gr : probe.w.grad) gr = -gr;  // deliberate sign flip
    ParamTensor* params[] = {&probe.w};
    CHECK(nn::gradient_check([&] { return probe.loss(); }, params) >= 0.5);
}
