#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "detourlab/neuralnet.hpp"

using namespace detourlab;

namespace {

MlpParams zero_mlp(const std::vector<int>& shape) {
    Rng rng(1);
    MlpParams p = make_mlp(shape, rng);
    for (Layer& L : p.layers) {
        std::fill(L.w.begin(), L.w.end(), 0.0);
        std::fill(L.b.begin(), L.b.end(), 0.0);
    }
    return p;
}

// Flattened parameter access for finite differencing.
double* param_at(MlpParams& p, std::size_t idx) {
    for (Layer& L : p.layers) {
        if (idx < L.w.size()) return &L.w[idx];
        idx -= L.w.size();
        if (idx < L.b.size()) return &L.b[idx];
        idx -= L.b.size();
    }
    return nullptr;
}

double grad_at(const MlpGrads& g, std::size_t idx) {
    for (const Layer& L : g.layers) {
        if (idx < L.w.size()) return L.w[idx];
        idx -= L.w.size();
        if (idx < L.b.size()) return L.b[idx];
        idx -= L.b.size();
    }
    return 0.0;
}

std::size_t param_count(const MlpParams& p) {
    std::size_t n = 0;
    for (const Layer& L : p.layers) n += L.w.size() + L.b.size();
    return n;
}

}  // namespace

TEST_CASE("forward basics") {
    SUBCASE("all-zero parameters give zero output") {
        const MlpParams p = zero_mlp({3, 5, 2});
        const auto y = forward(p, std::vector<double>{0.3, -0.7, 1.2});
        for (double v : y) CHECK(v == 0.0);
    }

    SUBCASE("zero weights pass the output bias through") {
        MlpParams p = zero_mlp({3, 4, 2});
        p.layers.back().b = {1.5, -2.25};
        const auto y = forward(p, std::vector<double>{0.1, 0.2, 0.3});
        CHECK(y[0] == doctest::Approx(1.5));
        CHECK(y[1] == doctest::Approx(-2.25));
    }

    SUBCASE("evaluation is deterministic") {
        Rng rng(7);
        const MlpParams p = make_mlp({6, 8, 8, 3}, rng);
        const std::vector<double> x{0.5, -1.0, 0.25, 2.0, -0.5, 0.0};
        CHECK(forward(p, x) == forward(p, x));
    }

    SUBCASE("shape mismatch is rejected") {
        const MlpParams p = zero_mlp({3, 4, 2});
        CHECK_THROWS_AS(forward(p, std::vector<double>{1.0, 2.0}), ContractViolation);
    }
}

TEST_CASE("backward matches central finite differences on random nets") {
    // Three heads: Q-style multi-output regression, scalar value regression,
    // and a categorical policy with entropy bonus. h = 1e-4, 1e-4 relative.
    const double h = 1e-4, tol = 1e-4;
    int checked = 0;
    for (std::uint64_t draw = 0; draw < 100; ++draw) {
        Rng rng(1000 + draw);
        MlpParams p = make_mlp({4, 6, 6, 3}, rng);
        // Give the output layer full-size weights so its gradients are not tiny.
        for (double& v : p.layers.back().w) v = rng.uniform(-0.5, 0.5);
        std::vector<double> x{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1),
                              rng.uniform(-1, 1)};
        const int head = static_cast<int>(draw % 3);

        auto loss_of = [&](const MlpParams& params) {
            const auto y = forward(params, x);
            if (head == 0) {  // multi-output squared error against fixed targets
                double L = 0.0;
                for (std::size_t i = 0; i < y.size(); ++i)
                    L += 0.5 * (y[i] - 0.3 * static_cast<double>(i + 1)) * (y[i] - 0.3 * static_cast<double>(i + 1));
                return L;
            }
            if (head == 1) return 0.5 * (y[0] - 1.7) * (y[0] - 1.7);  // scalar value head
            // policy head: weighted cross-entropy minus entropy bonus
            const auto ce = softmax_cross_entropy(y, 1, 0.8);
            std::vector<double> dH;
            const double H = entropy_bonus_grad(y, 0.0, dH);
            return ce.loss - 0.01 * H;
        };
        auto dloss_of = [&](const std::vector<double>& y) {
            std::vector<double> d(y.size(), 0.0);
            if (head == 0) {
                for (std::size_t i = 0; i < y.size(); ++i) d[i] = y[i] - 0.3 * static_cast<double>(i + 1);
            } else if (head == 1) {
                d[0] = y[0] - 1.7;
            } else {
                auto ce = softmax_cross_entropy(y, 1, 0.8);
                std::vector<double> dH;
                entropy_bonus_grad(y, 0.01, dH);
                for (std::size_t i = 0; i < d.size(); ++i) d[i] = ce.dlogits[i] + dH[i];
            }
            return d;
        };

        ForwardTrace trace;
        const auto y = forward_traced(p, x, trace);
        MlpGrads grads = MlpGrads::zeros_like(p);
        backward(p, trace, dloss_of(y), grads);

        const std::size_t n = param_count(p);
        for (std::size_t k = 0; k < n; k += 3) {  // spot-check a stride of parameters
            MlpParams pp = p;
            double* v = param_at(pp, k);
            const double orig = *v;
            *v = orig + h;
            const double lp = loss_of(pp);
            *v = orig - h;
            const double lm = loss_of(pp);
            const double fd = (lp - lm) / (2 * h);
            const double an = grad_at(grads, k);
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
            CHECK(std::abs(fd - an) / denom <= tol);
            ++checked;
        }
    }
    CHECK(checked > 3000);
}

TEST_CASE("zero loss gradient gives zero parameter gradients") {
    Rng rng(5);
    MlpParams p = make_mlp({4, 8, 3}, rng);
    ForwardTrace trace;
    forward_traced(p, std::vector<double>{1, 2, 3, 4}, trace);
    MlpGrads g = MlpGrads::zeros_like(p);
    backward(p, trace, std::vector<double>{0, 0, 0}, g);
    CHECK(g.squared_norm() == 0.0);
}

TEST_CASE("single linear layer gradient is the outer product") {
    MlpParams p = zero_mlp({3, 2});
    p.layers[0].w = {0.5, -1.0, 2.0, 0.0, 1.0, -0.5};
    const std::vector<double> x{1.0, -2.0, 0.5};
    ForwardTrace trace;
    forward_traced(p, x, trace);
    MlpGrads g = MlpGrads::zeros_like(p);
    const std::vector<double> dout{0.7, -0.3};
    backward(p, trace, dout, g);
    for (int o = 0; o < 2; ++o)
        for (int i = 0; i < 3; ++i)
            CHECK(g.layers[0].w[static_cast<std::size_t>(o * 3 + i)] ==
                  doctest::Approx(dout[static_cast<std::size_t>(o)] * x[static_cast<std::size_t>(i)]));
}

TEST_CASE("softmax cross entropy") {
    SUBCASE("equal logits over 16 classes give uniform probabilities") {
        const std::vector<double> logits(16, 0.42);
        const auto p = softmax(logits);
        for (double v : p) CHECK(v == doctest::Approx(1.0 / 16));
        double sum = 0.0;
        for (double v : p) sum += v;
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }

    SUBCASE("zero weight gives zero gradient") {
        const std::vector<double> logits{1.0, -2.0, 0.5};
        const auto r = softmax_cross_entropy(logits, 2, 0.0);
        for (double v : r.dlogits) CHECK(v == 0.0);
    }

    SUBCASE("gradient sums to zero across logits") {
        const std::vector<double> logits{3.0, -1.0, 0.25, 2.0};
        const auto r = softmax_cross_entropy(logits, 1, 1.7);
        double sum = 0.0;
        for (double v : r.dlogits) sum += v;
        CHECK(std::abs(sum) <= 1e-12);
    }

    SUBCASE("large logits stay finite") {
        const std::vector<double> logits{800.0, -900.0, 750.0};
        const auto r = softmax_cross_entropy(logits, 0, 1.0);
        CHECK(std::isfinite(r.loss));
        for (double v : r.dlogits) CHECK(std::isfinite(v));
    }
}

TEST_CASE("sgd") {
    SUBCASE("zero learning rate is rejected, params unchanged under tiny rate") {
        Rng rng(3);
        MlpParams p = make_mlp({2, 3, 1}, rng);
        MlpGrads g = MlpGrads::zeros_like(p);
        CHECK_THROWS_AS(sgd_step(p, g, SgdConfig{0.0, 0.0}), ConfigError);
        const MlpParams before = p;
        sgd_step(p, g, SgdConfig{0.5, 0.0});  // zero gradients: no movement
        CHECK(before.layers[0].w == p.layers[0].w);
    }

    SUBCASE("quadratic toy problem converges to its minimum") {
        // Minimize 0.5*(w*x - 3)^2 with x = 1 through the sgd interface.
        MlpParams p = zero_mlp({1, 1});
        for (int it = 0; it < 10000; ++it) {
            ForwardTrace trace;
            const auto y = forward_traced(p, std::vector<double>{1.0}, trace);
            MlpGrads g = MlpGrads::zeros_like(p);
            backward(p, trace, std::vector<double>{y[0] - 3.0}, g);
            sgd_step(p, g, SgdConfig{0.1, 0.0});
            if (std::abs(forward(p, std::vector<double>{1.0})[0] - 3.0) < 1e-7) break;
        }
        CHECK(std::abs(forward(p, std::vector<double>{1.0})[0] - 3.0) <= 1e-6);
    }

    SUBCASE("clipping bounds the applied update") {
        MlpParams p = zero_mlp({1, 1});
        MlpGrads g = MlpGrads::zeros_like(p);
        g.layers[0].w[0] = 100.0;
        g.layers[0].b[0] = 100.0;
        sgd_step(p, g, SgdConfig{0.5, 1.0});
        const double moved = std::sqrt(p.layers[0].w[0] * p.layers[0].w[0] +
                                       p.layers[0].b[0] * p.layers[0].b[0]);
        CHECK(moved <= 0.5 + 1e-12);  // learning_rate * clip_norm
    }
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    Rng rng(11);
    const MlpParams p = make_mlp({44, 16, 16, 16}, rng);
    std::stringstream ss;
    save_mlp(ss, p);
    const MlpParams q = load_mlp(ss);
    REQUIRE(q.layers.size() == p.layers.size());
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        CHECK(std::memcmp(p.layers[l].w.data(), q.layers[l].w.data(),
                          p.layers[l].w.size() * sizeof(double)) == 0);
        CHECK(std::memcmp(p.layers[l].b.data(), q.layers[l].b.data(),
                          p.layers[l].b.size() * sizeof(double)) == 0);
    }
    // Outputs identical bit for bit.
    const std::vector<double> x(44, 0.123456789);
    CHECK(forward(p, x) == forward(q, x));
}

TEST_CASE("corrupt checkpoints are rejected") {
    std::stringstream ss("mlp v7 tanh\nlayers 1\n");
    CHECK_THROWS_AS(load_mlp(ss), ConfigError);
    std::stringstream truncated("mlp v1 tanh\nlayers 1\nlayer 2 2\n1.0 2.0\n");
    CHECK_THROWS_AS(load_mlp(truncated), ConfigError);
}
