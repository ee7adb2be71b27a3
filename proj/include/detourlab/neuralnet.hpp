// Small dense network: affine-tanh stacks with a linear head, exact analytic
// gradients, plain SGD with optional gradient clipping, and a versioned text
// checkpoint that round-trips parameters bit-exactly.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "detourlab/common.hpp"

namespace detourlab {

struct Layer {
    int in = 0, out = 0;
    std::vector<double> w;  // row-major, out x in
    std::vector<double> b;
};

struct MlpParams {
    std::vector<Layer> layers;  // tanh between layers, linear output

    int input_size() const { return layers.front().in; }
    int output_size() const { return layers.back().out; }

    void validate() const {
        if (layers.empty()) throw ContractViolation("mlp: no layers");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const Layer& L = layers[l];
            if (L.w.size() != static_cast<std::size_t>(L.in) * L.out || L.b.size() != static_cast<std::size_t>(L.out))
                throw ContractViolation("mlp: layer shape mismatch");
            if (l > 0 && layers[l - 1].out != L.in)
                throw ContractViolation("mlp: layer shapes do not chain");
            for (double v : L.w)
                if (!std::isfinite(v)) throw ContractViolation("mlp: non-finite weight");
            for (double v : L.b)
                if (!std::isfinite(v)) throw ContractViolation("mlp: non-finite bias");
        }
    }
};

// Scaled-uniform fan-in init; the output layer starts small so value and
// policy heads begin near zero / near-uniform.
inline MlpParams make_mlp(const std::vector<int>& shape, Rng& rng) {
    if (shape.size() < 2) throw ContractViolation("make_mlp: need at least input and output");
    MlpParams p;
    for (std::size_t l = 0; l + 1 < shape.size(); ++l) {
        Layer L;
        L.in = shape[l];
        L.out = shape[l + 1];
        const bool last = l + 2 == shape.size();
        const double limit = std::sqrt(3.0 / L.in) * (last ? 0.01 : 1.0);
        L.w.resize(static_cast<std::size_t>(L.in) * L.out);
        L.b.assign(static_cast<std::size_t>(L.out), 0.0);
        for (double& v : L.w) v = rng.uniform(-limit, limit);
        p.layers.push_back(std::move(L));
    }
    return p;
}

namespace detail {

inline void affine(const Layer& L, std::span<const double> x, std::vector<double>& y) {
    y.assign(static_cast<std::size_t>(L.out), 0.0);
    for (int o = 0; o < L.out; ++o) {
        const double* row = L.w.data() + static_cast<std::size_t>(o) * L.in;
        double acc = L.b[static_cast<std::size_t>(o)];
        for (int i = 0; i < L.in; ++i) acc += row[i] * x[static_cast<std::size_t>(i)];
        y[static_cast<std::size_t>(o)] = acc;
    }
}

}  // namespace detail

inline std::vector<double> forward(const MlpParams& p, std::span<const double> input) {
    if (static_cast<int>(input.size()) != p.input_size())
        throw ContractViolation("forward: input size mismatch");
    std::vector<double> act(input.begin(), input.end());
    std::vector<double> next;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        detail::affine(p.layers[l], act, next);
        if (l + 1 < p.layers.size())
            for (double& v : next) v = std::tanh(v);
        act.swap(next);
    }
    return act;
}

// Per-layer post-activation values, input first; used by backward().
struct ForwardTrace {
    std::vector<std::vector<double>> act;
};

inline std::vector<double> forward_traced(const MlpParams& p, std::span<const double> input,
                                          ForwardTrace& trace) {
    if (static_cast<int>(input.size()) != p.input_size())
        throw ContractViolation("forward: input size mismatch");
    trace.act.clear();
    trace.act.emplace_back(input.begin(), input.end());
    std::vector<double> next;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        detail::affine(p.layers[l], trace.act.back(), next);
        if (l + 1 < p.layers.size())
            for (double& v : next) v = std::tanh(v);
        trace.act.push_back(next);
    }
    return trace.act.back();
}

// Gradient container mirroring MlpParams.
struct MlpGrads {
    std::vector<Layer> layers;

    static MlpGrads zeros_like(const MlpParams& p) {
        MlpGrads g;
        for (const Layer& L : p.layers) {
            Layer z;
            z.in = L.in;
            z.out = L.out;
            z.w.assign(L.w.size(), 0.0);
            z.b.assign(L.b.size(), 0.0);
            g.layers.push_back(std::move(z));
        }
        return g;
    }

    void scale(double s) {
        for (Layer& L : layers) {
            for (double& v : L.w) v *= s;
            for (double& v : L.b) v *= s;
        }
    }

    double squared_norm() const {
        double n = 0.0;
        for (const Layer& L : layers) {
            for (double v : L.w) n += v * v;
            for (double v : L.b) n += v * v;
        }
        return n;
    }
};

// Accumulate exact gradients of the traced forward pass into `grads`, given
// dLoss/dOutput. Returns nothing; call repeatedly to sum over a batch.
inline void backward(const MlpParams& p, const ForwardTrace& trace,
                     std::span<const double> dloss_dout, MlpGrads& grads) {
    if (trace.act.size() != p.layers.size() + 1)
        throw ContractViolation("backward: trace does not match network");
    for (double v : dloss_dout)
        if (!std::isfinite(v)) throw ContractViolation("backward: non-finite loss gradient");

    std::vector<double> delta(dloss_dout.begin(), dloss_dout.end());
    for (int l = static_cast<int>(p.layers.size()) - 1; l >= 0; --l) {
        const Layer& L = p.layers[static_cast<std::size_t>(l)];
        Layer& G = grads.layers[static_cast<std::size_t>(l)];
        const auto& a_in = trace.act[static_cast<std::size_t>(l)];
        for (int o = 0; o < L.out; ++o) {
            const double d = delta[static_cast<std::size_t>(o)];
            G.b[static_cast<std::size_t>(o)] += d;
            double* grow = G.w.data() + static_cast<std::size_t>(o) * L.in;
            for (int i = 0; i < L.in; ++i) grow[i] += d * a_in[static_cast<std::size_t>(i)];
        }
        if (l == 0) break;
        std::vector<double> prev(static_cast<std::size_t>(L.in), 0.0);
        for (int o = 0; o < L.out; ++o) {
            const double d = delta[static_cast<std::size_t>(o)];
            const double* row = L.w.data() + static_cast<std::size_t>(o) * L.in;
            for (int i = 0; i < L.in; ++i) prev[static_cast<std::size_t>(i)] += d * row[i];
        }
        // Hidden activations are tanh; a' = 1 - a^2 on the stored value.
        const auto& a = trace.act[static_cast<std::size_t>(l)];
        for (int i = 0; i < L.in; ++i)
            prev[static_cast<std::size_t>(i)] *= 1.0 - a[static_cast<std::size_t>(i)] * a[static_cast<std::size_t>(i)];
        delta.swap(prev);
    }
}

inline std::vector<double> softmax(std::span<const double> logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

struct CrossEntropyResult {
    double loss = 0.0;
    std::vector<double> dlogits;
};

// Weighted softmax cross-entropy against a one-hot target:
// loss = weight * (-log p[action]); gradient = weight * (softmax - onehot).
inline CrossEntropyResult softmax_cross_entropy(std::span<const double> logits, int action,
                                                double weight) {
    if (action < 0 || action >= static_cast<int>(logits.size()))
        throw ContractViolation("softmax_cross_entropy: action out of range");
    for (double v : logits)
        if (!std::isfinite(v)) throw ContractViolation("softmax_cross_entropy: non-finite logit");
    const double m = *std::max_element(logits.begin(), logits.end());
    double lse = 0.0;
    for (double v : logits) lse += std::exp(v - m);
    lse = m + std::log(lse);

    CrossEntropyResult r;
    r.loss = weight * (lse - logits[static_cast<std::size_t>(action)]);
    r.dlogits.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double p = std::exp(logits[i] - lse);
        r.dlogits[i] = weight * (p - (static_cast<int>(i) == action ? 1.0 : 0.0));
    }
    return r;
}

// Entropy of softmax(logits) and d(-entropy)/dlogits scaled by `coeff`,
// i.e. the gradient contribution of an entropy BONUS of size coeff.
inline double entropy_bonus_grad(std::span<const double> logits, double coeff,
                                 std::vector<double>& dlogits_out) {
    const std::vector<double> p = softmax(logits);
    double H = 0.0;
    for (double v : p)
        if (v > 0.0) H -= v * std::log(v);
    dlogits_out.assign(p.size(), 0.0);
    // d(-H)/dz_i = p_i (log p_i + H)
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) dlogits_out[i] = coeff * p[i] * (std::log(p[i]) + H);
    return H;
}

struct SgdConfig {
    double learning_rate = 0.001;
    double clip_norm = 0.0;  // 0 disables clipping

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("sgd: learning_rate must be > 0");
        if (clip_norm < 0.0) throw ConfigError("sgd: clip_norm must be >= 0");
    }
};

inline void sgd_step(MlpParams& p, MlpGrads& g, const SgdConfig& cfg) {
    cfg.validate();
    if (g.layers.size() != p.layers.size()) throw ContractViolation("sgd: gradient shape mismatch");
    if (cfg.clip_norm > 0.0) {
        const double n = std::sqrt(g.squared_norm());
        if (n > cfg.clip_norm) g.scale(cfg.clip_norm / n);
    }
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        Layer& L = p.layers[l];
        const Layer& G = g.layers[l];
        if (G.w.size() != L.w.size() || G.b.size() != L.b.size())
            throw ContractViolation("sgd: gradient shape mismatch");
        for (std::size_t i = 0; i < L.w.size(); ++i) L.w[i] -= cfg.learning_rate * G.w[i];
        for (std::size_t i = 0; i < L.b.size(); ++i) L.b[i] -= cfg.learning_rate * G.b[i];
    }
    for (const Layer& L : p.layers) {
        for (double v : L.w)
            if (!std::isfinite(v)) throw ContractViolation("sgd: update produced non-finite weight");
        for (double v : L.b)
            if (!std::isfinite(v)) throw ContractViolation("sgd: update produced non-finite bias");
    }
}

// --- checkpoint container -------------------------------------------------
//
// Versioned text format; parameters printed with 17 significant digits so a
// load reproduces the doubles bit for bit.

namespace detail {

inline void write_doubles(std::ostream& os, const std::vector<double>& v) {
    char buf[40];
    for (double x : v) {
        std::snprintf(buf, sizeof buf, "%.17g", x);
        os << buf << '\n';
    }
}

}  // namespace detail

inline void save_mlp(std::ostream& os, const MlpParams& p) {
    p.validate();
    os << "mlp v1 tanh\n";
    os << "layers " << p.layers.size() << '\n';
    for (const Layer& L : p.layers) {
        os << "layer " << L.out << ' ' << L.in << '\n';
        detail::write_doubles(os, L.w);
        detail::write_doubles(os, L.b);
    }
}

inline MlpParams load_mlp(std::istream& is) {
    std::string word, version, act;
    is >> word >> version >> act;
    if (word != "mlp" || version != "v1" || act != "tanh")
        throw ConfigError("checkpoint: unsupported mlp container");
    std::size_t n = 0;
    is >> word >> n;
    if (word != "layers" || n == 0 || n > 64) throw ConfigError("checkpoint: bad layer count");
    MlpParams p;
    for (std::size_t l = 0; l < n; ++l) {
        Layer L;
        is >> word >> L.out >> L.in;
        if (word != "layer" || L.out <= 0 || L.in <= 0)
            throw ConfigError("checkpoint: bad layer header");
        L.w.resize(static_cast<std::size_t>(L.in) * L.out);
        L.b.resize(static_cast<std::size_t>(L.out));
        for (double& v : L.w) is >> v;
        for (double& v : L.b) is >> v;
        if (!is) throw ConfigError("checkpoint: truncated parameter block");
        p.layers.push_back(std::move(L));
    }
    p.validate();
    return p;
}

}  // namespace detourlab
