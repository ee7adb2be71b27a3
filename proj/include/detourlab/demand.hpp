// Injected-demand model: a beta-distribution kernel with a bias term,
// Q(t) = q0 + q1 * pdf_beta(tau; alpha, beta) with tau normalized into the
// profile window. Covers evaluation, seeded jitter for episode variation,
// and least-squares recovery of parameters from (t, rate) samples.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "detourlab/common.hpp"

namespace detourlab {

struct InjectionProfile {
    double q0 = 2500.0;      // bias, veh/h
    double q1 = 2900.0;      // kernel scale, veh/h
    double alpha = 2.5;      // beta shape
    double beta_p = 5.5;     // beta shape
    double t0 = 0.0;         // window start, s
    double horizon = 21600.0;  // window length, s

    void validate() const {
        if (q0 < 0.0 || q1 < 0.0) throw ConfigError("injection profile: q0, q1 must be >= 0");
        if (!(alpha > 0.0) || !(beta_p > 0.0))
            throw ConfigError("injection profile: alpha, beta must be > 0");
        if (!(horizon > 0.0)) throw ConfigError("injection profile: horizon must be > 0");
    }
};

namespace detail {

inline double log_beta(double a, double b) {
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// Beta pdf in tau with the endpoint limits spelled out for shapes >= 1.
inline double beta_kernel(double tau, double a, double b) {
    if (tau < 0.0 || tau > 1.0) throw std::domain_error("beta kernel: tau outside [0,1]");
    if (tau == 0.0) {
        if (a > 1.0) return 0.0;
        if (a == 1.0) return std::exp(-log_beta(a, b));
        throw std::domain_error("beta kernel diverges at tau=0 for alpha < 1");
    }
    if (tau == 1.0) {
        if (b > 1.0) return 0.0;
        if (b == 1.0) return std::exp(-log_beta(a, b));
        throw std::domain_error("beta kernel diverges at tau=1 for beta < 1");
    }
    return std::exp((a - 1.0) * std::log(tau) + (b - 1.0) * std::log1p(-tau) - log_beta(a, b));
}

}  // namespace detail

// Demand rate at absolute time t (seconds), veh/h.
inline double injection_rate(const InjectionProfile& p, double t) {
    p.validate();
    if (t < p.t0 || t > p.t0 + p.horizon)
        throw std::domain_error("injection_rate: t outside the profile window");
    const double tau = (t - p.t0) / p.horizon;
    return p.q0 + p.q1 * detail::beta_kernel(tau, p.alpha, p.beta_p);
}

// Relative jitter amplitudes for episode-to-episode profile variation.
struct ProfileJitter {
    double q0_amp = 0.03;
    double q1_amp = 0.03;
    double alpha_amp = 0.03;
    double beta_amp = 0.03;
    std::uint64_t seed = 0;

    void validate() const {
        for (double a : {q0_amp, q1_amp, alpha_amp, beta_amp})
            if (a < 0.0 || a > 0.5) throw ConfigError("jitter amplitude outside [0, 0.5]");
    }
};

// Multiply each parameter by (1 + u), u uniform within the per-parameter
// amplitude. Retries the draw if the result is out of range.
inline InjectionProfile randomize(const InjectionProfile& p, const ProfileJitter& jitter) {
    p.validate();
    jitter.validate();
    Rng rng(jitter.seed);
    for (int attempt = 0; attempt < 64; ++attempt) {
        InjectionProfile out = p;
        out.q0 = p.q0 * (1.0 + rng.uniform(-jitter.q0_amp, jitter.q0_amp));
        out.q1 = p.q1 * (1.0 + rng.uniform(-jitter.q1_amp, jitter.q1_amp));
        out.alpha = p.alpha * (1.0 + rng.uniform(-jitter.alpha_amp, jitter.alpha_amp));
        out.beta_p = p.beta_p * (1.0 + rng.uniform(-jitter.beta_amp, jitter.beta_amp));
        if (out.q0 >= 0.0 && out.q1 >= 0.0 && out.alpha > 0.0 && out.beta_p > 0.0) return out;
    }
    throw ConfigError("randomize: could not draw a valid profile");
}

// Least-squares profile recovery from (t, rate) samples: a coarse grid over
// the beta shapes with a closed-form linear solve for (q0, q1) at each grid
// point, then local refinement around the best cell.
inline InjectionProfile fit_profile(const std::vector<std::pair<double, double>>& samples,
                                    double t0, double horizon) {
    if (samples.size() < 8)
        throw ContractViolation("fit_profile: need at least 8 samples");
    if (!(horizon > 0.0)) throw ConfigError("fit_profile: horizon must be > 0");

    // Residual of the best (q0, q1) for fixed shapes; returns the solution too.
    auto solve_linear = [&](double a, double b, double& q0, double& q1) {
        // Minimize sum (y - q0 - q1 g)^2 over q0, q1 with g the unit kernel.
        double sg = 0, sgg = 0, sy = 0, sgy = 0;
        const double n = static_cast<double>(samples.size());
        for (const auto& [t, y] : samples) {
            double tau = std::clamp((t - t0) / horizon, 0.0, 1.0);
            double g = detail::beta_kernel(tau, a, b);
            sg += g;
            sgg += g * g;
            sy += y;
            sgy += g * y;
        }
        const double det = n * sgg - sg * sg;
        if (std::abs(det) < 1e-12 * std::max(1.0, n * sgg)) {
            // Degenerate (near-constant kernel or data): flat fit.
            q0 = sy / n;
            q1 = 0.0;
        } else {
            q1 = (n * sgy - sg * sy) / det;
            q0 = (sy - q1 * sg) / n;
            if (q1 < 0.0) {  // demand surges are non-negative
                q1 = 0.0;
                q0 = sy / n;
            }
            if (q0 < 0.0) {
                q0 = 0.0;
                q1 = sgg > 0.0 ? std::max(0.0, sgy / sgg) : 0.0;
            }
        }
        double res = 0.0;
        for (const auto& [t, y] : samples) {
            double tau = std::clamp((t - t0) / horizon, 0.0, 1.0);
            double e = y - q0 - q1 * detail::beta_kernel(tau, a, b);
            res += e * e;
        }
        return res;
    };

    double best_a = 2.0, best_b = 2.0, best_q0 = 0.0, best_q1 = 0.0;
    double best_res = std::numeric_limits<double>::infinity();
    auto consider = [&](double a, double b) {
        double q0, q1;
        double res = solve_linear(a, b, q0, q1);
        if (res < best_res) {
            best_res = res;
            best_a = a;
            best_b = b;
            best_q0 = q0;
            best_q1 = q1;
        }
    };

    // Coarse logarithmic grid over the shapes.
    std::vector<double> grid;
    for (double v = 1.05; v <= 8.0; v *= 1.18) grid.push_back(v);
    for (double a : grid)
        for (double b : grid) consider(a, b);

    // Local refinement: shrinking coordinate search around the best cell.
    double step = 0.2;
    for (int round = 0; round < 400; ++round) {
        const double a0 = best_a, b0 = best_b;
        for (double da : {-step, 0.0, step})
            for (double db : {-step, 0.0, step}) {
                const double a = a0 * (1.0 + da), b = b0 * (1.0 + db);
                if (a > 0.2 && b > 0.2) consider(a, b);
            }
        if (best_a == a0 && best_b == b0) step *= 0.5;
        if (step < 1e-12) break;
    }

    InjectionProfile out;
    out.q0 = best_q0;
    out.q1 = best_q1;
    out.alpha = best_a;
    out.beta_p = best_b;
    out.t0 = t0;
    out.horizon = horizon;
    return out;
}

}  // namespace detourlab
