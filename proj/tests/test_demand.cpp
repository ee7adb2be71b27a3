#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "detourlab/demand.hpp"

using namespace detourlab;

namespace {

InjectionProfile make_profile(double q0, double q1, double a, double b, double horizon = 600.0) {
    InjectionProfile p;
    p.q0 = q0;
    p.q1 = q1;
    p.alpha = a;
    p.beta_p = b;
    p.t0 = 0.0;
    p.horizon = horizon;
    return p;
}

// Composite Simpson quadrature over the profile window.
double simpson_mean_rate(const InjectionProfile& p, int panels = 20000) {
    const double h = p.horizon / (2 * panels);
    double sum = injection_rate(p, p.t0) + injection_rate(p, p.t0 + p.horizon);
    for (int i = 1; i < 2 * panels; ++i)
        sum += injection_rate(p, p.t0 + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    return sum * h / 3.0 / p.horizon;
}

}  // namespace

TEST_CASE("rate evaluation against closed forms") {
    const InjectionProfile p = make_profile(1000.0, 3000.0, 2.0, 2.0);
    // Kernel vanishes at the window start for alpha > 1.
    CHECK(injection_rate(p, 0.0) == doctest::Approx(1000.0));
    // B(2,2) = 1/6, kernel(0.5) = 0.25 * 6 = 1.5.
    CHECK(injection_rate(p, 300.0) == doctest::Approx(5500.0));
    CHECK_THROWS_AS(injection_rate(p, -1.0), std::domain_error);
    CHECK_THROWS_AS(injection_rate(p, 601.0), std::domain_error);
}

TEST_CASE("mean rate over the window equals q0 + q1") {
    for (const auto& p : {make_profile(1000.0, 3000.0, 2.0, 2.0),
                          make_profile(2500.0, 4500.0, 2.2, 3.0, 21600.0)}) {
        const double mean = simpson_mean_rate(p);
        CHECK(std::abs(mean - (p.q0 + p.q1)) <= 1e-6 * (p.q0 + p.q1));
    }
}

TEST_CASE("beta kernel has unit mass") {
    const InjectionProfile p = make_profile(0.0, 1.0, 2.2, 3.0, 1.0);
    // With q0 = 0, q1 = 1 the mean rate over a unit window is the kernel mass.
    CHECK(std::abs(simpson_mean_rate(p) - 1.0) <= 1e-6);
}

TEST_CASE("profile peak sits at the beta mode") {
    const InjectionProfile p = make_profile(2500.0, 4500.0, 2.2, 3.0, 21600.0);
    const double expected_tau = (p.alpha - 1.0) / (p.alpha + p.beta_p - 2.0);
    double best_t = 0.0, best_r = -1.0;
    const int n = 4000;
    for (int i = 0; i <= n; ++i) {
        const double t = p.horizon * i / n;
        const double r = injection_rate(p, t);
        if (r > best_r) {
            best_r = r;
            best_t = t;
        }
    }
    CHECK(std::abs(best_t / p.horizon - expected_tau) <= 1.0 / n + 1e-12);
}

TEST_CASE("rate never falls below the bias for shapes >= 1") {
    const InjectionProfile p = make_profile(800.0, 2000.0, 1.5, 4.0);
    for (int i = 0; i <= 500; ++i)
        CHECK(injection_rate(p, p.horizon * i / 500.0) >= p.q0 - 1e-12);
}

TEST_CASE("endpoint handling for shapes at and below one") {
    InjectionProfile p = make_profile(100.0, 900.0, 1.0, 2.0);
    CHECK(injection_rate(p, 0.0) == doctest::Approx(100.0 + 900.0 * 2.0));  // B(1,2) = 1/2
    p.alpha = 0.8;
    CHECK_THROWS_AS(injection_rate(p, 0.0), std::domain_error);
    CHECK(injection_rate(p, 300.0) > 0.0);  // interior still fine
}

TEST_CASE("jitter behaviour") {
    const InjectionProfile base = make_profile(2500.0, 4500.0, 2.2, 3.0, 21600.0);

    SUBCASE("zero amplitude leaves the profile unchanged") {
        ProfileJitter j;
        j.q0_amp = j.q1_amp = j.alpha_amp = j.beta_amp = 0.0;
        j.seed = 7;
        const InjectionProfile r = randomize(base, j);
        CHECK(r.q0 == base.q0);
        CHECK(r.q1 == base.q1);
        CHECK(r.alpha == base.alpha);
        CHECK(r.beta_p == base.beta_p);
    }

    SUBCASE("same seed reproduces the same draw") {
        ProfileJitter j;
        j.seed = 99;
        const InjectionProfile a = randomize(base, j);
        const InjectionProfile b = randomize(base, j);
        CHECK(a.q0 == b.q0);
        CHECK(a.q1 == b.q1);
        CHECK(a.alpha == b.alpha);
        CHECK(a.beta_p == b.beta_p);
    }

    SUBCASE("amplitude bounds hold over many draws") {
        ProfileJitter j;
        j.q0_amp = j.q1_amp = j.alpha_amp = j.beta_amp = 0.1;
        for (std::uint64_t s = 0; s < 1000; ++s) {
            j.seed = s;
            const InjectionProfile r = randomize(base, j);
            CHECK(std::abs(r.q0 / base.q0 - 1.0) <= 0.1 + 1e-12);
            CHECK(std::abs(r.q1 / base.q1 - 1.0) <= 0.1 + 1e-12);
            CHECK(std::abs(r.alpha / base.alpha - 1.0) <= 0.1 + 1e-12);
            CHECK(std::abs(r.beta_p / base.beta_p - 1.0) <= 0.1 + 1e-12);
        }
    }

    SUBCASE("amplitude outside [0, 0.5] is rejected") {
        ProfileJitter j;
        j.q0_amp = 0.6;
        CHECK_THROWS_AS(randomize(base, j), ConfigError);
    }
}

TEST_CASE("generate-then-fit recovers the profile") {
    const InjectionProfile truth = make_profile(1000.0, 3000.0, 2.0, 2.0, 21600.0);
    std::vector<std::pair<double, double>> samples;
    for (int i = 0; i < 36; ++i) {
        const double t = (i + 0.5) * truth.horizon / 36.0;
        samples.emplace_back(t, injection_rate(truth, t));
    }
    const InjectionProfile fit = fit_profile(samples, 0.0, truth.horizon);
    CHECK(std::abs(fit.q0 / truth.q0 - 1.0) <= 0.05);
    CHECK(std::abs(fit.q1 / truth.q1 - 1.0) <= 0.05);
    CHECK(std::abs(fit.alpha / truth.alpha - 1.0) <= 0.05);
    CHECK(std::abs(fit.beta_p / truth.beta_p - 1.0) <= 0.05);

    // The fit is at least as good on the samples as the generating parameters.
    auto residual = [&](const InjectionProfile& p) {
        double r = 0.0;
        for (const auto& [t, y] : samples) {
            const double e = y - injection_rate(p, t);
            r += e * e;
        }
        return r;
    };
    CHECK(residual(fit) <= residual(truth) + 1e-6);
}

TEST_CASE("flat data fits to a pure bias") {
    std::vector<std::pair<double, double>> samples;
    for (int i = 0; i < 24; ++i) samples.emplace_back(i * 900.0 + 450.0, 800.0);
    const InjectionProfile fit = fit_profile(samples, 0.0, 21600.0);
    CHECK(fit.q0 == doctest::Approx(800.0).epsilon(0.01));
    CHECK(fit.q1 <= 1e-6 * 800.0);
}

TEST_CASE("fit requires enough samples") {
    std::vector<std::pair<double, double>> samples{{0.0, 1.0}, {1.0, 2.0}};
    CHECK_THROWS_AS(fit_profile(samples, 0.0, 10.0), ContractViolation);
}
