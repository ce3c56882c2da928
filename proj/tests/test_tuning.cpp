#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "delaypi/tuning.hpp"
#include "test_support.hpp"

#include <cmath>
#include <random>

using namespace delaypi;

namespace {

ScatteringConfig sc_none() { return ScatteringConfig::none(); }

double residual_scale(const PlantParams& plant, double h, const ScatteringConfig& sc,
                      const Gains& g) {
    return 1.0 + std::abs(assemble_characteristic(plant, h, sc, g.kp, g.ki)(Complex(0, 0)));
}

}  // namespace

TEST_CASE("maximal decay of the plain loop") {
    CHECK(sigma_star_no_scatter(1.0, 0.1) == doctest::Approx(6.349).epsilon(8e-4));
    CHECK(sigma_star_no_scatter(0.0, 1.0) == doctest::Approx(2.0 - std::sqrt(2.0)).epsilon(1e-12));
    CHECK(sigma_star_no_scatter(1.0, 1e-8) > 1e7);  // unbounded as the delay vanishes
    const auto br = sigma_star_no_scatter_branches(1.0, 0.1);
    CHECK(br.rejected > br.accepted);
}

TEST_CASE("minimal gains of the plain loop") {
    SUBCASE("reference point") {
        const auto g = minimal_gains_no_scatter(1, 1, 0.1, 3.0);
        CHECK(g.kp == doctest::Approx(3.2596).epsilon(1e-4));
        CHECK(g.ki == doctest::Approx(5.3339).epsilon(1e-4));
        // double-root residuals, the defining property
        auto q = assemble_characteristic({1, 1}, 0.1, sc_none(), g.kp, g.ki);
        CHECK(std::abs(q(Complex(-3, 0))) < 1e-10);
        CHECK(std::abs(derivative(q)(Complex(-3, 0))) < 1e-10);
    }

    SUBCASE("delay-free limit") {
        const auto g = minimal_gains_no_scatter(1, 1, 0.0, 2.0);
        CHECK(g.kp == doctest::Approx(3.0).epsilon(1e-12));
        CHECK(g.ki == doctest::Approx(4.0).epsilon(1e-12));
        // s^2 + 4 s + 4 has its double root at -2
        auto q = assemble_characteristic({1, 1}, 0.0, sc_none(), g.kp, g.ki);
        CHECK(std::abs(q(Complex(-2, 0))) == 0.0);
    }

    SUBCASE("lower edge keeps kp nonnegative") {
        for (double h : {0.0, 0.05, 0.3, 1.0}) {
            const auto g = minimal_gains_no_scatter(1, 1, h, 0.5);
            CHECK(g.kp >= 0.0);
            CHECK(g.kp == doctest::Approx(h * 0.25 / std::exp(0.5 * h)).epsilon(1e-12));
        }
    }

    SUBCASE("range checks") {
        CHECK_THROWS_AS((void)minimal_gains_no_scatter(1, 1, 0.1, 0.3), OutOfRange);
        CHECK_THROWS_AS((void)minimal_gains_no_scatter(1, 1, 0.1, 6.5), OutOfRange);
        CHECK_NOTHROW((void)minimal_gains_no_scatter(1, 1, 0.1, sigma_star_no_scatter(1, 0.1)));
    }
}

TEST_CASE("constant-impedance collapse") {
    SUBCASE("reference bound") {
        const auto r = sigma_star_fixed_d(1, 1, 0.1, 15.0);
        CHECK(r.sigma_star == doctest::Approx(10.9).epsilon(0.05 / 10.9));
        CHECK(r.feasible);
        CHECK(r.diff_op_margin > 0.0);
        // triple root: second derivative vanishes as well
        const double scale = residual_scale({1, 1}, 0.1, ScatteringConfig::fixed_d(15.0), r.gains);
        CHECK(r.p_residual < 1e-8 * scale);
        CHECK(r.dp_residual < 1e-8 * scale);
        CHECK(r.ddp_residual < 1e-6 * scale);
    }

    SUBCASE("large impedance approaches the delay-only limit") {
        const auto r = sigma_star_fixed_d(1, 1, 0.1, 1e6);
        CHECK(std::abs(r.sigma_star - 23.994) < 0.01);
    }

    SUBCASE("collapse function matches its large-impedance asymptote") {
        const double a = 1, b = 1, h = 0.1, d = 1e8;
        for (double sigma : {5.0, 15.0, 23.0}) {
            const double E = std::exp(h * sigma);
            const double asym = h * b * b * b * (2.0 * (1.0 + E) + h * sigma * (1.0 - E));
            CHECK(m_d(sigma, a, b, h, d) / (d * d * d) ==
                  doctest::Approx(asym).epsilon(1e-4));
        }
        // and the asymptote vanishes exactly at the delay-only limit
        const double ss = sigma_sup(h);
        const double Es = std::exp(h * ss);
        CHECK(std::abs(2.0 * (1.0 + Es) + h * ss * (1.0 - Es)) < 1e-9);
    }

    SUBCASE("collapse root solves the second-derivative row") {
        const double a = 1, b = 1, h = 0.1, d = 15.0;
        const auto r = sigma_star_fixed_d(a, b, h, d);
        // independent route: the closed-form gains substituted into the
        // second-derivative condition
        const double E = std::exp(h * r.sigma);
        const double as = a - r.sigma;
        const double bd = b * d;
        const double core = (h * (bd - as) + 1.0) * (h * r.sigma + 2.0) + h * r.sigma;
        const double A31 = 2.0 - E * core;
        const double A32 = h * E * (h * (bd - as) + 2.0);
        const double B3 = -(E * core + 2.0);
        const double res = A31 * r.gains.kp + A32 * r.gains.ki - d * B3;
        const double scale = std::abs(A31 * r.gains.kp) + std::abs(A32 * r.gains.ki) +
                             std::abs(d * B3);
        CHECK(std::abs(res) < 1e-8 * scale);
    }
}

TEST_CASE("constant-impedance minimal gains") {
    const double a = 1, b = 1, h = 0.1, d = 15.0;

    SUBCASE("double root where requested") {
        const auto r = minimal_gains_fixed_d(a, b, h, d, 6.0);
        CHECK(r.p_residual < 1e-9);
        CHECK(r.dp_residual < 1e-9);
        CHECK(r.system_residual < 1e-8 * (1.0 + r.gains.kp + r.gains.ki));
        CHECK(r.diff_op_margin > 0.0);
        CHECK(r.feasible);
        // closed form sits on the oracle transcription
        const auto g = testsup::fixed_d_gains(a, b, h, d, 6.0);
        CHECK(r.gains.kp == doctest::Approx(g.kp).epsilon(1e-12));
        CHECK(r.gains.ki == doctest::Approx(g.ki).epsilon(1e-12));
    }

    SUBCASE("collapse point carries the triple root") {
        const auto star = sigma_star_fixed_d(a, b, h, d);
        const auto r = minimal_gains_fixed_d(a, b, h, d, star.sigma_star);
        const double scale = residual_scale({a, b}, h, ScatteringConfig::fixed_d(d), r.gains);
        CHECK(r.ddp_residual < 1e-6 * scale);
    }

    SUBCASE("difference-operator margin stays positive across the range") {
        const auto star = sigma_star_fixed_d(a, b, h, d);
        for (double f : {0.1, 0.3, 0.5, 0.7, 0.9, 0.999}) {
            const double sigma = a / 2.0 + f * (star.sigma_star - a / 2.0);
            const auto r = minimal_gains_fixed_d(a, b, h, d, sigma);
            CHECK(r.diff_op_margin > 0.0);
        }
    }

    SUBCASE("range checks") {
        CHECK_THROWS_AS((void)minimal_gains_fixed_d(a, b, h, d, 0.2), OutOfRange);
        CHECK_THROWS_AS((void)minimal_gains_fixed_d(a, b, h, d, 11.5), OutOfRange);
    }
}

TEST_CASE("delay-only constants") {
    const auto uc = universal_constants();
    CHECK(uc.eta_sup == doctest::Approx(2.3994).epsilon(1e-3 / 2.3994));
    CHECK(uc.zeta_min == doctest::Approx(0.8336).epsilon(1e-3 / 0.8336));

    SUBCASE("tangency of the collapse function") {
        CHECK(std::abs(m_zeta(uc.eta_sup, uc.zeta_min)) < 1e-9);
        CHECK(std::abs(m_zeta_derivative(uc.eta_sup, uc.zeta_min)) < 1e-6);
        // analytic derivative against central differences
        const double fd = (m_zeta(uc.eta_sup + 1e-6, 1.3) - m_zeta(uc.eta_sup - 1e-6, 1.3)) / 2e-6;
        CHECK(m_zeta_derivative(uc.eta_sup, 1.3) == doctest::Approx(fd).epsilon(1e-7));
    }

    SUBCASE("scaling of the limit") {
        CHECK(sigma_sup(0.1) == doctest::Approx(23.994).epsilon(1e-4));
        CHECK(sigma_sup(1.0) == doctest::Approx(2.3994).epsilon(1e-4));
        CHECK(sigma_sup(0.2) == doctest::Approx(11.997).epsilon(1e-4));
    }
}

TEST_CASE("proportional-impedance decay bound") {
    const auto uc = universal_constants();

    SUBCASE("matched plane") {
        CHECK(sigma_star_zeta(1.0, 0.1) == doctest::Approx(12.78).epsilon(0.05 / 12.78));
    }
    SUBCASE("optimal ratio reaches the limit") {
        CHECK(sigma_star_zeta(uc.zeta_min, 0.1) == doctest::Approx(23.99).epsilon(0.05 / 23.99));
    }
    SUBCASE("below the optimal ratio the difference operator binds") {
        CHECK(sigma_star_zeta(0.5, 0.1) ==
              doctest::Approx(10.0 * std::log(3.0)).epsilon(1e-7));
    }
    SUBCASE("the bound peaks at the optimal ratio") {
        const double peak = sigma_star_zeta(uc.zeta_min, 0.1);
        CHECK(peak == doctest::Approx(sigma_sup(0.1)).epsilon(1e-3));
        double best = 0.0, best_zeta = 0.0;
        for (double zeta = 0.05; zeta <= 3.0; zeta += 0.0125) {
            const double v = sigma_star_zeta(zeta, 0.1);
            CHECK(v <= peak * (1.0 + 1e-6));
            if (v > best) {
                best = v;
                best_zeta = zeta;
            }
        }
        CHECK(std::abs(best_zeta - uc.zeta_min) <= 0.0125 + 1e-12);
    }
}

TEST_CASE("proportional-impedance minimal gains") {
    const auto uc = universal_constants();
    const double a = 1, b = 1, h = 0.1;

    SUBCASE("double root where requested") {
        const auto r = minimal_gains_zeta(a, b, h, uc.zeta_min, 12.0);
        CHECK(r.p_residual < 1e-8);
        CHECK(r.dp_residual < 1e-8);
        CHECK(r.diff_op_margin > 0.0);
        CHECK(r.feasible);
    }

    SUBCASE("gains blow up toward the bound") {
        const double bound = sigma_star_zeta(uc.zeta_min, h);
        const auto far = minimal_gains_zeta(a, b, h, uc.zeta_min, bound / 2.0);
        const auto near = minimal_gains_zeta(a, b, h, uc.zeta_min, 0.999 * bound);
        CHECK(near.gains.kp > 1e3 * far.gains.kp);
    }

    SUBCASE("tuned point is certified stable") {
        const auto r = minimal_gains_zeta(a, b, h, 1.0, 6.0);
        const auto q = assemble_characteristic({a, b}, h, ScatteringConfig::proportional(1.0),
                                               r.gains.kp, r.gains.ki);
        const auto w = default_root_window(q, 6.0 - 1e-3).window;
        CHECK(count_roots_right_of_retry(q, w) == 0);
    }

    SUBCASE("smaller kp on the real-root locus is unstable") {
        const auto r = minimal_gains_zeta(a, b, h, 1.0, 6.0);
        const double kp = 0.8 * r.gains.kp;
        // same-decay real-root locus point below the corner
        const double E = std::exp(h * 6.0);
        const double as = a - 6.0;
        const double d = 1.0 * kp;
        const double ki =
            6.0 * kp + 6.0 * d * ((1.0 + E) * as + (1.0 - E) * b * d) /
                           ((1.0 - E) * as + (1.0 + E) * b * d);
        const auto q = assemble_characteristic({a, b}, h, ScatteringConfig::proportional(1.0),
                                               kp, ki);
        const auto w = default_root_window(q, 6.0 + 1e-3).window;
        CHECK(count_roots_right_of_retry(q, w) >= 1);
    }

    SUBCASE("range checks") {
        CHECK_THROWS_AS((void)minimal_gains_zeta(a, b, h, uc.zeta_min, 0.3), OutOfRange);
        CHECK_THROWS_AS((void)minimal_gains_zeta(a, b, h, uc.zeta_min, 24.1), OutOfRange);
    }
}

TEST_CASE("design procedure") {
    SUBCASE("feasible request") {
        const auto r = design_procedure(1, 1, 0.1, 20.0);
        CHECK(r.scattering.mode == ScatteringMode::Proportional);
        CHECK(r.scattering.value == doctest::Approx(0.8336).epsilon(1e-3));
        CHECK(r.tuning.feasible);
        CHECK(r.tuning.gains.kp > 0.0);
        CHECK(std::isfinite(r.tuning.gains.ki));
        CHECK(r.certificate_count == 0);
    }
    SUBCASE("requests outside the bracket") {
        CHECK_THROWS_AS((void)design_procedure(1, 1, 0.1, 24.0), OutOfRange);
        CHECK_THROWS_AS((void)design_procedure(1, 1, 0.1, 0.4), OutOfRange);
    }
}

TEST_CASE("cross-scenario ordering") {
    SUBCASE("scattering enlarges the bound") {
        for (double h : {0.05, 0.1, 0.5, 1.0})
            CHECK(sigma_star_no_scatter(1.0, h) < sigma_sup(h));
    }

    SUBCASE("constant-impedance bound grows with d toward the limit") {
        double prev = 0.0;
        int seen = 0;
        for (double d : {2.0, 5.0, 15.0, 50.0, 200.0, 1000.0}) {
            double star;
            try {
                star = sigma_star_fixed_d(1, 1, 0.1, d).sigma_star;
            } catch (const NoFeasibleRoot&) {
                continue;
            }
            CHECK(star >= prev - 1e-9);
            CHECK(star <= sigma_sup(0.1) + 1e-9);
            prev = star;
            ++seen;
        }
        CHECK(seen >= 4);
        CHECK(sigma_star_fixed_d(1, 1, 0.1, 15.0).sigma_star >
              sigma_star_no_scatter(1.0, 0.1));
    }
}

TEST_CASE("assigned decay is reproduced by the spectrum") {
    struct Case {
        ScatteringConfig sc;
        double sigma;
    };
    const auto uc = universal_constants();
    const double a = 1, b = 1, h = 0.1;
    std::vector<Case> cases = {
        {sc_none(), 2.0},
        {sc_none(), 5.0},
        {ScatteringConfig::fixed_d(15.0), 4.0},
        {ScatteringConfig::fixed_d(15.0), 9.0},
        {ScatteringConfig::proportional(1.0), 8.0},
        {ScatteringConfig::proportional(uc.zeta_min), 15.0},
    };
    for (const auto& c : cases) {
        CAPTURE(static_cast<int>(c.sc.mode));
        CAPTURE(c.sigma);
        Gains g;
        switch (c.sc.mode) {
            case ScatteringMode::None:
                g = minimal_gains_no_scatter(a, b, h, c.sigma);
                break;
            case ScatteringMode::FixedD:
                g = minimal_gains_fixed_d(a, b, h, c.sc.value, c.sigma).gains;
                break;
            case ScatteringMode::Proportional:
                g = minimal_gains_zeta(a, b, h, c.sc.value, c.sigma).gains;
                break;
        }
        const auto q = assemble_characteristic({a, b}, h, c.sc, g.kp, g.ki);
        // nothing to the right of the assigned abscissa ...
        const double eps = 1e-4 * std::max(1.0, c.sigma);
        CHECK(count_roots_right_of_retry(q, default_root_window(q, c.sigma - eps).window) == 0);
        // ... and the dominant root is the assigned double root
        const auto w = default_root_window(q, c.sigma + 0.5).window;
        const auto r = rightmost_root(q, w);
        REQUIRE(r.has_value());
        CHECK(std::abs(r->real() + c.sigma) <= 1e-3 * std::max(1.0, c.sigma));
    }
}

TEST_CASE("counts are invariant under time rescaling") {
    // (a, b, h) -> (1, 1, a h) with s -> s / a maps gains
    // kp -> kp b / a, ki -> ki b / a^2 and scales every window by 1 / a
    std::mt19937 rng(77);
    std::uniform_real_distribution<double> Ua(0.3, 3.0), Ub(0.3, 3.0), Uh(0.02, 0.5),
        Uk(0.0, 6.0), Us(0.05, 3.0);
    int agreed = 0;
    for (int i = 0; i < 20; ++i) {
        const double a = Ua(rng), b = Ub(rng), h = Uh(rng);
        const double kp = Uk(rng), ki = Uk(rng), sigma = Us(rng) * a;
        const auto q = assemble_characteristic({a, b}, h, sc_none(), kp, ki);
        const auto qs = assemble_characteristic({1.0, 1.0}, a * h, sc_none(), kp * b / a,
                                                ki * b / (a * a));
        const RootWindow w{sigma, 30.0 * a, 20.0 * a};
        const RootWindow ws{sigma / a, 30.0, 20.0};
        try {
            CHECK(count_roots_right_of_retry(q, w) == count_roots_right_of_retry(qs, ws));
            ++agreed;
        } catch (const Error&) {
            continue;
        }
    }
    CHECK(agreed >= 18);
}
