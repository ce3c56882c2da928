#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "delaypi/boundaries.hpp"
#include "test_support.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace delaypi;
using testsup::collapse_sigma;
using testsup::double_root_gains;
using testsup::fixed_d_gains;

namespace {

LoopConfig none_cfg(double a, double b, double h) {
    return LoopConfig{{a, b}, {h / 2.0, h / 2.0}, ScatteringConfig::none()};
}
LoopConfig fixed_cfg(double a, double b, double h, double d) {
    return LoopConfig{{a, b}, {h / 2.0, h / 2.0}, ScatteringConfig::fixed_d(d)};
}
LoopConfig zeta_cfg(double a, double b, double h, double z) {
    return LoopConfig{{a, b}, {h / 2.0, h / 2.0}, ScatteringConfig::proportional(z)};
}

// residual of a boundary point, measured against the size of the summands
double boundary_residual(const LoopConfig& cfg, double sigma, double omega, double kp,
                         double ki) {
    const auto q = assemble_characteristic(cfg.plant, cfg.channel.round_trip(), cfg.scattering,
                                           kp, ki);
    const Complex s(-sigma, omega);
    double scale = 1.0;
    for (const auto& t : q.terms()) {
        Complex p = 0.0;
        for (auto it = t.coeffs.rbegin(); it != t.coeffs.rend(); ++it) p = p * s + *it;
        scale += std::abs(p * std::exp(-t.delay * s));
    }
    return std::abs(q(s)) / scale;
}

}  // namespace

TEST_CASE("real-root line, plain loop") {
    SUBCASE("zero abscissa pins the line to ki = 0") {
        auto cfg = none_cfg(1, 1, 0.1);
        for (double kp : {0.0, 1.0, 3.7, 9.0}) CHECK(real_root_line(cfg, 0.0, kp) == 0.0);
    }

    SUBCASE("meets the double-root gains at their kp") {
        auto cfg = none_cfg(1, 1, 0.1);
        const auto g = double_root_gains(1, 1, 0.1, 3.0);
        CHECK(g.kp == doctest::Approx(3.2596).epsilon(1e-4));
        CHECK(real_root_line(cfg, 3.0, g.kp) == doctest::Approx(g.ki).epsilon(1e-12));
        CHECK(g.ki == doctest::Approx(5.334).epsilon(1e-3));
    }

    SUBCASE("delay-free limit") {
        auto cfg = none_cfg(1, 1, 0.0);
        CHECK(real_root_line(cfg, 2.0, 1.0) == doctest::Approx(0.0));
    }
}

TEST_CASE("real-root line, scattering modes") {
    std::mt19937 rng(21);
    std::uniform_real_distribution<double> Ua(0.0, 2.5), Ub(0.3, 2.0), Uh(0.05, 0.4),
        Us(0.1, 6.0), Uk(0.0, 20.0), Ud(0.5, 30.0), Uz(0.2, 2.0);

    SUBCASE("fixed impedance: every emitted point is a root") {
        for (int i = 0; i < 60; ++i) {
            auto cfg = fixed_cfg(Ua(rng), Ub(rng), Uh(rng), Ud(rng));
            const double sigma = Us(rng), kp = Uk(rng);
            double ki;
            try {
                ki = real_root_line(cfg, sigma, kp);
            } catch (const DegenerateDenominator&) {
                continue;
            }
            CHECK(boundary_residual(cfg, sigma, 0.0, kp, ki) < 1e-12);
        }
    }

    SUBCASE("fixed impedance: closed form equals the affine solve") {
        for (int i = 0; i < 40; ++i) {
            auto cfg = fixed_cfg(Ua(rng), Ub(rng), Uh(rng), Ud(rng));
            const double sigma = Us(rng), kp = Uk(rng);
            double ki;
            try {
                ki = real_root_line(cfg, sigma, kp);
            } catch (const DegenerateDenominator&) {
                continue;
            }
            // p(-sigma) is affine in ki; solve it from two evaluations
            const double h = cfg.channel.round_trip();
            const double p0 =
                assemble_characteristic(cfg.plant, h, cfg.scattering, kp, 0.0)(Complex(-sigma, 0))
                    .real();
            const double p1 =
                assemble_characteristic(cfg.plant, h, cfg.scattering, kp, 1.0)(Complex(-sigma, 0))
                    .real();
            const double ki_affine = -p0 / (p1 - p0);
            CHECK(ki == doctest::Approx(ki_affine).epsilon(1e-10));
        }
    }

    SUBCASE("proportional impedance: every emitted point is a root") {
        for (int i = 0; i < 60; ++i) {
            auto cfg = zeta_cfg(Ua(rng), Ub(rng), Uh(rng), Uz(rng));
            const double sigma = Us(rng), kp = 0.05 + Uk(rng);
            double ki;
            try {
                ki = real_root_line(cfg, sigma, kp);
            } catch (const DegenerateDenominator&) {
                continue;
            }
            CHECK(boundary_residual(cfg, sigma, 0.0, kp, ki) < 1e-12);
        }
    }

    SUBCASE("degenerate denominator is reported") {
        const double a = 5.0, sigma = 1.0, h = 0.1, b = 1.0;
        const double E = std::exp(h * sigma);
        const double d = (E - 1.0) * (a - sigma) / ((1.0 + E) * b);
        auto cfg = fixed_cfg(a, b, h, d);
        CHECK_THROWS_AS((void)real_root_line(cfg, sigma, 2.0), DegenerateDenominator);
    }
}

TEST_CASE("boundary kernel entries") {
    const double h = 0.1, sigma = 2.0, d = 4.0;
    const double E = std::exp(h * sigma);

    SUBCASE("omega = pi/h") {
        auto k = kernel(PlantParams{1, 1}, h, d, sigma, std::numbers::pi / h);
        CHECK(k.alpha == doctest::Approx(1.0 - E).epsilon(1e-12));
        CHECK(k.beta == doctest::Approx(1.0 + E).epsilon(1e-12));
        CHECK(k.gamma == doctest::Approx(0.0).scale(1.0));
    }
    SUBCASE("omega -> 0") {
        auto k = kernel(PlantParams{1, 1}, h, d, sigma, 1e-9);
        CHECK(k.alpha == doctest::Approx(1.0 + E).epsilon(1e-9));
        CHECK(k.beta == doctest::Approx(1.0 - E).epsilon(1e-6));
        CHECK(k.gamma == doctest::Approx(0.0).scale(1.0).epsilon(1e-7));
    }
    SUBCASE("zero abscissa, quarter period") {
        auto k = kernel(PlantParams{1, 1}, h, d, 0.0, std::numbers::pi / (2.0 * h));
        CHECK(k.alpha == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(k.beta == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(k.gamma == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("system matches the generic affine decomposition") {
        std::mt19937 rng(33);
        std::uniform_real_distribution<double> Ua(0.0, 2.0), Uh(0.05, 0.3), Us(0.1, 5.0),
            Uw(0.05, 30.0), Ud(0.5, 20.0);
        for (int i = 0; i < 40; ++i) {
            const PlantParams plant{Ua(rng), 0.4 + Ua(rng)};
            const double hh = Uh(rng), ss = Us(rng), ww = Uw(rng), dd = Ud(rng);
            auto k = kernel(plant, hh, dd, ss, ww);
            const auto cfg = ScatteringConfig::fixed_d(dd);
            const Complex s(-ss, ww);
            const Complex p00 = assemble_characteristic(plant, hh, cfg, 0.0, 0.0)(s);
            const Complex p10 = assemble_characteristic(plant, hh, cfg, 1.0, 0.0)(s);
            const Complex p01 = assemble_characteristic(plant, hh, cfg, 0.0, 1.0)(s);
            const Complex ckp = p10 - p00, cki = p01 - p00;
            // rows of the kernel system are the real and imaginary parts of
            // the affine decomposition, up to one common scale
            const double lam = k.A11 / ckp.real();
            CHECK(k.A12 == doctest::Approx(lam * cki.real()).epsilon(1e-9));
            CHECK(k.A21 == doctest::Approx(lam * ckp.imag()).epsilon(1e-9));
            CHECK(k.A22 == doctest::Approx(lam * cki.imag()).epsilon(1e-9));
            CHECK(dd * k.B1 == doctest::Approx(-lam * p00.real()).epsilon(1e-9));
            CHECK(dd * k.B2 == doctest::Approx(-lam * p00.imag()).epsilon(1e-9));
        }
    }
}

TEST_CASE("complex boundary, plain loop") {
    auto cfg = none_cfg(1, 1, 0.1);

    SUBCASE("small-omega limit reaches the double-root corner") {
        const auto g = double_root_gains(1, 1, 0.1, 3.0);
        auto s = complex_boundary(cfg, 3.0, 1e-6);
        REQUIRE(s.size() == 1);
        CHECK(std::abs(s[0].kp - g.kp) < 1e-4);
        CHECK(std::abs(s[0].ki - g.ki) < 1e-4);
    }

    SUBCASE("limit is Cauchy as omega -> 0") {
        const auto g = double_root_gains(1, 1, 0.1, 3.0);
        double prev = -1.0;
        for (double w : {1e-3, 1e-4, 1e-5}) {
            const auto s = complex_boundary(cfg, 3.0, w)[0];
            const double err = std::hypot(s.kp - g.kp, s.ki - g.ki);
            if (prev >= 0.0) CHECK(err <= prev + 1e-12);
            prev = err;
        }
    }

    SUBCASE("points are roots by construction") {
        for (double w : {1.0, 5.0, 20.0}) {
            const auto s = complex_boundary(cfg, 0.0, w)[0];
            const auto q = assemble_characteristic(cfg.plant, 0.1, cfg.scattering, s.kp, s.ki);
            CHECK(std::abs(q(Complex(0.0, w))) < 1e-10);
        }
    }
}

TEST_CASE("complex boundary, fixed impedance") {
    auto cfg = fixed_cfg(1, 1, 0.1, 15.0);
    SUBCASE("root lands where requested") {
        const auto s = complex_boundary(cfg, 10.0, 5.0);
        REQUIRE(s.size() == 1);
        const auto q = assemble_characteristic(cfg.plant, 0.1, cfg.scattering, s[0].kp, s[0].ki);
        CHECK(std::abs(q(Complex(-10.0, 5.0))) < 1e-9 * (1.0 + std::abs(q(Complex(0, 0)))));
    }
    SUBCASE("random back-substitution") {
        std::mt19937 rng(17);
        std::uniform_real_distribution<double> Us(0.1, 10.5), Uw(0.05, 60.0);
        for (int i = 0; i < 60; ++i) {
            const double sigma = Us(rng), w = Uw(rng);
            std::vector<Gains> s;
            try {
                s = complex_boundary(cfg, sigma, w);
            } catch (const SingularSystem&) {
                continue;
            }
            CHECK(boundary_residual(cfg, sigma, w, s[0].kp, s[0].ki) < 1e-11);
        }
    }
}

TEST_CASE("complex boundary, proportional impedance") {
    std::mt19937 rng(51);
    std::uniform_real_distribution<double> Uz(0.3, 1.8), Us(0.2, 8.0), Uw(0.1, 40.0),
        Ua(0.0, 2.0), Ub(0.4, 2.0), Uh(0.05, 0.3);

    SUBCASE("solutions satisfy the determinant identity and the spectrum") {
        int produced = 0;
        for (int i = 0; i < 80; ++i) {
            const double a = Ua(rng), b = Ub(rng), h = Uh(rng), z = Uz(rng);
            auto cfg = zeta_cfg(a, b, h, z);
            const double sigma = Us(rng), w = Uw(rng);
            std::vector<Gains> sols;
            try {
                sols = complex_boundary(cfg, sigma, w);
            } catch (const Error&) {
                continue;
            }
            for (const auto& g : sols) {
                ++produced;
                CHECK(boundary_residual(cfg, sigma, w, g.kp, g.ki) < 1e-9);
                // back into |A| + zeta |[A2 B]| = 0
                const auto k = kernel(PlantParams{a, b}, h, z * g.kp, sigma, w);
                const double detA = k.A11 * k.A22 - k.A12 * k.A21;
                const double detA2B = k.A12 * k.B2 - k.A22 * k.B1;
                const double scale = std::abs(k.A11 * k.A22) + std::abs(k.A12 * k.A21) +
                                     z * (std::abs(k.A12 * k.B2) + std::abs(k.A22 * k.B1));
                CHECK(std::abs(detA + z * detA2B) < 1e-8 * (1.0 + scale));
            }
        }
        CHECK(produced > 40);
    }

    SUBCASE("derived quadratic against the reference closed form") {
        // a reference closed form of these coefficients carries a
        // sin(h sigma) factor in c1 where every sibling term oscillates in
        // h omega, and an e^{2 h sigma} weight in c0 where the structure
        // wants e^{h sigma}; compare the as-written reading and the
        // corrected reading against the mechanically derived quadratic and
        // record which one matches
        int match_reference = 0, match_corrected = 0, total = 0;
        for (int i = 0; i < 200; ++i) {
            const double a = Ua(rng), b = Ub(rng), h = Uh(rng), z = Uz(rng);
            const double sigma = Us(rng), w = Uw(rng);
            const double E = std::exp(h * sigma), E2 = E * E;
            const double as = a - sigma;
            const double cw = std::cos(h * w), sw = std::sin(h * w);

            // mechanical derivation: quadratic in d of |A| + zeta |[A2 B]|
            const auto F = [&](double d) {
                const auto k = kernel(PlantParams{a, b}, h, d, sigma, w);
                return (k.A11 * k.A22 - k.A12 * k.A21) + z * (k.A12 * k.B2 - k.A22 * k.B1);
            };
            const double g0 = F(0.0), gp = F(1.0), gm = F(-1.0);
            const double d2 = 0.5 * (gp + gm) - g0, d1 = 0.5 * (gp - gm), d0 = g0;

            const double c2 = ((z - 1.0) * E2 - (z + 1.0) - 2.0 * E * cw) * w +
                              2.0 * z * E * sw * sigma;
            const double c1_reference =
                2.0 * ((-(z - 1.0) * E2 - (z + 1.0)) * as +
                       2.0 * E * (z * sigma * cw + w * std::sin(h * sigma))) * w;
            const double c1_corrected =
                2.0 * ((-(z - 1.0) * E2 - (z + 1.0)) * as +
                       2.0 * E * (z * sigma * cw + w * sw)) * w;
            const double c0_reference = (w * w + as * as) *
                                      ((E2 * (z - 1.0) - (z + 1.0)) * w +
                                       2.0 * E2 * (w * cw - z * sigma * sw));
            const double c0_corrected = (w * w + as * as) *
                                        ((E2 * (z - 1.0) - (z + 1.0)) * w +
                                         2.0 * E * (w * cw - z * sigma * sw));

            // the reference polynomial lives in (b zeta kp) = (b d); rescale to
            // a polynomial in d, then allow one common factor and compare
            // cross products
            const auto proportional = [&](double x2, double x1, double x0) {
                x2 *= b * b;
                x1 *= b;
                const double sA = std::abs(d2) + std::abs(d1) + std::abs(d0);
                const double sB = std::abs(x2) + std::abs(x1) + std::abs(x0);
                if (sA == 0.0 || sB == 0.0) return false;
                return std::abs(d2 * x1 - d1 * x2) < 1e-7 * sA * sB &&
                       std::abs(d1 * x0 - d0 * x1) < 1e-7 * sA * sB &&
                       std::abs(d2 * x0 - d0 * x2) < 1e-7 * sA * sB;
            };
            ++total;
            if (proportional(c2, c1_reference, c0_reference)) ++match_reference;
            if (proportional(c2, c1_corrected, c0_corrected)) ++match_corrected;
        }
        MESSAGE("as-written coefficients match the derivation in ", match_reference, "/", total,
                " draws; corrected reading matches in ", match_corrected, "/", total);
        // the derivation is the authority; the reference form is informational
        WARN(match_reference == total);
        CHECK(match_corrected == total);
    }
}

TEST_CASE("decay maps") {
    SUBCASE("delay-free loop is stable on the whole first quadrant") {
        auto map = build_sigma_map(none_cfg(1, 1, 0.0), 0.0,
                                   {0.0, 10.0, 0.0, 10.0, 16, true});
        for (int idx = 0; idx < map.nx * map.ny; ++idx) {
            CHECK(map.counts[idx] == 0);
            CHECK(map.feasible[idx] == 1);
        }
    }

    SUBCASE("region collapses past the maximal decay") {
        auto map = build_sigma_map(none_cfg(1, 1, 0.1), 7.0, {0.0, 9.0, 0.0, 16.0, 16, true});
        CHECK(map.region_cells().empty());
    }

    SUBCASE("region nesting in the abscissa") {
        const SigmaMapOptions opt{0.0, 9.0, 0.0, 14.0, 16, true};
        auto m2 = build_sigma_map(none_cfg(1, 1, 0.1), 2.0, opt);
        auto m4 = build_sigma_map(none_cfg(1, 1, 0.1), 4.0, opt);
        CHECK_FALSE(m4.region_cells().empty());
        for (int idx : m4.region_cells()) CHECK(m2.in_region(idx));
        CHECK(m4.region_cells().size() < m2.region_cells().size());
    }

    SUBCASE("fixed impedance keeps a region up to its own bound") {
        // near the collapse the region is a sliver above the real-root locus,
        // so the lattice has to look closely around the double-root corner
        const auto g10 = fixed_d_gains(1, 1, 0.1, 15.0, 10.0);
        SigmaMapOptions opt{0.85 * g10.kp, 1.25 * g10.kp, 0.8 * g10.ki, 1.5 * g10.ki, 24, true};
        auto cfg = fixed_cfg(1, 1, 0.1, 15.0);
        CHECK_FALSE(build_sigma_map(cfg, 10.0, opt).region_cells().empty());
        CHECK(build_sigma_map(cfg, 11.5, opt).region_cells().empty());
    }

    SUBCASE("difference-operator bound marks cells infeasible") {
        auto cfg = fixed_cfg(1, 1, 0.1, 15.0);
        const double E = std::exp(0.1 * 10.0);
        const double kp_hi = 15.0 * (E + 1.0) / (E - 1.0);
        auto map = build_sigma_map(cfg, 10.0, {0.0, 2.0 * kp_hi, 0.0, 400.0, 16, true});
        bool saw_infeasible = false;
        for (int i = 0; i < map.nx; ++i) {
            const bool beyond = map.cell_kp(i) > kp_hi;
            for (int j = 0; j < map.ny; ++j) {
                const int idx = map.index(i, j);
                if (beyond) {
                    CHECK(map.feasible[idx] == 0);
                    saw_infeasible = true;
                }
            }
        }
        CHECK(saw_infeasible);
        // and the limit lines were emitted
        int limit_curves = 0;
        for (const auto& c : map.curves)
            if (c.kind == CurveKind::DifferenceOperatorLimit) ++limit_curves;
        CHECK(limit_curves == 2);
    }

    SUBCASE("curve samples are clean and dense inside the box") {
        auto map = build_sigma_map(none_cfg(1, 1, 0.1), 3.0, {0.0, 9.0, 0.0, 14.0, 16, true});
        const double diag = std::hypot(9.0 / 16.0, 14.0 / 16.0);
        bool saw_complex = false;
        for (const auto& c : map.curves) {
            REQUIRE_FALSE(c.samples.empty());
            for (std::size_t i = 0; i < c.samples.size(); ++i) {
                CHECK(std::isfinite(c.samples[i].kp));
                CHECK(std::isfinite(c.samples[i].ki));
                if (c.kind == CurveKind::ComplexPair && i > 0) {
                    CHECK(c.samples[i].omega > c.samples[i - 1].omega);
                    const auto& p = c.samples[i - 1];
                    const auto& s = c.samples[i];
                    const bool inside = p.kp >= 0 && p.kp <= 9 && p.ki >= 0 && p.ki <= 14 &&
                                        s.kp >= 0 && s.kp <= 9 && s.ki >= 0 && s.ki <= 14;
                    if (inside)
                        CHECK(std::hypot(p.kp - s.kp, p.ki - s.ki) <= diag * 1.0001);
                }
            }
            if (c.kind == CurveKind::ComplexPair) saw_complex = true;
        }
        CHECK(saw_complex);
    }

    SUBCASE("real-root samples satisfy the affine relation") {
        auto map = build_sigma_map(none_cfg(1, 1, 0.1), 3.0, {0.0, 9.0, 0.0, 14.0, 16, true});
        const double offset = 3.0 * (1.0 - 3.0) / std::exp(0.3);
        for (const auto& c : map.curves) {
            if (c.kind != CurveKind::RealRootLine) continue;
            for (const auto& s : c.samples)
                CHECK(s.ki - 3.0 * s.kp == doctest::Approx(offset).epsilon(1e-12));
        }
    }

    SUBCASE("cell counts are constant inside a cell") {
        // sampled where the decomposition is locally uniform: a cell that a
        // boundary curve crosses legitimately mixes two counts
        auto map = build_sigma_map(none_cfg(1, 1, 0.1), 3.0, {0.0, 9.0, 0.0, 14.0, 16, true});
        std::mt19937 rng(9);
        std::uniform_int_distribution<int> Ui(1, map.nx - 2), Uj(1, map.ny - 2);
        std::uniform_real_distribution<double> Uo(-0.45, 0.45);
        const double wkp = (map.kp_max - map.kp_min) / map.nx;
        const double wki = (map.ki_max - map.ki_min) / map.ny;
        int probed = 0;
        for (int trial = 0; trial < 200 && probed < 20; ++trial) {
            const int i = Ui(rng), j = Uj(rng);
            const int center = map.counts[map.index(i, j)];
            if (center < 0) continue;
            bool uniform = true;
            for (int di = -1; di <= 1; ++di)
                for (int dj = -1; dj <= 1; ++dj)
                    if (map.counts[map.index(i + di, j + dj)] != center) uniform = false;
            if (!uniform) continue;
            bool consistent = true;
            for (int probe = 0; probe < 3; ++probe) {
                const double kp = map.cell_kp(i) + Uo(rng) * wkp;
                const double ki = map.cell_ki(j) + Uo(rng) * wki;
                auto q = assemble_characteristic(map.config.plant, 0.1,
                                                 map.config.scattering, kp, ki);
                auto w = default_root_window(q, 3.0).window;
                try {
                    if (count_roots_right_of_retry(q, w) != center) consistent = false;
                } catch (const Error&) {
                    continue;
                }
            }
            CHECK(consistent);
            ++probed;
        }
        CHECK(probed >= 15);
    }
}
