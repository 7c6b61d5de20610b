#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "acip/error.hpp"
#include "acip/map1d.hpp"

using namespace acip;

namespace {

// Circle-aware difference y1 - y0 for values in [0,1).
double wrapped_diff(double y1, double y0, bool circle) {
    double d = y1 - y0;
    return circle ? d - std::round(d) : d;
}

double iterate(const SmoothMap1D& f, double x, int n) {
    for (int i = 0; i < n; ++i) x = f.eval(x);
    return x;
}

// Fourth-order central difference of f^n.
double fd_power_derivative(const SmoothMap1D& f, double x, int n, double h) {
    bool c = f.domain().is_circle();
    double y0 = iterate(f, x, n);
    double p1 = wrapped_diff(iterate(f, x + h, n), y0, c), m1 = wrapped_diff(iterate(f, x - h, n), y0, c);
    double p2 = wrapped_diff(iterate(f, x + 2 * h, n), y0, c), m2 = wrapped_diff(iterate(f, x - 2 * h, n), y0, c);
    return (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
}

}  // namespace

TEST_CASE("eval_orbit on the doubling map") {
    auto f = presets::doubling();
    auto o = eval_orbit(f, 0.3, 3);
    REQUIRE(o.points.size() == 4);
    CHECK(o.points[0] == 0.3);
    CHECK(std::fabs(o.points[1] - 0.6) < 1e-15);
    CHECK(std::fabs(o.points[2] - 0.2) < 1e-15);
    CHECK(std::fabs(o.points[3] - 0.4) < 1e-15);
    for (double l : o.log_derivs) CHECK(l == std::log(2.0));
    for (int k = 0; k < 3; ++k) CHECK(o.points[k + 1] == f.eval(o.points[k]));
}

TEST_CASE("eval_orbit of the identity has zero log-derivatives") {
    auto f = presets::affine(1.0, 0.0, Domain{DomainKind::UnitInterval});
    auto o = eval_orbit(f, 0.77, 5);
    for (double l : o.log_derivs) CHECK(l == 0.0);
    CHECK(lyapunov_ft(f, 0.77, 5) == 0.0);
}

TEST_CASE("critical orbit point records minus infinity") {
    auto f = presets::logistic();
    auto o = eval_orbit(f, 0.5, 1);
    CHECK(std::isinf(o.log_derivs[0]));
    CHECK(o.log_derivs[0] < 0);
    CHECK(std::isinf(lyapunov_ft(f, 0.5, 3)));
}

TEST_CASE("chain_log_deriv is the running sum of log_derivs") {
    auto f = presets::perturbed_circle(2, 0.05);
    auto o = eval_orbit(f, 0.123, 50);
    double s = 0.0;
    for (int k = 0; k < 50; ++k) {
        CHECK(o.chain_log_deriv[k] == s);
        s += o.log_derivs[k];
    }
    CHECK(o.chain_log_deriv[50] == s);
}

TEST_CASE("lyapunov exponent of the logistic map matches the arcsine oracle") {
    // Oracle: integral of log|4 - 8x| against 1/(pi sqrt(x(1-x))), computed after
    // the substitution x = sin^2(pi u / 2) as a midpoint sum in u.
    const int N = 2000000;
    double oracle = 0.0;
    for (int i = 0; i < N; ++i) {
        double u = (i + 0.5) / N;
        oracle += std::log(std::fabs(4.0 * std::cos(std::numbers::pi * u)));
    }
    oracle /= N;
    CHECK(std::fabs(oracle - std::log(2.0)) < 1e-5);
    auto f = presets::logistic();
    CHECK(std::fabs(lyapunov_ft(f, 0.1234, 100000) - oracle) < 0.01);
}

TEST_CASE("lyapunov exponent of the doubling map") {
    auto f = presets::doubling();
    for (double x : {0.1, 0.37, 0.9}) CHECK(lyapunov_ft(f, x, 40) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("norms of preset maps") {
    SUBCASE("doubling") {
        auto n = estimate_norms(presets::doubling());
        CHECK(n.sup_first() == doctest::Approx(2.0).epsilon(1e-14));
        CHECK(n.R_estimate == doctest::Approx(std::log(2.0)).epsilon(1e-14));
        CHECK(n.f_prime_r_minus_1 == doctest::Approx(2.0).epsilon(1e-14));
    }
    SUBCASE("logistic") {
        auto n = estimate_norms(presets::logistic(4.0, 2.0));
        CHECK(n.sup_first() == doctest::Approx(4.0).epsilon(1e-14));
        CHECK(n.entry(2).lower == doctest::Approx(8.0).epsilon(1e-14));
        CHECK(n.f_prime_r_minus_1 == doctest::Approx(8.0).epsilon(1e-14));
        CHECK(n.R_estimate <= std::log(n.sup_first()) + 1e-12);
    }
    SUBCASE("tent slope 1.7") {
        // Oracle: |(f^n)'| is the product of the branch slopes along the orbit.
        const double s = 1.7;
        double oracle = 0.0;
        for (double x : {0.1, 0.3, 0.77}) {
            double y = x, prod = 1.0;
            for (int j = 0; j < 8; ++j) {
                prod *= s;
                y = y <= 0.5 ? s * y : s * (1.0 - y);
            }
            oracle = std::max(oracle, std::log(prod) / 8.0);
        }
        auto n = estimate_norms(presets::tent(s), 1024, 60, 8);
        CHECK(n.n_used == 8);
        CHECK(std::fabs(n.R_estimate - oracle) < 1e-9);
        CHECK(std::fabs(n.R_estimate - std::log(s)) < 1e-9);
    }
    SUBCASE("non-integer smoothness adds the Hoelder entry") {
        auto n = estimate_norms(presets::logistic(4.0, 2.5));
        REQUIRE(n.sup_abs_deriv.size() == 3);
        CHECK(n.sup_abs_deriv.back().order == 2.5);
        // d^2 f is constant, so its Hoelder quotient vanishes.
        CHECK(n.sup_abs_deriv.back().lower == 0.0);
        CHECK(n.f_prime_r_minus_1 == doctest::Approx(8.0));
    }
}

TEST_CASE("R estimate is non-increasing when the iterate count doubles") {
    for (const auto& f : {presets::doubling(), presets::perturbed_circle(2, 0.05), presets::linear_circle(3),
                          presets::perturbed_circle(3, 0.1)}) {
        for (int k : {1, 2, 4}) {
            auto a = estimate_norms(f, 256, 60, k);
            auto b = estimate_norms(f, 256, 60, 2 * k);
            CHECK(b.R_estimate <= a.R_estimate + 1e-9);
        }
    }
}

TEST_CASE("critical sets") {
    auto lc = critical_set(presets::logistic());
    REQUIRE(lc.size() == 1);
    CHECK(std::fabs(lc[0].center() - 0.5) < 1e-12);
    CHECK(lc[0].right - lc[0].left <= 1e-12);
    CHECK(critical_set(presets::doubling()).empty());
    CHECK(critical_set(presets::linear_circle(3)).empty());

    // Degenerate critical point: f' = 3a (x - 1/3)^2 touches zero without a sign change.
    auto cc = critical_set(presets::cubic(2.0), 1e-12);
    REQUIRE(cc.size() == 1);
    CHECK(std::fabs(cc[0].center() - 1.0 / 3.0) < 1e-10);
    CHECK_FALSE(cc[0].flat);

    auto tent = critical_set(presets::tent(1.8));
    REQUIRE(tent.size() == 1);
    CHECK(std::fabs(tent[0].center() - 0.5) < 1e-12);
}

TEST_CASE("flat critical pieces are reported as intervals") {
    auto f = presets::from_expression("0.2 + 0.5*max(0, x - 0.6)^3", Domain{DomainKind::UnitInterval}, 3.0);
    auto c = critical_set(f, 1e-12, 1000);
    REQUIRE(c.size() == 1);
    CHECK(c[0].flat);
    CHECK(c[0].left == 0.0);
    CHECK(std::fabs(c[0].right - 0.6) < 1e-4);
}

TEST_CASE("near tangency is reported as unresolved") {
    auto f = presets::from_expression("0.3*x + 0.1*(x-0.5)^3 - 0.001 + 1e-9*x", Domain{DomainKind::UnitInterval}, 3.0);
    // f' = 0.3 + 0.3 (x-0.5)^2 + 1e-9 > 0: no touch, f'' changes sign but |f'| stays large.
    CHECK(critical_set(f).empty());
    auto g = presets::from_expression("x*x*x/3 - x*x/2 + x/4 + 1e-9*x + 0.3", Domain{DomainKind::UnitInterval}, 3.0);
    // g' = (x - 1/2)^2 + 1e-9: a minimum of 1e-9, neither clearly zero nor clearly positive.
    CHECK_THROWS_AS(critical_set(g), Error);
}

TEST_CASE("power maps") {
    SUBCASE("doubling cubed") {
        auto g = power_map(presets::doubling(), 3);
        for (double x : {0.0, 0.1, 0.55, 0.999}) {
            CHECK(g.deriv1(x) == 8.0);
            CHECK(g.eval(x) == presets::linear_circle(8).eval(x));
        }
    }
    SUBCASE("rotation to the fourth has no curvature") {
        auto g = power_map(presets::affine(1.0, 0.3, Domain{DomainKind::Circle}), 4);
        for (double x : {0.05, 0.4, 0.8})
            for (int k = 2; k <= 3; ++k) CHECK(g.deriv(k, x) == 0.0);
    }
    SUBCASE("logistic squared against finite differences") {
        auto f = presets::logistic();
        auto g = power_map(f, 2);
        double x = 0.2;
        double chain = f.deriv1(f.eval(x)) * f.deriv1(x);
        CHECK(g.deriv1(x) == doctest::Approx(chain).epsilon(1e-14));
        double fd = fd_power_derivative(f, x, 2, 1e-4);
        CHECK(std::fabs(g.deriv1(x) - fd) <= 1e-6 * std::fabs(fd));
        // Second derivative against differences of the first.
        double h = 1e-5;
        double fd2 = (g.deriv1(x + h) - g.deriv1(x - h)) / (2 * h);
        CHECK(std::fabs(g.deriv(2, x) - fd2) <= 1e-6 * std::fabs(fd2));
    }
    SUBCASE("composition is bit-exact") {
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (const auto& f : {presets::logistic(), presets::perturbed_circle(3, 0.07), presets::doubling()}) {
            for (int p : {1, 2, 5}) {
                auto g = power_map(f, p);
                for (int i = 0; i < 200; ++i) {
                    double x = u(rng);
                    CHECK(g.eval(x) == iterate(f, x, p));
                }
            }
        }
    }
}

TEST_CASE("chain rule property against finite differences of f^n") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (const auto& f : {presets::perturbed_circle(2, 0.05), presets::logistic()}) {
        for (int trial = 0; trial < 20; ++trial) {
            double x = u(rng);
            for (int n = 1; n <= 20; ++n) {
                auto o = eval_orbit(f, x, n);
                double min_log = *std::min_element(o.log_derivs.begin(), o.log_derivs.end());
                if (min_log <= -10) continue;
                double h = 1e-4 * std::exp(-o.chain_log_deriv[n]);
                double fd = std::fabs(fd_power_derivative(f, x, n, h));
                double rel = std::fabs(std::log(fd) - o.chain_log_deriv[n]);
                CHECK(rel <= 1e-5);
            }
        }
    }
}

TEST_CASE("map invariants on a sample grid") {
    for (const auto& f : {presets::logistic(4.0, 2.0), presets::logistic(4.0, 2.5), presets::doubling(),
                          presets::perturbed_circle(2, 0.1, 3.0), presets::cubic(2.0), presets::linear_circle(3),
                          power_map(presets::logistic(4.0, 2.0), 2)}) {
        auto v = validate_map(f);
        CHECK_MESSAGE(v.maps_into_domain, f.name());
        CHECK_MESSAGE(v.derivative_matches_fd, f.name());
        CHECK_MESSAGE(v.holder_bound_holds, f.name());
    }
}

TEST_CASE("expression maps agree with presets") {
    auto e = presets::from_expression("4*x*(1-x)", Domain{DomainKind::UnitInterval}, 3.0);
    auto l = presets::logistic();
    for (double x : {0.0, 0.2, 0.5, 0.93}) {
        CHECK(e.eval(x) == doctest::Approx(l.eval(x)).epsilon(1e-15));
        for (int k = 1; k <= 3; ++k) CHECK(e.deriv(k, x) == doctest::Approx(l.deriv(k, x)).epsilon(1e-14));
    }
    auto s = presets::from_expression("2*x + 0.05*sin(2*pi*x)", Domain{DomainKind::Circle}, 3.0);
    auto p = presets::perturbed_circle(2, 0.05, 3.0);
    for (double x : {0.1, 0.6})
        for (int k = 1; k <= 3; ++k) CHECK(s.deriv(k, x) == doctest::Approx(p.deriv(k, x)).epsilon(1e-12));
    CHECK_THROWS_AS(presets::from_expression("2*y", Domain{}, 2.0), Error);
    CHECK_THROWS_AS(presets::from_expression("sin(x", Domain{}, 2.0), Error);
}

TEST_CASE("circle reduction is canonical") {
    Domain c{DomainKind::Circle};
    CHECK(c.reduce(1.25) == 0.25);
    CHECK(c.reduce(-1e-18) == 0.0);
    CHECK(c.reduce(-0.25) == 0.75);
    CHECK(c.distance(0.95, 0.05) == doctest::Approx(0.1));
}
