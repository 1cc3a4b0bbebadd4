#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tf/mesh.hpp"

using namespace tf;

TEST_CASE("make_graded_mesh basics") {
    SUBCASE("uniform mesh M=4 q=1") {
        auto m = make_graded_mesh_unchecked(4, 1.0);
        REQUIRE(m.size() == 5);
        CHECK(m.node(0) == 0.0);
        CHECK(m.node(1) == 0.25);
        CHECK(m.node(2) == 0.5);
        CHECK(m.node(3) == 0.75);
        CHECK(m.node(4) == 1.0);
    }
    SUBCASE("quadratic grading M=2 q=2") {
        auto m = make_graded_mesh_unchecked(2, 2.0);
        CHECK(m.node(0) == 0.0);
        CHECK(m.node(1) == 0.25);
        CHECK(m.node(2) == 1.0);
    }
    SUBCASE("M below floor rejected") {
        CHECK_THROWS_AS(make_graded_mesh(7, 2.0), InvalidArgument);
    }
    SUBCASE("bit-reproducible construction") {
        auto a = make_graded_mesh(64, 2.0);
        auto b = make_graded_mesh(64, 2.0);
        for (std::size_t j = 0; j < a.size(); ++j) CHECK(a.node(j) == b.node(j));
    }
}

TEST_CASE("power_difference") {
    PeriodicAxis pa(32);
    ScalarField f({Axis(pa)}, 0.0);

    SUBCASE("constants annihilated") {
        for (std::size_t i = 0; i < f.size(); ++i) f[i] = 3.7;
        auto d = power_difference(f, 0, pa.spacing(), 3);
        for (std::size_t i = 0; i < d.size(); ++i) CHECK(d[i] == doctest::Approx(0.0));
    }
    SUBCASE("second difference of quadratic on a uniform graded axis") {
        auto mesh = make_graded_mesh(16, 1.0);
        ScalarField g({Axis(mesh)}, 0.0);
        for (std::size_t j = 0; j < g.size(); ++j) {
            double x = mesh.node(j);
            g[j] = x * x;
        }
        double h = mesh.spacing(0);
        auto d = power_difference(g, 0, h, 2);
        for (std::size_t j = 0; j + 2 < g.size(); ++j)
            CHECK(d[j] == doctest::Approx(2.0 * h * h).epsilon(1e-12));
        // nodes whose stencil exits [0,1] are flagged
        CHECK(std::isnan(d[g.size() - 1]));
    }
    SUBCASE("second difference of affine vanishes") {
        auto mesh = make_graded_mesh(16, 1.0);
        ScalarField g({Axis(mesh)}, 0.0);
        for (std::size_t j = 0; j < g.size(); ++j) g[j] = 2.0 * mesh.node(j) - 1.0;
        auto d = power_difference(g, 0, mesh.spacing(0), 2);
        for (std::size_t j = 0; j + 2 < g.size(); ++j)
            CHECK(d[j] == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("recursion Delta^k = Delta(Delta^{k-1})") {
        for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::sin(pa.coord(i)) + 0.3 * std::cos(2.0 * pa.coord(i));
        double h = 2.0 * pa.spacing();
        auto d3 = power_difference(f, 0, h, 3);
        auto d2then1 = power_difference(power_difference(f, 0, h, 2), 0, h, 1);
        for (std::size_t i = 0; i < f.size(); ++i)
            CHECK(d3[i] == doctest::Approx(d2then1[i]).epsilon(1e-13));
    }
    SUBCASE("bad arguments") {
        CHECK_THROWS_AS(power_difference(f, 2, 0.1, 1), InvalidArgument);
        CHECK_THROWS_AS(power_difference(f, 0, -0.1, 1), InvalidArgument);
    }
}

TEST_CASE("fd_derivative") {
    SUBCASE("cubic exactness, order 3 on uniform axis") {
        auto mesh = make_graded_mesh(32, 1.0);
        ScalarField g({Axis(mesh)}, 0.0);
        for (std::size_t j = 0; j < g.size(); ++j) {
            double x = mesh.node(j);
            g[j] = x * x * x;
        }
        auto d3 = fd_derivative(g, 0, 3);
        for (std::size_t j = 0; j < g.size(); ++j)
            CHECK(d3[j] == doctest::Approx(6.0).epsilon(1e-10));
    }
    SUBCASE("zero field") {
        auto mesh = make_graded_mesh(16, 2.0);
        ScalarField g({Axis(mesh)}, 0.0);
        auto d = fd_derivative(g, 0, 2);
        for (std::size_t j = 0; j < g.size(); ++j) CHECK(d[j] == 0.0);
    }
    SUBCASE("sin derivative on periodic axis") {
        PeriodicAxis pa(64);
        ScalarField f({Axis(pa)}, 0.0);
        for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::sin(pa.coord(i));
        auto d = fd_derivative(f, 0, 1);
        double err = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i)
            err = std::max(err, std::abs(d[i] - std::cos(pa.coord(i))));
        CHECK(err <= 1e-6);
    }
    SUBCASE("linearity") {
        auto mesh = make_graded_mesh(24, 2.0);
        ScalarField u({Axis(mesh)}, 0.0), v({Axis(mesh)}, 0.0);
        for (std::size_t j = 0; j < u.size(); ++j) {
            double x = mesh.node(j);
            u[j] = std::exp(x);
            v[j] = std::sin(3.0 * x);
        }
        ScalarField w = 2.0 * u + (-3.0) * v;
        auto dw = fd_derivative(w, 0, 2);
        auto du = fd_derivative(u, 0, 2);
        auto dv = fd_derivative(v, 0, 2);
        // exact up to roundoff at the scale of the stencil weights (~h^-2)
        for (std::size_t j = 0; j < u.size(); ++j)
            CHECK(std::abs(dw[j] - (2.0 * du[j] - 3.0 * dv[j])) <= 1e-7);
    }
    SUBCASE("insufficient nodes") {
        PeriodicAxis pa(4);
        ScalarField f({Axis(pa)}, 0.0);
        CHECK_THROWS_AS(fd_derivative(f, 0, 2), InvalidArgument);
    }
}

TEST_CASE("integrate") {
    SUBCASE("unit field on [0,1]") {
        auto mesh = make_graded_mesh(16, 2.0);
        ScalarField g({Axis(mesh)}, 1.0);
        CHECK(integrate(g) == doctest::Approx(1.0).epsilon(1e-14));
    }
    SUBCASE("trapezoid exact on affine, any grading") {
        for (double q : {1.0, 2.0, 3.0}) {
            auto mesh = make_graded_mesh(32, q);
            ScalarField g({Axis(mesh)}, 0.0);
            for (std::size_t j = 0; j < g.size(); ++j) g[j] = mesh.node(j);
            CHECK(integrate(g) == doctest::Approx(0.5).epsilon(1e-14));
        }
    }
    SUBCASE("rectangle rule exact for sin^2 below Nyquist") {
        PeriodicAxis pa(16);
        ScalarField f({Axis(pa)}, 0.0);
        for (std::size_t i = 0; i < f.size(); ++i) {
            double s = std::sin(pa.coord(i));
            f[i] = s * s;
        }
        CHECK(integrate(f) == doctest::Approx(kPi).epsilon(1e-12));
    }
    SUBCASE("integral of derivative of smooth periodic field is ~0") {
        PeriodicAxis pa(48);
        ScalarField f({Axis(pa)}, 0.0);
        for (std::size_t i = 0; i < f.size(); ++i)
            f[i] = std::exp(std::sin(pa.coord(i)));
        auto d = fd_derivative(f, 0, 1);
        CHECK(std::abs(integrate(d)) <= 1e-10);
    }
}

TEST_CASE("tensor fields") {
    PeriodicAxis pa(8);
    auto mesh = make_graded_mesh(8, 2.0);
    ScalarField f({Axis(pa), Axis(mesh)}, 0.0);
    REQUIRE(f.size() == 8 * 9);

    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 9; ++j)
            f[i * 9 + j] = std::cos(pa.coord(i)) * mesh.node(j);

    SUBCASE("per-axis derivative acts on the right axis") {
        auto dN = fd_derivative(f, 1, 1);
        for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t j = 0; j < 9; ++j)
                CHECK(dN[i * 9 + j] == doctest::Approx(std::cos(pa.coord(i))).epsilon(1e-9));
    }
    SUBCASE("full integral separates") {
        // int cos = 0 over the circle
        CHECK(integrate(f) == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("integrate_along reduces one axis") {
        auto r = integrate_along(f, 1); // int x dx = 1/2 per tangential node
        REQUIRE(r.size() == 8);
        for (std::size_t i = 0; i < 8; ++i)
            CHECK(r[i] == doctest::Approx(0.5 * std::cos(pa.coord(i))).epsilon(1e-12));
    }
}
