#include <doctest.h>

#include "stpanel/rng.hpp"
#include "stpanel/stats.hpp"

using namespace stpanel;

TEST_CASE("normal cdf and p-values") {
    CHECK(stats::norm_cdf(0.0) == doctest::Approx(0.5));
    CHECK(stats::norm_cdf(1.959963985) == doctest::Approx(0.975).epsilon(1e-6));
    CHECK(stats::norm_two_sided_p(1.959963985) == doctest::Approx(0.05).epsilon(1e-6));
}

TEST_CASE("chi-square survival function") {
    // reference values from the identity sf(x, 2) = exp(-x/2)
    CHECK(stats::chisq_sf(2.0, 2.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-10));
    CHECK(stats::chisq_sf(0.0, 5.0) == doctest::Approx(1.0));
    // sf(x, 1) = 2*(1 - Phi(sqrt(x)))
    CHECK(stats::chisq_sf(3.841458821, 1.0) == doctest::Approx(0.05).epsilon(1e-6));
}

TEST_CASE("t distribution matches normal for large dof") {
    CHECK(stats::t_two_sided_p(1.96, 1e7) == doctest::Approx(stats::norm_two_sided_p(1.96)).epsilon(1e-4));
    // t with 1 dof (Cauchy): P(|T| > 1) = 0.5
    CHECK(stats::t_two_sided_p(1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-8));
}

TEST_CASE("significance codes follow the 0.001/0.01/0.05/0.1 convention") {
    CHECK(stats::signif_code(0.0005) == "***");
    CHECK(stats::signif_code(0.005) == "**");
    CHECK(stats::signif_code(0.03) == "*");
    CHECK(stats::signif_code(0.07) == ".");
    CHECK(stats::signif_code(0.5) == "");
}

TEST_CASE("rng determinism and substreams") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c = Rng(42).substream(1);
    Rng d = Rng(42).substream(2);
    CHECK(c.next_u64() != d.next_u64());
    // same substream twice is identical
    Rng e = Rng(42).substream(1);
    Rng f = Rng(42).substream(1);
    for (int i = 0; i < 10; ++i) CHECK(e.normal() == f.normal());
}

TEST_CASE("rng moments roughly standard normal") {
    Rng r(7);
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        double z = r.normal();
        s += z;
        s2 += z * z;
    }
    CHECK(std::fabs(s / n) < 0.01);
    CHECK(std::fabs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("quantile type 7") {
    std::vector<double> x{1, 2, 3, 4};
    CHECK(stats::quantile(x, 0.25) == doctest::Approx(1.75));
    CHECK(stats::quantile(x, 0.5) == doctest::Approx(2.5));
    CHECK(stats::quantile(x, 1.0) == doctest::Approx(4.0));
}
