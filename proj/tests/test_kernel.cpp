#include "parity/kernel.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <stdexcept>

using namespace parity;

TEST_CASE("gaussian kernel values") {
    const KernelSpec gaussian;
    CHECK(kernel_eval(gaussian, 0.0) == doctest::Approx(0.3989422804).epsilon(1e-9));
    CHECK(kernel_eval(gaussian, 1.5) == kernel_eval(gaussian, -1.5));
    CHECK(kernel_eval(gaussian, 40.0) >= 0.0);
}

TEST_CASE("epanechnikov kernel support") {
    const KernelSpec epa{KernelFamily::epanechnikov};
    CHECK(kernel_eval(epa, 2.0) == 0.0);
    CHECK(kernel_eval(epa, -1.001) == 0.0);
    CHECK(kernel_eval(epa, 0.0) == doctest::Approx(0.75));
    CHECK(kernel_eval(epa, 0.5) == kernel_eval(epa, -0.5));
}

TEST_CASE("kernels integrate to one") {
    for (auto family : {KernelFamily::gaussian, KernelFamily::epanechnikov}) {
        const KernelSpec spec{family};
        const double integral = oracle::simpson(
            [&](double u) { return kernel_eval(spec, u); }, -10.0, 10.0, 20000);
        CHECK(integral == doctest::Approx(1.0).epsilon(1e-8));
    }
}

TEST_CASE("rule-of-thumb bandwidth examples") {
    CHECK(rule_of_thumb_bandwidth(0.5, 100000) == doctest::Approx(0.053).epsilon(1e-9));
    CHECK(rule_of_thumb_bandwidth(0.5, 32) == doctest::Approx(0.265).epsilon(1e-9));
    // Bernoulli variance vanishes at the boundary; the floor takes over.
    const double n_rate = std::pow(1000.0, -0.2);
    CHECK(rule_of_thumb_bandwidth(0.0, 1000) == doctest::Approx(n_rate / 10.0));
    CHECK(rule_of_thumb_bandwidth(1.0, 17) == doctest::Approx(std::pow(17.0, -0.2) / 10.0));
}

TEST_CASE("bandwidth is positive, floored and non-increasing in n") {
    std::size_t ns[] = {1, 2, 10, 100, 5000, 1000000};
    for (double s : {0.0, 0.05, 0.3, 0.5, 0.77, 1.0}) {
        double prev = 1e9;
        for (std::size_t n : ns) {
            const double h = rule_of_thumb_bandwidth(s, n);
            CHECK(h > 0.0);
            CHECK(h >= std::pow(static_cast<double>(n), -0.2) / 10.0);
            CHECK(h <= prev);
            prev = h;
        }
    }
}

TEST_CASE("bandwidth rule rejects out-of-range scores") {
    CHECK_THROWS_AS(rule_of_thumb_bandwidth(-0.1, 10), std::invalid_argument);
    CHECK_THROWS_AS(rule_of_thumb_bandwidth(1.1, 10), std::invalid_argument);
    CHECK_THROWS_AS(rule_of_thumb_bandwidth(0.5, 0), std::invalid_argument);
}
