#pragma once

#include <cstddef>
#include <string>

namespace parity {

enum class KernelFamily { gaussian, epanechnikov };

//! Smoothing kernel. The bandwidth is supplied at call sites as
//! K_h(x) = K(x / h); Gaussian is the standard normal density,
//! Epanechnikov is 0.75 (1 - u^2) on [-1, 1].
struct KernelSpec {
    KernelFamily family = KernelFamily::gaussian;
};

double kernel_eval(const KernelSpec& spec, double u);

//! Rule-of-thumb bandwidth for outcome smoothing of probability scores:
//! max(1.06 sqrt(s (1 - s)) n^(-1/5), n^(-1/5) / 10). The second term is a
//! floor that keeps the bandwidth away from zero near s = 0 and s = 1.
//! `n` is the sample count relevant to the estimator: members of the group
//! in user-level mode, instances of the group in aggregate mode.
double rule_of_thumb_bandwidth(double s, std::size_t n);

KernelFamily kernel_family_from_string(const std::string& name);
std::string to_string(KernelFamily family);

} // namespace parity
