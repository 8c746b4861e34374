#include "parity/kernel.hpp"

#include "parity/errors.hpp"

#include <cmath>
#include <stdexcept>

namespace parity {

namespace {
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
} // namespace

double kernel_eval(const KernelSpec& spec, double u) {
    switch (spec.family) {
    case KernelFamily::gaussian:
        return kInvSqrt2Pi * std::exp(-0.5 * u * u);
    case KernelFamily::epanechnikov:
        return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
    }
    throw std::logic_error("unknown kernel family");
}

double rule_of_thumb_bandwidth(double s, std::size_t n) {
    if (n == 0) throw std::invalid_argument("bandwidth rule requires n >= 1");
    if (s < 0.0 || s > 1.0)
        throw std::invalid_argument("bandwidth rule requires a score in [0, 1]");
    const double rate = std::pow(static_cast<double>(n), -0.2);
    const double thumb = 1.06 * std::sqrt(s * (1.0 - s)) * rate;
    return std::max(thumb, rate / 10.0);
}

KernelFamily kernel_family_from_string(const std::string& name) {
    if (name == "gaussian") return KernelFamily::gaussian;
    if (name == "epanechnikov") return KernelFamily::epanechnikov;
    throw data_error("unknown kernel '" + name + "' (expected gaussian or epanechnikov)");
}

std::string to_string(KernelFamily family) {
    return family == KernelFamily::gaussian ? "gaussian" : "epanechnikov";
}

} // namespace parity
