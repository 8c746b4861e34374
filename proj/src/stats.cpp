#include "parity/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace parity::stats {

namespace {
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
constexpr double kInvSqrt2 = 0.7071067811865475244;
} // namespace

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double two_sided_p(double z) {
    if (std::isnan(z)) return 1.0;
    return std::erfc(std::abs(z) * kInvSqrt2);
}

double upper_p(double z) {
    if (std::isnan(z)) return 1.0;
    return 0.5 * std::erfc(z * kInvSqrt2);
}

double mean(std::span<const double> x) {
    if (x.empty()) throw std::invalid_argument("mean of empty range");
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

double variance_pop(std::span<const double> x) {
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size());
}

double percentile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw std::invalid_argument("percentile of empty range");
    if (p <= 0.0) return sorted.front();
    if (p >= 100.0) return sorted.back();
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p / 100.0;
    const auto lo = static_cast<std::size_t>(h);
    const double frac = h - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

double percentile(std::vector<double> x, double p) {
    std::sort(x.begin(), x.end());
    return percentile_sorted(x, p);
}

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t state = seed;
    std::uint64_t z = splitmix64(state);
    state ^= stream * 0xda942042e4dd58b5ULL;
    z ^= splitmix64(state);
    return z;
}

double beta_draw(std::mt19937_64& rng, double a, double b) {
    if (a <= 0.0 || b <= 0.0) throw std::invalid_argument("beta parameters must be positive");
    if (a == 1.0 && b == 1.0) {
        return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    }
    std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
    const double x = ga(rng);
    const double y = gb(rng);
    const double s = x + y;
    return s > 0.0 ? x / s : 0.5;
}

} // namespace parity::stats
