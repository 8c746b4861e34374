#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace parity::stats {

double normal_pdf(double x);
double normal_cdf(double x);

//! Two-sided p-value for a standard normal z statistic.
double two_sided_p(double z);

//! One-sided p-value for H1: z > 0.
double upper_p(double z);

double mean(std::span<const double> x);

//! Population-convention variance (divide by n).
double variance_pop(std::span<const double> x);

//! Empirical percentile with linear interpolation between order
//! statistics. `p` in [0, 100]; `sorted` must be ascending and non-empty.
double percentile_sorted(std::span<const double> sorted, double p);

//! Convenience overload that copies and sorts.
double percentile(std::vector<double> x, double p);

//! splitmix64 step; used to derive independent seeds for parallel streams.
std::uint64_t splitmix64(std::uint64_t& state);

//! Deterministic sub-seed for stream `stream` of a base seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
    return std::mt19937_64(derive_seed(seed, stream));
}

//! Beta(a, b) draw via two gamma variates. a = b = 1 reduces to uniform.
double beta_draw(std::mt19937_64& rng, double a, double b);

} // namespace parity::stats
