#pragma once

#include "parity/data_model.hpp"
#include "parity/np_estimator.hpp"

#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace parity {

//! Evaluation scores for grid-based testing: empirical percentiles of the
//! pooled instance scores, duplicates collapsed.
struct ScoreGrid {
    std::vector<double> points;
    std::vector<double> source_percentiles;
};

//! Percentiles 1, 5, 10, ..., 95, 99.
std::vector<double> default_grid_percentiles();

ScoreGrid build_score_grid(const ClusteredDataset& reference,
                           std::span<const double> percentiles, std::size_t k = 0);
ScoreGrid build_score_grid(const ClusteredDataset& reference, std::size_t k = 0);

enum class Correction { bonferroni, holm };
Correction correction_from_string(const std::string& name);
std::string to_string(Correction correction);

struct PointTest {
    double s = 0.0;
    double f1 = 0.0, f2 = 0.0;
    double se1 = 0.0, se2 = 0.0;
    double z = 0.0;
    double p_raw = 1.0;
    double p_adj = 1.0;
    bool testable = false;
    bool low_mass = false;
};

//! Pair of grid points where a lower score carries a significantly higher
//! estimated outcome in another group. Heuristic screen, no size control.
struct OrderingViolation {
    std::string group_low;  // group with the higher outcome at the lower score
    std::string group_high;
    double s_low = 0.0, s_high = 0.0;
    double f_low = 0.0, f_high = 0.0;
    double margin = 0.0; // exceedance over the 2 (se + se) tolerance band
};

struct GroupCurve {
    std::string group;
    std::vector<PointEstimate> points;
};

struct ParityTestReport {
    std::string g1, g2;
    Mode mode = Mode::user_level;
    std::size_t k = 0;
    double alpha = 0.05;
    Correction correction = Correction::bonferroni;
    bool one_sided = false;
    bool reject = false;
    std::size_t tested_points = 0;
    std::vector<PointTest> points;
    std::vector<std::string> warnings;
    std::vector<OrderingViolation> ordering_violations;
    double min_p_adj = 1.0;
};

struct TestOptions {
    Correction correction = Correction::bonferroni;
    bool one_sided = false;
    KernelSpec kernel;
    BandwidthRule bandwidth;
};

//! Pointwise z-tests of equality of the two groups' conditional expected
//! outcomes over the grid, with family-wise error control. Points where a
//! group has no kernel mass are marked untestable and excluded from the
//! correction factor.
ParityTestReport parity_test(const ClusteredDataset& dataset, const std::string& g1,
                             const std::string& g2, const ScoreGrid& grid, double alpha,
                             Mode mode = Mode::user_level, std::size_t k = 0,
                             const TestOptions& options = {});

//! Single-point test of equal marginal outcomes at threshold t_star using
//! the truncated estimator (instances with score >= t_star only). When
//! t_star lies below every observed score the truncation is vacuous and the
//! test evaluates at the minimum observed score.
ParityTestReport marginal_outcome_test(const ClusteredDataset& dataset, const std::string& g1,
                                       const std::string& g2, double t_star, double h,
                                       double alpha, std::size_t k = 0,
                                       const TestOptions& options = {});

//! Flags all grid pairs (s < s') where one group's estimate at s exceeds
//! another group's at s' by more than 2 (se(s) + se(s')).
std::vector<OrderingViolation> ordering_diagnostic(std::span<const GroupCurve> curves,
                                                   std::span<const double> grid_points);

nlohmann::json report_to_json(const ParityTestReport& report);

} // namespace parity
