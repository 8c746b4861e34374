#pragma once

#include "parity/calibration.hpp"
#include "parity/data_model.hpp"
#include "parity/metrics.hpp"
#include "parity/np_estimator.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace parity {

//! Bootstrap evaluation protocol: per replicate, cluster-bootstrap the
//! scored test set, split it in half by member, fit each calibrator per
//! group on the first half, transform the second half, and score the four
//! metrics on it.
struct ExperimentConfig {
    std::vector<std::string> methods{"none", "binning", "linear_interp", "platt", "isotonic"};
    std::size_t bootstrap_iterations = 200;
    double alpha = 0.05;
    Mode mode = Mode::user_level;
    std::uint64_t seed = 0;
    std::vector<double> grid_percentiles; // empty: the default percentile list
    std::size_t ece_bins = 10;
    std::size_t calibrator_bins = 10;
    bool member_weighted = false;
    KernelSpec kernel;
    BandwidthRule bandwidth;
    std::size_t threads = 0; // 0: hardware concurrency
};

struct MetricSummary {
    double mean = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    bool significant = false; // 95% CI does not overlap the baseline's
    bool improved = false;    // significant and in the better direction
};

struct MethodRow {
    std::string method;
    std::map<std::string, MetricSummary> metrics; // npce, parity_error, auc, ece
};

struct ComparisonTable {
    std::vector<MethodRow> rows; // baseline "none" first
    std::size_t replicates_run = 0;
    std::size_t replicates_failed = 0;
};

ComparisonTable run_experiment(const ClusteredDataset& scored_test_set,
                               const ExperimentConfig& config);

//! Plot data: per method, group and mode, the estimated outcome curve on a
//! held-out half after calibrating on the other half.
struct CurvePoint {
    std::string method;
    std::string mode;
    std::string group;
    double s = 0.0;
    double estimate = 0.0;
    double std_error = 0.0;
};

std::vector<CurvePoint> experiment_curves(const ClusteredDataset& scored_test_set,
                                          const ExperimentConfig& config);

//! Writes report.json, comparison.csv and curves.csv under out_dir.
void emit_report(const ComparisonTable& table, const std::vector<CurvePoint>& curves,
                 const ExperimentConfig& config, const std::string& out_dir);

nlohmann::json comparison_to_json(const ComparisonTable& table);

//! Fit one calibrator family per group on a member-half of the data, as a
//! single replicate of the protocol does. Exposed for the CLI `calibrate`.
Calibrator fit_method(const ClusteredDataset& train, const std::string& method,
                      const ExperimentConfig& config);

} // namespace parity
