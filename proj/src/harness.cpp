#include "parity/harness.hpp"

#include "parity/errors.hpp"
#include "parity/parity_testing.hpp"
#include "parity/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

namespace parity {

namespace {

const std::vector<std::string> kMetricNames{"npce", "parity_error", "auc", "ece"};

bool lower_is_better(const std::string& metric) { return metric != "auc"; }

struct ReplicateResult {
    bool ok = false;
    // [method][metric] in kMetricNames order
    std::vector<std::array<double, 4>> values;
};

std::vector<std::string> methods_with_baseline(const ExperimentConfig& config) {
    std::vector<std::string> methods;
    methods.push_back("none");
    for (const auto& m : config.methods)
        if (m != "none" && std::find(methods.begin(), methods.end(), m) == methods.end())
            methods.push_back(m);
    if (config.methods.empty()) throw data_error("no calibration methods requested");
    return methods;
}

std::vector<double> grid_percentiles(const ExperimentConfig& config) {
    return config.grid_percentiles.empty() ? default_grid_percentiles()
                                           : config.grid_percentiles;
}

ReplicateResult run_replicate(const ClusteredDataset& test_set,
                              const std::vector<std::string>& methods,
                              const ExperimentConfig& config, std::size_t b) {
    ReplicateResult result;
    try {
        const auto boot =
            bootstrap_resample(test_set, stats::derive_seed(config.seed, 2 * b + 1));
        const auto [cal_train, cal_test] =
            split(boot, 0.5, stats::derive_seed(config.seed, 2 * b + 2));
        if (cal_train.member_count() == 0 || cal_test.member_count() == 0)
            throw stat_error("degenerate half-split");

        const auto percentiles = grid_percentiles(config);
        MetricOptions metric_options{config.kernel, config.bandwidth};
        result.values.reserve(methods.size());
        for (const auto& method : methods) {
            ClusteredDataset train_t, test_t;
            if (method == "none") {
                train_t = cal_train;
                test_t = cal_test;
            } else {
                const auto cal = fit_method(cal_train, method, config);
                train_t = cal.transform(cal_train);
                test_t = cal.transform(cal_test);
            }
            // The evaluation grid tracks each method's own transformed
            // training-score percentiles.
            const auto grid = build_score_grid(train_t, percentiles);
            std::array<double, 4> row{};
            row[0] = npce(test_t, grid, config.mode, 0, metric_options).value;
            row[1] = parity_error(test_t, grid, config.mode, 0, metric_options).value;
            row[2] = auc(test_t);
            row[3] = ece(test_t, config.ece_bins);
            result.values.push_back(row);
        }
        result.ok = true;
    } catch (const stat_error&) {
        result.ok = false;
    } catch (const data_error&) {
        result.ok = false;
    }
    return result;
}

} // namespace

Calibrator fit_method(const ClusteredDataset& train, const std::string& method,
                      const ExperimentConfig& config) {
    FitOptions options;
    options.bins = config.calibrator_bins;
    options.member_weighted = config.member_weighted;
    options.kernel = config.kernel;
    options.bandwidth = config.bandwidth;
    return fit_per_group(train, calibrator_family_from_string(method), 0, options);
}

ComparisonTable run_experiment(const ClusteredDataset& scored_test_set,
                               const ExperimentConfig& config) {
    if (config.bootstrap_iterations < 2)
        throw data_error("bootstrap iteration count must be at least 2");
    if (scored_test_set.k() != 1)
        throw data_error("the experiment protocol evaluates single-objective scored data");
    const auto methods = methods_with_baseline(config);

    const std::size_t n_threads = std::max<std::size_t>(
        1, config.threads ? config.threads : std::thread::hardware_concurrency());
    std::vector<ReplicateResult> replicates(config.bootstrap_iterations);
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t b = next.fetch_add(1);
            if (b >= replicates.size()) break;
            replicates[b] = run_replicate(scored_test_set, methods, config, b);
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    ComparisonTable table;
    table.replicates_run = replicates.size();
    for (const auto& r : replicates)
        if (!r.ok) ++table.replicates_failed;
    if (10 * table.replicates_failed > table.replicates_run)
        throw stat_error("more than 10% of bootstrap replicates failed (" +
                         std::to_string(table.replicates_failed) + "/" +
                         std::to_string(table.replicates_run) + ")");

    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        MethodRow row;
        row.method = methods[mi];
        for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
            std::vector<double> values;
            values.reserve(replicates.size());
            for (const auto& r : replicates)
                if (r.ok) values.push_back(r.values[mi][k]);
            MetricSummary summary;
            summary.mean = stats::mean(values);
            std::sort(values.begin(), values.end());
            summary.ci_lo = stats::percentile_sorted(values, 2.5);
            summary.ci_hi = stats::percentile_sorted(values, 97.5);
            row.metrics[kMetricNames[k]] = summary;
        }
        table.rows.push_back(std::move(row));
    }

    const auto& baseline = table.rows.front();
    for (std::size_t mi = 1; mi < table.rows.size(); ++mi) {
        for (const auto& name : kMetricNames) {
            auto& summary = table.rows[mi].metrics[name];
            const auto& base = baseline.metrics.at(name);
            summary.significant =
                summary.ci_hi < base.ci_lo || summary.ci_lo > base.ci_hi;
            const bool better = lower_is_better(name) ? summary.mean < base.mean
                                                      : summary.mean > base.mean;
            summary.improved = summary.significant && better;
        }
    }
    return table;
}

std::vector<CurvePoint> experiment_curves(const ClusteredDataset& scored_test_set,
                                          const ExperimentConfig& config) {
    const auto methods = methods_with_baseline(config);
    const auto [cal_train, cal_test] =
        split(scored_test_set, 0.5, stats::derive_seed(config.seed, 0));
    if (cal_train.member_count() == 0 || cal_test.member_count() == 0)
        throw stat_error("dataset too small to split for curve estimation");

    std::vector<CurvePoint> points;
    for (const auto& method : methods) {
        ClusteredDataset train_t, test_t;
        if (method == "none") {
            train_t = cal_train;
            test_t = cal_test;
        } else {
            const auto cal = fit_method(cal_train, method, config);
            train_t = cal.transform(cal_train);
            test_t = cal.transform(cal_test);
        }
        const auto grid = build_score_grid(train_t, grid_percentiles(config));
        for (const auto& group : test_t.group_levels()) {
            for (Mode mode : {Mode::user_level, Mode::aggregate}) {
                for (double s : grid.points) {
                    try {
                        const double single[1] = {s};
                        const auto est = estimate_curve(test_t, group, single, mode, 0,
                                                        config.bandwidth, config.kernel);
                        points.push_back(CurvePoint{method, to_string(mode), group, s,
                                                    est[0].value, est[0].std_error});
                    } catch (const stat_error&) {
                        // point not estimable for this group; skip
                    }
                }
            }
        }
    }
    return points;
}

nlohmann::json comparison_to_json(const ComparisonTable& table) {
    nlohmann::json j;
    j["replicates_run"] = table.replicates_run;
    j["replicates_failed"] = table.replicates_failed;
    j["methods"] = nlohmann::json::array();
    for (const auto& row : table.rows) {
        nlohmann::json r;
        r["method"] = row.method;
        for (const auto& [name, summary] : row.metrics) {
            r[name] = {{"mean", summary.mean},
                       {"ci_lo", summary.ci_lo},
                       {"ci_hi", summary.ci_hi},
                       {"significant_vs_baseline", summary.significant},
                       {"improved_vs_baseline", summary.improved}};
        }
        j["methods"].push_back(std::move(r));
    }
    return j;
}

void emit_report(const ComparisonTable& table, const std::vector<CurvePoint>& curves,
                 const ExperimentConfig& config, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw data_error("cannot create output directory '" + out_dir + "'");

    nlohmann::json report;
    report["config"] = {{"methods", config.methods},
                        {"bootstrap_iterations", config.bootstrap_iterations},
                        {"alpha", config.alpha},
                        {"mode", to_string(config.mode)},
                        {"seed", config.seed},
                        {"ece_bins", config.ece_bins},
                        {"calibrator_bins", config.calibrator_bins},
                        {"member_weighted", config.member_weighted},
                        {"kernel", to_string(config.kernel.family)}};
    report["comparison"] = comparison_to_json(table);
    {
        std::ofstream out(fs::path(out_dir) / "report.json");
        if (!out) throw data_error("cannot write report.json");
        out << report.dump(2) << "\n";
    }
    {
        std::ofstream out(fs::path(out_dir) / "comparison.csv");
        if (!out) throw data_error("cannot write comparison.csv");
        out << "method,metric,mean,ci_lo,ci_hi,significant,improved\n";
        for (const auto& row : table.rows) {
            for (const auto& [name, s] : row.metrics) {
                out << row.method << ',' << name << ',' << s.mean << ',' << s.ci_lo << ','
                    << s.ci_hi << ',' << (s.significant ? 1 : 0) << ',' << (s.improved ? 1 : 0)
                    << "\n";
            }
        }
    }
    {
        std::ofstream out(fs::path(out_dir) / "curves.csv");
        if (!out) throw data_error("cannot write curves.csv");
        out << "method,mode,group,s,estimate,std_error\n";
        for (const auto& p : curves)
            out << p.method << ',' << p.mode << ',' << p.group << ',' << p.s << ','
                << p.estimate << ',' << p.std_error << "\n";
    }
}

} // namespace parity
