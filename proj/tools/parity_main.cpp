#include "parity/calibration.hpp"
#include "parity/data_model.hpp"
#include "parity/errors.hpp"
#include "parity/harness.hpp"
#include "parity/marginal.hpp"
#include "parity/metrics.hpp"
#include "parity/np_estimator.hpp"
#include "parity/parity_testing.hpp"
#include "parity/scorer.hpp"
#include "parity/stats.hpp"
#include "parity/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>

namespace {

using namespace parity;

struct GlobalFlags {
    std::string mode = "user";
    double alpha = 0.05;
    std::uint64_t seed = 0;
    std::string kernel = "gaussian";
    std::string bandwidth = "auto";
    std::size_t bins = 10;
    std::string output;
    std::string schema;
};

KernelSpec kernel_of(const GlobalFlags& flags) {
    return KernelSpec{kernel_family_from_string(flags.kernel)};
}

BandwidthRule bandwidth_of(const GlobalFlags& flags) {
    BandwidthRule rule;
    if (flags.bandwidth != "auto") rule.fixed = std::stod(flags.bandwidth);
    return rule;
}

CsvSchema schema_of(const GlobalFlags& flags, bool allow_missing = false) {
    CsvSchema schema = flags.schema.empty() ? CsvSchema{} : parse_schema_spec(flags.schema);
    schema.allow_missing_outcomes = allow_missing;
    return schema;
}

void write_json(const nlohmann::json& j, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << j.dump(2) << std::endl;
        return;
    }
    std::ofstream out(path);
    if (!out) throw data_error("cannot write '" + path + "'");
    out << j.dump(2) << "\n";
}

TrueCurve parse_curve(const std::string& spec) {
    if (spec == "identity") return TrueCurve::identity();
    if (spec.rfind("shift:", 0) == 0) return TrueCurve::shifted(std::stod(spec.substr(6)));
    if (spec.rfind("logistic:", 0) == 0) {
        const auto body = spec.substr(9);
        const auto comma = body.find(',');
        if (comma == std::string::npos)
            throw data_error("logistic curve needs two parameters: logistic:a,b");
        return TrueCurve::logistic_curve(std::stod(body.substr(0, comma)),
                                         std::stod(body.substr(comma + 1)));
    }
    throw data_error("unknown curve spec '" + spec +
                     "' (expected identity, shift:<d> or logistic:<a>,<b>)");
}

int run(int argc, char** argv) {
    CLI::App app{"Predictive rate parity auditing and mitigation for clustered data"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalFlags flags;
    app.add_option("--mode", flags.mode, "user or aggregate conditional expectations")
        ->check(CLI::IsMember({"user", "aggregate"}));
    app.add_option("--alpha", flags.alpha, "significance level");
    app.add_option("--seed", flags.seed, "random seed");
    app.add_option("--kernel", flags.kernel, "gaussian or epanechnikov")
        ->check(CLI::IsMember({"gaussian", "epanechnikov"}));
    app.add_option("--bandwidth", flags.bandwidth, "auto or a fixed width");
    app.add_option("--bins", flags.bins, "bin count for binning calibrators and ECE");
    app.add_option("--output,-o", flags.output, "output file or directory");
    app.add_option("--schema", flags.schema,
                   "column remapping, e.g. member_id=user,group=sex,score=p,outcome=y");

    // ---- test ----
    auto* cmd_test = app.add_subcommand("test", "parity or marginal-outcome test on a scored CSV");
    std::string test_input, test_g1, test_g2, test_correction = "bonferroni";
    std::optional<double> test_threshold;
    bool test_one_sided = false, test_ordering = false, test_allow_missing = false;
    cmd_test->add_option("--input,-i", test_input)->required();
    cmd_test->add_option("--g1", test_g1, "first group label")->required();
    cmd_test->add_option("--g2", test_g2, "second group label")->required();
    cmd_test->add_option("--threshold", test_threshold,
                         "run the marginal-outcome test at this threshold");
    cmd_test->add_option("--correction", test_correction)
        ->check(CLI::IsMember({"bonferroni", "holm"}));
    cmd_test->add_flag("--one-sided", test_one_sided);
    cmd_test->add_flag("--ordering", test_ordering, "attach the score-ordering diagnostic");
    cmd_test->add_flag("--allow-missing-outcome", test_allow_missing,
                       "accept empty outcome cells (below-threshold labels)");

    // ---- calibrate ----
    auto* cmd_cal = app.add_subcommand("calibrate", "fit a per-group calibrator and save it");
    std::string cal_input, cal_method = "linear_interp";
    bool cal_member_weighted = false;
    cmd_cal->add_option("--input,-i", cal_input)->required();
    cmd_cal->add_option("--method", cal_method)
        ->check(CLI::IsMember({"binning", "linear_interp", "platt", "isotonic",
                               "multi_objective"}));
    cmd_cal->add_flag("--member-weighted", cal_member_weighted);

    // ---- apply ----
    auto* cmd_apply = app.add_subcommand("apply", "transform scores with a saved calibrator");
    std::string apply_input, apply_calibrator;
    cmd_apply->add_option("--input,-i", apply_input)->required();
    cmd_apply->add_option("--calibrator,-c", apply_calibrator)->required();

    // ---- evaluate ----
    auto* cmd_eval = app.add_subcommand("evaluate", "bootstrap comparison of calibration methods");
    std::string eval_input;
    std::vector<std::string> eval_methods{"none", "binning", "linear_interp", "platt",
                                          "isotonic"};
    std::size_t eval_bootstrap = 200;
    bool eval_member_weighted = false;
    cmd_eval->add_option("--input,-i", eval_input)->required();
    cmd_eval->add_option("--methods", eval_methods)->delimiter(',');
    cmd_eval->add_option("--bootstrap,-B", eval_bootstrap);
    cmd_eval->add_flag("--member-weighted", eval_member_weighted);

    // ---- marginal ----
    auto* cmd_marginal =
        app.add_subcommand("marginal", "group-specific threshold solver at a marginal threshold");
    std::string marg_input, marg_g1, marg_g2;
    double marg_threshold = 0.5, marg_window = 0.0;
    bool marg_allow_missing = false;
    cmd_marginal->add_option("--input,-i", marg_input)->required();
    cmd_marginal->add_option("--g1", marg_g1)->required();
    cmd_marginal->add_option("--g2", marg_g2)->required();
    cmd_marginal->add_option("--threshold,-t", marg_threshold)->required();
    cmd_marginal->add_option("--window", marg_window,
                             "below-threshold regression window (0: 20% of the range above)");
    cmd_marginal->add_flag("--allow-missing-outcome", marg_allow_missing);

    // ---- simulate ----
    auto* cmd_sim = app.add_subcommand("simulate", "generate clustered synthetic data");
    std::vector<std::string> sim_groups{"g1=identity", "g2=identity"};
    std::size_t sim_members = 1000;
    double sim_lambda = 3.0, sim_tau = 0.0, sim_beta_a = 1.0, sim_beta_b = 1.0;
    std::string sim_preset;
    cmd_sim->add_option("--group", sim_groups,
                        "name=curve, curve in identity|shift:<d>|logistic:<a>,<b>");
    cmd_sim->add_option("--members,-m", sim_members, "members per group");
    cmd_sim->add_option("--lambda", sim_lambda, "instance count is 1 + Poisson(lambda)");
    cmd_sim->add_option("--tau", sim_tau, "member random-effect sd on the logit scale");
    cmd_sim->add_option("--beta-a", sim_beta_a);
    cmd_sim->add_option("--beta-b", sim_beta_b);
    cmd_sim->add_option("--preset", sim_preset, "named scenario: divergence")
        ->check(CLI::IsMember({"divergence"}));

    // ---- score ----
    auto* cmd_score = app.add_subcommand(
        "score", "fit the baseline logistic scorer on features and emit a scored CSV");
    std::string score_train, score_test, score_target, score_group, score_id;
    double score_l2 = 1.0;
    std::optional<double> score_binarize;
    cmd_score->add_option("--train", score_train)->required();
    cmd_score->add_option("--test", score_test,
                          "rows to score (defaults to the training table)");
    cmd_score->add_option("--target", score_target)->required();
    cmd_score->add_option("--group", score_group)->required();
    cmd_score->add_option("--id", score_id, "member id column (defaults to the row number)");
    cmd_score->add_option("--l2", score_l2);
    cmd_score->add_option("--binarize-target-gt", score_binarize,
                          "binarize the target as raw > threshold");

    CLI11_PARSE(app, argc, argv);

    const Mode mode = mode_from_string(flags.mode);
    TestOptions test_options;
    test_options.kernel = kernel_of(flags);
    test_options.bandwidth = bandwidth_of(flags);

    if (cmd_test->parsed()) {
        test_options.correction = correction_from_string(test_correction);
        test_options.one_sided = test_one_sided;
        const auto dataset = load_csv(test_input, schema_of(flags, test_allow_missing));
        ParityTestReport report;
        if (test_threshold) {
            const std::size_t n_members =
                dataset.group_member_count(dataset.group_index(test_g1).value_or(0));
            const double h = test_options.bandwidth.fixed
                                 ? *test_options.bandwidth.fixed
                                 : rule_of_thumb_bandwidth(
                                       std::clamp(*test_threshold, 0.0, 1.0),
                                       std::max<std::size_t>(n_members, 1));
            report = marginal_outcome_test(dataset, test_g1, test_g2, *test_threshold, h,
                                           flags.alpha, 0, test_options);
        } else {
            const auto grid = build_score_grid(dataset);
            report =
                parity_test(dataset, test_g1, test_g2, grid, flags.alpha, mode, 0, test_options);
            if (test_ordering) {
                std::vector<GroupCurve> curves;
                for (const auto& group : {test_g1, test_g2}) {
                    curves.push_back(GroupCurve{
                        group, estimate_curve(dataset, group, grid.points, mode, 0,
                                              test_options.bandwidth, test_options.kernel)});
                }
                report.ordering_violations = ordering_diagnostic(curves, grid.points);
            }
        }
        write_json(report_to_json(report), flags.output);
        return 0;
    }

    if (cmd_cal->parsed()) {
        const auto dataset = load_csv(cal_input, schema_of(flags));
        FitOptions options;
        options.bins = flags.bins;
        options.member_weighted = cal_member_weighted;
        options.kernel = kernel_of(flags);
        options.bandwidth = bandwidth_of(flags);
        const auto calibrator =
            fit_per_group(dataset, calibrator_family_from_string(cal_method), 0, options);
        write_json(calibrator.to_json(), flags.output);
        return 0;
    }

    if (cmd_apply->parsed()) {
        const auto dataset = load_csv(apply_input, schema_of(flags));
        std::ifstream in(apply_calibrator);
        if (!in) throw data_error("cannot open calibrator '" + apply_calibrator + "'");
        nlohmann::json j;
        in >> j;
        const auto calibrator = Calibrator::from_json(j);
        const auto transformed = calibrator.transform(dataset);
        if (flags.output.empty()) throw data_error("apply requires --output <csv>");
        write_csv(transformed, flags.output);
        return 0;
    }

    if (cmd_eval->parsed()) {
        const auto dataset = load_csv(eval_input, schema_of(flags));
        ExperimentConfig config;
        config.methods = eval_methods;
        config.bootstrap_iterations = eval_bootstrap;
        config.alpha = flags.alpha;
        config.mode = mode;
        config.seed = flags.seed;
        config.ece_bins = flags.bins;
        config.calibrator_bins = flags.bins;
        config.member_weighted = eval_member_weighted;
        config.kernel = kernel_of(flags);
        config.bandwidth = bandwidth_of(flags);
        const auto table = run_experiment(dataset, config);
        const auto curves = experiment_curves(dataset, config);
        const std::string out_dir = flags.output.empty() ? "parity_report" : flags.output;
        emit_report(table, curves, config, out_dir);
        std::cout << "wrote " << out_dir << "/report.json, comparison.csv, curves.csv"
                  << std::endl;
        return 0;
    }

    if (cmd_marginal->parsed()) {
        const auto dataset = load_csv(marg_input, schema_of(flags, marg_allow_missing));
        const auto g1_idx = dataset.group_index(marg_g1);
        const auto g2_idx = dataset.group_index(marg_g2);
        if (!g1_idx || !g2_idx) throw stat_error("both groups must be present");
        const auto scores_g1 = dataset.pooled_scores(0, *g1_idx);
        const auto scores_g2 = dataset.pooled_scores(0, *g2_idx);
        double window = marg_window;
        if (window <= 0.0) {
            double hi = marg_threshold;
            for (double s : scores_g1) hi = std::max(hi, s);
            for (double s : scores_g2) hi = std::max(hi, s);
            window = 0.2 * std::max(hi - marg_threshold, 1e-6);
        }
        const auto pred1 =
            fit_outcome_predictor(dataset, marg_g1, marg_threshold, window, 0, kernel_of(flags));
        const auto pred2 =
            fit_outcome_predictor(dataset, marg_g2, marg_threshold, window, 0, kernel_of(flags));
        const double n1 = static_cast<double>(scores_g1.size());
        const double n2 = static_cast<double>(scores_g2.size());
        const auto solution = solve_fair_thresholds(
            pred1, pred2, EmpiricalCdf(scores_g1), EmpiricalCdf(scores_g2), n1 / (n1 + n2),
            n2 / (n1 + n2), marg_threshold);
        write_json(marginal_solution_to_json(solution, pred1, pred2), flags.output);
        return 0;
    }

    if (cmd_sim->parsed()) {
        SynthConfig config;
        config.lambda = sim_lambda;
        config.tau = sim_tau;
        config.seed = flags.seed;
        if (sim_preset == "divergence") {
            config = divergence_config(sim_members, flags.seed);
        } else {
            for (const auto& spec : sim_groups) {
                const auto eq = spec.find('=');
                if (eq == std::string::npos)
                    throw data_error("--group expects name=curve, got '" + spec + "'");
                SynthGroup group;
                group.name = spec.substr(0, eq);
                group.curve = parse_curve(spec.substr(eq + 1));
                group.members = sim_members;
                group.beta_a = sim_beta_a;
                group.beta_b = sim_beta_b;
                config.groups.push_back(std::move(group));
            }
        }
        auto [dataset, truth] = generate(config);
        const std::string out = flags.output.empty() ? "synthetic.csv" : flags.output;
        write_csv(dataset, out);
        write_json(synth_config_to_json(config), out + ".truth.json");
        std::cout << "wrote " << out << " (" << dataset.member_count() << " members, "
                  << dataset.instance_count() << " instances) and " << out << ".truth.json"
                  << std::endl;
        return 0;
    }

    if (cmd_score->parsed()) {
        const auto train = CsvTable::load(score_train);
        ScorerOptions options;
        options.target_col = score_target;
        options.group_col = score_group;
        options.id_col = score_id;
        options.l2 = score_l2;
        options.binarize_target_gt = score_binarize;
        const auto scorer = BaselineScorer::fit(train, options);
        const auto table = score_test.empty() ? train : CsvTable::load(score_test);
        auto scores = scorer.score(table);
        const auto dataset = scored_dataset(table, std::move(scores), options);
        if (flags.output.empty()) throw data_error("score requires --output <csv>");
        write_csv(dataset, flags.output);
        std::cout << "scored " << dataset.instance_count() << " rows (train accuracy "
                  << scorer.train_accuracy() << ", " << scorer.feature_count() << " features)"
                  << std::endl;
        return 0;
    }

    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const parity::data_error& err) {
        std::cerr << "data error: " << err.what() << std::endl;
        return 2;
    } catch (const parity::stat_error& err) {
        std::cerr << "statistical error: " << err.what() << std::endl;
        return 3;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << std::endl;
        return 1;
    }
}
