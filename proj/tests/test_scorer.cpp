#include "parity/scorer.hpp"

#include "parity/errors.hpp"
#include "parity/metrics.hpp"
#include "parity/stats.hpp"

#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>

using namespace parity;

namespace {

std::string write_table(const std::string& name, const std::string& content) {
    const std::string path = "/tmp/parity_scorer_" + name;
    std::ofstream out(path);
    out << content;
    return path;
}

} // namespace

TEST_CASE("linearly separable features are learned to high accuracy") {
    std::string csv = "id,sex,x1,x2,y\n";
    auto rng = stats::make_rng(1);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int i = 0; i < 400; ++i) {
        const double x1 = unit(rng);
        const double x2 = unit(rng);
        const int y = x1 + x2 > 0 ? 1 : 0;
        csv += std::to_string(i) + (i % 2 ? ",m," : ",f,") + std::to_string(x1) + "," +
               std::to_string(x2) + "," + std::to_string(y) + "\n";
    }
    const auto path = write_table("separable.csv", csv);
    ScorerOptions options;
    options.target_col = "y";
    options.group_col = "sex";
    options.id_col = "id";
    options.l2 = 0.1;
    const auto scorer = BaselineScorer::fit(CsvTable::load(path), options);
    CHECK(scorer.train_accuracy() >= 0.95);
    std::remove(path.c_str());
}

TEST_CASE("constant features score everything at the base rate") {
    std::string csv = "id,g,x,y\n";
    for (int i = 0; i < 10; ++i)
        csv += std::to_string(i) + ",a,1.0," + (i < 3 ? "1" : "0") + "\n";
    const auto path = write_table("constant.csv", csv);
    ScorerOptions options;
    options.target_col = "y";
    options.group_col = "g";
    options.id_col = "id";
    const auto table = CsvTable::load(path);
    const auto scorer = BaselineScorer::fit(table, options);
    const auto scores = scorer.score(table);
    for (double s : scores) CHECK(s == doctest::Approx(0.3).epsilon(0.01));
    std::remove(path.c_str());
}

TEST_CASE("categorical features are one-hot encoded") {
    std::string csv = "id,g,color,y\n";
    for (int i = 0; i < 300; ++i) {
        const char* color = i % 3 == 0 ? "red" : (i % 3 == 1 ? "green" : "blue");
        const int y = i % 3 == 0 ? 1 : 0; // red predicts the positive class
        csv += std::to_string(i) + ",a," + color + "," + std::to_string(y) + "\n";
    }
    const auto path = write_table("categorical.csv", csv);
    ScorerOptions options;
    options.target_col = "y";
    options.group_col = "g";
    options.id_col = "id";
    options.l2 = 0.01;
    const auto table = CsvTable::load(path);
    const auto scorer = BaselineScorer::fit(table, options);
    CHECK(scorer.train_accuracy() >= 0.99);
    std::remove(path.c_str());
}

TEST_CASE("targets must be binary unless binarized") {
    std::string csv = "id,g,x,y\n0,a,0.1,2\n1,a,0.9,0\n";
    const auto path = write_table("multiclass.csv", csv);
    ScorerOptions options;
    options.target_col = "y";
    options.group_col = "g";
    options.id_col = "id";
    const auto table = CsvTable::load(path);
    CHECK_THROWS_AS(BaselineScorer::fit(table, options), data_error);
    options.binarize_target_gt = 0.0;
    CHECK_NOTHROW(BaselineScorer::fit(table, options));
    std::remove(path.c_str());
}

TEST_CASE("scored_dataset assembles the clustered data model") {
    std::string csv = "id,g,x,y\nu1,a,0.1,1\nu1,a,0.4,0\nu2,b,0.9,1\n";
    const auto path = write_table("assemble.csv", csv);
    ScorerOptions options;
    options.target_col = "y";
    options.group_col = "g";
    options.id_col = "id";
    const auto table = CsvTable::load(path);
    const auto ds = scored_dataset(table, {0.3, 0.5, 0.7}, options);
    CHECK(ds.member_count() == 2);
    CHECK(ds.instance_count() == 3);
    CHECK(ds.members()[0].instances[1].scores[0] == doctest::Approx(0.5));
    CHECK(ds.members()[1].instances[0].outcomes[0] == doctest::Approx(1.0));
    std::remove(path.c_str());
}

TEST_CASE("an informative scorer beats chance AUC out of sample") {
    auto make_csv = [](std::uint64_t seed, int n) {
        auto rng = stats::make_rng(seed);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::string csv = "id,g,x1,x2,y\n";
        for (int i = 0; i < n; ++i) {
            const double x1 = unit(rng);
            const double x2 = unit(rng);
            const double p = 1.0 / (1.0 + std::exp(-(3.0 * x1 - 2.0 * x2)));
            csv += std::to_string(i) + ",a," + std::to_string(x1) + "," + std::to_string(x2) +
                   "," + (unit(rng) < p ? "1" : "0") + "\n";
        }
        return csv;
    };
    const auto train_path = write_table("train.csv", make_csv(10, 3000));
    const auto test_path = write_table("test.csv", make_csv(11, 3000));
    ScorerOptions options;
    options.target_col = "y";
    options.group_col = "g";
    options.id_col = "id";
    const auto scorer = BaselineScorer::fit(CsvTable::load(train_path), options);
    const auto test = CsvTable::load(test_path);
    const auto ds = scored_dataset(test, scorer.score(test), options);
    CHECK(auc(ds) >= 0.70);
    std::remove(train_path.c_str());
    std::remove(test_path.c_str());
}
