#pragma once

#include "parity/data_model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace parity {

//! Raw CSV table of strings; the scorer decides per column whether it is
//! numeric or categorical.
struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    static CsvTable load(const std::string& path);
    std::size_t column_index(const std::string& name) const;
};

struct ScorerOptions {
    std::string target_col;
    std::string group_col;
    std::string id_col; // empty: use the row number
    double l2 = 1.0;
    std::size_t max_iterations = 50;
    //! Binarize the target as raw > threshold (e.g. 0 for multi-level
    //! disease stages, 50000 for incomes).
    std::optional<double> binarize_target_gt;
};

//! L2-regularized logistic model over standardized numeric features and
//! one-hot encoded categorical features. The group attribute never enters
//! the features.
class BaselineScorer {
public:
    static BaselineScorer fit(const CsvTable& train, const ScorerOptions& options);

    std::vector<double> score(const CsvTable& table) const;
    double train_accuracy() const { return train_accuracy_; }
    std::size_t feature_count() const { return weights_.size(); }

private:
    struct ColumnEncoding {
        std::size_t source = 0;
        bool numeric = true;
        double mean = 0.0, sd = 1.0;
        std::vector<std::string> categories; // non-numeric: one indicator each
    };
    std::vector<double> encode_row(const std::vector<std::string>& row) const;

    ScorerOptions options_;
    std::vector<ColumnEncoding> encodings_;
    std::vector<double> weights_;
    double intercept_ = 0.0;
    double train_accuracy_ = 0.0;
};

//! Assemble a scored table into the clustered data model (one instance per
//! row; rows sharing an id become one member).
ClusteredDataset scored_dataset(const CsvTable& table, std::vector<double> scores,
                                const ScorerOptions& options);

} // namespace parity
