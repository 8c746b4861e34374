#include "parity/scorer.hpp"

#include "parity/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

namespace parity {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return {};
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::optional<double> try_parse(const std::string& raw) {
    const std::string cell = trim(raw);
    if (cell.empty()) return std::nullopt;
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc() || ptr != cell.data() + cell.size()) return std::nullopt;
    return value;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

//! Cholesky solve of (symmetric positive definite) A x = b, in place.
std::vector<double> solve_spd(std::vector<std::vector<double>> a, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double sum = a[i][j];
            for (std::size_t k = 0; k < j; ++k) sum -= a[i][k] * a[j][k];
            if (i == j) {
                if (sum <= 0.0) throw stat_error("normal equations not positive definite");
                a[i][i] = std::sqrt(sum);
            } else {
                a[i][j] = sum / a[j][j];
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        double sum = b[i];
        for (std::size_t k = 0; k < i; ++k) sum -= a[i][k] * b[k];
        b[i] = sum / a[i][i];
    }
    for (std::size_t i = n; i-- > 0;) {
        double sum = b[i];
        for (std::size_t k = i + 1; k < n; ++k) sum -= a[k][i] * b[k];
        b[i] = sum / a[i][i];
    }
    return b;
}

} // namespace

CsvTable CsvTable::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open '" + path + "'");
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw data_error("'" + path + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    {
        std::size_t start = 0;
        while (true) {
            const auto pos = line.find(',', start);
            table.columns.push_back(trim(line.substr(start, pos - start)));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
    }
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        std::vector<std::string> row;
        std::size_t start = 0;
        while (true) {
            const auto pos = line.find(',', start);
            row.push_back(trim(line.substr(start, pos - start)));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        if (row.size() != table.columns.size())
            throw data_error("'" + path + "': ragged row with " + std::to_string(row.size()) +
                             " cells");
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::size_t CsvTable::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return i;
    throw data_error("table has no column '" + name + "'");
}

std::vector<double> BaselineScorer::encode_row(const std::vector<std::string>& row) const {
    std::vector<double> x;
    for (const auto& enc : encodings_) {
        const std::string& cell = row[enc.source];
        if (enc.numeric) {
            const auto v = try_parse(cell);
            x.push_back(((v ? *v : enc.mean) - enc.mean) / enc.sd);
        } else {
            for (const auto& category : enc.categories)
                x.push_back(cell == category ? 1.0 : 0.0);
        }
    }
    return x;
}

BaselineScorer BaselineScorer::fit(const CsvTable& train, const ScorerOptions& options) {
    if (train.rows.empty()) throw data_error("empty training table");
    BaselineScorer scorer;
    scorer.options_ = options;

    const std::size_t target = train.column_index(options.target_col);
    std::set<std::size_t> excluded{target};
    if (!options.group_col.empty()) excluded.insert(train.column_index(options.group_col));
    if (!options.id_col.empty()) excluded.insert(train.column_index(options.id_col));

    for (std::size_t c = 0; c < train.columns.size(); ++c) {
        if (excluded.count(c)) continue;
        ColumnEncoding enc;
        enc.source = c;
        enc.numeric = true;
        for (const auto& row : train.rows) {
            if (!try_parse(row[c])) {
                enc.numeric = false;
                break;
            }
        }
        if (enc.numeric) {
            double sum = 0.0, sum2 = 0.0;
            for (const auto& row : train.rows) {
                const double v = *try_parse(row[c]);
                sum += v;
                sum2 += v * v;
            }
            const auto n = static_cast<double>(train.rows.size());
            enc.mean = sum / n;
            enc.sd = std::sqrt(std::max(sum2 / n - enc.mean * enc.mean, 1e-12));
        } else {
            std::set<std::string> seen;
            for (const auto& row : train.rows) seen.insert(row[c]);
            enc.categories.assign(seen.begin(), seen.end());
        }
        scorer.encodings_.push_back(std::move(enc));
    }

    std::vector<std::vector<double>> x;
    std::vector<double> y;
    x.reserve(train.rows.size());
    for (const auto& row : train.rows) {
        const auto raw = try_parse(row[target]);
        if (!raw) throw data_error("non-numeric target value '" + row[target] + "'");
        double label = *raw;
        if (options.binarize_target_gt) label = label > *options.binarize_target_gt ? 1.0 : 0.0;
        if (label != 0.0 && label != 1.0)
            throw data_error("target must be binary 0/1 (use binarize_target_gt)");
        x.push_back(scorer.encode_row(row));
        y.push_back(label);
    }

    const std::size_t p = x.front().size();
    std::vector<double> w(p + 1, 0.0); // last entry: intercept
    const auto nll = [&](const std::vector<double>& weights) {
        double total = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            double eta = weights[p];
            for (std::size_t j = 0; j < p; ++j) eta += weights[j] * x[i][j];
            const double softplus = eta > 30.0 ? eta : std::log1p(std::exp(eta));
            total += softplus - y[i] * eta;
        }
        for (std::size_t j = 0; j < p; ++j) total += 0.5 * options.l2 * weights[j] * weights[j];
        return total;
    };

    double current = nll(w);
    for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
        std::vector<double> grad(p + 1, 0.0);
        std::vector<std::vector<double>> hess(p + 1, std::vector<double>(p + 1, 0.0));
        for (std::size_t i = 0; i < x.size(); ++i) {
            double eta = w[p];
            for (std::size_t j = 0; j < p; ++j) eta += w[j] * x[i][j];
            const double prob = logistic(eta);
            const double r = prob - y[i];
            const double q = std::max(prob * (1.0 - prob), 1e-10);
            for (std::size_t j = 0; j < p; ++j) {
                grad[j] += r * x[i][j];
                for (std::size_t l = 0; l <= j; ++l) hess[j][l] += q * x[i][j] * x[i][l];
                hess[p][j] += q * x[i][j];
            }
            grad[p] += r;
            hess[p][p] += q;
        }
        for (std::size_t j = 0; j < p; ++j) {
            grad[j] += options.l2 * w[j];
            hess[j][j] += options.l2;
        }
        for (std::size_t j = 0; j <= p; ++j)
            for (std::size_t l = j + 1; l <= p; ++l) hess[j][l] = hess[l][j];
        // Small ridge keeps the system solvable under perfect separation.
        for (std::size_t j = 0; j <= p; ++j) hess[j][j] += 1e-8;

        double gnorm = 0.0;
        for (double g : grad) gnorm += g * g;
        if (std::sqrt(gnorm) < 1e-6 * static_cast<double>(x.size())) break;

        const auto delta = solve_spd(hess, grad);
        double step = 1.0;
        std::vector<double> next(w);
        for (int halvings = 0; halvings < 40; ++halvings) {
            for (std::size_t j = 0; j <= p; ++j) next[j] = w[j] - step * delta[j];
            const double candidate = nll(next);
            if (candidate <= current + 1e-12) {
                w = next;
                current = candidate;
                break;
            }
            step *= 0.5;
        }
    }

    scorer.weights_.assign(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(p));
    scorer.intercept_ = w[p];

    std::size_t correct = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double eta = scorer.intercept_;
        for (std::size_t j = 0; j < p; ++j) eta += scorer.weights_[j] * x[i][j];
        if ((logistic(eta) >= 0.5 ? 1.0 : 0.0) == y[i]) ++correct;
    }
    scorer.train_accuracy_ = static_cast<double>(correct) / static_cast<double>(x.size());
    return scorer;
}

std::vector<double> BaselineScorer::score(const CsvTable& table) const {
    std::vector<double> scores;
    scores.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        const auto x = encode_row(row);
        double eta = intercept_;
        for (std::size_t j = 0; j < x.size(); ++j) eta += weights_[j] * x[j];
        scores.push_back(logistic(eta));
    }
    return scores;
}

ClusteredDataset scored_dataset(const CsvTable& table, std::vector<double> scores,
                                const ScorerOptions& options) {
    if (scores.size() != table.rows.size())
        throw data_error("score count does not match the table");
    const std::size_t target = table.column_index(options.target_col);
    const std::size_t group = table.column_index(options.group_col);
    const std::optional<std::size_t> id =
        options.id_col.empty() ? std::nullopt
                               : std::optional<std::size_t>(table.column_index(options.id_col));

    std::vector<MemberDraft> drafts;
    std::map<std::string, std::size_t> draft_of;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        const auto raw = try_parse(row[target]);
        if (!raw) throw data_error("non-numeric target value '" + row[target] + "'");
        double label = *raw;
        if (options.binarize_target_gt) label = label > *options.binarize_target_gt ? 1.0 : 0.0;

        const std::string member_id = id ? row[*id] : "row" + std::to_string(i);
        Observation obs{{std::clamp(scores[i], 0.0, 1.0)}, {label}};
        auto [it, inserted] = draft_of.try_emplace(member_id, drafts.size());
        if (inserted) drafts.push_back(MemberDraft{member_id, row[group], {}});
        drafts[it->second].instances.push_back(std::move(obs));
    }
    return ClusteredDataset::build(std::move(drafts), 1, true);
}

} // namespace parity
