#include "parity/data_model.hpp"

#include "parity/errors.hpp"
#include "parity/stats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

namespace parity {

namespace {

std::string trim(std::string_view s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string_view::npos) return {};
    const auto end = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(begin, end - begin + 1));
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

double parse_cell(const std::string& raw, std::size_t row, const std::string& col,
                  bool allow_missing) {
    const std::string cell = trim(raw);
    if (cell.empty()) {
        if (allow_missing) return std::numeric_limits<double>::quiet_NaN();
        throw data_error("row " + std::to_string(row) + ": empty value in column '" + col + "'");
    }
    double value = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last)
        throw data_error("row " + std::to_string(row) + ": cannot parse '" + cell +
                         "' in column '" + col + "' as a number");
    return value;
}

std::string format_value(double v) {
    if (std::isnan(v)) return {};
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

ClusteredDataset ClusteredDataset::build(std::vector<MemberDraft> drafts, std::size_t k,
                                         bool bounded) {
    if (k == 0) throw data_error("objective count K must be at least 1");
    ClusteredDataset ds;
    ds.k_ = k;
    ds.bounded_ = bounded;
    std::unordered_map<std::string, int> level_of;
    ds.members_.reserve(drafts.size());
    for (auto& draft : drafts) {
        if (draft.instances.empty())
            throw data_error("member '" + draft.member_id + "' has no instances");
        const std::string label = trim(draft.group);
        if (label.empty())
            throw data_error("member '" + draft.member_id + "' has an empty group label");
        auto [it, inserted] = level_of.try_emplace(label, static_cast<int>(ds.group_levels_.size()));
        if (inserted) ds.group_levels_.push_back(label);
        Member member;
        member.member_id = std::move(draft.member_id);
        member.group = it->second;
        member.instances = std::move(draft.instances);
        for (const auto& obs : member.instances) {
            if (obs.scores.size() != k || obs.outcomes.size() != k)
                throw data_error("member '" + member.member_id +
                                 "': observation length does not match K=" + std::to_string(k));
            if (bounded) {
                for (double s : obs.scores)
                    if (!(s >= 0.0 && s <= 1.0))
                        throw data_error("member '" + member.member_id + "': score " +
                                         std::to_string(s) +
                                         " outside [0,1] in a bounded dataset");
            }
        }
        ds.n_total_ += member.instances.size();
        ds.members_.push_back(std::move(member));
    }
    return ds;
}

std::optional<int> ClusteredDataset::group_index(std::string_view label) const {
    const std::string needle = trim(label);
    for (std::size_t i = 0; i < group_levels_.size(); ++i)
        if (group_levels_[i] == needle) return static_cast<int>(i);
    return std::nullopt;
}

std::size_t ClusteredDataset::group_member_count(int index) const {
    std::size_t n = 0;
    for (const auto& m : members_)
        if (m.group == index) ++n;
    return n;
}

std::size_t ClusteredDataset::group_instance_count(int index) const {
    std::size_t n = 0;
    for (const auto& m : members_)
        if (m.group == index) n += m.instances.size();
    return n;
}

std::vector<double> ClusteredDataset::pooled_scores(std::size_t k, std::optional<int> group) const {
    if (k >= k_) throw data_error("objective index out of range");
    std::vector<double> out;
    out.reserve(n_total_);
    for (const auto& m : members_) {
        if (group && m.group != *group) continue;
        for (const auto& obs : m.instances) out.push_back(obs.scores[k]);
    }
    return out;
}

CsvSchema parse_schema_spec(const std::string& spec) {
    CsvSchema schema;
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ',')) {
        const auto eq = part.find('=');
        if (eq == std::string::npos)
            throw data_error("bad --schema entry '" + part + "' (expected key=value)");
        const std::string key = trim(part.substr(0, eq));
        const std::string value = trim(part.substr(eq + 1));
        if (key == "member_id") schema.member_col = value;
        else if (key == "group") schema.group_col = value;
        else if (key == "score") schema.score_cols = {value};
        else if (key == "outcome") schema.outcome_cols = {value};
        else throw data_error("unknown --schema key '" + key + "'");
    }
    return schema;
}

ClusteredDataset load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw data_error("'" + path + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const auto header = split_line(line);
    std::unordered_map<std::string, std::size_t> col_of;
    for (std::size_t i = 0; i < header.size(); ++i) col_of[trim(header[i])] = i;

    const auto require = [&](const std::string& name) {
        const auto it = col_of.find(name);
        if (it == col_of.end())
            throw data_error("'" + path + "': missing required column '" + name + "'");
        return it->second;
    };

    const std::size_t member_col = require(schema.member_col);
    const std::size_t group_col = require(schema.group_col);

    // Resolve score/outcome columns. Auto-detection accepts `score` or
    // `score_1` for the first objective, then `score_2`, `score_3`, ...
    const auto detect = [&](const std::string& base) {
        std::vector<std::string> names;
        if (col_of.count(base)) names.push_back(base);
        else if (col_of.count(base + "_1")) names.push_back(base + "_1");
        else return names;
        for (std::size_t j = 2;; ++j) {
            const std::string name = base + "_" + std::to_string(j);
            if (!col_of.count(name)) break;
            names.push_back(name);
        }
        return names;
    };

    std::vector<std::string> score_names =
        schema.score_cols.empty() ? detect("score") : schema.score_cols;
    std::vector<std::string> outcome_names =
        schema.outcome_cols.empty() ? detect("outcome") : schema.outcome_cols;
    if (score_names.empty()) throw data_error("'" + path + "': no score column found");
    if (outcome_names.size() != score_names.size())
        throw data_error("'" + path + "': found " + std::to_string(score_names.size()) +
                         " score column(s) but " + std::to_string(outcome_names.size()) +
                         " outcome column(s)");

    std::vector<std::size_t> score_idx, outcome_idx;
    for (const auto& n : score_names) score_idx.push_back(require(n));
    for (const auto& n : outcome_names) outcome_idx.push_back(require(n));
    const std::size_t k = score_idx.size();

    std::vector<MemberDraft> drafts;
    std::unordered_map<std::string, std::size_t> draft_of;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != header.size())
            throw data_error("row " + std::to_string(row) + ": expected " +
                             std::to_string(header.size()) + " cells, found " +
                             std::to_string(cells.size()));
        const std::string id = trim(cells[member_col]);
        const std::string group = trim(cells[group_col]);
        if (id.empty()) throw data_error("row " + std::to_string(row) + ": empty member id");

        Observation obs;
        obs.scores.reserve(k);
        obs.outcomes.reserve(k);
        for (std::size_t j = 0; j < k; ++j)
            obs.scores.push_back(parse_cell(cells[score_idx[j]], row, score_names[j], false));
        for (std::size_t j = 0; j < k; ++j)
            obs.outcomes.push_back(parse_cell(cells[outcome_idx[j]], row, outcome_names[j],
                                              schema.allow_missing_outcomes));

        auto [it, inserted] = draft_of.try_emplace(id, drafts.size());
        if (inserted) {
            drafts.push_back(MemberDraft{id, group, {}});
        } else if (drafts[it->second].group != group) {
            throw data_error("row " + std::to_string(row) + ": member '" + id +
                             "' appears with groups '" + drafts[it->second].group + "' and '" +
                             group + "'");
        }
        drafts[it->second].instances.push_back(std::move(obs));
    }
    if (drafts.empty()) throw data_error("'" + path + "' contains no data rows");
    return ClusteredDataset::build(std::move(drafts), k, schema.bounded);
}

void write_csv(const ClusteredDataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write '" + path + "'");
    out << "member_id,group";
    const std::size_t k = dataset.k();
    out << ",score";
    for (std::size_t j = 2; j <= k; ++j) out << ",score_" << j;
    out << ",outcome";
    for (std::size_t j = 2; j <= k; ++j) out << ",outcome_" << j;
    out << "\n";
    for (const auto& m : dataset.members()) {
        for (const auto& obs : m.instances) {
            out << m.member_id << ',' << dataset.group_label(m.group);
            for (double s : obs.scores) out << ',' << format_value(s);
            for (double y : obs.outcomes) out << ',' << format_value(y);
            out << "\n";
        }
    }
    if (!out) throw data_error("failed while writing '" + path + "'");
}

std::pair<ClusteredDataset, ClusteredDataset> split(const ClusteredDataset& dataset,
                                                    double fraction, std::uint64_t seed) {
    if (dataset.member_count() == 0) throw data_error("cannot split an empty dataset");
    if (!(fraction > 0.0 && fraction < 1.0))
        throw data_error("split fraction must lie in (0, 1)");

    const std::size_t m = dataset.member_count();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    auto rng = stats::make_rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    const auto n_left =
        static_cast<std::size_t>(std::llround(fraction * static_cast<double>(m)));
    std::vector<bool> left(m, false);
    for (std::size_t i = 0; i < std::min(n_left, m); ++i) left[order[i]] = true;

    std::vector<MemberDraft> lhs, rhs;
    for (std::size_t i = 0; i < m; ++i) {
        const Member& member = dataset.members()[i];
        MemberDraft draft{member.member_id, dataset.group_label(member.group), member.instances};
        (left[i] ? lhs : rhs).push_back(std::move(draft));
    }
    auto make = [&](std::vector<MemberDraft>& drafts) {
        if (drafts.empty()) return ClusteredDataset();
        return ClusteredDataset::build(std::move(drafts), dataset.k(), dataset.bounded());
    };
    return {make(lhs), make(rhs)};
}

ClusteredDataset bootstrap_resample(const ClusteredDataset& dataset, std::uint64_t seed) {
    const std::size_t m = dataset.member_count();
    if (m == 0) throw data_error("cannot resample an empty dataset");
    auto rng = stats::make_rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, m - 1);

    std::vector<MemberDraft> drafts;
    drafts.reserve(m);
    std::unordered_map<std::size_t, std::size_t> seen;
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t j = pick(rng);
        const Member& member = dataset.members()[j];
        std::string id = member.member_id;
        const std::size_t occurrence = seen[j]++;
        if (occurrence > 0) id += "~" + std::to_string(occurrence);
        drafts.push_back(MemberDraft{std::move(id), dataset.group_label(member.group),
                                     member.instances});
    }
    return ClusteredDataset::build(std::move(drafts), dataset.k(), dataset.bounded());
}

} // namespace parity
