#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace parity {

//! One engagement of a member with the system: K scores and the K
//! corresponding observed outcomes (binary 0/1 in classification use).
struct Observation {
    std::vector<double> scores;
    std::vector<double> outcomes;
};

//! A member (cluster). Instances within a member may be dependent;
//! members are independent of each other. `group` indexes into the owning
//! dataset's group_levels().
struct Member {
    std::string member_id;
    int group = -1;
    std::vector<Observation> instances;
};

//! Pre-interning description of a member, used to construct datasets.
struct MemberDraft {
    std::string member_id;
    std::string group;
    std::vector<Observation> instances;
};

//! Immutable clustered dataset. Thread-safe for concurrent reads after
//! construction.
class ClusteredDataset {
public:
    ClusteredDataset() = default;

    //! Interns group labels (trimmed, first-appearance order), validates the
    //! per-member and per-observation invariants, and computes totals.
    static ClusteredDataset build(std::vector<MemberDraft> drafts, std::size_t k,
                                  bool bounded = true);

    const std::vector<Member>& members() const { return members_; }
    const std::vector<std::string>& group_levels() const { return group_levels_; }
    std::size_t k() const { return k_; }
    std::size_t member_count() const { return members_.size(); }
    std::size_t instance_count() const { return n_total_; }
    bool bounded() const { return bounded_; }

    std::optional<int> group_index(std::string_view label) const;
    const std::string& group_label(int index) const { return group_levels_.at(static_cast<std::size_t>(index)); }
    std::size_t group_member_count(int index) const;
    std::size_t group_instance_count(int index) const;

    //! All instance scores of objective `k`, pooled over members (optionally
    //! restricted to one group).
    std::vector<double> pooled_scores(std::size_t k, std::optional<int> group = std::nullopt) const;

private:
    std::vector<Member> members_;
    std::vector<std::string> group_levels_;
    std::size_t k_ = 0;
    std::size_t n_total_ = 0;
    bool bounded_ = true;
};

//! Column mapping for CSV ingestion. Empty score/outcome lists auto-detect
//! `score[,score_2,...]` / `outcome[,outcome_2,...]` (or `score_1`, ...).
struct CsvSchema {
    std::string member_col = "member_id";
    std::string group_col = "group";
    std::vector<std::string> score_cols;
    std::vector<std::string> outcome_cols;
    bool bounded = true;
    //! When set, empty outcome cells load as NaN instead of failing. Only the
    //! threshold-truncated estimators accept such instances.
    bool allow_missing_outcomes = false;
};

//! Parse `k1=v1,k2=v2` remappings as passed to the CLI `--schema` flag.
CsvSchema parse_schema_spec(const std::string& spec);

ClusteredDataset load_csv(const std::string& path, const CsvSchema& schema = {});
void write_csv(const ClusteredDataset& dataset, const std::string& path);

//! Member-level split: every instance of a member lands on one side.
//! Reproducible for a given seed.
std::pair<ClusteredDataset, ClusteredDataset> split(const ClusteredDataset& dataset,
                                                    double fraction, std::uint64_t seed);

//! Cluster bootstrap: samples member_count() members with replacement,
//! keeping each sampled member's full instance list. Repeated members get
//! distinct synthetic ids.
ClusteredDataset bootstrap_resample(const ClusteredDataset& dataset, std::uint64_t seed);

} // namespace parity
