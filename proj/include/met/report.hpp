#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "met/fusion.hpp"
#include "met/retrieval.hpp"

namespace met {

// ---------------------------------------------------------------------------
// Results tables

struct TableRow {
    std::string model;
    std::vector<double> values;
    bool rule_above = false;  ///< partial rule over the model and value columns
};

struct TableGroup {
    std::string stage;
    std::vector<TableRow> rows;
};

/// A stage/model table: groups of rows under a stage label, one value column
/// per metric. Values print with one decimal; the maximum of each column is
/// set in bold in the LaTeX form.
struct ResultsTable {
    std::vector<std::string> columns;
    std::vector<TableGroup> groups;
};

std::string render_latex(const ResultsTable& t);
std::string render_plain(const ResultsTable& t);

/// Retrieval rows (text and image channel) and ranking rows (each matcher
/// alone, then the fused model) over the chosen Hits@N cut-offs.
ResultsTable experiment_table(const HitsReport& text_channel, const HitsReport& image_channel,
                              const std::array<HitsReport, kNumMatchers>& single, const HitsReport& full,
                              std::span<const std::size_t> cutoffs);

/// One row per ablation entry, test-split values.
ResultsTable ablation_table(std::span<const AblationRow> rows, std::span<const std::size_t> cutoffs);

// ---------------------------------------------------------------------------
// JSON records

nlohmann::json hits_to_json(const HitsReport& h);
HitsReport hits_from_json(const nlohmann::json& j);

nlohmann::json weights_to_json(const FusionWeights& w);
FusionWeights weights_from_json(const nlohmann::json& j);

/// One candidate-dump record.
nlohmann::json candidate_to_json(std::string_view query_id, const Candidate& c);
Candidate candidate_from_json(const nlohmann::json& j);

/// One score-cache record (a whole query).
nlohmann::json scored_query_to_json(std::string_view split, const ScoredQuery& q);
ScoredQuery scored_query_from_json(const nlohmann::json& j);

/// Stage-2 input for one query from its candidates and their score vectors.
ScoredQuery make_scored_query(const QueryPair& query, std::span<const Candidate> candidates,
                              std::vector<ScoreVector> scores);

// ---------------------------------------------------------------------------
// Files. Readers throw DataError naming the file when it is missing or a
// line does not parse.

using CandidateMap = std::map<std::string, std::vector<Candidate>>;  ///< query id -> candidates

void write_candidates(const std::filesystem::path& path, std::span<const QueryPair> queries,
                      std::span<const std::vector<Candidate>> candidates);
CandidateMap read_candidates(const std::filesystem::path& path);

struct ScoreCache {
    std::vector<ScoredQuery> dev;
    std::vector<ScoredQuery> test;
};

void write_score_cache(const std::filesystem::path& path, const ScoreCache& cache);
ScoreCache read_score_cache(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

/// Canonical serialization used for every JSON file: two-space indent,
/// keys in byte order, trailing newline.
std::string dump_json(const nlohmann::json& j);

/// Labels offered for manual error analysis of missed queries.
inline constexpr std::array<const char*, 3> kMissLabels = {"Noisy", "Hard", "Wrong"};

/// Queries whose gold entity is not ranked first, with the top entity and
/// the gold rank; the label field is left for manual annotation.
std::string miss_list_jsonl(std::span<const ScoredQuery> queries, const FusionWeights& w);

}  // namespace met
