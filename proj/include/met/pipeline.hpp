#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "met/dataset.hpp"
#include "met/fusion.hpp"
#include "met/hnsw.hpp"
#include "met/kb.hpp"
#include "met/matchers.hpp"
#include "met/report.hpp"
#include "met/retrieval.hpp"
#include "met/text_index.hpp"

namespace met {

/// Effective parameters of a run. Defaults: N = M = 100, K = 3, grid
/// {0, 0.1, ..., 0.9}.
struct RunConfig {
    std::filesystem::path data_dir = "data";
    std::filesystem::path work_dir = "work";
    std::filesystem::path raw_dir;  ///< build-kb input

    RetrievalConfig retrieval;
    std::size_t instances = 3;
    std::vector<double> grid = default_grid();
    HnswParams hnsw;
    Bm25Params bm25;

    ScorerBinding binding;
    std::string scorer_endpoint;
    std::filesystem::path lexicon;                ///< empty: <data_dir>/lexicon.mvec
    std::filesystem::path text_embeddings;        ///< precomputed TBM store
    std::filesystem::path joint_text_embeddings;  ///< precomputed CLIP text store
    std::size_t toy_dim = 256;

    SynthSpec synth;
    SplitSpec split;

    int threads = 0;  ///< 0: OpenMP default

    /// Throws ConfigError on an out-of-range parameter.
    void validate() const;
};

nlohmann::json config_to_json(const RunConfig& cfg);

// Work-directory file names.
namespace work_files {
inline constexpr const char* text_index = "text.mtix";
inline constexpr const char* image_index = "image.mann";
inline constexpr const char* candidates = "candidates.jsonl";
inline constexpr const char* scores = "scores.jsonl";
inline constexpr const char* weights = "weights.json";
inline constexpr const char* report = "report.json";
inline constexpr const char* report_table = "report.txt";
inline constexpr const char* report_latex = "report.tex";
inline constexpr const char* misses = "misses.jsonl";
inline constexpr const char* ablation = "ablation.json";
inline constexpr const char* ablation_table = "ablation.txt";
inline constexpr const char* assembled_scores = "scores_assembled.jsonl";
inline constexpr const char* assembled_weights = "weights_assembled.json";
inline constexpr const char* assembled_report = "report_assembled.json";
inline constexpr const char* stats = "stats.json";
inline constexpr const char* stats_table = "stats.txt";
inline constexpr const char* config_echo = "config_echo.ini";
}  // namespace work_files

inline constexpr const char* kLexiconFile = "lexicon.mvec";

struct Dataset {
    KnowledgeBase kb;
    Splits splits;
    std::optional<VectorStore> lexicon;
};

Dataset load_dataset(const RunConfig& cfg);
/// Writes the synthetic KB, splits and lexicon into cfg.data_dir.
SynthResult synth_dataset(const RunConfig& cfg);

struct StageIndices {
    TextIndex text;
    HnswIndex image;

    Indices view() const { return {text, image}; }
};

StageIndices build_indices(const KnowledgeBase& kb, const RunConfig& cfg);

/// Candidates per query, queries processed in parallel.
std::vector<std::vector<Candidate>> retrieve_split(const KnowledgeBase& kb, const Indices& indices,
                                                   std::span<const QueryPair> queries, const RetrievalConfig& cfg);

/// Owns the resources a MatcherSet borrows.
struct MatcherBundle {
    std::optional<VectorStore> text_embeddings;
    std::optional<VectorStore> joint_text_embeddings;
    std::unique_ptr<MatcherSet> set;
};

MatcherBundle make_matchers(const RunConfig& cfg, const Dataset& data);

/// Scored stage-2 input per query; parallel over queries when every scorer
/// allows it.
std::vector<ScoredQuery> score_split(const KnowledgeBase& kb, std::span<const QueryPair> queries,
                                     std::span<const std::vector<Candidate>> candidates, MatcherSet& matchers,
                                     std::size_t instances);

struct TuneResult {
    GridSearchResult search;
    std::size_t grid_size = 0;
};

TuneResult tune(const ScoreCache& cache, const RunConfig& cfg);
nlohmann::json tune_to_json(const TuneResult& t);
TuneResult tune_from_json(const nlohmann::json& j);

struct EvalOutput {
    nlohmann::json report;
    std::string table;
    std::string latex;
    std::string misses;
};

/// Test-split report: channel rows, single-matcher rows and the fused model
/// under the tuned weights, plus dev Hits and the config echo.
EvalOutput evaluate_run(const RunConfig& cfg, const ScoreCache& cache, const TuneResult& tuned);

/// The whole chain in one process: load, index, retrieve, score, tune,
/// evaluate. Produces the same report as the chained commands.
EvalOutput run_experiment(const RunConfig& cfg);

}  // namespace met
