#include "met/pipeline.hpp"

#include <cmath>

#include <omp.h>

#include "met/error.hpp"
#include "met/scorer_protocol.hpp"

namespace met {

using json = nlohmann::json;

void RunConfig::validate() const
{
    retrieval.validate();
    hnsw.validate();
    if (instances < 1) {
        throw ConfigError("instances (K) must be >= 1");
    }
    if (grid.empty()) {
        throw ConfigError("grid must not be empty");
    }
    for (double g : grid) {
        if (!std::isfinite(g) || g < 0.0) {
            throw ConfigError("grid values must be finite and non-negative");
        }
    }
    if (!(bm25.k1 > 0.0) || !(bm25.b >= 0.0 && bm25.b <= 1.0)) {
        throw ConfigError("bm25: k1 must be positive and b in [0, 1]");
    }
    if (toy_dim < 1) {
        throw ConfigError("toy_dim must be >= 1");
    }
    if (threads < 0) {
        throw ConfigError("threads must be >= 0");
    }
}

json config_to_json(const RunConfig& cfg)
{
    json providers = json::object();
    for (auto k : kMatcherKinds) {
        providers[to_string(k)] = to_string(cfg.binding.provider[index_of(k)]);
    }
    return {
        {"data_dir", cfg.data_dir.string()},
        {"work_dir", cfg.work_dir.string()},
        {"raw_dir", cfg.raw_dir.string()},
        {"n_texts", cfg.retrieval.n_texts},
        {"m_images", cfg.retrieval.m_images},
        {"pairing", cfg.retrieval.pairing == PairingMode::first ? "first" : "random"},
        {"pairing_seed", cfg.retrieval.pairing_seed},
        {"instances", cfg.instances},
        {"grid", cfg.grid},
        {"hnsw_m", cfg.hnsw.m},
        {"hnsw_ef_construction", cfg.hnsw.ef_construction},
        {"hnsw_ef_search", cfg.hnsw.ef_search},
        {"hnsw_seed", cfg.hnsw.seed},
        {"hnsw_metric", cfg.hnsw.metric == Metric::cosine ? "cosine" : "inner_product"},
        {"bm25_k1", cfg.bm25.k1},
        {"bm25_b", cfg.bm25.b},
        {"providers", providers},
        {"scorer_endpoint", resolve_endpoint(cfg.scorer_endpoint)},
        {"lexicon", cfg.lexicon.string()},
        {"text_embeddings", cfg.text_embeddings.string()},
        {"joint_text_embeddings", cfg.joint_text_embeddings.string()},
        {"toy_dim", cfg.toy_dim},
        {"synth",
         {{"entities", cfg.synth.num_entities},
          {"glosses_per_entity", cfg.synth.glosses_per_entity},
          {"images_per_entity", cfg.synth.images_per_entity},
          {"latent_dim", cfg.synth.latent_dim},
          {"image_dim", cfg.synth.image_dim},
          {"noise_sigma", cfg.synth.noise_sigma},
          {"vocab_size", cfg.synth.vocab_size},
          {"seed", cfg.synth.seed},
          {"tokens_per_entity", cfg.synth.tokens_per_entity},
          {"gloss_length", cfg.synth.gloss_length},
          {"stopword_count", cfg.synth.stopword_count},
          {"stopword_ratio", cfg.synth.stopword_ratio},
          {"dev_size", cfg.synth.dev_size},
          {"test_size", cfg.synth.test_size}}},
        {"split",
         {{"dev_size", cfg.split.dev_size},
          {"test_size", cfg.split.test_size},
          {"seed", cfg.split.seed},
          {"min_glosses", cfg.split.min_glosses},
          {"min_images", cfg.split.min_images}}},
        {"threads", cfg.threads},
    };
}

Dataset load_dataset(const RunConfig& cfg)
{
    Dataset d;
    d.kb = load_kb(cfg.data_dir);
    d.splits = load_splits(cfg.data_dir, d.kb);
    const auto lex = cfg.lexicon.empty() ? cfg.data_dir / kLexiconFile : cfg.lexicon;
    if (!cfg.lexicon.empty() || std::filesystem::exists(lex)) {
        d.lexicon = load_vector_store(lex);
    }
    return d;
}

SynthResult synth_dataset(const RunConfig& cfg)
{
    auto r = generate_synthetic_mkb(cfg.synth);
    save_kb(r.kb, cfg.data_dir);
    save_splits(r.splits, cfg.data_dir);
    save_vector_store(r.lexicon, cfg.data_dir / kLexiconFile);
    return r;
}

StageIndices build_indices(const KnowledgeBase& kb, const RunConfig& cfg)
{
    return {TextIndex::build(kb, cfg.bm25), HnswIndex::build(kb.images(), cfg.hnsw)};
}

std::vector<std::vector<Candidate>> retrieve_split(const KnowledgeBase& kb, const Indices& indices,
                                                   std::span<const QueryPair> queries, const RetrievalConfig& cfg)
{
    cfg.validate();
    std::vector<std::vector<Candidate>> out(queries.size());
    const auto n = static_cast<std::int64_t>(queries.size());
#pragma omp parallel for schedule(dynamic, 4)
    for (std::int64_t q = 0; q < n; ++q) {
        out[static_cast<std::size_t>(q)] = retrieve_candidates(kb, indices, queries[static_cast<std::size_t>(q)], cfg);
    }
    return out;
}

MatcherBundle make_matchers(const RunConfig& cfg, const Dataset& data)
{
    MatcherBundle b;
    MatcherResources res;
    res.toy_dim = cfg.toy_dim;
    res.lexicon = data.lexicon ? &*data.lexicon : nullptr;
    if (!cfg.text_embeddings.empty()) {
        b.text_embeddings = load_vector_store(cfg.text_embeddings);
        res.text_embeddings = &*b.text_embeddings;
    }
    if (!cfg.joint_text_embeddings.empty()) {
        b.joint_text_embeddings = load_vector_store(cfg.joint_text_embeddings);
        res.joint_text_embeddings = &*b.joint_text_embeddings;
    }
    const bool remote = std::any_of(cfg.binding.provider.begin(), cfg.binding.provider.end(),
                                    [](Provider p) { return p == Provider::remote; });
    if (remote) {
        const auto endpoint = resolve_endpoint(cfg.scorer_endpoint);
        if (endpoint.empty()) {
            throw ConfigError("a matcher is bound to remote but no scorer endpoint is set");
        }
        res.client = std::make_shared<ScorerClient>(endpoint);
    }
    b.set = std::make_unique<MatcherSet>(cfg.binding, res);
    return b;
}

std::vector<ScoredQuery> score_split(const KnowledgeBase& kb, std::span<const QueryPair> queries,
                                     std::span<const std::vector<Candidate>> candidates, MatcherSet& matchers,
                                     std::size_t instances)
{
    if (candidates.size() != queries.size()) {
        throw DataError("score_split: candidate lists and queries differ in length");
    }
    std::vector<ScoredQuery> out(queries.size());
    const auto n = static_cast<std::int64_t>(queries.size());
    auto one = [&](std::size_t q) {
        auto sv = score_candidates(kb, queries[q], candidates[q], matchers, instances);
        out[q] = make_scored_query(queries[q], candidates[q], std::move(sv));
    };
    if (!matchers.concurrent()) {
        for (std::size_t q = 0; q < queries.size(); ++q) {
            one(q);
        }
        return out;
    }
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 4)
    for (std::int64_t q = 0; q < n; ++q) {
        try {
            one(static_cast<std::size_t>(q));
        } catch (...) {
#pragma omp critical(met_score_failure)
            if (!failure) {
                failure = std::current_exception();
            }
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
    return out;
}

TuneResult tune(const ScoreCache& cache, const RunConfig& cfg)
{
    TuneResult t;
    t.search = grid_search_weights(cache.dev, cfg.grid);
    t.grid_size = cfg.grid.size();
    return t;
}

json tune_to_json(const TuneResult& t)
{
    return {
        {"weights", weights_to_json(t.search.weights)},
        {"dev", hits_to_json(t.search.dev)},
        {"evaluated", t.search.evaluated},
        {"grid_size", t.grid_size},
    };
}

TuneResult tune_from_json(const json& j)
{
    try {
        TuneResult t;
        t.search.weights = weights_from_json(j.at("weights"));
        t.search.dev = hits_from_json(j.at("dev"));
        t.search.evaluated = j.at("evaluated").get<std::size_t>();
        t.grid_size = j.at("grid_size").get<std::size_t>();
        return t;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed weights file: ") + e.what());
    }
}

EvalOutput evaluate_run(const RunConfig& cfg, const ScoreCache& cache, const TuneResult& tuned)
{
    if (cache.test.empty()) {
        throw DataError("score cache has no test queries");
    }
    const auto& w = tuned.search.weights;
    w.validate();
    const auto text = evaluate_channel(cache.test, true);
    const auto image = evaluate_channel(cache.test, false);
    std::array<HitsReport, kNumMatchers> single;
    json matchers = json::object();
    for (auto k : kMatcherKinds) {
        single[index_of(k)] = evaluate(cache.test, FusionWeights::one_hot(k));
        matchers[to_string(k)] = hits_to_json(single[index_of(k)]);
    }
    const auto full = evaluate(cache.test, w);

    EvalOutput out;
    out.report = {
        {"config", config_to_json(cfg)},
        {"weights", weights_to_json(w)},
        {"grid_evaluated", tuned.search.evaluated},
        {"dev", hits_to_json(tuned.search.dev)},
        {"test",
         {{"full", hits_to_json(full)},
          {"text_channel", hits_to_json(text)},
          {"image_channel", hits_to_json(image)},
          {"matchers", matchers}}},
        {"miss_labels", kMissLabels},
    };
    const std::array<std::size_t, 4> cutoffs = {1, 3, 10, 100};
    const auto table = experiment_table(text, image, single, full, cutoffs);
    out.table = render_plain(table);
    out.latex = render_latex(table);
    out.misses = miss_list_jsonl(cache.test, w);
    return out;
}

EvalOutput run_experiment(const RunConfig& cfg)
{
    cfg.validate();
    if (cfg.threads > 0) {
        omp_set_num_threads(cfg.threads);
    }
    const auto data = load_dataset(cfg);
    const auto idx = build_indices(data.kb, cfg);
    auto bundle = make_matchers(cfg, data);
    ScoreCache cache;
    for (const auto* split : {&data.splits.dev, &data.splits.test}) {
        const auto cands = retrieve_split(data.kb, idx.view(), *split, cfg.retrieval);
        auto scored = score_split(data.kb, *split, cands, *bundle.set, 1);
        (split == &data.splits.dev ? cache.dev : cache.test) = std::move(scored);
    }
    return evaluate_run(cfg, cache, tune(cache, cfg));
}

}  // namespace met
