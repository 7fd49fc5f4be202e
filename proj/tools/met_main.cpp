// met: command-line driver for the retrieve-then-rank entity tagging pipeline.

#include <functional>
#include <iostream>
#include <map>

#include <omp.h>

#include <CLI11.hpp>

#include "met/dataset.hpp"
#include "met/error.hpp"
#include "met/pipeline.hpp"

namespace {

using namespace met;
namespace fs = std::filesystem;

enum Exit : int { ok = 0, unknown_command = 2, config_error = 3, data_error = 4, provider_error = 5 };

struct Options {
    RunConfig cfg;
    std::string pairing = "first";
    std::string metric = "cosine";
    std::array<std::string, kNumMatchers> providers{"toy", "toy", "toy", "toy"};
};

void add_options(CLI::App& app, Options& o)
{
    auto& c = o.cfg;
    app.option_defaults()->always_capture_default();
    app.add_option("--data-dir", c.data_dir, "Dataset directory (KB, splits, vectors)");
    app.add_option("--work-dir", c.work_dir, "Directory for indices, caches and reports");
    app.add_option("--raw-dir", c.raw_dir, "Unfiltered KB directory read by build-kb");

    app.add_option("--n-texts", c.retrieval.n_texts, "Texts retrieved per query (N)");
    app.add_option("--m-images", c.retrieval.m_images, "Images retrieved per query (M)");
    app.add_option("--pairing", o.pairing, "Evidence pairing: first or random")->check(CLI::IsMember({"first", "random"}));
    app.add_option("--pairing-seed", c.retrieval.pairing_seed, "Seed of random pairing");
    app.add_option("--instances", c.instances, "Instances averaged per modality by assemble-eval (K)");
    app.add_option("--grid", c.grid, "Weight grid values")->delimiter(',');

    app.add_option("--hnsw-m", c.hnsw.m, "HNSW links per node");
    app.add_option("--hnsw-ef-construction", c.hnsw.ef_construction, "HNSW build candidate list size");
    app.add_option("--hnsw-ef-search", c.hnsw.ef_search, "HNSW query candidate list size (0: max(128, 2k))");
    app.add_option("--hnsw-seed", c.hnsw.seed, "HNSW level seed");
    app.add_option("--hnsw-metric", o.metric, "cosine or inner_product")
        ->check(CLI::IsMember({"cosine", "inner_product"}));
    app.add_option("--bm25-k1", c.bm25.k1, "BM25 k1");
    app.add_option("--bm25-b", c.bm25.b, "BM25 b");

    const std::array<const char*, kNumMatchers> names = {"--provider-tbm", "--provider-tcm", "--provider-ibm",
                                                         "--provider-clip"};
    for (std::size_t i = 0; i < kNumMatchers; ++i) {
        app.add_option(names[i], o.providers[i], "toy, precomputed or remote")
            ->check(CLI::IsMember({"toy", "precomputed", "remote"}));
    }
    app.add_option("--scorer-endpoint", c.scorer_endpoint, "Remote scorer socket (overridden by MET_SCORER_ENDPOINT)");
    app.add_option("--lexicon", c.lexicon, "Token vectors of the toy joint text encoder");
    app.add_option("--text-embeddings", c.text_embeddings, "Precomputed TBM text embeddings");
    app.add_option("--joint-text-embeddings", c.joint_text_embeddings, "Precomputed CLIP text embeddings");
    app.add_option("--toy-dim", c.toy_dim, "Hashed bag-of-words dimension");

    app.add_option("--synth-entities", c.synth.num_entities);
    app.add_option("--synth-glosses", c.synth.glosses_per_entity);
    app.add_option("--synth-images", c.synth.images_per_entity);
    app.add_option("--synth-latent-dim", c.synth.latent_dim);
    app.add_option("--synth-image-dim", c.synth.image_dim);
    app.add_option("--synth-noise-sigma", c.synth.noise_sigma);
    app.add_option("--synth-vocab-size", c.synth.vocab_size);
    app.add_option("--synth-seed", c.synth.seed);
    app.add_option("--synth-tokens-per-entity", c.synth.tokens_per_entity);
    app.add_option("--synth-gloss-length", c.synth.gloss_length);
    app.add_option("--synth-stopwords", c.synth.stopword_count);
    app.add_option("--synth-stopword-ratio", c.synth.stopword_ratio);
    app.add_option("--synth-dev-size", c.synth.dev_size);
    app.add_option("--synth-test-size", c.synth.test_size);

    app.add_option("--dev-size", c.split.dev_size, "Dev entities drawn by build-kb");
    app.add_option("--test-size", c.split.test_size, "Test entities drawn by build-kb");
    app.add_option("--split-seed", c.split.seed);
    app.add_option("--min-glosses", c.split.min_glosses);
    app.add_option("--min-images", c.split.min_images);

    app.add_option("--threads", c.threads, "Worker thread cap (0: all cores); results do not depend on it");
}

void finish_options(Options& o)
{
    auto& c = o.cfg;
    c.retrieval.pairing = o.pairing == "random" ? PairingMode::random : PairingMode::first;
    c.hnsw.metric = o.metric == "inner_product" ? Metric::inner_product : Metric::cosine;
    for (std::size_t i = 0; i < kNumMatchers; ++i) {
        c.binding.provider[i] = provider_from_string(o.providers[i]);
    }
    c.validate();
    if (c.threads > 0) {
        omp_set_num_threads(c.threads);
    }
}

fs::path work(const RunConfig& c, const char* name) { return c.work_dir / name; }

std::vector<std::vector<Candidate>> candidates_for(const CandidateMap& m, std::span<const QueryPair> queries)
{
    std::vector<std::vector<Candidate>> out;
    for (const auto& q : queries) {
        auto it = m.find(q.query_id);
        out.push_back(it == m.end() ? std::vector<Candidate>{} : it->second);
    }
    return out;
}

ScoreCache score_all(const RunConfig& c, std::size_t instances)
{
    const auto data = load_dataset(c);
    const auto cands = read_candidates(work(c, work_files::candidates));
    auto bundle = make_matchers(c, data);
    ScoreCache cache;
    cache.dev = score_split(data.kb, data.splits.dev, candidates_for(cands, data.splits.dev), *bundle.set, instances);
    cache.test =
        score_split(data.kb, data.splits.test, candidates_for(cands, data.splits.test), *bundle.set, instances);
    return cache;
}

void write_eval(const fs::path& report, const EvalOutput& e, bool with_extras, const RunConfig& c)
{
    write_text(report, dump_json(e.report));
    if (with_extras) {
        write_text(work(c, work_files::report_table), e.table);
        write_text(work(c, work_files::report_latex), e.latex);
        write_text(work(c, work_files::misses), e.misses);
    }
}

int cmd_synth(const RunConfig& c)
{
    const auto r = synth_dataset(c);
    std::cout << "synthetic KB: " << r.kb.size() << " entities, " << r.kb.gloss_count() << " glosses, "
              << r.kb.image_count() << " images; train " << r.splits.train.size() << ", dev " << r.splits.dev.size()
              << ", test " << r.splits.test.size() << " -> " << c.data_dir.string() << "\n";
    return ok;
}

int cmd_build_kb(const RunConfig& c)
{
    if (c.raw_dir.empty()) {
        throw ConfigError("build-kb needs --raw-dir");
    }
    auto spec = c.split;
    const auto raw = load_kb(c.raw_dir);
    const auto r = filter_and_split(raw, spec);
    save_kb(r.kb, c.data_dir);
    save_splits(r.splits, c.data_dir);
    std::cout << "KB: " << r.kb.size() << " of " << raw.size() << " entities kept; train " << r.splits.train.size()
              << ", dev " << r.splits.dev.size() << ", test " << r.splits.test.size() << "\n";
    return ok;
}

int cmd_stats(const RunConfig& c)
{
    const auto s = compute_stats(load_kb(c.data_dir));
    write_text(work(c, work_files::stats), stats_to_json(s));
    const auto table = stats_to_table(s);
    write_text(work(c, work_files::stats_table), table);
    std::cout << table;
    return ok;
}

int cmd_index(const RunConfig& c)
{
    const auto kb = load_kb(c.data_dir);
    const auto idx = build_indices(kb, c);
    fs::create_directories(c.work_dir);
    idx.text.save(work(c, work_files::text_index));
    idx.image.save(work(c, work_files::image_index));
    std::cout << "indexed " << idx.text.num_docs() << " glosses, " << idx.image.size() << " images\n";
    return ok;
}

int cmd_retrieve(const RunConfig& c)
{
    const auto data = load_dataset(c);
    const auto text = TextIndex::load(work(c, work_files::text_index));
    const auto image = HnswIndex::load(work(c, work_files::image_index));
    const Indices view{text, image};
    std::vector<QueryPair> queries;
    std::vector<std::vector<Candidate>> cands;
    for (const auto* split : {&data.splits.dev, &data.splits.test}) {
        auto r = retrieve_split(data.kb, view, *split, c.retrieval);
        queries.insert(queries.end(), split->begin(), split->end());
        cands.insert(cands.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
    }
    write_candidates(work(c, work_files::candidates), queries, cands);
    std::cout << "candidates for " << queries.size() << " queries\n";
    return ok;
}

int cmd_score(const RunConfig& c)
{
    write_score_cache(work(c, work_files::scores), score_all(c, 1));
    return ok;
}

int cmd_tune(const RunConfig& c)
{
    const auto t = tune(read_score_cache(work(c, work_files::scores)), c);
    write_text(work(c, work_files::weights), dump_json(tune_to_json(t)));
    std::cout << "weights " << weights_to_json(t.search.weights).dump() << " (dev Hits@1 " << t.search.dev.at(1)
              << ", " << t.search.evaluated << " tuples)\n";
    return ok;
}

int cmd_eval(const RunConfig& c)
{
    const auto cache = read_score_cache(work(c, work_files::scores));
    const auto tuned = tune_from_json(read_json(work(c, work_files::weights)));
    const auto e = evaluate_run(c, cache, tuned);
    write_eval(work(c, work_files::report), e, true, c);
    std::cout << e.table;
    return ok;
}

int cmd_ablate(const RunConfig& c)
{
    const auto cache = read_score_cache(work(c, work_files::scores));
    const auto subsets = default_ablation_subsets();
    const auto rows = run_ablation(cache.dev, cache.test, c.grid, subsets);
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows) {
        j.push_back({{"name", r.name},
                     {"weights", weights_to_json(r.weights)},
                     {"dev", hits_to_json(r.dev)},
                     {"test", hits_to_json(r.test)}});
    }
    write_text(work(c, work_files::ablation), dump_json({{"config", config_to_json(c)}, {"rows", j}}));
    const std::array<std::size_t, 3> cutoffs = {1, 3, 10};
    const auto table = render_plain(ablation_table(rows, cutoffs));
    write_text(work(c, work_files::ablation_table), table);
    std::cout << table;
    return ok;
}

int cmd_assemble_eval(const RunConfig& c)
{
    const auto cache = score_all(c, c.instances);
    write_score_cache(work(c, work_files::assembled_scores), cache);
    const auto t = tune(cache, c);
    write_text(work(c, work_files::assembled_weights), dump_json(tune_to_json(t)));
    const auto e = evaluate_run(c, cache, t);
    write_eval(work(c, work_files::assembled_report), e, false, c);
    std::cout << "K = " << c.instances << "\n" << e.table;
    return ok;
}

int classify(const met::Error& e)
{
    switch (e.category()) {
    case ErrorCategory::config:
        return config_error;
    case ErrorCategory::data:
        return data_error;
    case ErrorCategory::provider:
        return provider_error;
    }
    return data_error;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Multimodal entity tagging: retrieve candidates, score with four matchers, fuse and evaluate"};
    app.name("met");
    Options opts;
    add_options(app, opts);
    app.set_config("--config", "", "Flat config file of key = value lines; flags override it");
    app.require_subcommand(1);

    const std::map<std::string, std::pair<const char*, std::function<int(const RunConfig&)>>> commands = {
        {"synth", {"Generate a synthetic KB and splits into the data dir", cmd_synth}},
        {"build-kb", {"Filter a raw KB and write leak-free splits", cmd_build_kb}},
        {"stats", {"Sparsity and ambiguity statistics", cmd_stats}},
        {"index", {"Build the text and image indices", cmd_index}},
        {"retrieve", {"Stage-1 candidates for dev and test queries", cmd_retrieve}},
        {"score", {"Matcher scores for every candidate", cmd_score}},
        {"tune", {"Grid-search fusion weights on dev", cmd_tune}},
        {"eval", {"Evaluate the tuned model on test", cmd_eval}},
        {"ablate", {"Leave-one-matcher-out ablation", cmd_ablate}},
        {"assemble-eval", {"Score with K instances per modality, tune and evaluate", cmd_assemble_eval}},
    };
    for (const auto& [name, entry] : commands) {
        app.add_subcommand(name, entry.first)->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return app.get_subcommands().empty() ? unknown_command : config_error;
    }

    const auto* sub = app.get_subcommands().front();
    try {
        finish_options(opts);
        std::error_code ec;
        fs::create_directories(opts.cfg.work_dir, ec);
        write_text(opts.cfg.work_dir / work_files::config_echo,
                   "# command: " + sub->get_name() + "\n" + app.config_to_str(true, false));
        return commands.at(sub->get_name()).second(opts.cfg);
    } catch (const met::Error& e) {
        std::cerr << "met " << sub->get_name() << ": " << e.what() << "\n";
        return classify(e);
    } catch (const std::exception& e) {
        std::cerr << "met " << sub->get_name() << ": " << e.what() << "\n";
        return data_error;
    }
}
