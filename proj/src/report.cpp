#include "met/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "met/error.hpp"

namespace met {

using json = nlohmann::json;

namespace {

std::string fixed1(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return buf;
}

bool has_stage_column(const ResultsTable& t)
{
    return std::any_of(t.groups.begin(), t.groups.end(), [](const TableGroup& g) { return !g.stage.empty(); });
}

std::vector<std::string> column_maxima(const ResultsTable& t)
{
    std::vector<std::string> best(t.columns.size());
    std::vector<double> top(t.columns.size(), -std::numeric_limits<double>::infinity());
    for (const auto& g : t.groups) {
        for (const auto& r : g.rows) {
            for (std::size_t c = 0; c < r.values.size() && c < top.size(); ++c) {
                top[c] = std::max(top[c], r.values[c]);
            }
        }
    }
    for (std::size_t c = 0; c < top.size(); ++c) {
        best[c] = fixed1(top[c]);
    }
    return best;
}

void check_shape(const ResultsTable& t)
{
    for (const auto& g : t.groups) {
        for (const auto& r : g.rows) {
            if (r.values.size() != t.columns.size()) {
                throw std::invalid_argument("table row \"" + r.model + "\" has the wrong number of values");
            }
        }
    }
}

}  // namespace

std::string render_latex(const ResultsTable& t)
{
    check_shape(t);
    const bool staged = has_stage_column(t);
    const auto best = column_maxima(t);
    const std::size_t first_value_col = staged ? 3 : 2;
    const std::size_t last_col = first_value_col + t.columns.size() - 1;

    std::ostringstream out;
    out << "\\begin{tabular}{" << (staged ? "l|l|" : "l|") << std::string(t.columns.size(), 'r') << "}\n";
    out << "\\toprule\n";
    if (staged) {
        out << "\\textbf{Stage} & ";
    }
    out << "\\textbf{Model}";
    for (const auto& c : t.columns) {
        out << " & \\textbf{" << c << "}";
    }
    out << " \\\\\n";
    for (const auto& g : t.groups) {
        out << "\\midrule\n";
        for (std::size_t i = 0; i < g.rows.size(); ++i) {
            const auto& r = g.rows[i];
            if (r.rule_above) {
                out << "\\cmidrule{" << (staged ? 2 : 1) << "-" << last_col << "}\n";
            }
            if (staged) {
                if (i == 0 && g.rows.size() > 1) {
                    out << "\\multirow{" << g.rows.size() << "}{*}{" << g.stage << "} & ";
                } else if (i == 0) {
                    out << g.stage << " & ";
                } else {
                    out << " & ";
                }
            }
            out << r.model;
            for (std::size_t c = 0; c < r.values.size(); ++c) {
                const auto v = fixed1(r.values[c]);
                out << " & " << (v == best[c] ? "\\textbf{" + v + "}" : v);
            }
            out << " \\\\\n";
        }
    }
    out << "\\bottomrule\n";
    out << "\\end{tabular}\n";
    return out.str();
}

std::string render_plain(const ResultsTable& t)
{
    check_shape(t);
    const bool staged = has_stage_column(t);

    std::vector<std::string> header;
    if (staged) {
        header.push_back("Stage");
    }
    header.push_back("Model");
    header.insert(header.end(), t.columns.begin(), t.columns.end());

    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
        width[c] = header[c].size();
    }
    const std::size_t model_col = staged ? 1 : 0;
    for (const auto& g : t.groups) {
        if (staged) {
            width[0] = std::max(width[0], g.stage.size());
        }
        for (const auto& r : g.rows) {
            width[model_col] = std::max(width[model_col], r.model.size());
            for (std::size_t c = 0; c < r.values.size(); ++c) {
                width[model_col + 1 + c] = std::max(width[model_col + 1 + c], fixed1(r.values[c]).size());
            }
        }
    }

    auto line = [&](const std::vector<std::string>& cells) {
        std::string s;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c > 0) {
                s += "  ";
            }
            const auto pad = std::string(width[c] - cells[c].size(), ' ');
            s += c <= model_col ? cells[c] + pad : pad + cells[c];
        }
        while (!s.empty() && s.back() == ' ') {
            s.pop_back();
        }
        return s + "\n";
    };
    auto rule = [&](std::size_t from) {
        std::string s;
        for (std::size_t c = 0; c < width.size(); ++c) {
            if (c > 0) {
                s += "  ";
            }
            s += std::string(width[c], c < from ? ' ' : '-');
        }
        while (!s.empty() && s.back() == ' ') {
            s.pop_back();
        }
        return s + "\n";
    };

    std::string out = line(header);
    for (const auto& g : t.groups) {
        out += rule(0);
        for (std::size_t i = 0; i < g.rows.size(); ++i) {
            const auto& r = g.rows[i];
            if (r.rule_above) {
                out += rule(model_col);
            }
            std::vector<std::string> cells;
            if (staged) {
                cells.push_back(i == 0 ? g.stage : "");
            }
            cells.push_back(r.model);
            for (double v : r.values) {
                cells.push_back(fixed1(v));
            }
            out += line(cells);
        }
    }
    return out;
}

namespace {

std::vector<double> pick(const HitsReport& h, std::span<const std::size_t> cutoffs)
{
    std::vector<double> v;
    for (auto n : cutoffs) {
        v.push_back(h.at(n));
    }
    return v;
}

std::vector<std::string> headers(std::span<const std::size_t> cutoffs)
{
    std::vector<std::string> h;
    for (auto n : cutoffs) {
        h.push_back("Hits@" + std::to_string(n));
    }
    return h;
}

}  // namespace

ResultsTable experiment_table(const HitsReport& text_channel, const HitsReport& image_channel,
                              const std::array<HitsReport, kNumMatchers>& single, const HitsReport& full,
                              std::span<const std::size_t> cutoffs)
{
    ResultsTable t;
    t.columns = headers(cutoffs);
    t.groups.push_back({"Retrieval", {{"Text", pick(text_channel, cutoffs)}, {"Image", pick(image_channel, cutoffs)}}});
    TableGroup ranking{"Ranking", {}};
    for (auto k : kMatcherKinds) {
        ranking.rows.push_back({to_string(k), pick(single[index_of(k)], cutoffs)});
    }
    ranking.rows.push_back({"Full Model", pick(full, cutoffs), true});
    t.groups.push_back(std::move(ranking));
    return t;
}

ResultsTable ablation_table(std::span<const AblationRow> rows, std::span<const std::size_t> cutoffs)
{
    ResultsTable t;
    t.columns = headers(cutoffs);
    // The reference row stands alone above the variants.
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i < 2) {
            t.groups.push_back({"", {}});
        }
        t.groups.back().rows.push_back({rows[i].name, pick(rows[i].test, cutoffs)});
    }
    return t;
}

// ---------------------------------------------------------------------------

json hits_to_json(const HitsReport& h)
{
    json j = json::object();
    for (std::size_t i = 0; i < kDefaultHitsAt.size(); ++i) {
        j["hits@" + std::to_string(kDefaultHitsAt[i])] = h.hits[i];
    }
    j["queries"] = h.queries;
    return j;
}

HitsReport hits_from_json(const json& j)
{
    HitsReport h;
    try {
        for (std::size_t i = 0; i < kDefaultHitsAt.size(); ++i) {
            h.hits[i] = j.at("hits@" + std::to_string(kDefaultHitsAt[i])).get<double>();
        }
        h.queries = j.at("queries").get<std::size_t>();
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed hits record: ") + e.what());
    }
    return h;
}

json weights_to_json(const FusionWeights& w)
{
    json j = json::object();
    for (auto k : kMatcherKinds) {
        j[to_string(k)] = w[k];
    }
    return j;
}

FusionWeights weights_from_json(const json& j)
{
    FusionWeights w;
    for (auto k : kMatcherKinds) {
        const auto it = j.find(to_string(k));
        if (it == j.end() || !it->is_number()) {
            throw DataError(std::string("weights record lacks a numeric ") + to_string(k) + " entry");
        }
        w.w[index_of(k)] = it->get<double>();
    }
    return w;
}

namespace {

template <class T>
json opt(const std::optional<T>& v)
{
    return v ? json(*v) : json(nullptr);
}

template <class T>
std::optional<T> opt_get(const json& j, const char* key)
{
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        return std::nullopt;
    }
    return it->get<T>();
}

}  // namespace

json candidate_to_json(std::string_view query_id, const Candidate& c)
{
    return {
        {"query_id", std::string(query_id)},
        {"entity", c.entity.str()},
        {"channel", to_string(c.channel)},
        {"gloss", opt(c.gloss)},
        {"image", c.image ? json(c.image->str()) : json(nullptr)},
        {"text_score", opt(c.text_score)},
        {"image_score", opt(c.image_score)},
        {"text_rank", opt(c.text_rank)},
        {"image_rank", opt(c.image_rank)},
        {"retrieval_score", c.retrieval_score()},
    };
}

Candidate candidate_from_json(const json& j)
{
    Candidate c;
    c.entity = EntityId(j.at("entity").get<std::string>());
    c.channel = channel_from_string(j.at("channel").get<std::string>());
    c.gloss = opt_get<std::uint32_t>(j, "gloss");
    if (auto img = opt_get<std::string>(j, "image")) {
        c.image = ImageId(*img);
    }
    c.text_score = opt_get<double>(j, "text_score");
    c.image_score = opt_get<double>(j, "image_score");
    c.text_rank = opt_get<std::uint32_t>(j, "text_rank");
    c.image_rank = opt_get<std::uint32_t>(j, "image_rank");
    return c;
}

json scored_query_to_json(std::string_view split, const ScoredQuery& q)
{
    auto cands = json::array();
    for (std::size_t i = 0; i < q.entities.size(); ++i) {
        json scores = json::object();
        auto missing = json::array();
        for (auto k : kMatcherKinds) {
            scores[to_string(k)] = q.scores[i][k];
            if (q.scores[i].missing[index_of(k)]) {
                missing.push_back(to_string(k));
            }
        }
        cands.push_back({{"entity", q.entities[i].str()}, {"scores", scores}, {"missing", missing}});
    }
    return {
        {"split", std::string(split)},
        {"query_id", q.query_id},
        {"gold", q.gold ? json(q.gold->str()) : json(nullptr)},
        {"gold_text_rank", opt(q.gold_text_rank)},
        {"gold_image_rank", opt(q.gold_image_rank)},
        {"candidates", cands},
    };
}

ScoredQuery scored_query_from_json(const json& j)
{
    ScoredQuery q;
    q.query_id = j.at("query_id").get<std::string>();
    if (auto g = opt_get<std::string>(j, "gold")) {
        q.gold = EntityId(*g);
    }
    q.gold_text_rank = opt_get<std::uint32_t>(j, "gold_text_rank");
    q.gold_image_rank = opt_get<std::uint32_t>(j, "gold_image_rank");
    for (const auto& c : j.at("candidates")) {
        q.entities.emplace_back(c.at("entity").get<std::string>());
        ScoreVector sv;
        for (auto k : kMatcherKinds) {
            sv.set(k, c.at("scores").at(to_string(k)).get<double>());
        }
        for (const auto& m : c.at("missing")) {
            sv.missing[index_of(matcher_from_string(m.get<std::string>()))] = true;
        }
        q.scores.push_back(sv);
    }
    return q;
}

ScoredQuery make_scored_query(const QueryPair& query, std::span<const Candidate> candidates,
                              std::vector<ScoreVector> scores)
{
    ScoredQuery q;
    q.query_id = query.query_id;
    q.gold = query.gold;
    for (const auto& c : candidates) {
        q.entities.push_back(c.entity);
        if (query.gold && c.entity == *query.gold) {
            q.gold_text_rank = c.text_rank;
            q.gold_image_rank = c.image_rank;
        }
    }
    q.scores = std::move(scores);
    return q;
}

// ---------------------------------------------------------------------------

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

void write_text(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
}

std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("missing file: " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const std::filesystem::path& path)
{
    try {
        return json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

namespace {

template <class F>
void for_each_line(const std::filesystem::path& path, F&& f)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("missing file: " + path.string());
    }
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (line.empty()) {
            continue;
        }
        try {
            f(json::parse(line));
        } catch (const json::exception& e) {
            throw DataError(path.string() + ":" + std::to_string(no) + ": " + e.what());
        } catch (const std::invalid_argument& e) {
            throw DataError(path.string() + ":" + std::to_string(no) + ": " + e.what());
        }
    }
}

}  // namespace

void write_candidates(const std::filesystem::path& path, std::span<const QueryPair> queries,
                      std::span<const std::vector<Candidate>> candidates)
{
    std::string out;
    for (std::size_t q = 0; q < queries.size(); ++q) {
        for (const auto& c : candidates[q]) {
            out += candidate_to_json(queries[q].query_id, c).dump() + "\n";
        }
    }
    write_text(path, out);
}

CandidateMap read_candidates(const std::filesystem::path& path)
{
    CandidateMap m;
    for_each_line(path, [&](const json& j) {
        m[j.at("query_id").get<std::string>()].push_back(candidate_from_json(j));
    });
    return m;
}

void write_score_cache(const std::filesystem::path& path, const ScoreCache& cache)
{
    std::string out;
    for (const auto& q : cache.dev) {
        out += scored_query_to_json("dev", q).dump() + "\n";
    }
    for (const auto& q : cache.test) {
        out += scored_query_to_json("test", q).dump() + "\n";
    }
    write_text(path, out);
}

ScoreCache read_score_cache(const std::filesystem::path& path)
{
    ScoreCache cache;
    for_each_line(path, [&](const json& j) {
        const auto split = j.at("split").get<std::string>();
        if (split == "dev") {
            cache.dev.push_back(scored_query_from_json(j));
        } else if (split == "test") {
            cache.test.push_back(scored_query_from_json(j));
        } else {
            throw std::invalid_argument("unknown split \"" + split + "\"");
        }
    });
    return cache;
}

std::string miss_list_jsonl(std::span<const ScoredQuery> queries, const FusionWeights& w)
{
    std::string out;
    for (const auto& q : queries) {
        const auto ranked = rank_entities(q, w);
        const auto rank = q.gold ? ranked.rank_of(*q.gold) : std::nullopt;
        json gold_rank = nullptr;
        if (rank) {
            if (*rank == 1) {
                continue;
            }
            gold_rank = static_cast<std::uint64_t>(*rank);
        }
        json j = {
            {"query_id", q.query_id},
            {"gold", q.gold ? json(q.gold->str()) : json(nullptr)},
            {"gold_rank", gold_rank},
            {"top_entity", ranked.entries.empty() ? json(nullptr) : json(ranked.entries.front().entity.str())},
            {"label", nullptr},
            {"label_options", kMissLabels},
        };
        out += j.dump() + "\n";
    }
    return out;
}

}  // namespace met
