#include "met/matchers.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "met/error.hpp"
#include "met/kernels.hpp"
#include "met/rng.hpp"
#include "met/scorer_protocol.hpp"
#include "met/tokenizer.hpp"

namespace met {

const char* to_string(MatcherKind k)
{
    switch (k) {
    case MatcherKind::tbm:
        return "TBM";
    case MatcherKind::tcm:
        return "TCM";
    case MatcherKind::ibm:
        return "IBM";
    case MatcherKind::clip:
        return "CLIP";
    }
    return "?";
}

MatcherKind matcher_from_string(std::string_view s)
{
    for (auto k : kMatcherKinds) {
        if (s == to_string(k)) {
            return k;
        }
    }
    throw ConfigError("unknown matcher kind: " + std::string(s));
}

const char* to_string(Provider p)
{
    switch (p) {
    case Provider::toy:
        return "toy";
    case Provider::precomputed:
        return "precomputed";
    case Provider::remote:
        return "remote";
    }
    return "?";
}

Provider provider_from_string(std::string_view s)
{
    if (s == "toy") {
        return Provider::toy;
    }
    if (s == "precomputed") {
        return Provider::precomputed;
    }
    if (s == "remote") {
        return Provider::remote;
    }
    throw ConfigError("unknown scorer provider: " + std::string(s));
}

double normalize_score(MatcherKind kind, double raw)
{
    if (!std::isfinite(raw)) {
        throw std::invalid_argument(std::string("non-finite raw score for ") + to_string(kind));
    }
    if (kind == MatcherKind::tcm) {
        return 1.0 / (1.0 + std::exp(-raw));
    }
    return std::clamp((raw + 1.0) / 2.0, 0.0, 1.0);
}

namespace {

std::optional<std::vector<float>> normalized(std::vector<double> acc)
{
    double sq = 0.0;
    for (double x : acc) {
        sq += x * x;
    }
    if (sq == 0.0) {
        return std::nullopt;
    }
    const double n = std::sqrt(sq);
    std::vector<float> out(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i) {
        out[i] = static_cast<float>(acc[i] / n);
    }
    return out;
}

}  // namespace

std::optional<std::vector<float>> HashedBowEmbedder::embed(std::string_view text) const
{
    std::vector<double> acc(dim_, 0.0);
    for (const auto& tok : tokenize(text)) {
        const auto h = fnv1a64(tok);
        acc[h % dim_] += (h >> 63) ? -1.0 : 1.0;
    }
    return normalized(std::move(acc));
}

std::optional<std::vector<float>> LexiconEmbedder::embed(std::string_view text) const
{
    std::vector<double> acc(lexicon_.dim(), 0.0);
    for (const auto& tok : tokenize(text)) {
        auto v = lexicon_.lookup(ImageId(tok));
        for (std::size_t i = 0; i < v.size(); ++i) {
            acc[i] += v[i];
        }
    }
    return normalized(std::move(acc));
}

std::optional<std::vector<float>> StoreEmbedder::embed(std::string_view text) const
{
    auto v = store_.lookup(ImageId(std::string(text)));
    if (v.empty()) {
        return std::nullopt;
    }
    return std::vector<float>(v.begin(), v.end());
}

double toy_cross_score(std::string_view query_text, std::string_view evidence_text, double eps)
{
    auto a = tokenize(query_text);
    auto b = tokenize(evidence_text);
    std::set<std::string> sa(a.begin(), a.end());
    std::set<std::string> sb(b.begin(), b.end());
    std::size_t inter = 0;
    for (const auto& t : sa) {
        inter += sb.count(t);
    }
    const std::size_t uni = sa.size() + sb.size() - inter;
    const double j = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
    const double clamped = j * (1.0 - 2.0 * eps) + eps;
    return std::log(clamped / (1.0 - clamped));
}

std::optional<double> tbm_score(std::string_view query_text, std::string_view evidence_text,
                                const TextEmbedder& encoder)
{
    auto a = encoder.embed(query_text);
    auto b = encoder.embed(evidence_text);
    if (!a || !b || a->size() != b->size()) {
        return std::nullopt;
    }
    return cosine_similarity(*a, *b);
}

double tcm_score(std::string_view query_text, std::string_view evidence_text)
{
    return toy_cross_score(query_text, evidence_text);
}

double ibm_score(std::span<const float> query_image, std::span<const float> evidence_image)
{
    return cosine_similarity(query_image, evidence_image);
}

std::optional<double> clip_score(std::string_view text, std::span<const float> joint_image,
                                 const TextEmbedder& joint_encoder)
{
    if (joint_image.empty()) {
        return std::nullopt;
    }
    auto t = joint_encoder.embed(text);
    if (!t || t->size() != joint_image.size()) {
        return std::nullopt;
    }
    return cosine_similarity(*t, joint_image);
}

namespace {

/// Embeds each distinct text of a batch once.
class EmbeddingCache {
  public:
    explicit EmbeddingCache(const TextEmbedder& e) : encoder_(e) {}
    const std::optional<std::vector<float>>& get(std::string_view text)
    {
        auto it = cache_.find(text);
        if (it == cache_.end()) {
            it = cache_.emplace(text, encoder_.embed(text)).first;
        }
        return it->second;
    }

  private:
    const TextEmbedder& encoder_;
    std::unordered_map<std::string_view, std::optional<std::vector<float>>> cache_;
};

class TextCosineScorer final : public KindScorer {
  public:
    explicit TextCosineScorer(const TextEmbedder& e) : encoder_(e) {}
    std::vector<std::optional<double>> score(std::span<const MatchItem> items) override
    {
        EmbeddingCache cache(encoder_);
        std::vector<std::optional<double>> out;
        out.reserve(items.size());
        for (const auto& it : items) {
            const auto& a = cache.get(it.left_text);
            const auto& b = cache.get(it.right_text);
            if (a && b && a->size() == b->size()) {
                out.emplace_back(cosine_similarity(*a, *b));
            } else {
                out.emplace_back(std::nullopt);
            }
        }
        return out;
    }

  private:
    const TextEmbedder& encoder_;
};

class JaccardCrossScorer final : public KindScorer {
  public:
    std::vector<std::optional<double>> score(std::span<const MatchItem> items) override
    {
        std::vector<std::optional<double>> out;
        out.reserve(items.size());
        for (const auto& it : items) {
            out.emplace_back(toy_cross_score(it.left_text, it.right_text));
        }
        return out;
    }
};

class ImageCosineScorer final : public KindScorer {
  public:
    std::vector<std::optional<double>> score(std::span<const MatchItem> items) override
    {
        std::vector<std::optional<double>> out;
        out.reserve(items.size());
        for (const auto& it : items) {
            if (it.left_image.empty() || it.right_image.empty()) {
                out.emplace_back(std::nullopt);
            } else {
                out.emplace_back(ibm_score(it.left_image, it.right_image));
            }
        }
        return out;
    }
};

class JointScorer final : public KindScorer {
  public:
    explicit JointScorer(const TextEmbedder& e) : encoder_(e) {}
    std::vector<std::optional<double>> score(std::span<const MatchItem> items) override
    {
        EmbeddingCache cache(encoder_);
        std::vector<std::optional<double>> out;
        out.reserve(items.size());
        for (const auto& it : items) {
            const auto& t = cache.get(it.left_text);
            if (t && !it.right_image.empty() && t->size() == it.right_image.size()) {
                out.emplace_back(cosine_similarity(*t, it.right_image));
            } else {
                out.emplace_back(std::nullopt);
            }
        }
        return out;
    }

  private:
    const TextEmbedder& encoder_;
};

}  // namespace

MatcherSet::MatcherSet(std::array<std::unique_ptr<KindScorer>, kNumMatchers> scorers) : scorers_(std::move(scorers))
{
    for (const auto& s : scorers_) {
        if (!s) {
            throw ConfigError("every matcher kind must be bound");
        }
    }
}

MatcherSet::MatcherSet(const ScorerBinding& binding, const MatcherResources& res)
{
    auto need_client = [&](MatcherKind k) {
        if (!res.client) {
            throw ConfigError(std::string("matcher ") + to_string(k) + " bound to remote but no endpoint configured");
        }
        return std::make_unique<RemoteKindScorer>(res.client, k);
    };

    for (auto k : kMatcherKinds) {
        const auto p = binding.provider[index_of(k)];
        auto& slot = scorers_[index_of(k)];
        if (p == Provider::remote) {
            slot = need_client(k);
            continue;
        }
        switch (k) {
        case MatcherKind::tbm:
            if (p == Provider::toy) {
                embedders_.push_back(std::make_unique<HashedBowEmbedder>(res.toy_dim));
            } else {
                if (!res.text_embeddings) {
                    throw ConfigError("TBM bound to precomputed but no text embedding store given");
                }
                embedders_.push_back(std::make_unique<StoreEmbedder>(*res.text_embeddings));
            }
            slot = std::make_unique<TextCosineScorer>(*embedders_.back());
            break;
        case MatcherKind::tcm:
            if (p == Provider::precomputed) {
                throw ConfigError("TCM is a cross scorer and has no precomputed provider; use toy or remote");
            }
            slot = std::make_unique<JaccardCrossScorer>();
            break;
        case MatcherKind::ibm:
            // Stored image vectors are already the encoder output on both sides.
            slot = std::make_unique<ImageCosineScorer>();
            break;
        case MatcherKind::clip:
            if (p == Provider::toy) {
                if (!res.lexicon) {
                    throw ConfigError("CLIP bound to toy but no lexicon given");
                }
                embedders_.push_back(std::make_unique<LexiconEmbedder>(*res.lexicon));
            } else {
                if (!res.joint_text_embeddings) {
                    throw ConfigError("CLIP bound to precomputed but no joint text embedding store given");
                }
                embedders_.push_back(std::make_unique<StoreEmbedder>(*res.joint_text_embeddings));
            }
            slot = std::make_unique<JointScorer>(*embedders_.back());
            break;
        }
    }
}

bool MatcherSet::concurrent() const
{
    return std::all_of(scorers_.begin(), scorers_.end(), [](const auto& s) { return s->concurrent(); });
}

namespace {

struct Instances {
    std::vector<std::uint32_t> glosses;
    std::vector<const ImageId*> images;
};

Instances select_instances(const Entity& e, const Candidate& c, std::size_t k)
{
    Instances out;
    if (c.gloss && *c.gloss < e.glosses.size()) {
        out.glosses.push_back(*c.gloss);
        for (std::uint32_t g = 0; g < e.glosses.size() && out.glosses.size() < k; ++g) {
            if (g != *c.gloss) {
                out.glosses.push_back(g);
            }
        }
    }
    if (c.image) {
        auto it = std::find(e.image_ids.begin(), e.image_ids.end(), *c.image);
        if (it != e.image_ids.end()) {
            out.images.push_back(&*it);
            for (const auto& id : e.image_ids) {
                if (out.images.size() >= k) {
                    break;
                }
                if (id != *c.image) {
                    out.images.push_back(&id);
                }
            }
        }
    }
    return out;
}

/// Running mean of normalized scores per candidate.
struct Mean {
    double sum = 0.0;
    std::size_t n = 0;
    void add(double v)
    {
        sum += v;
        ++n;
    }
    std::optional<double> value() const
    {
        if (n == 0) {
            return std::nullopt;
        }
        return sum / static_cast<double>(n);
    }
};

void run_kind(MatcherSet& matchers, MatcherKind kind, const std::vector<MatchItem>& items,
              const std::vector<std::size_t>& owner, std::vector<Mean>& means, const std::string& query_id)
{
    if (items.empty()) {
        return;
    }
    std::vector<std::optional<double>> raw;
    try {
        raw = matchers.scorer(kind).score(items);
    } catch (const ProviderError& e) {
        throw ProviderError(std::string(to_string(kind)) + " scoring failed for query " + query_id + ": " + e.what());
    }
    if (raw.size() != items.size()) {
        throw ProviderError(std::string(to_string(kind)) + " scorer returned " + std::to_string(raw.size())
                            + " scores for " + std::to_string(items.size()) + " items (query " + query_id + ")");
    }
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (raw[i]) {
            means[owner[i]].add(normalize_score(kind, *raw[i]));
        }
    }
}

}  // namespace

std::vector<ScoreVector> score_candidates(const KnowledgeBase& kb, const QueryPair& query,
                                          std::span<const Candidate> candidates, MatcherSet& matchers,
                                          std::size_t instances)
{
    const std::size_t k = std::max<std::size_t>(instances, 1);
    const auto n = candidates.size();
    const VectorStore* joint = kb.joint();

    std::vector<MatchItem> text_items, image_items, clip_items;
    std::vector<std::size_t> text_owner, image_owner, clip_owner;
    // CLIP directions are averaged separately: slot 2c is query text vs
    // evidence image, slot 2c+1 evidence text vs query image.
    for (std::size_t c = 0; c < n; ++c) {
        const auto& cand = candidates[c];
        const auto& e = kb.at(cand.entity);
        const auto sel = select_instances(e, cand, k);

        for (auto g : sel.glosses) {
            MatchItem it;
            it.left_text = query.text;
            it.right_text = e.glosses[g];
            text_items.push_back(it);
            text_owner.push_back(c);

            MatchItem cl;
            cl.left_text = e.glosses[g];
            cl.right_image = query.joint_vec;
            cl.right_image_id = query.image_id.str();
            if (!query.joint_vec.empty()) {
                clip_items.push_back(cl);
                clip_owner.push_back(2 * c + 1);
            }
        }
        for (const auto* img : sel.images) {
            MatchItem it;
            it.left_image = query.image_vec;
            it.right_image = kb.images().lookup(*img);
            it.left_image_id = query.image_id.str();
            it.right_image_id = img->str();
            image_items.push_back(it);
            image_owner.push_back(c);

            auto jv = joint ? joint->lookup(*img) : std::span<const float>{};
            if (!jv.empty()) {
                MatchItem cl;
                cl.left_text = query.text;
                cl.right_image = jv;
                cl.right_image_id = img->str();
                clip_items.push_back(cl);
                clip_owner.push_back(2 * c);
            }
        }
    }

    std::vector<Mean> tbm(n), tcm(n), ibm(n), clip(2 * n);
    run_kind(matchers, MatcherKind::tbm, text_items, text_owner, tbm, query.query_id);
    run_kind(matchers, MatcherKind::tcm, text_items, text_owner, tcm, query.query_id);
    run_kind(matchers, MatcherKind::ibm, image_items, image_owner, ibm, query.query_id);
    run_kind(matchers, MatcherKind::clip, clip_items, clip_owner, clip, query.query_id);

    std::vector<ScoreVector> out(n);
    auto put = [](ScoreVector& sv, MatcherKind kind, const std::optional<double>& v) {
        if (v) {
            sv.set(kind, *v);
        } else {
            sv.set_missing(kind);
        }
    };
    for (std::size_t c = 0; c < n; ++c) {
        put(out[c], MatcherKind::tbm, tbm[c].value());
        put(out[c], MatcherKind::tcm, tcm[c].value());
        put(out[c], MatcherKind::ibm, ibm[c].value());
        Mean both;
        for (const auto& dir : {clip[2 * c].value(), clip[2 * c + 1].value()}) {
            if (dir) {
                both.add(*dir);
            }
        }
        put(out[c], MatcherKind::clip, both.value());
    }
    return out;
}

ScoreVector assemble_scores(const KnowledgeBase& kb, const QueryPair& query, const Candidate& candidate,
                            std::size_t k, MatcherSet& matchers)
{
    return score_candidates(kb, query, std::span<const Candidate>(&candidate, 1), matchers, k).front();
}

}  // namespace met
