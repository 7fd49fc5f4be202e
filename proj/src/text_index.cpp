#include "met/text_index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "met/binary_io.hpp"
#include "met/error.hpp"
#include "met/tokenizer.hpp"

namespace met {

TextIndex TextIndex::build(const KnowledgeBase& kb, Bm25Params params)
{
    if (!(params.k1 > 0.0) || params.b < 0.0 || params.b > 1.0) {
        throw ConfigError("bm25: need k1 > 0 and b in [0, 1]");
    }
    TextIndex index;
    index.params_ = params;
    for (const auto& e : kb.entities()) {
        for (std::uint32_t g = 0; g < e.glosses.size(); ++g) {
            index.docs_.push_back({e.id, g});
        }
    }

    const auto n = static_cast<std::int64_t>(index.docs_.size());
    std::vector<std::vector<std::string>> tokens(index.docs_.size());
#pragma omp parallel for schedule(dynamic, 64)
    for (std::int64_t d = 0; d < n; ++d) {
        const auto& ref = index.docs_[static_cast<std::size_t>(d)];
        tokens[static_cast<std::size_t>(d)] = tokenize(kb.at(ref.entity).glosses[ref.gloss]);
    }

    std::map<std::string, std::vector<Posting>> inverted;
    index.doc_len_.resize(index.docs_.size());
    for (std::uint32_t d = 0; d < index.docs_.size(); ++d) {
        index.doc_len_[d] = static_cast<std::uint32_t>(tokens[d].size());
        std::map<std::string_view, std::uint32_t> tf;
        for (const auto& t : tokens[d]) {
            ++tf[t];
        }
        for (auto [term, count] : tf) {
            inverted[std::string(term)].push_back({d, count});
        }
    }
    for (auto& [term, list] : inverted) {
        index.terms_.push_back(term);
        index.postings_.push_back(std::move(list));
    }
    index.finish();
    return index;
}

void TextIndex::finish()
{
    std::uint64_t total = 0;
    for (auto len : doc_len_) {
        total += len;
    }
    avgdl_ = docs_.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(docs_.size());
    term_ids_.clear();
    term_ids_.reserve(terms_.size());
    for (std::uint32_t t = 0; t < terms_.size(); ++t) {
        term_ids_.emplace(terms_[t], t);
    }
}

std::optional<std::uint32_t> TextIndex::find_doc(const DocRef& ref) const
{
    auto it = std::lower_bound(docs_.begin(), docs_.end(), ref);
    if (it == docs_.end() || *it != ref) {
        return std::nullopt;
    }
    return static_cast<std::uint32_t>(it - docs_.begin());
}

std::span<const Posting> TextIndex::postings(std::string_view term) const
{
    auto it = term_ids_.find(std::string(term));
    if (it == term_ids_.end()) {
        return {};
    }
    return postings_[it->second];
}

std::size_t TextIndex::document_frequency(std::string_view term) const { return postings(term).size(); }

double TextIndex::idf(std::size_t df) const
{
    const auto n = static_cast<double>(docs_.size());
    const auto f = static_cast<double>(df);
    return std::log(1.0 + (n - f + 0.5) / (f + 0.5));
}

double TextIndex::term_weight(double idf_value, std::uint32_t tf, std::uint32_t len) const
{
    const double f = tf;
    const double norm = params_.k1 * (1.0 - params_.b + params_.b * static_cast<double>(len) / avgdl_);
    return idf_value * f * (params_.k1 + 1.0) / (f + norm);
}

double TextIndex::score(std::span<const std::string> query_terms, std::uint32_t doc) const
{
    if (doc >= docs_.size()) {
        throw DataError("unknown document " + std::to_string(doc));
    }
    double s = 0.0;
    for (const auto& term : query_terms) {
        auto list = postings(term);
        auto it = std::lower_bound(list.begin(), list.end(), doc,
                                   [](const Posting& p, std::uint32_t d) { return p.doc < d; });
        if (it != list.end() && it->doc == doc) {
            s += term_weight(idf(list.size()), it->tf, doc_len_[doc]);
        }
    }
    return s;
}

double TextIndex::score(std::span<const std::string> query_terms, const DocRef& ref) const
{
    auto doc = find_doc(ref);
    if (!doc) {
        throw DataError("unknown document " + ref.entity.str() + "#" + std::to_string(ref.gloss));
    }
    return score(query_terms, *doc);
}

std::vector<TextHit> TextIndex::search_terms(std::span<const std::string> query_terms, std::size_t n) const
{
    if (n == 0 || docs_.empty()) {
        return {};
    }
    std::vector<double> acc(docs_.size(), 0.0);
    std::vector<std::uint32_t> touched;
    std::vector<char> seen(docs_.size(), 0);
    for (const auto& term : query_terms) {
        auto list = postings(term);
        if (list.empty()) {
            continue;
        }
        const double w = idf(list.size());
        for (const auto& p : list) {
            acc[p.doc] += term_weight(w, p.tf, doc_len_[p.doc]);
            if (!seen[p.doc]) {
                seen[p.doc] = 1;
                touched.push_back(p.doc);
            }
        }
    }

    std::vector<TextHit> hits;
    hits.reserve(touched.size());
    for (auto d : touched) {
        hits.push_back({d, acc[d]});
    }
    auto better = [](const TextHit& a, const TextHit& b) {
        return a.score != b.score ? a.score > b.score : a.doc < b.doc;
    };
    const auto k = std::min(n, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), better);
    hits.resize(k);
    return hits;
}

std::vector<TextHit> TextIndex::search(std::string_view query_text, std::size_t n) const
{
    auto terms = tokenize(query_text);
    return search_terms(terms, n);
}

void TextIndex::save(const std::filesystem::path& path) const
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw DataError("cannot open for writing: " + path.string());
    }
    binary::write_magic(os, "MTIX");
    binary::write_uint<std::uint32_t>(os, kTextIndexVersion);
    binary::write_f64(os, params_.k1);
    binary::write_f64(os, params_.b);
    binary::write_uint<std::uint64_t>(os, docs_.size());
    for (std::size_t d = 0; d < docs_.size(); ++d) {
        binary::write_short_string(os, docs_[d].entity.str());
        binary::write_uint<std::uint32_t>(os, docs_[d].gloss);
        binary::write_uint<std::uint32_t>(os, doc_len_[d]);
    }
    binary::write_uint<std::uint64_t>(os, terms_.size());
    for (std::size_t t = 0; t < terms_.size(); ++t) {
        binary::write_short_string(os, terms_[t]);
        binary::write_uint<std::uint32_t>(os, static_cast<std::uint32_t>(postings_[t].size()));
        for (const auto& p : postings_[t]) {
            binary::write_uint<std::uint32_t>(os, p.doc);
            binary::write_uint<std::uint32_t>(os, p.tf);
        }
    }
    if (!os) {
        throw DataError("write failed: " + path.string());
    }
}

TextIndex TextIndex::load(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DataError("cannot open text index: " + path.string());
    }
    binary::Reader in(is, path.string());
    in.expect_magic("MTIX");
    if (auto v = in.read_uint<std::uint32_t>(); v != kTextIndexVersion) {
        in.fail("unsupported version " + std::to_string(v));
    }
    TextIndex index;
    index.params_.k1 = in.read_f64();
    index.params_.b = in.read_f64();
    const auto ndocs = in.read_uint<std::uint64_t>();
    for (std::uint64_t d = 0; d < ndocs; ++d) {
        DocRef ref{EntityId(in.read_short_string()), in.read_uint<std::uint32_t>()};
        index.docs_.push_back(std::move(ref));
        index.doc_len_.push_back(in.read_uint<std::uint32_t>());
    }
    const auto nterms = in.read_uint<std::uint64_t>();
    for (std::uint64_t t = 0; t < nterms; ++t) {
        index.terms_.push_back(in.read_short_string());
        const auto df = in.read_uint<std::uint32_t>();
        std::vector<Posting> list(df);
        for (auto& p : list) {
            p.doc = in.read_uint<std::uint32_t>();
            p.tf = in.read_uint<std::uint32_t>();
            if (p.doc >= ndocs) {
                in.fail("posting references document " + std::to_string(p.doc) + " out of range");
            }
        }
        index.postings_.push_back(std::move(list));
    }
    in.expect_eof();
    index.finish();
    return index;
}

}  // namespace met
