#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "met/ids.hpp"
#include "met/kb.hpp"

namespace met {

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// A document is one gloss: (entity, index into the entity's gloss list).
struct DocRef {
    EntityId entity;
    std::uint32_t gloss = 0;

    friend auto operator<=>(const DocRef&, const DocRef&) = default;
    friend bool operator==(const DocRef&, const DocRef&) = default;
};

struct Posting {
    std::uint32_t doc;
    std::uint32_t tf;

    friend bool operator==(const Posting&, const Posting&) = default;
};

struct TextHit {
    std::uint32_t doc;
    double score;
};

/// Inverted index over KB glosses with Okapi BM25 scoring,
///   score(q, d) = sum_t idf(t) * tf (k1 + 1) / (tf + k1 (1 - b + b |d| / avgdl)),
///   idf(t)      = ln(1 + (N - df + 0.5) / (df + 0.5)).
/// Documents are numbered in (entity id, gloss index) order, so document
/// number order is DocRef order. Immutable once built.
class TextIndex {
  public:
    TextIndex() = default;

    static TextIndex build(const KnowledgeBase& kb, Bm25Params params = {});

    const Bm25Params& params() const noexcept { return params_; }
    std::size_t num_docs() const noexcept { return docs_.size(); }
    double avgdl() const noexcept { return avgdl_; }
    const DocRef& doc_ref(std::uint32_t doc) const { return docs_.at(doc); }
    std::uint32_t doc_length(std::uint32_t doc) const { return doc_len_.at(doc); }
    std::optional<std::uint32_t> find_doc(const DocRef& ref) const;

    std::size_t vocabulary_size() const noexcept { return terms_.size(); }
    /// Terms in byte order.
    std::span<const std::string> vocabulary() const noexcept { return terms_; }
    std::size_t document_frequency(std::string_view term) const;
    std::span<const Posting> postings(std::string_view term) const;
    double idf(std::size_t df) const;

    /// BM25 of one document. Throws DataError for an unknown document.
    double score(std::span<const std::string> query_terms, std::uint32_t doc) const;
    double score(std::span<const std::string> query_terms, const DocRef& ref) const;

    /// Top-n documents by score, descending, ties by document order. Only
    /// documents sharing at least one term with the query are returned.
    std::vector<TextHit> search_terms(std::span<const std::string> query_terms, std::size_t n) const;
    std::vector<TextHit> search(std::string_view query_text, std::size_t n) const;

    // MTIX container: "MTIX", u32 version, f64 k1, f64 b, u64 docs, per doc
    // (u16+bytes entity id, u32 gloss, u32 length), u64 terms, per term
    // (u16+bytes term, u32 df, df x (u32 doc, u32 tf)). Little-endian.
    void save(const std::filesystem::path& path) const;
    static TextIndex load(const std::filesystem::path& path);

  private:
    double term_weight(double idf, std::uint32_t tf, std::uint32_t len) const;
    void finish();

    Bm25Params params_;
    std::vector<DocRef> docs_;
    std::vector<std::uint32_t> doc_len_;
    double avgdl_ = 0.0;
    std::vector<std::string> terms_;
    std::vector<std::vector<Posting>> postings_;
    std::unordered_map<std::string, std::uint32_t> term_ids_;
};

inline constexpr std::uint32_t kTextIndexVersion = 1;

}  // namespace met
