#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace testing_support {

/// Okapi BM25 straight from the formula, one document at a time, with no
/// index structures. Documents are pre-tokenized.
struct Bm25Oracle {
    std::vector<std::vector<std::string>> docs;
    double k1 = 1.2;
    double b = 0.75;

    double avgdl() const
    {
        double total = 0.0;
        for (const auto& d : docs) {
            total += static_cast<double>(d.size());
        }
        return docs.empty() ? 0.0 : total / static_cast<double>(docs.size());
    }

    double df(const std::string& t) const
    {
        double n = 0.0;
        for (const auto& d : docs) {
            n += std::count(d.begin(), d.end(), t) > 0 ? 1.0 : 0.0;
        }
        return n;
    }

    double score(const std::vector<std::string>& query, std::size_t doc, const std::vector<double>& dfs,
                 double mean_len) const
    {
        const double n = static_cast<double>(docs.size());
        const double len = static_cast<double>(docs[doc].size());
        double s = 0.0;
        for (std::size_t q = 0; q < query.size(); ++q) {
            const double tf = static_cast<double>(std::count(docs[doc].begin(), docs[doc].end(), query[q]));
            if (tf == 0.0) {
                continue;
            }
            const double idf = std::log(1.0 + (n - dfs[q] + 0.5) / (dfs[q] + 0.5));
            s += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / mean_len));
        }
        return s;
    }

    /// (doc, score) for every doc sharing a term with the query, sorted by
    /// score descending then doc ascending, truncated to n.
    std::vector<std::pair<std::size_t, double>> top(const std::vector<std::string>& query, std::size_t n) const
    {
        std::vector<double> dfs;
        for (const auto& t : query) {
            dfs.push_back(df(t));
        }
        const double mean_len = avgdl();
        std::vector<std::pair<std::size_t, double>> all;
        for (std::size_t d = 0; d < docs.size(); ++d) {
            bool shares = false;
            for (const auto& t : query) {
                shares = shares || std::find(docs[d].begin(), docs[d].end(), t) != docs[d].end();
            }
            if (shares) {
                all.emplace_back(d, score(query, d, dfs, mean_len));
            }
        }
        std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) {
            return x.second != y.second ? x.second > y.second : x.first < y.first;
        });
        if (all.size() > n) {
            all.resize(n);
        }
        return all;
    }
};

}  // namespace testing_support
