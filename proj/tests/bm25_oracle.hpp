#pragma once

// Brute-force BM25 written straight from the formula, sharing no code with the
// index: its own tokenizer, chunker and statistics.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace oracle {

struct Doc {
    std::string id;
    std::string body;
};

struct Hit {
    std::string chunk_id;
    double score = 0.0;
};

inline std::vector<std::string> ws_tokens(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string t; in >> t;) out.push_back(t);
    return out;
}

inline std::vector<std::string> terms(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : s) {
        if (std::isalnum(c) && c < 0x80) {
            cur += static_cast<char>(std::tolower(c));
        } else if (c >= 0x80) {
            cur += static_cast<char>(c);
        } else {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

struct Chunk {
    std::string id;
    std::map<std::string, int> tf;
    int len = 0;
};

inline std::vector<Chunk> build(std::vector<Doc> docs, std::size_t size, std::size_t overlap) {
    std::sort(docs.begin(), docs.end(), [](const Doc& a, const Doc& b) { return a.id < b.id; });
    std::vector<Chunk> out;
    for (const auto& d : docs) {
        auto toks = ws_tokens(d.body);
        std::size_t i = 0;
        for (std::size_t start = 0;; start += size - overlap, ++i) {
            std::size_t end = std::min(toks.size(), start + size);
            Chunk c;
            c.id = d.id + "#" + std::to_string(i);
            std::string text;
            for (std::size_t t = start; t < end; ++t) text += toks[t] + " ";
            for (const auto& term : terms(text)) {
                ++c.tf[term];
                ++c.len;
            }
            out.push_back(c);
            if (end >= toks.size()) break;
        }
    }
    return out;
}

inline std::vector<Hit> search(const std::vector<Chunk>& chunks, const std::string& query, std::size_t k,
                               double k1 = 1.2, double b = 0.75) {
    const double n = static_cast<double>(chunks.size());
    double total = 0;
    for (const auto& c : chunks) total += c.len;
    const double avg = total / n;
    std::set<std::string> q;
    for (const auto& t : terms(query)) q.insert(t);

    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        double s = 0;
        for (const auto& t : q) {
            double df = 0;
            for (const auto& c : chunks) df += c.tf.count(t) ? 1 : 0;
            auto it = chunks[i].tf.find(t);
            if (it == chunks[i].tf.end()) continue;
            double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
            double tf = it->second;
            s += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * chunks[i].len / avg));
        }
        if (s > 0) scored.emplace_back(s, i);
    }
    std::stable_sort(scored.begin(), scored.end(), [](auto& x, auto& y) { return x.first > y.first; });
    std::vector<Hit> out;
    for (std::size_t r = 0; r < std::min(k, scored.size()); ++r)
        out.push_back({chunks[scored[r].second].id, scored[r].first});
    return out;
}

// Random corpus with at most `max_chunks` chunks under (size, overlap).
struct Case {
    std::vector<Doc> docs;
    std::size_t size = 0, overlap = 0;
    std::vector<std::string> queries;
};

inline Case random_case(std::mt19937_64& rng, std::size_t max_chunks = 100) {
    static const std::vector<std::string> vocab{
        "hate", "speech", "school", "pupil", "Teacher", "class", "religion", "accent", "joke", "threat",
        "irony", "group", "remark", "recess", "bus", "parents", "policy", "report", "safety", "respect",
        "don't", "we're", "co-operate", "year-7", "müll", "café", "42", "a", "the", "and"};
    std::uniform_int_distribution<std::size_t> word(0, vocab.size() - 1);
    Case c;
    c.size = std::uniform_int_distribution<std::size_t>(3, 30)(rng);
    c.overlap = std::uniform_int_distribution<std::size_t>(0, c.size - 1)(rng);
    const std::size_t step = c.size - c.overlap;
    std::size_t ndocs = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
    std::size_t budget = max_chunks;
    for (std::size_t d = 0; d < ndocs && budget > 0; ++d) {
        std::size_t chunks = std::uniform_int_distribution<std::size_t>(1, std::min<std::size_t>(budget, 20))(rng);
        budget -= chunks;
        // n tokens give 1 + ceil((n - size) / step) chunks when n > size.
        std::size_t ntok = chunks == 1 ? std::uniform_int_distribution<std::size_t>(1, c.size)(rng)
                                       : c.size + (chunks - 2) * step + 1 +
                                             std::uniform_int_distribution<std::size_t>(0, step - 1)(rng);
        std::string body;
        for (std::size_t t = 0; t < ntok; ++t) {
            std::string w = vocab[word(rng)];
            if (rng() % 7 == 0) w += ",";
            if (rng() % 11 == 0) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
            body += w + (rng() % 5 == 0 ? "\n" : " ");
        }
        c.docs.push_back({"doc-" + std::to_string(rng() % 1000), body});
    }
    // Duplicate ids would replace each other in the index; keep the first.
    std::sort(c.docs.begin(), c.docs.end(), [](const Doc& a, const Doc& b) { return a.id < b.id; });
    c.docs.erase(std::unique(c.docs.begin(), c.docs.end(), [](const Doc& a, const Doc& b) { return a.id == b.id; }),
                 c.docs.end());
    for (int q = 0; q < 6; ++q) {
        std::string query;
        std::size_t len = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
        for (std::size_t t = 0; t < len; ++t) query += vocab[word(rng)] + (t % 2 ? "? " : " ");
        if (q == 5) query += " unseenword";
        c.queries.push_back(query);
    }
    return c;
}

}  // namespace oracle
