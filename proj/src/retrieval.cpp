#include "arise/retrieval.hpp"

#include <algorithm>
#include <filesystem>
#include <numeric>

namespace arise {

std::string to_string(DocKind k) {
    switch (k) {
        case DocKind::definition: return "definition";
        case DocKind::case_study: return "case-study";
        case DocKind::article: return "article";
        case DocKind::policy: return "policy";
    }
    return "article";
}

DocKind doc_kind_from_string(std::string_view s) {
    std::string f = fold(s);
    if (f == "definition") return DocKind::definition;
    if (f == "case-study") return DocKind::case_study;
    if (f == "article") return DocKind::article;
    if (f == "policy") return DocKind::policy;
    throw std::invalid_argument("unknown document kind: " + std::string(s));
}

std::vector<TextChunk> chunk(std::string_view body, std::size_t chunk_size, std::size_t overlap) {
    if (chunk_size == 0 || overlap >= chunk_size)
        throw std::invalid_argument("chunk_size must exceed overlap");
    auto tokens = split_whitespace(body);
    std::vector<TextChunk> out;
    const std::size_t step = chunk_size - overlap;
    for (std::size_t start = 0; start < tokens.size(); start += step) {
        std::size_t end = std::min(start + chunk_size, tokens.size());
        std::vector<std::string> window(tokens.begin() + static_cast<std::ptrdiff_t>(start),
                                        tokens.begin() + static_cast<std::ptrdiff_t>(end));
        out.push_back({start, end - start, join(window, " ")});
        if (end == tokens.size()) break;
    }
    return out;
}

std::vector<std::string> analyze(std::string_view text) {
    std::vector<std::string> terms;
    std::string cur;
    for (char ch : text) {
        auto c = static_cast<unsigned char>(ch);
        bool word = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || (c >= 'A' && c <= 'Z') || c >= 0x80;
        if (word) {
            cur += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch;
        } else if (!cur.empty()) {
            terms.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) terms.push_back(std::move(cur));
    return terms;
}

std::string incident_query(const Incident& incident) {
    if (!incident.context || incident.context->empty()) return incident.text;
    return incident.text + " " + *incident.context;
}

struct Bm25Index::Snapshot {
    std::map<std::string, std::uint32_t> term_ids;
    std::vector<double> idf;
    std::vector<bm25::ChunkTerms> chunks;
    struct Meta {
        std::string chunk_id, doc_id, title, text;
    };
    std::vector<Meta> meta;
    double avg_length = 0.0;
    bm25::Params params;
};

Bm25Index::Bm25Index() : Bm25Index(Options{}) {}

Bm25Index::Bm25Index(Options options) : options_(options) {
    if (options_.chunk_size == 0 || options_.overlap >= options_.chunk_size)
        throw std::invalid_argument("chunk_size must exceed overlap");
}

void Bm25Index::remove_terms(const DocEntry& e) {
    for (std::size_t i = 0; i < e.chunks.size(); ++i) {
        for (const auto& [term, count] : e.chunk_terms[i]) {
            auto it = term_chunk_freq_.find(term);
            if (--it->second == 0) term_chunk_freq_.erase(it);
        }
        total_length_ -= e.chunk_lengths[i];
    }
    num_chunks_ -= e.chunks.size();
}

IndexStats Bm25Index::ingest(Document doc) {
    if (trim(doc.body).empty()) throw EmptyDocument(doc.doc_id);
    if (doc.doc_id.empty()) throw std::invalid_argument("document without doc_id");

    DocEntry entry;
    entry.chunks = chunk(doc.body, options_.chunk_size, options_.overlap);
    for (const auto& c : entry.chunks) {
        std::map<std::string, std::uint32_t> tf;
        auto terms = analyze(c.text);
        for (auto& t : terms) ++tf[t];
        entry.chunk_lengths.push_back(static_cast<std::uint32_t>(terms.size()));
        entry.chunk_terms.push_back(std::move(tf));
    }
    entry.doc = std::move(doc);

    if (auto old = docs_.find(entry.doc.doc_id); old != docs_.end()) {
        remove_terms(old->second);
        docs_.erase(old);
    }
    for (std::size_t i = 0; i < entry.chunks.size(); ++i) {
        for (const auto& [term, count] : entry.chunk_terms[i]) ++term_chunk_freq_[term];
        total_length_ += entry.chunk_lengths[i];
    }
    num_chunks_ += entry.chunks.size();
    std::string id = entry.doc.doc_id;
    docs_.emplace(std::move(id), std::move(entry));
    return stats();
}

IndexStats Bm25Index::stats() const {
    IndexStats s;
    s.num_docs = docs_.size();
    s.num_chunks = num_chunks_;
    s.avg_chunk_len_tokens = num_chunks_ ? static_cast<double>(total_length_) / num_chunks_ : 0.0;
    s.vocabulary_size = term_chunk_freq_.size();
    return s;
}

void Bm25Index::publish() {
    auto snap = std::make_shared<Snapshot>();
    snap->params = options_.params;
    std::uint32_t next = 0;
    for (const auto& [term, df] : term_chunk_freq_) {
        snap->term_ids.emplace(term, next++);
        snap->idf.push_back(bm25::idf(num_chunks_, df));
    }
    snap->chunks.reserve(num_chunks_);
    for (const auto& [doc_id, e] : docs_) {
        for (std::size_t i = 0; i < e.chunks.size(); ++i) {
            bm25::ChunkTerms ct;
            ct.length = e.chunk_lengths[i];
            // std::map order is term order, which is also term-id order.
            for (const auto& [term, count] : e.chunk_terms[i]) {
                ct.term_ids.push_back(snap->term_ids.at(term));
                ct.counts.push_back(count);
            }
            snap->chunks.push_back(std::move(ct));
            snap->meta.push_back({doc_id + "#" + std::to_string(i), doc_id, e.doc.title, e.chunks[i].text});
        }
    }
    snap->avg_length = num_chunks_ ? static_cast<double>(total_length_) / num_chunks_ : 0.0;
    std::atomic_store(&published_, std::shared_ptr<const Snapshot>(std::move(snap)));
}

std::vector<RetrievedChunk> Bm25Index::retrieve(std::string_view query, std::size_t k) const {
    auto snap = std::atomic_load(&published_);
    if (!snap || snap->chunks.empty() || k == 0) return {};

    std::vector<std::uint32_t> q;
    for (const auto& term : analyze(query)) {
        if (auto it = snap->term_ids.find(term); it != snap->term_ids.end()) q.push_back(it->second);
    }
    std::sort(q.begin(), q.end());
    q.erase(std::unique(q.begin(), q.end()), q.end());
    if (q.empty()) return {};

    bm25::Collection coll{snap->chunks, snap->idf, snap->avg_length, snap->params};
    std::vector<double> scores = snap->chunks.size() >= bm25::parallel_threshold
                                     ? bm25::score_all_parallel(coll, q)
                                     : bm25::score_all_serial(coll, q);

    std::vector<std::size_t> hits;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (scores[i] > 0.0) hits.push_back(i);
    auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    };
    std::size_t take = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(take), hits.end(), better);

    std::vector<RetrievedChunk> out;
    out.reserve(take);
    for (std::size_t r = 0; r < take; ++r) {
        const auto& m = snap->meta[hits[r]];
        out.push_back({m.chunk_id, m.doc_id, m.title, m.text, scores[hits[r]], r + 1});
    }
    return out;
}

namespace {
constexpr const char* index_format = "arise-bm25-index";
constexpr int index_version = 1;
}  // namespace

std::string Bm25Index::serialize() const {
    nlohmann::json docs = nlohmann::json::array();
    nlohmann::json chunks = nlohmann::json::array();
    for (const auto& [doc_id, e] : docs_) {
        docs.push_back({{"doc_id", doc_id}, {"title", e.doc.title}, {"kind", to_string(e.doc.kind)}, {"body", e.doc.body}});
        for (std::size_t i = 0; i < e.chunks.size(); ++i) {
            chunks.push_back({{"chunk_id", doc_id + "#" + std::to_string(i)},
                              {"doc_id", doc_id},
                              {"offset", e.chunks[i].offset},
                              {"num_tokens", e.chunks[i].num_tokens},
                              {"length", e.chunk_lengths[i]}});
        }
    }
    nlohmann::json j{{"format", index_format},
                     {"version", index_version},
                     {"params",
                      {{"chunk_size", options_.chunk_size},
                       {"overlap", options_.overlap},
                       {"k1", options_.params.k1},
                       {"b", options_.params.b}}},
                     {"documents", docs},
                     {"chunks", chunks}};
    return j.dump(2) + "\n";
}

void Bm25Index::save(const std::string& path) const { write_file_atomic(path, serialize()); }

Bm25Index Bm25Index::deserialize(std::string_view text) {
    try {
        auto j = nlohmann::json::parse(text);
        if (j.at("format") != index_format) throw IndexFormatError("not an arise BM25 index");
        if (j.at("version") != index_version)
            throw IndexFormatError("unsupported index version " + j.at("version").dump());
        const auto& p = j.at("params");
        Options opt;
        opt.chunk_size = p.at("chunk_size").get<std::size_t>();
        opt.overlap = p.at("overlap").get<std::size_t>();
        opt.params.k1 = p.at("k1").get<double>();
        opt.params.b = p.at("b").get<double>();
        Bm25Index idx(opt);
        for (const auto& d : j.at("documents")) {
            idx.ingest({d.at("doc_id").get<std::string>(), d.at("title").get<std::string>(),
                        d.at("body").get<std::string>(), doc_kind_from_string(d.at("kind").get<std::string>())});
        }
        if (idx.num_chunks_ != j.at("chunks").size())
            throw IndexFormatError("chunk table does not match documents");
        idx.publish();
        return idx;
    } catch (const nlohmann::json::exception& e) {
        throw IndexFormatError(std::string("malformed index: ") + e.what());
    }
}

Bm25Index Bm25Index::load(const std::string& path) { return deserialize(read_file(path)); }

std::vector<Document> load_corpus_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw CorpusError("corpus directory not readable: " + dir, {dir});
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir, ec)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    if (ec) throw CorpusError("corpus directory not readable: " + dir, {dir});
    std::sort(files.begin(), files.end());

    std::vector<Document> docs;
    std::vector<std::string> offenders;
    for (const auto& f : files) {
        if (f.filename().string().front() == '.') continue;
        try {
            auto fm = parse_front_matter(read_file(f.string()));
            Document d;
            d.doc_id = fm.fields.at("doc_id");
            d.title = fm.fields.count("title") ? fm.fields.at("title") : d.doc_id;
            d.kind = doc_kind_from_string(fm.fields.count("kind") ? fm.fields.at("kind") : "article");
            d.body = fm.body;
            if (d.doc_id.empty() || trim(d.body).empty()) throw std::invalid_argument("empty doc_id or body");
            docs.push_back(std::move(d));
        } catch (const std::exception& e) {
            offenders.push_back(f.string() + ": " + e.what());
        }
    }
    if (!offenders.empty()) throw CorpusError("unreadable corpus files", offenders);
    return docs;
}

}  // namespace arise
