#pragma once

#include <atomic>
#include <cstddef>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "arise/bm25_kernels.hpp"
#include "arise/core.hpp"

namespace arise {

enum class DocKind { definition, case_study, article, policy };
std::string to_string(DocKind k);
DocKind doc_kind_from_string(std::string_view s);

struct Document {
    std::string doc_id;
    std::string title;
    std::string body;
    DocKind kind = DocKind::article;
};

class EmptyDocument : public std::invalid_argument {
 public:
    explicit EmptyDocument(const std::string& doc_id) : std::invalid_argument("document " + doc_id + " is empty") {}
};

struct TextChunk {
    std::size_t offset = 0;      // index of the first whitespace token
    std::size_t num_tokens = 0;  // whitespace tokens
    std::string text;            // tokens joined by single spaces
};

/// Whitespace-token windows of `chunk_size` whose starts advance by
/// chunk_size - overlap. The last window ends at the body's end.
/// Requires chunk_size > overlap.
std::vector<TextChunk> chunk(std::string_view body, std::size_t chunk_size, std::size_t overlap);

/// Scoring terms: maximal runs of ASCII letters/digits or non-ASCII bytes,
/// lowercased. Everything else separates terms.
std::vector<std::string> analyze(std::string_view text);

struct RetrievedChunk {
    std::string chunk_id;
    std::string doc_id;
    std::string title;
    std::string text;
    double score = 0.0;
    std::size_t rank = 0;
};

struct IndexStats {
    std::size_t num_docs = 0;
    std::size_t num_chunks = 0;
    double avg_chunk_len_tokens = 0.0;
    std::size_t vocabulary_size = 0;
};

class Retriever {
 public:
    virtual ~Retriever() = default;
    virtual std::vector<RetrievedChunk> retrieve(std::string_view query, std::size_t k) const = 0;
};

// Retrieval query for an incident: its text followed by its context.
std::string incident_query(const Incident& incident);

class IndexFormatError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

/// Lexical BM25 index over document chunks.
///
/// ingest() mutates a builder (single writer). publish() freezes the builder into
/// an immutable snapshot that retrieve() reads; concurrent readers never see a
/// partially built index. Chunks are ordered by (doc_id, offset), which is also
/// the tie-break order of equal scores.
class Bm25Index : public Retriever {
 public:
    struct Options {
        std::size_t chunk_size = 400;
        std::size_t overlap = 50;
        bm25::Params params;
    };

    Bm25Index();
    explicit Bm25Index(Options options);

    // Re-ingesting a doc_id replaces the earlier document.
    IndexStats ingest(Document doc);
    void publish();

    IndexStats stats() const;
    const Options& options() const { return options_; }

    // Empty until the first publish().
    std::vector<RetrievedChunk> retrieve(std::string_view query, std::size_t k) const override;

    // Versioned JSON; see docs/index-format.md.
    std::string serialize() const;
    void save(const std::string& path) const;
    static Bm25Index deserialize(std::string_view text);
    static Bm25Index load(const std::string& path);

 private:
    struct Snapshot;
    struct DocEntry {
        Document doc;
        std::vector<TextChunk> chunks;
        std::vector<std::map<std::string, std::uint32_t>> chunk_terms;
        std::vector<std::uint32_t> chunk_lengths;
    };

    void remove_terms(const DocEntry& e);

    Options options_;
    std::map<std::string, DocEntry> docs_;
    std::map<std::string, std::size_t> term_chunk_freq_;
    std::size_t num_chunks_ = 0;
    std::size_t total_length_ = 0;
    std::shared_ptr<const Snapshot> published_;
};

class CorpusError : public std::runtime_error {
 public:
    CorpusError(std::string what, std::vector<std::string> offenders)
        : std::runtime_error(std::move(what)), offenders_(std::move(offenders)) {}
    const std::vector<std::string>& offenders() const { return offenders_; }

 private:
    std::vector<std::string> offenders_;
};

/// Reads every regular file in `dir` (sorted by name) as front-matter text with
/// doc_id, title and kind. Throws CorpusError listing all unreadable files.
std::vector<Document> load_corpus_dir(const std::string& dir);

}  // namespace arise
