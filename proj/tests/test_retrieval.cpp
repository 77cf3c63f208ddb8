#include <filesystem>
#include <fstream>
#include <thread>

#include "arise/bm25_kernels.hpp"
#include "arise/retrieval.hpp"
#include "bm25_oracle.hpp"
#include "support.hpp"

using namespace arise;

namespace {

std::string words(std::size_t n) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s += "w" + std::to_string(i) + " ";
    return s;
}

Bm25Index index_of(const std::vector<oracle::Doc>& docs, std::size_t size, std::size_t overlap) {
    Bm25Index idx({size, overlap, {}});
    for (const auto& d : docs) idx.ingest({d.id, "title of " + d.id, d.body, DocKind::article});
    idx.publish();
    return idx;
}

void check_against_oracle(const Bm25Index& idx, const std::vector<oracle::Chunk>& chunks, const std::string& q,
                          std::size_t k) {
    auto got = idx.retrieve(q, k);
    auto want = oracle::search(chunks, q, k);
    REQUIRE(got.size() == want.size());
    for (std::size_t r = 0; r < got.size(); ++r) {
        CHECK(got[r].chunk_id == want[r].chunk_id);
        CHECK(got[r].rank == r + 1);
        CHECK(std::abs(got[r].score - want[r].score) <= 1e-9);
    }
}

}  // namespace

TEST_CASE("chunk offsets") {
    auto c = chunk(words(1000), 400, 50);
    REQUIRE(c.size() == 3);
    CHECK(c[0].offset == 0);
    CHECK(c[1].offset == 350);
    CHECK(c[2].offset == 700);
    CHECK(c[2].num_tokens == 300);
    CHECK(chunk(words(400), 400, 50).size() == 1);
    CHECK(chunk(words(401), 400, 50).size() == 2);
    CHECK(chunk("", 10, 2).empty());
    CHECK_THROWS_AS(chunk("a b", 5, 5), std::invalid_argument);
}

TEST_CASE("analyzer") {
    CHECK(analyze("Don't PANIC, year-7!") == std::vector<std::string>{"don", "t", "panic", "year", "7"});
    CHECK(analyze("Müll café") == std::vector<std::string>{"m\xc3\xbcll", "caf\xc3\xa9"});
    CHECK(analyze("  ...  ").empty());
}

TEST_CASE("ingest and retrieve basics") {
    Bm25Index idx({50, 10, {}});
    CHECK(idx.retrieve("anything", 3).empty());  // nothing published
    CHECK_THROWS_AS(idx.ingest({"empty", "t", "   ", DocKind::article}), EmptyDocument);
    idx.ingest({"a", "Alpha", "religion and respect in school", DocKind::definition});
    idx.ingest({"b", "Beta", "a bus journey with a threat", DocKind::case_study});
    CHECK(idx.retrieve("religion", 3).empty());  // still unpublished
    idx.publish();
    auto r = idx.retrieve("Threat on the BUS", 5);
    REQUIRE(r.size() == 1);
    CHECK(r[0].chunk_id == "b#0");
    CHECK(r[0].title == "Beta");
    CHECK(idx.retrieve("zebra", 5).empty());
    CHECK(idx.retrieve("religion", 0).empty());
    auto st = idx.stats();
    CHECK(st.num_docs == 2);
    CHECK(st.num_chunks == 2);
}

TEST_CASE("re-ingesting a document replaces it") {
    Bm25Index idx({20, 5, {}});
    idx.ingest({"a", "A", "old words only", DocKind::article});
    idx.ingest({"b", "B", "other text", DocKind::article});
    idx.ingest({"a", "A", "new content here", DocKind::article});
    idx.publish();
    CHECK(idx.retrieve("old", 5).empty());
    CHECK(idx.retrieve("new", 5).size() == 1);
    CHECK(idx.stats().num_docs == 2);
    auto chunks = oracle::build({{"a", "new content here"}, {"b", "other text"}}, 20, 5);
    check_against_oracle(idx, chunks, "new other here", 5);
}

TEST_CASE("retrieve matches brute force on randomized corpora") {
    std::mt19937_64 rng(1234);
    for (int trial = 0; trial < 40; ++trial) {
        auto c = oracle::random_case(rng);
        auto idx = index_of(c.docs, c.size, c.overlap);
        auto chunks = oracle::build(c.docs, c.size, c.overlap);
        CHECK(chunks.size() <= 100);
        CHECK(idx.stats().num_chunks == chunks.size());
        for (const auto& q : c.queries)
            for (std::size_t k : {std::size_t(1), std::size_t(4), std::size_t(1000)}) check_against_oracle(idx, chunks, q, k);
    }
}

TEST_CASE("serial and parallel kernels agree bitwise") {
    std::mt19937_64 rng(99);
    std::vector<bm25::ChunkTerms> chunks(5000);
    std::vector<std::size_t> df(300, 0);
    for (auto& c : chunks) {
        std::map<std::uint32_t, std::uint32_t> tf;
        std::uint32_t len = 1 + rng() % 60;
        for (std::uint32_t i = 0; i < len; ++i) ++tf[static_cast<std::uint32_t>(rng() % 300)];
        for (auto [t, n] : tf) {
            c.term_ids.push_back(t);
            c.counts.push_back(n);
            ++df[t];
        }
        c.length = len;
    }
    std::vector<double> idf;
    double total = 0;
    for (auto d : df) idf.push_back(bm25::idf(chunks.size(), d));
    for (const auto& c : chunks) total += c.length;
    bm25::Collection coll{chunks, idf, total / chunks.size(), {}};
    for (int q = 0; q < 20; ++q) {
        std::set<std::uint32_t> qs;
        for (int i = 0; i < 1 + q % 7; ++i) qs.insert(static_cast<std::uint32_t>(rng() % 320 % 300));
        std::vector<std::uint32_t> query(qs.begin(), qs.end());
        auto a = bm25::score_all_serial(coll, query);
        auto b = bm25::score_all_parallel(coll, query);
        CHECK(a == b);
    }
}

TEST_CASE("large collection goes through the parallel path and still matches brute force") {
    std::mt19937_64 rng(5);
    std::vector<oracle::Doc> docs;
    for (int d = 0; d < 60; ++d) {
        std::string body;
        for (int t = 0; t < 400; ++t) body += "t" + std::to_string(rng() % 200) + " ";
        docs.push_back({"d" + std::to_string(1000 + d), body});
    }
    auto idx = index_of(docs, 8, 0);
    REQUIRE(idx.stats().num_chunks >= bm25::parallel_threshold);
    auto chunks = oracle::build(docs, 8, 0);
    check_against_oracle(idx, chunks, "t1 t17 t199", 10);
}

TEST_CASE("published snapshot is stable while the builder changes") {
    Bm25Index idx({20, 0, {}});
    idx.ingest({"a", "A", "respect at school", DocKind::article});
    idx.publish();
    std::atomic<bool> done{false};
    std::thread reader([&] {
        while (!done) {
            auto r = idx.retrieve("respect", 5);
            CHECK((r.size() == 1 || r.size() == 2));
        }
    });
    for (int i = 0; i < 200; ++i) {
        idx.ingest({"b", "B", "respect " + std::to_string(i), DocKind::article});
        if (i % 20 == 0) idx.publish();
    }
    done = true;
    reader.join();
}

TEST_CASE("index persistence round trip") {
    test::TempDir dir;
    auto docs = load_corpus_dir(test::fixture("corpus"));
    REQUIRE(docs.size() == 3);
    Bm25Index idx({30, 5, {}});
    for (auto d : docs) idx.ingest(d);
    idx.publish();
    idx.save(dir.str() + "/index.json");
    Bm25Index back = Bm25Index::load(dir.str() + "/index.json");
    CHECK(back.serialize() == idx.serialize());
    CHECK(back.options().chunk_size == 30);
    for (const std::string q : {"headscarf recess", "threats of violence", "implicit stereotypes irony"}) {
        auto a = idx.retrieve(q, 4), b = back.retrieve(q, 4);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].chunk_id == b[i].chunk_id);
            CHECK(a[i].score == b[i].score);
        }
    }
    CHECK_THROWS_AS(Bm25Index::deserialize("{\"format\":\"other\"}"), IndexFormatError);
    CHECK_THROWS_AS(Bm25Index::deserialize("not json"), IndexFormatError);
    auto j = nlohmann::json::parse(idx.serialize());
    j["version"] = 99;
    CHECK_THROWS_AS(Bm25Index::deserialize(j.dump()), IndexFormatError);
}

TEST_CASE("corpus directory loading") {
    test::TempDir dir;
    {
        std::ofstream(dir.path / "ok.md") << "---\ndoc_id: ok\ntitle: Fine\nkind: policy\n---\nbody text\n";
        std::ofstream(dir.path / "bad1.md") << "no front matter";
        std::ofstream(dir.path / "bad2.md") << "---\ndoc_id: x\n---\n   \n";
    }
    try {
        load_corpus_dir(dir.str());
        FAIL("expected CorpusError");
    } catch (const CorpusError& e) {
        CHECK(e.offenders().size() == 2);
    }
    std::filesystem::remove(dir.path / "bad1.md");
    std::filesystem::remove(dir.path / "bad2.md");
    auto docs = load_corpus_dir(dir.str());
    REQUIRE(docs.size() == 1);
    CHECK(docs[0].kind == DocKind::policy);
    CHECK(docs[0].title == "Fine");
}

TEST_CASE("smaller k is a prefix of larger k") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 15; ++trial) {
        auto c = oracle::random_case(rng);
        auto idx = index_of(c.docs, c.size, c.overlap);
        for (const auto& q : c.queries) {
            auto full = idx.retrieve(q, 1000);
            for (std::size_t k = 1; k <= full.size() + 1; ++k) {
                auto part = idx.retrieve(q, k);
                REQUIRE(part.size() == std::min(k, full.size()));
                for (std::size_t r = 0; r < part.size(); ++r) {
                    CHECK(part[r].chunk_id == full[r].chunk_id);
                    CHECK(part[r].score == full[r].score);
                }
            }
        }
    }
}

TEST_CASE("scores do not depend on ingestion order") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 10; ++trial) {
        auto c = oracle::random_case(rng);
        auto a = index_of(c.docs, c.size, c.overlap);
        auto shuffled = c.docs;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        auto b = index_of(shuffled, c.size, c.overlap);
        for (const auto& q : c.queries) {
            auto ra = a.retrieve(q, 1000);
            auto rb = b.retrieve(q, 1000);
            REQUIRE(ra.size() == rb.size());
            for (std::size_t r = 0; r < ra.size(); ++r) {
                CHECK(ra[r].chunk_id == rb[r].chunk_id);
                CHECK(ra[r].score == rb[r].score);
            }
        }
    }
}

TEST_CASE("toy corpus query ranks like brute force") {
    auto docs = load_corpus_dir(test::fixture("corpus"));
    REQUIRE(docs.size() == 3);
    Bm25Index idx;
    std::vector<oracle::Doc> plain;
    for (const auto& d : docs) {
        plain.push_back({d.doc_id, d.body});
        idx.ingest(d);
    }
    idx.publish();
    auto chunks = oracle::build(plain, 400, 50);
    check_against_oracle(idx, chunks, "religious slur definition", 4);
    // No stemming: only the case study contains "religious".
    CHECK(idx.retrieve("religious slur definition", 4).at(0).doc_id == "case-playground");
}
