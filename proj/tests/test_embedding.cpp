#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "dsisearch/embedding.hpp"
#include "dsisearch/rng.hpp"
#include "dsisearch/text.hpp"
#include "dsisearch/tfidf.hpp"
#include "helpers.hpp"

using namespace dsisearch;

namespace {

// Independent re-statement of the hashing scheme, kept deliberately apart
// from the implementation path.
uint64_t oracle_fnv1a(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
        h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ull;
    }
    return h;
}

Corpus one_token_corpus(const std::vector<std::string>& tokens) {
    Corpus c;
    for (size_t i = 0; i < tokens.size(); ++i) {
        CodeSample s;
        s.doc_index = static_cast<int>(i);
        s.language = Language::kOther;
        s.raw_code = tokens[i];
        s.stripped_code = tokens[i];
        s.source_id = "t" + std::to_string(i);
        c.samples.push_back(std::move(s));
        QueryRecord q{static_cast<int>(i), tokens[i], static_cast<int>(i), Split::kTrain};
        c.queries.push_back(q);
    }
    return c;
}

}  // namespace

TEST_CASE("identical documents embed identically; rows are unit length") {
    Corpus c = fixtures::make_paraphrase_corpus(6);
    c.samples[3] = c.samples[0];
    c.samples[3].doc_index = 3;
    c.samples[3].source_id = "dup";
    EmbeddingMatrix emb = embed_hashed_tfidf(c, 64);
    CHECK((emb.vectors.row(0) - emb.vectors.row(3)).norm() == 0.0);
    for (int64_t i = 0; i < emb.doc_count(); ++i) {
        CHECK(std::abs(emb.vectors.row(i).norm() - 1.0) < 1e-9);
    }
}

TEST_CASE("one-token documents land in the oracle's buckets with the oracle's signs") {
    std::vector<std::string> tokens = {"alpha", "bravo", "candle"};
    Corpus c = one_token_corpus(tokens);
    const int dim = 8;
    EmbeddingMatrix emb = embed_hashed_tfidf(c, dim);
    for (size_t d = 0; d < tokens.size(); ++d) {
        uint64_t h = oracle_fnv1a(tokens[d]);
        auto bucket = static_cast<int64_t>(h % dim);
        double sign = (h >> 63) == 0 ? 1.0 : -1.0;
        for (int64_t j = 0; j < dim; ++j) {
            double expected = j == bucket ? sign : 0.0;
            CHECK(emb.vectors(static_cast<int64_t>(d), j) == doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("permuting documents permutes rows identically") {
    Corpus c = fixtures::make_paraphrase_corpus(8);
    EmbeddingMatrix before = embed_hashed_tfidf(c, 32);

    Corpus rotated = c;
    const size_t n = c.samples.size();
    for (size_t i = 0; i < n; ++i) {
        rotated.samples[i] = c.samples[(i + 3) % n];
        rotated.samples[i].doc_index = static_cast<int>(i);
    }
    for (auto& q : rotated.queries) {
        q.target_doc = static_cast<int>((static_cast<size_t>(q.target_doc) + n - 3) % n);
    }
    EmbeddingMatrix after = embed_hashed_tfidf(rotated, 32);
    for (size_t i = 0; i < n; ++i) {
        CHECK((after.vectors.row(static_cast<int64_t>(i)) -
               before.vectors.row(static_cast<int64_t>((i + 3) % n)))
                  .norm() == 0.0);
    }
}

TEST_CASE("nearest_doc: orthonormal rows, query equals row 2") {
    EmbeddingMatrix emb;
    emb.vectors = Eigen::MatrixXd::Identity(4, 4);
    auto top = nearest_doc(emb.vectors.row(2).transpose(), emb, 1);
    REQUIRE(top.size() == 1);
    CHECK(top[0].first == 2);
    CHECK(top[0].second == doctest::Approx(1.0));
}

TEST_CASE("nearest_doc: k = N returns a permutation; brute-force agreement") {
    Rng rng(21);
    EmbeddingMatrix emb;
    emb.vectors.resize(30, 5);
    for (int64_t i = 0; i < emb.vectors.size(); ++i) emb.vectors.data()[i] = rng.normal();
    Eigen::VectorXd q(5);
    for (int i = 0; i < 5; ++i) q[i] = rng.normal();

    auto ranked = nearest_doc(q, emb, 30);
    std::set<int> seen;
    for (auto& [d, s] : ranked) seen.insert(d);
    CHECK(seen.size() == 30);

    // exhaustive pairwise-comparison oracle
    for (size_t i = 0; i + 1 < ranked.size(); ++i) {
        double a = emb.vectors.row(ranked[i].first).dot(q);
        double b = emb.vectors.row(ranked[i + 1].first).dot(q);
        bool ordered = a > b || (a == b && ranked[i].first < ranked[i + 1].first);
        CHECK(ordered);
    }
}

TEST_CASE("nearest_doc: hand fixture against brute force; scaling leaves ranking alone") {
    EmbeddingMatrix emb;
    emb.vectors.resize(4, 2);
    emb.vectors << 1.0, 0.0,   //
        0.6, 0.8,              //
        0.0, 1.0,              //
        -0.5, 0.5;
    Eigen::VectorXd q(2);
    q << 0.9, 0.3;
    // dots: 0.9, 0.78, 0.3, -0.3
    auto top2 = nearest_doc(q, emb, 2);
    REQUIRE(top2.size() == 2);
    CHECK(top2[0].first == 0);
    CHECK(top2[1].first == 1);

    EmbeddingMatrix scaled = emb;
    scaled.vectors *= 3.5;
    auto scaled_rank = nearest_doc(q, scaled, 4);
    auto base_rank = nearest_doc(q, emb, 4);
    for (size_t i = 0; i < 4; ++i) {
        CHECK(scaled_rank[i].first == base_rank[i].first);
        CHECK(scaled_rank[i].second == doctest::Approx(3.5 * base_rank[i].second));
    }

    CHECK_THROWS(nearest_doc(Eigen::VectorXd::Zero(3), emb, 1));  // dimension mismatch
}

TEST_CASE("external embeddings: happy path and every declared error") {
    auto dir = fixtures::fresh_temp_dir("ext");
    Corpus c = fixtures::make_paraphrase_corpus(3);

    auto write = [&](const char* name, const std::vector<std::string>& lines) {
        auto p = dir / name;
        std::ofstream out(p, std::ios::binary);
        for (auto& l : lines) out << l << '\n';
        return p;
    };

    auto good = write("good.jsonl", {R"({"id":"doc-0","vector":[1,0,0,0]})",
                                     R"({"id":"doc-1","vector":[0,1,0,0]})",
                                     R"({"id":"doc-2","vector":[0,0,1,0]})"});
    EmbeddingMatrix emb = load_external_embeddings(good, c);
    CHECK(emb.doc_count() == 3);
    CHECK(emb.dim() == 4);
    CHECK(emb.provider_tag == "external");
    CHECK(emb.vectors(1, 1) == 1.0);

    auto missing = write("missing.jsonl", {R"({"id":"doc-0","vector":[1,0]})",
                                           R"({"id":"doc-1","vector":[0,1]})"});
    CHECK_THROWS_WITH_AS(load_external_embeddings(missing, c),
                         doctest::Contains("doc-2"), std::runtime_error);

    auto dup = write("dup.jsonl", {R"({"id":"doc-0","vector":[1,0]})",
                                   R"({"id":"doc-0","vector":[0,1]})",
                                   R"({"id":"doc-1","vector":[1,1]})",
                                   R"({"id":"doc-2","vector":[1,2]})"});
    CHECK_THROWS_WITH_AS(load_external_embeddings(dup, c), doctest::Contains("duplicate"),
                         std::runtime_error);

    auto mismatch = write("dim.jsonl", {R"({"id":"doc-0","vector":[1,0]})",
                                        R"({"id":"doc-1","vector":[0,1,2]})",
                                        R"({"id":"doc-2","vector":[1,1]})"});
    CHECK_THROWS(load_external_embeddings(mismatch, c));

    auto nan = write("nan.jsonl", {R"({"id":"doc-0","vector":[1,null,0,0]})",
                                   R"({"id":"doc-1","vector":[0,1,0,0]})",
                                   R"({"id":"doc-2","vector":[0,0,1,0]})"});
    CHECK_THROWS(load_external_embeddings(nan, c));

    auto unknown = write("unknown.jsonl", {R"({"id":"stranger","vector":[1,0]})"});
    CHECK_THROWS_WITH_AS(load_external_embeddings(unknown, c), doctest::Contains("stranger"),
                         std::runtime_error);
}

TEST_CASE("binary snapshot round-trips bit-exactly") {
    auto dir = fixtures::fresh_temp_dir("snapbin");
    Corpus c = fixtures::make_paraphrase_corpus(5);
    EmbeddingMatrix emb = embed_hashed_tfidf(c, 16);
    auto p1 = dir / "emb1.bin";
    save_embedding_matrix(emb, p1);

    EmbeddingMatrix loaded = load_embedding_matrix(p1);
    CHECK(loaded.doc_count() == emb.doc_count());
    CHECK(loaded.dim() == emb.dim());

    auto p2 = dir / "emb2.bin";
    save_embedding_matrix(loaded, p2);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    CHECK(b1.size() == 8 + 4 + 4 + sizeof(float) * 5 * 16);
}

TEST_CASE("query embedding uses document idf and rejects unembeddable queries") {
    Corpus c = fixtures::make_paraphrase_corpus(4);
    TfidfIndex index = build_tfidf_index(c);
    CHECK_THROWS_WITH_AS(embed_query_hashed("zzzz yyyy", index, 16),
                         doctest::Contains("unembeddable"), std::runtime_error);
    Eigen::VectorXd v = embed_query_hashed(c.samples[0].stripped_code, index, 16);
    CHECK(std::abs(v.norm() - 1.0) < 1e-9);
}
