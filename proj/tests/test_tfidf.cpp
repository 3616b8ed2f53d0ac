#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "dsisearch/rng.hpp"
#include "dsisearch/text.hpp"
#include "dsisearch/tfidf.hpp"
#include "helpers.hpp"

using namespace dsisearch;

namespace {

Corpus text_corpus(const std::vector<std::string>& docs) {
    Corpus c;
    for (size_t i = 0; i < docs.size(); ++i) {
        CodeSample s;
        s.doc_index = static_cast<int>(i);
        s.language = Language::kOther;
        s.raw_code = docs[i];
        s.stripped_code = docs[i];
        s.source_id = "d" + std::to_string(i);
        c.samples.push_back(std::move(s));
        c.queries.push_back({static_cast<int>(i), docs[i], static_cast<int>(i), Split::kTrain});
    }
    return c;
}

// Deliberately separate scorer, written straight from the score definition
// over raw token lists (no shared index machinery).
std::vector<std::pair<int, double>> oracle_retrieve(const std::vector<std::string>& docs,
                                                    const std::string& query, int k) {
    std::vector<std::vector<std::string>> doc_tokens;
    for (const auto& d : docs) doc_tokens.push_back(tokenize(d));

    auto count_in = [](const std::vector<std::string>& tokens, const std::string& term) {
        int64_t c = 0;
        for (const auto& t : tokens) {
            if (t == term) ++c;
        }
        return c;
    };

    std::vector<double> scores(docs.size(), 0.0);
    for (const auto& term : tokenize(query)) {
        int64_t df = 0;
        for (const auto& tokens : doc_tokens) {
            if (count_in(tokens, term) > 0) ++df;
        }
        if (df == 0) continue;
        double idf_val = std::log(1.0 + static_cast<double>(docs.size()) / static_cast<double>(df));
        for (size_t d = 0; d < docs.size(); ++d) {
            double tf_val = static_cast<double>(count_in(doc_tokens[d], term)) /
                            static_cast<double>(doc_tokens[d].size());
            scores[d] += tf_val * idf_val;
        }
    }
    std::vector<int> order(docs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)]) {
            return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
        }
        return a < b;
    });
    std::vector<std::pair<int, double>> out;
    for (int i = 0; i < k; ++i) {
        out.emplace_back(order[static_cast<size_t>(i)], scores[static_cast<size_t>(order[static_cast<size_t>(i)])]);
    }
    return out;
}

std::string random_text(Rng& rng, size_t n_tokens, const std::vector<std::string>& bank) {
    std::string out;
    for (size_t i = 0; i < n_tokens; ++i) {
        if (i) out.push_back(' ');
        out += bank[rng.below(bank.size())];
    }
    return out;
}

}  // namespace

TEST_CASE("index counts: single doc 'a b a'") {
    Corpus c = text_corpus({"a b a"});
    TfidfIndex index = build_tfidf_index(c);
    CHECK(index.n_docs == 1);
    CHECK(index.doc_lengths[0] == 3);
    CHECK(index.doc_term_freq[0].at("a") == 2);
    CHECK(index.doc_term_freq[0].at("b") == 1);
    CHECK(index.doc_freq.at("a") == 1);
    CHECK(index.doc_freq.at("b") == 1);
}

TEST_CASE("index counts: identical documents") {
    Corpus c = text_corpus({"x y", "x y"});
    TfidfIndex index = build_tfidf_index(c);
    CHECK(index.doc_freq.at("x") == 2);
    CHECK(index.doc_freq.at("y") == 2);
    CHECK(build_tfidf_index(c).n_docs == 2);
    CHECK_THROWS(build_tfidf_index(Corpus{}));
}

TEST_CASE("tf: direct ratio, absent term, single-token doc") {
    Corpus c = text_corpus({"even numbers even", "one"});
    TfidfIndex index = build_tfidf_index(c);
    CHECK(tf(index, "even", 0) == doctest::Approx(2.0 / 3.0));
    CHECK(tf(index, "absent", 0) == 0.0);
    CHECK(tf(index, "one", 1) == 1.0);
}

TEST_CASE("idf: hand-computed values and absent-term convention") {
    Corpus c = text_corpus({"a b", "a c", "a d", "a e"});
    TfidfIndex index = build_tfidf_index(c);
    // 4 docs; df(b)=2 after b appears twice
    Corpus c2 = text_corpus({"a b", "b c", "a d", "a e"});
    TfidfIndex i2 = build_tfidf_index(c2);
    CHECK(idf(i2, "b") == doctest::Approx(std::log(3.0)).epsilon(1e-12));   // ln(1+4/2)
    CHECK(idf(index, "a") == doctest::Approx(std::log(2.0)).epsilon(1e-12));  // in all docs
    CHECK(idf(index, "zz") == 0.0);
}

TEST_CASE("tfidf_retrieve: worked example and degenerate queries") {
    Corpus c = text_corpus({"even numbers even", "odd numbers"});
    TfidfIndex index = build_tfidf_index(c);
    auto top = tfidf_retrieve(index, "even", 1);
    REQUIRE(top.size() == 1);
    CHECK(top[0].first == 0);
    // tf(even, d0)=2/3, idf(even)=ln(1+2/1)=ln 3
    CHECK(top[0].second == doctest::Approx((2.0 / 3.0) * std::log(3.0)).epsilon(1e-12));

    auto zeros = tfidf_retrieve(index, "nothing matches here", 2);
    REQUIRE(zeros.size() == 2);
    CHECK(zeros[0].first == 0);
    CHECK(zeros[1].first == 1);
    CHECK(zeros[0].second == 0.0);

    CHECK_THROWS(tfidf_retrieve(index, "even", 3));  // k > n_docs
}

TEST_CASE("tfidf_retrieve: five-doc fixture matches a hand-computed score table") {
    std::vector<std::string> docs = {
        "sort the list in place",  //
        "reverse a linked list",   //
        "sort numbers quickly",    //
        "walk the binary tree",    //
        "list all sort options",
    };
    Corpus c = text_corpus(docs);
    TfidfIndex index = build_tfidf_index(c);
    std::string query = "sort list";

    // by hand: idf(sort) = ln(1+5/3), idf(list) = ln(1+5/3)
    double w = std::log(1.0 + 5.0 / 3.0);
    std::map<int, double> expected = {
        {0, w / 5.0 + w / 5.0},  // sort 1/5, list 1/5
        {1, w / 4.0},            // list 1/4
        {2, w / 3.0},            // sort 1/3
        {3, 0.0},                //
        {4, w / 4.0 + w / 4.0},  // sort 1/4, list 1/4
    };
    auto ranked = tfidf_retrieve(index, query, 5);
    for (auto& [doc, score] : ranked) {
        CHECK(score == doctest::Approx(expected.at(doc)).epsilon(1e-12));
    }
    CHECK(ranked[0].first == 4);  // 2w/4 > 2w/5 > w/3 > w/4 > 0
    CHECK(ranked[1].first == 0);
    CHECK(ranked[2].first == 2);
    CHECK(ranked[3].first == 1);
    CHECK(ranked[4].first == 3);
}

TEST_CASE("duplicated query tokens count per occurrence") {
    Corpus c = text_corpus({"alpha beta", "alpha alpha"});
    TfidfIndex index = build_tfidf_index(c);
    auto once = tfidf_retrieve(index, "alpha", 2);
    auto twice = tfidf_retrieve(index, "alpha alpha", 2);
    CHECK(twice[0].second == doctest::Approx(2.0 * once[0].second));
}

TEST_CASE("oracle equivalence on 100 random corpora") {
    const std::vector<std::string> bank = {"ant", "bee", "cat", "dog", "elk", "fox",
                                           "gnu", "hen", "ibis", "jay", "koi", "lynx"};
    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        auto n_docs = 1 + rng.below(50);
        std::vector<std::string> docs;
        for (uint64_t d = 0; d < n_docs; ++d) {
            docs.push_back(random_text(rng, 1 + rng.below(30), bank));
        }
        std::string query = random_text(rng, 1 + rng.below(20), bank);
        int k = static_cast<int>(1 + rng.below(n_docs));

        Corpus c = text_corpus(docs);
        TfidfIndex index = build_tfidf_index(c);
        auto got = tfidf_retrieve(index, query, k);
        auto want = oracle_retrieve(docs, query, k);
        REQUIRE(got.size() == want.size());
        for (size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].first == want[i].first);
            CHECK(got[i].second == doctest::Approx(want[i].second).epsilon(1e-12));
        }
    }
}

TEST_CASE("idf is non-increasing in document frequency; tf mass sums to one") {
    Corpus c = text_corpus({"a b c", "a b", "a"});
    TfidfIndex index = build_tfidf_index(c);
    CHECK(idf(index, "a") <= idf(index, "b"));
    CHECK(idf(index, "b") <= idf(index, "c"));
    for (int d = 0; d < 3; ++d) {
        double total = 0.0;
        for (auto& [term, count] : index.doc_term_freq[static_cast<size_t>(d)]) {
            total += tf(index, term, d);
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("adding a document without query tokens preserves existing ranking order") {
    Rng rng(55);
    const std::vector<std::string> bank = {"red", "green", "blue", "cyan", "teal"};
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::string> docs;
        auto n_docs = 2 + rng.below(10);
        for (uint64_t d = 0; d < n_docs; ++d) {
            docs.push_back(random_text(rng, 1 + rng.below(12), bank));
        }
        std::string query = random_text(rng, 1 + rng.below(5), bank);

        TfidfIndex before = build_tfidf_index(text_corpus(docs));
        auto rank_before = tfidf_retrieve(before, query, static_cast<int>(docs.size()));

        docs.push_back("zeta omega theta");  // shares no token with the query bank
        TfidfIndex after = build_tfidf_index(text_corpus(docs));
        auto rank_after = tfidf_retrieve(after, query, static_cast<int>(docs.size()));

        std::vector<int> old_order, new_order;
        for (auto& [d, s] : rank_before) old_order.push_back(d);
        for (auto& [d, s] : rank_after) {
            if (d != static_cast<int>(docs.size()) - 1) new_order.push_back(d);
        }
        CHECK(old_order == new_order);
    }
}

TEST_CASE("dual encoder: self-query ranks first; k=N is a permutation; errors surface") {
    Corpus c = fixtures::make_paraphrase_corpus(6);
    TfidfIndex index = build_tfidf_index(c);
    EmbeddingMatrix emb = embed_hashed_tfidf(c, 64);

    auto ranked = dual_encoder_retrieve(emb, index, c.samples[2].stripped_code, 6);
    CHECK(ranked[0].first == 2);
    CHECK(ranked[0].second == doctest::Approx(1.0).epsilon(1e-9));

    std::set<int> seen;
    for (auto& [d, s] : ranked) seen.insert(d);
    CHECK(seen.size() == 6);

    CHECK_THROWS_WITH_AS(dual_encoder_retrieve(emb, index, "qqqq wwww", 3),
                         doctest::Contains("unembeddable"), std::runtime_error);
}

TEST_CASE("dual encoder: hand fixture ranking matches brute-force dot products") {
    Corpus c = text_corpus({"ant bee", "cat dog", "elk fox", "ant dog"});
    TfidfIndex index = build_tfidf_index(c);
    EmbeddingMatrix emb = embed_hashed_tfidf(c, 16);
    std::string query = "ant dog elk";
    Eigen::VectorXd q = embed_query_hashed(query, index, 16);

    auto ranked = dual_encoder_retrieve(emb, index, query, 4);
    std::vector<std::pair<double, int>> brute;
    for (int d = 0; d < 4; ++d) {
        brute.emplace_back(emb.vectors.row(d).dot(q), d);
    }
    std::stable_sort(brute.begin(), brute.end(), [](auto& a, auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (size_t i = 0; i < 4; ++i) {
        CHECK(ranked[i].first == brute[i].second);
        CHECK(ranked[i].second == doctest::Approx(brute[i].first).epsilon(1e-12));
    }
}
