#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "dsisearch/corpus.hpp"
#include "dsisearch/rng.hpp"
#include "dsisearch/text.hpp"
#include "helpers.hpp"

using namespace dsisearch;

namespace {

std::filesystem::path write_lines(const std::filesystem::path& dir, const char* name,
                                  const std::vector<std::string>& lines) {
    auto path = dir / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    for (const auto& l : lines) out << l << '\n';
    return path;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("strip_documentation: python docstring removed") {
    std::string code = "def f():\n    \"\"\"adds\"\"\"\n    return 1";
    CHECK(strip_documentation(code, Language::kPython) == "def f():\n    return 1");
}

TEST_CASE("strip_documentation: java line comment removed") {
    CHECK(strip_documentation("int x=1; // set x", Language::kJava) == "int x=1;");
}

TEST_CASE("strip_documentation: comment-free code only loses blank lines") {
    std::string code = "int a = 1;\n\n\nint b = 2;";
    CHECK(strip_documentation(code, Language::kJava) == "int a = 1;\nint b = 2;");
}

TEST_CASE("strip_documentation: string literals survive") {
    CHECK(strip_documentation("s = \"# not a comment\"  # real", Language::kPython) ==
          "s = \"# not a comment\"");
    CHECK(strip_documentation("url = \"http://x\"; // c", Language::kJavascript) ==
          "url = \"http://x\";");
    CHECK(strip_documentation("x = '''kept''' + 1", Language::kPython) == "x = '''kept''' + 1");
}

TEST_CASE("strip_documentation: block comments, ruby and php forms") {
    CHECK(strip_documentation("a /* mid */ b", Language::kGo) == "a  b");
    CHECK(strip_documentation("x = 1 # c\n=begin\ndoc\n=end\ny = 2", Language::kRuby) ==
          "x = 1\ny = 2");
    CHECK(strip_documentation("$a = 1; # c\n$b = 2; // c2", Language::kPhp) ==
          "$a = 1;\n$b = 2;");
}

TEST_CASE("strip_documentation: unterminated block comment strips to end with warning") {
    auto r = strip_documentation_checked("a = 1;\n/* open", Language::kJava);
    CHECK(r.text == "a = 1;");
    CHECK(r.unterminated_comment);
}

TEST_CASE("strip_documentation is idempotent") {
    Rng rng(11);
    const std::vector<std::string> snippets = {
        "def f():\n    \"\"\"doc\"\"\"\n    # c\n    return '#x'\n",
        "int f() { /* a */ // b\n return 1; }\n",
        "x = 1\n\n\n# only\n",
        "=begin\nblock\n=end\nputs '#'\n",
    };
    const std::vector<Language> langs = {Language::kPython, Language::kJava, Language::kPython,
                                         Language::kRuby};
    for (size_t i = 0; i < snippets.size(); ++i) {
        std::string once = strip_documentation(snippets[i], langs[i]);
        CHECK(strip_documentation(once, langs[i]) == once);
    }
}

TEST_CASE("tokenize: rule application") {
    CHECK(tokenize("List of even numbers") ==
          std::vector<std::string>{"list", "of", "even", "numbers"});
    CHECK(tokenize("getMaxValue_fast()") ==
          std::vector<std::string>{"get", "max", "value", "fast", "(", ")"});
    CHECK(tokenize("") == std::vector<std::string>{});
    CHECK(tokenize("HTTPServer2 rocks") == std::vector<std::string>{"http", "server2", "rocks"});
    CHECK(tokenize("a.b_c") == std::vector<std::string>{"a", ".", "b", "c"});
}

TEST_CASE("tokenizer totality and vocabulary round trip") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::string junk;
        for (int i = 0; i < 40; ++i) junk.push_back(static_cast<char>(rng.below(256)));
        CHECK_NOTHROW(tokenize(junk));
    }
    Vocabulary vocab = Vocabulary::build({"alpha beta beta gamma"});
    for (const auto& tok : tokenize("alpha beta gamma")) {
        int id = vocab.id(tok);
        CHECK(id >= Vocabulary::kFirstToken);
        CHECK(vocab.token(id) == tok);
    }
    CHECK(vocab.id("missing") == Vocabulary::kUnk);
}

TEST_CASE("vocabulary ranks by frequency then lexicographically") {
    Vocabulary vocab = Vocabulary::build({"bb aa bb cc aa dd"});
    // bb/aa tie at 2 -> aa first; cc/dd tie at 1 -> cc before dd
    CHECK(vocab.id("aa") == 4);
    CHECK(vocab.id("bb") == 5);
    CHECK(vocab.id("cc") == 6);
    CHECK(vocab.id("dd") == 7);
}

TEST_CASE("load_corpus: well-formed lines accepted in order") {
    auto dir = fixtures::fresh_temp_dir("load1");
    auto path = fixtures::write_pairs_jsonl(dir, 3);
    LoadReport report;
    Corpus c = load_corpus(path, std::nullopt, 0, &report);
    CHECK(c.samples.size() == 3);
    CHECK(c.queries.size() == 3);
    CHECK(report.accepted == 3);
    CHECK(report.malformed == 0);
    for (int d = 0; d < 3; ++d) {
        CHECK(c.samples[static_cast<size_t>(d)].doc_index == d);
        CHECK(c.queries[static_cast<size_t>(d)].target_doc == d);
        CHECK(c.queries[static_cast<size_t>(d)].split == Split::kTrain);
    }
}

TEST_CASE("load_corpus: limit takes the first accepted samples") {
    auto dir = fixtures::fresh_temp_dir("load2");
    auto path = fixtures::write_pairs_jsonl(dir, 5);
    Corpus c = load_corpus(path, 2, 0);
    CHECK(c.samples.size() == 2);
    CHECK(c.samples[0].source_id == "doc-0");
    CHECK(c.samples[1].source_id == "doc-1");
}

TEST_CASE("load_corpus: missing field counts as malformed, rest accepted") {
    auto dir = fixtures::fresh_temp_dir("load3");
    auto path = write_lines(
        dir, "pairs.jsonl",
        {R"({"id":"a","language":"python","code":"x = 1","docstring":"first doc"})",
         R"({"id":"b","language":"python","docstring":"no code field"})",
         R"({"id":"c","language":"python","code":"y = 2","docstring":"third doc"})"});
    LoadReport report;
    Corpus c = load_corpus(path, std::nullopt, 0, &report);
    CHECK(c.samples.size() == 2);
    CHECK(report.malformed == 1);
    CHECK(c.samples[1].source_id == "c");
}

TEST_CASE("load_corpus: unparseable json counts as malformed") {
    auto dir = fixtures::fresh_temp_dir("load4");
    auto path = write_lines(dir, "pairs.jsonl",
                            {R"x({"id":"a","language":"go","code":"f()","docstring":"ok doc"})x",
                             "{not json"});
    LoadReport report;
    Corpus c = load_corpus(path, std::nullopt, 0, &report);
    CHECK(c.samples.size() == 1);
    CHECK(report.malformed == 1);
}

TEST_CASE("load_corpus: error paths") {
    auto dir = fixtures::fresh_temp_dir("load5");
    CHECK_THROWS(load_corpus(dir / "missing.jsonl", std::nullopt, 0));

    auto both_empty = write_lines(dir, "empty.jsonl",
                                  {R"({"id":"a","language":"go","code":"","docstring":""})"});
    CHECK_THROWS(load_corpus(both_empty, std::nullopt, 0));

    auto all_rejected = write_lines(
        dir, "rejected.jsonl",
        {R"({"id":"a","language":"java","code":"// only a comment","docstring":"doc"})"});
    CHECK_THROWS(load_corpus(all_rejected, std::nullopt, 0));
}

TEST_CASE("load_corpus: comment-only code is rejected_empty, not fatal, when others exist") {
    auto dir = fixtures::fresh_temp_dir("load6");
    auto path = write_lines(
        dir, "pairs.jsonl",
        {R"({"id":"a","language":"java","code":"// nothing else","docstring":"all comments"})",
         R"({"id":"b","language":"java","code":"int x;","docstring":"a doc"})"});
    LoadReport report;
    Corpus c = load_corpus(path, std::nullopt, 0, &report);
    CHECK(c.samples.size() == 1);
    CHECK(report.rejected_empty == 1);
}

TEST_CASE("query_from_docstring keeps the first sentence of several") {
    CHECK(query_from_docstring("Add two numbers. Works on ints.") == "Add two numbers.");
    CHECK(query_from_docstring("Just one clause without period") ==
          "Just one clause without period");
    CHECK(query_from_docstring("  spaced   out\ttext  ") == "spaced out text");
    CHECK(query_from_docstring("v1.2 compatible parser. Second.") == "v1.2 compatible parser.");
}

TEST_CASE("split_queries: lone query stays in train for any fraction") {
    auto dir = fixtures::fresh_temp_dir("split1");
    auto path = fixtures::write_pairs_jsonl(dir, 4);
    Corpus c = load_corpus(path, std::nullopt, 0);
    c = split_queries(std::move(c), 0.9, 123);
    for (const auto& q : c.queries) CHECK(q.split == Split::kTrain);
}

TEST_CASE("split_queries: 10 docs x 2 queries at fraction 0.5 puts one per doc in test") {
    Corpus c = fixtures::make_paraphrase_corpus(10);
    for (auto& q : c.queries) q.split = Split::kTrain;
    c = split_queries(std::move(c), 0.5, 7);
    std::vector<int> test_per_doc(10, 0), train_per_doc(10, 0);
    for (const auto& q : c.queries) {
        (q.split == Split::kTest ? test_per_doc : train_per_doc)[static_cast<size_t>(
            q.target_doc)] += 1;
    }
    for (int d = 0; d < 10; ++d) {
        CHECK(test_per_doc[static_cast<size_t>(d)] == 1);
        CHECK(train_per_doc[static_cast<size_t>(d)] == 1);
    }
}

TEST_CASE("split_queries: fraction 0 keeps everything in train; splits are seed-stable") {
    Corpus base = fixtures::make_paraphrase_corpus(12);
    for (auto& q : base.queries) q.split = Split::kTrain;

    Corpus zero = split_queries(base, 0.0, 5);
    for (const auto& q : zero.queries) CHECK(q.split == Split::kTrain);

    Corpus a = split_queries(base, 0.5, 42);
    Corpus b = split_queries(base, 0.5, 42);
    for (size_t i = 0; i < a.queries.size(); ++i) CHECK(a.queries[i].split == b.queries[i].split);
}

TEST_CASE("snapshot round trip is byte-identical and deterministic") {
    auto dir = fixtures::fresh_temp_dir("snap");
    auto path = fixtures::write_pairs_jsonl(dir, 6);
    Corpus c1 = load_corpus(path, std::nullopt, 9);
    c1 = split_queries(std::move(c1), 0.0, 9);
    save_snapshot(c1, dir / "c1.jsonl", dir / "q1.jsonl");

    Corpus c2 = load_corpus(path, std::nullopt, 9);
    c2 = split_queries(std::move(c2), 0.0, 9);
    save_snapshot(c2, dir / "c2.jsonl", dir / "q2.jsonl");

    CHECK(slurp(dir / "c1.jsonl") == slurp(dir / "c2.jsonl"));
    CHECK(slurp(dir / "q1.jsonl") == slurp(dir / "q2.jsonl"));

    Corpus loaded = load_snapshot(dir / "c1.jsonl", dir / "q1.jsonl");
    CHECK(loaded.samples.size() == c1.samples.size());
    CHECK(loaded.content_hash() == c1.content_hash());
    save_snapshot(loaded, dir / "c3.jsonl", dir / "q3.jsonl");
    CHECK(slurp(dir / "c3.jsonl") == slurp(dir / "c1.jsonl"));
}

TEST_CASE("no query text leaks into stripped code as comments") {
    Corpus c = fixtures::make_paraphrase_corpus(20);
    for (const auto& s : c.samples) {
        const std::string& query = c.queries[static_cast<size_t>(2 * s.doc_index)].text;
        CHECK(s.raw_code.find(query) != std::string::npos);       // present before stripping
        CHECK(s.stripped_code.find(query) == std::string::npos);  // gone after
    }
}

TEST_CASE("load_snapshot rejects docs without train queries") {
    auto dir = fixtures::fresh_temp_dir("snapbad");
    Corpus c = fixtures::make_paraphrase_corpus(3);
    c.queries[0].split = Split::kTest;  // doc 0 loses its train query
    save_snapshot(c, dir / "c.jsonl", dir / "q.jsonl");
    CHECK_THROWS(load_snapshot(dir / "c.jsonl", dir / "q.jsonl"));
}
