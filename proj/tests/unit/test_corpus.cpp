#include "doctest.h"

#include "biasaudit/corpus.hpp"
#include "biasaudit/digest.hpp"
#include "biasaudit/error.hpp"
#include "biasaudit/tokenizer.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace biasaudit;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& content) {
    fs::path dir = fs::temp_directory_path() / "biasaudit_test_corpus";
    fs::create_directories(dir);
    fs::path p = dir / name;
    std::ofstream(p, std::ios::binary) << content;
    return p;
}

std::vector<std::string> split_expected(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = s.find(" | ", start);
        out.push_back(s.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 3;
    }
    return out;
}

std::string synthetic_flipbias(std::size_t triples) {
    std::string out;
    const char* labels[] = {"left", "center", "right"};
    for (std::size_t e = 0; e < triples; ++e) {
        for (int l = 0; l < 3; ++l) {
            out += R"({"id":"e)" + std::to_string(e) + "-" + labels[l] + R"(","title":"Headline )" + std::to_string(e) +
                   R"(","body":"Body text for event )" + std::to_string(e) + R"(.","label":")" + labels[l] +
                   R"(","event_id":"e)" + std::to_string(e) + "\"}\n";
        }
    }
    return out;
}

}  // namespace

TEST_CASE("tokenize matches the frozen reference table") {
    std::ifstream in(fs::path(BIASAUDIT_TEST_DIR) / "data" / "tokenizer_table.tsv");
    REQUIRE(in);
    std::string line;
    int cases = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto tab = line.find('\t');
        REQUIRE(tab != std::string::npos);
        const std::string input = line.substr(0, tab);
        CAPTURE(input);
        CHECK(tokenize(input) == split_expected(line.substr(tab + 1)));
        ++cases;
    }
    CHECK(cases >= 15);
}

TEST_CASE("tokenize edge cases") {
    CHECK(tokenize("").empty());
    CHECK(tokenize("   \n\t ").empty());
    CHECK(tokenize("a b  c") == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("detokenize attaches punctuation and clitics") {
    std::vector<std::string> toks{"Trump", "'s", "memo", ",", "released", "."};
    CHECK(detokenize(toks) == "Trump's memo, released.");
    std::vector<std::string> paren{"(", "'s"};
    CHECK(detokenize(paren) == "( 's");
}

TEST_CASE("partition property: take_prefix ++ drop_prefix retokenizes to the original") {
    // Random texts over an alphabet rich in the tokenizer's special cases.
    const std::vector<std::string> pieces = {"a",  "b",  "Z",   "n",   "t",    "s",     "'",  "’", "\"", ",", ".",
                                             "(",  ")",  "-",   "'s",  "n't",  "'ll",   "’s", "\xE2\x80\x94", " ",  " ", "  ",
                                             "\n", "é",  "U.S", "don", "word", "Trump", "…",  "!", "?",  "$", "5"};
    SplitMix64 rng(20240611);
    for (int trial = 0; trial < 3000; ++trial) {
        std::string text;
        const auto len = 1 + rng.below(25);
        for (std::uint64_t i = 0; i < len; ++i) text += pieces[rng.below(pieces.size())];
        const auto tokens = tokenize(text);
        CAPTURE(text);
        REQUIRE(tokenize(detokenize(tokens)) == tokens);
        for (std::size_t n = 1; n <= tokens.size() + 1; ++n) {
            auto head = tokenize(take_prefix(text, n).text);
            auto tail = tokenize(drop_prefix(text, n));
            head.insert(head.end(), tail.begin(), tail.end());
            REQUIRE(head == tokens);
        }
    }
}

TEST_CASE("take_prefix clamps and reports the tokens used") {
    Article a;
    a.body = "one two three four five six seven eight nine ten eleven twelve thirteen fourteen fifteen";
    auto p = take_prefix(a, 20);
    CHECK(p.tokens == 15);
    CHECK(p.text == a.body);
    CHECK(take_prefix(a, 3).text == "one two three");
    auto sweep = take_prefixes(a, kDefaultPrefixLengths);
    REQUIRE(sweep.size() == 5);
    for (const auto& s : sweep) CHECK(s.tokens == 15);
}

TEST_CASE("drop_prefix token arithmetic") {
    std::string body;
    for (int i = 0; i < 1111; ++i) body += "w" + std::to_string(i) + " ";
    CHECK(tokenize(drop_prefix(body, 320)).size() == 791);
    CHECK(drop_prefix(body, 1111).empty());
    CHECK(drop_prefix(body, 5000).empty());
    auto tail = tokenize(drop_prefix(body, 20));
    CHECK(tail.front() == "w20");
}

TEST_CASE("take_prefix of 1000-token body at n=20") {
    std::string body;
    for (int i = 0; i < 1000; ++i) body += "tok ";
    Article a;
    a.body = body;
    auto p = take_prefix(a, 20);
    CHECK(p.tokens == 20);
    CHECK(tokenize(p.text).size() == 20);
}

TEST_CASE("load_corpus: three valid records") {
    auto path = temp_file("three.jsonl",
                          R"({"id":"a1","title":"T1","body":"Tax the rich now.","label":"left","event_id":"e1"})"
                          "\n"
                          R"({"id":"a2","title":"T2","body":"Balanced report.","label":"center","event_id":"e1"})"
                          "\n\n"
                          R"({"id":"a3","title":"T3","body":"Cut taxes!","label":"right","event_id":"e1","source":"x"})"
                          "\n");
    Corpus c = load_corpus(path);
    REQUIRE(c.size() == 3);
    CHECK(c.at("a1").ground_truth == BiasLabel::Left);
    CHECK(c.at("a1").token_count == 5);
    CHECK(c.at("a3").source == "x");
    CHECK(c.corpus_id() == "three");
}

TEST_CASE("load_corpus errors") {
    SUBCASE("unknown label names the line") {
        auto path = temp_file("bad_label.jsonl", R"({"id":"a1","body":"x","label":"left"})"
                                                 "\n"
                                                 R"({"id":"a2","body":"y","label":"liberal"})"
                                                 "\n");
        try {
            load_corpus(path);
            FAIL("expected error");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
            CHECK(std::string(e.what()).find("liberal") != std::string::npos);
        }
    }
    SUBCASE("prediction-only labels are not ground truth") {
        auto path = temp_file("uncertain.jsonl", R"({"id":"a1","body":"x","label":"uncertain"})"
                                                 "\n");
        CHECK_THROWS_AS(load_corpus(path), DataError);
    }
    SUBCASE("malformed json") {
        auto path = temp_file("malformed.jsonl", "{\"id\":\"a1\",\n");
        CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("line 1"), DataError);
    }
    SUBCASE("duplicate id") {
        auto path = temp_file("dup.jsonl", R"({"id":"a1","body":"x","label":"left"})"
                                           "\n"
                                           R"({"id":"a1","body":"y","label":"right"})"
                                           "\n");
        CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("duplicate"), DataError);
    }
    SUBCASE("empty body") {
        auto path = temp_file("empty_body.jsonl", R"({"id":"a1","body":"","label":"left"})"
                                                  "\n");
        CHECK_THROWS_AS(load_corpus(path), DataError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_WITH_AS(load_corpus("/nonexistent/corpus.jsonl"), doctest::Contains("not found"), DataError);
    }
}

TEST_CASE("load_corpus: delimiter-separated tables") {
    auto csv = temp_file("table.csv",
                         "id,title,body,label,event_id\n"
                         "c1,\"Title, with comma\",\"Body with \"\"quotes\"\"\nand a newline\",left,e9\n"
                         "c2,T,Plain body,right,e9\n");
    Corpus c = load_corpus(csv);
    REQUIRE(c.size() == 2);
    CHECK(c.at("c1").title == "Title, with comma");
    CHECK(c.at("c1").body == "Body with \"quotes\"\nand a newline");
    CHECK(*c.at("c2").event_id == "e9");

    auto tsv = temp_file("table.tsv", "id\tbody\tlabel\nt1\tline one\\nline two\tcenter\nt2\tx\tbogus\n");
    CHECK_THROWS_WITH_AS(load_corpus(tsv), doctest::Contains("line 3"), DataError);
}

TEST_CASE("load is deterministic byte-for-byte") {
    auto path = temp_file("flip.jsonl", synthetic_flipbias(50));
    CHECK(load_corpus(path).serialize() == load_corpus(path).serialize());
    CHECK(load_corpus(path).content_hash() == load_corpus(path).content_hash());
}

TEST_CASE("synthetic FlipBias-shaped corpus: 3,066 articles and 1,022 triples") {
    auto path = temp_file("flipbias_full.jsonl", synthetic_flipbias(1022));
    Corpus c = load_corpus(path);
    CHECK(c.size() == 3066);
    for (auto l : kGroundTruthLabels) CHECK(static_cast<double>(c.count(l)) / c.size() == doctest::Approx(1.0 / 3));
    auto built = build_triples(c);
    CHECK(built.triples.size() == 1022);
    CHECK(built.incomplete.empty());
    for (const auto& t : built.triples) {
        CHECK(c.at(t.left_id).ground_truth == BiasLabel::Left);
        CHECK(c.at(t.center_id).ground_truth == BiasLabel::Center);
        CHECK(c.at(t.right_id).ground_truth == BiasLabel::Right);
    }
}

TEST_CASE("build_triples reports incomplete events and rejects duplicates") {
    std::vector<Article> arts;
    auto mk = [](std::string id, BiasLabel l, std::string ev) {
        Article a;
        a.id = std::move(id);
        a.body = "b";
        a.ground_truth = l;
        a.event_id = std::move(ev);
        return a;
    };
    arts.push_back(mk("l1", BiasLabel::Left, "e1"));
    arts.push_back(mk("c1", BiasLabel::Center, "e1"));
    arts.push_back(mk("r1", BiasLabel::Right, "e1"));
    arts.push_back(mk("l2", BiasLabel::Left, "e2"));
    arts.push_back(mk("r2", BiasLabel::Right, "e2"));
    Corpus c(arts);
    auto built = build_triples(c);
    REQUIRE(built.triples.size() == 1);
    CHECK(built.triples[0].event_id == "e1");
    REQUIRE(built.incomplete.size() == 1);
    CHECK(built.incomplete[0].event_id == "e2");
    CHECK(built.incomplete[0].present == std::vector<BiasLabel>{BiasLabel::Left, BiasLabel::Right});

    arts.push_back(mk("l3", BiasLabel::Left, "e1"));
    CHECK_THROWS_WITH_AS(build_triples(Corpus(arts)), doctest::Contains("two left"), DataError);
}
