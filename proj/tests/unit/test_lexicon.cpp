#include "doctest.h"

#include "biasaudit/error.hpp"
#include "biasaudit/lexicon.hpp"

#include "../support/lexicon_oracle.hpp"
#include "../support/synthetic.hpp"

#include <filesystem>
#include <fstream>
#include <random>

using namespace biasaudit;
namespace fs = std::filesystem;

using synthetic::corpus_of;
using synthetic::random_docs;

namespace {

std::set<std::string> stopword_file() {
    std::ifstream in(fs::path(BIASAUDIT_DATA_DIR) / "stopwords_en_v1.txt");
    std::set<std::string> s;
    std::string w;
    while (std::getline(in, w))
        if (!w.empty()) s.insert(w);
    return s;
}

void check_same(const Vocabulary& v, const oracle::Vocab& o) {
    CHECK(v.left.size() == o.left.size());
    CHECK(v.right.size() == o.right.size());
    CHECK(std::equal(v.left.begin(), v.left.end(), o.left.begin(), o.left.end()));
    CHECK(std::equal(v.right.begin(), v.right.end(), o.right.begin(), o.right.end()));
    CHECK(v.left_sum == o.left_sum);
    CHECK(v.right_sum == o.right_sum);
    CHECK(v.right_shortfall == o.right_shortfall);
}

}  // namespace

TEST_CASE("shipped stopword file matches the built-in list") {
    auto file = load_stopwords(fs::path(BIASAUDIT_DATA_DIR) / "stopwords_en_v1.txt");
    CHECK(file.id == default_stopwords().id);
    CHECK(file.words == default_stopwords().words);
    CHECK(file.words.size() == 179);
}

TEST_CASE("content tokens") {
    CHECK(content_tokens("Tax the rich!", default_stopwords()) == std::vector<std::string>{"tax", "rich"});
    CHECK(content_tokens("Trump's wall \xE2\x80\x94 isn't it?", default_stopwords()) ==
          std::vector<std::string>{"trump", "wall"});
}

TEST_CASE("side frequencies on tiny corpora") {
    auto c = corpus_of({{'L', "tax the rich"}, {'R', "cut taxes"}, {'C', "tax tax tax"}});
    auto f = count_side_frequencies(c);
    CHECK(f.left == FrequencyTable{{"rich", 1}, {"tax", 1}});
    CHECK(f.left_total == 2);
    CHECK(f.right_total == 2);

    auto five = count_side_frequencies(corpus_of({{'L', "union union union union union"}, {'R', "market"}}));
    CHECK(five.left.at("union") == 5);
    CHECK(five.right.count("union") == 0);

    CHECK_THROWS_AS(count_side_frequencies(corpus_of({{'L', "a"}, {'C', "b"}})), DataError);
}

TEST_CASE("side frequencies match an independent recount") {
    std::mt19937_64 rng(3);
    auto stop = stopword_file();
    for (int trial = 0; trial < 5; ++trial) {
        auto docs = random_docs(rng, 200, 100000);
        auto f = count_side_frequencies(corpus_of(docs), default_stopwords(), trial % 2 ? 4 : 1);
        auto o = oracle::recount(docs, stop);
        CHECK(std::equal(f.left.begin(), f.left.end(), o.left.begin(), o.left.end()));
        CHECK(std::equal(f.right.begin(), f.right.end(), o.right.begin(), o.right.end()));
        CHECK(f.left_total == o.left_total);
        CHECK(f.right_total == o.right_total);
    }
}

TEST_CASE("exclusive left token is a candidate") {
    CHECK(is_left_candidate(1, 1000, 0, 1000, 2.0));
    CHECK_FALSE(is_left_candidate(2, 100, 1, 100, 2.0));  // exactly twice is not enough
    CHECK(is_left_candidate(3, 100, 1, 100, 2.0));
}

TEST_CASE("mirrored corpus gives symmetric sides") {
    auto c = corpus_of({{'L', "x1 x1 x2 x3 shared"}, {'R', "y1 y1 y2 y3 shared"}});
    auto v = build_vocabulary(count_side_frequencies(c));
    CHECK(v.left.size() == v.right.size());
    CHECK(v.left_sum == v.right_sum);
    CHECK(v.right_overshoot == 0);
    CHECK(v.left_short);
}

TEST_CASE("vocabulary equals the exhaustive oracle") {
    std::mt19937_64 rng(5);
    auto stop = stopword_file();
    for (int trial = 0; trial < 60; ++trial) {
        auto docs = random_docs(rng, 80, 2000);
        std::size_t k = trial % 3 == 0 ? 2000 : 1 + trial % 12;
        auto v = build_vocabulary(count_side_frequencies(corpus_of(docs)), {2.0, k});
        auto o = oracle::build(oracle::recount(docs, stop), k);
        check_same(v, o);

        // invariants
        for (const auto& [t, _] : v.left) CHECK(v.right.count(t) == 0);
        if (!v.right_shortfall) {
            std::uint64_t max_right = 0;
            for (const auto& [_, f] : v.right) max_right = std::max(max_right, f);
            CHECK(v.right_sum >= v.left_sum);
            if (!v.right.empty()) CHECK(v.right_sum < v.left_sum + max_right);
        }
    }
}

TEST_CASE("raising the ratio factor never adds candidates") {
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<std::uint64_t> f(0, 60), tot(100, 400);
    for (int i = 0; i < 5000; ++i) {
        auto lf = f(rng), rf = f(rng), lt = tot(rng), rt = tot(rng);
        bool prev = true;
        for (double factor : {0.5, 1.0, 2.0, 3.0, 8.0}) {
            bool now = is_left_candidate(lf, lt, rf, rt, factor);
            CHECK((prev || !now));
            prev = now;
        }
    }
}

TEST_CASE("rebuild determinism and file roundtrip") {
    std::mt19937_64 rng(13);
    auto docs = random_docs(rng, 120, 5000);
    auto c = corpus_of(docs);
    auto a = build_vocabulary(count_side_frequencies(c, default_stopwords(), 1));
    auto b = build_vocabulary(count_side_frequencies(c, default_stopwords(), 4));
    CHECK(a.serialize() == b.serialize());

    auto path = fs::temp_directory_path() / "biasaudit_test_lexicon" / "vocab.tsv";
    a.save(path);
    auto back = Vocabulary::load(path);
    CHECK(back.serialize() == a.serialize());
    CHECK(back.corpus_id == "synthetic");
    CHECK(back.stopword_id == "stopwords_en_v1");

    CHECK_THROWS_AS(Vocabulary::parse("left\tfoo\n"), DataError);
    CHECK_THROWS_AS(Vocabulary::parse("left\tfoo\t1\nright\tfoo\t2\n"), DataError);
    CHECK_THROWS_AS(Vocabulary::load(path.parent_path() / "missing.tsv"), DataError);
}

TEST_CASE("shortfall is flagged") {
    // right side has candidates but too little mass
    auto c = corpus_of({{'L', "a1 a1 a1 a2 a2 a3"}, {'R', "b1 filler filler filler filler filler"},
                        {'L', "filler filler filler filler filler"}});
    auto v = build_vocabulary(count_side_frequencies(c));
    CHECK(v.right_shortfall);
    CHECK(v.right_sum < v.left_sum);
}
