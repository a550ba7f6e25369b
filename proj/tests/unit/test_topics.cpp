#include "doctest.h"

#include "biasaudit/error.hpp"
#include "biasaudit/topics.hpp"

#include "../support/cluster_oracle.hpp"
#include "../support/synthetic.hpp"

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>

using namespace biasaudit;
namespace fs = std::filesystem;

using synthetic::random_points;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "biasaudit_test_topics" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Corpus fixture30() { return load_corpus(fs::path(BIASAUDIT_TEST_DIR) / "data" / "fixture30.jsonl"); }

std::size_t cluster_count(const std::vector<std::size_t>& labels) {
    return std::set<std::size_t>(labels.begin(), labels.end()).size();
}

// Same partition regardless of label numbering.
std::vector<std::vector<std::size_t>> partition(const std::vector<std::size_t>& labels) {
    std::vector<std::vector<std::size_t>> groups(cluster_count(labels));
    for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
    std::sort(groups.begin(), groups.end());
    return groups;
}

}  // namespace

TEST_CASE("indicator parsing") {
    auto q = parse_indicators("\"Uses loaded language\"\n\"Quotes only one side\"\n\"Omits the cost estimate\"\n");
    CHECK(q == std::vector<std::string>{"Uses loaded language", "Quotes only one side", "Omits the cost estimate"});

    auto curly = parse_indicators("1. \xE2\x80\x9CProvides figures and quotes from individuals involved\xE2\x80\x9D");
    CHECK(curly == std::vector<std::string>{"Provides figures and quotes from individuals involved"});

    auto lines = parse_indicators("Here are the statements:\n- Frames the bill as a giveaway\n\n2) Cites one think tank\n");
    CHECK(lines == std::vector<std::string>{"Frames the bill as a giveaway", "Cites one think tank"});

    CHECK(parse_indicators("  \n\n").empty());
}

TEST_CASE("extraction with a mock model") {
    auto mock = std::make_shared<MockProvider>();
    mock->set_responder([](const ChatRequest&) { return std::string("\"a\"\n\"b\"\n\"c\""); });
    Gateway gw(GatewayConfig{}, mock, {});
    Article art;
    art.id = "x1";
    art.body = "body";
    auto e = extract_indicators(gw, art, "m");
    REQUIRE(e.indicators.size() == 3);
    CHECK(e.indicators[2].id == "x1#2");
    CHECK(e.indicators[2].article_id == "x1");
    CHECK_FALSE(e.unparseable);
    CHECK(IndicatorExtraction::from_json_line(e.to_json_line()).to_json_line() == e.to_json_line());

    mock->set_responder([](const ChatRequest&) { return std::string(""); });
    art.id = "x2";
    CHECK(extract_indicators(gw, art, "m").unparseable);

    PromptTemplates bad = PromptTemplates::defaults();
    bad.indicator_extraction = "no placeholder";
    CHECK_THROWS_AS(extract_indicators(gw, art, "m", bad), UsageError);
}

TEST_CASE("degenerate clusterings") {
    ClusterConfig cfg;
    cfg.threshold = 0.5;
    CHECK(cluster_points({{1, 2}, {1, 2}}, cfg) == std::vector<std::size_t>{0, 0});
    CHECK(cluster_points({{0, 0}, {10, 0}, {0, 10}}, cfg) == std::vector<std::size_t>{0, 1, 2});
    CHECK(cluster_points({{3, 3}}, cfg) == std::vector<std::size_t>{0});
    // merge at exactly the threshold
    cfg.threshold = 1.0;
    CHECK(cluster_points({{0, 0}, {1, 0}}, cfg) == std::vector<std::size_t>{0, 0});

    CHECK_THROWS_AS(cluster_points({}, cfg), DataError);
    CHECK_THROWS_AS(cluster_points({{1, 2}, {1, 2, 3}}, cfg), DataError);
    cfg.max_points = 2;
    CHECK_THROWS_AS(cluster_points({{1}, {2}, {3}}, cfg), DataError);
}

TEST_CASE("ward heights follow the scipy convention") {
    // singletons at distance 2, then a third point
    auto m = build_hierarchy({{0, 0}, {2, 0}, {1, 3}}, Linkage::Ward);
    REQUIRE(m.size() == 2);
    CHECK(m[0].height == doctest::Approx(2.0));
    // centroid (1,0) vs (1,3): sqrt(2*2*1/3)*3
    CHECK(m[1].height == doctest::Approx(std::sqrt(4.0 / 3.0) * 3.0));
}

TEST_CASE("clustering equals the brute-force oracle") {
    std::mt19937_64 rng(29);
    std::uniform_int_distribution<std::size_t> n_pts(1, 16), dim(1, 8);
    for (auto linkage : {Linkage::Ward, Linkage::Single, Linkage::Complete, Linkage::Average}) {
        for (int trial = 0; trial < 60; ++trial) {
            auto pts = random_points(rng, n_pts(rng), dim(rng), 3.0);
            for (double t : {0.3, 0.8, 1.5, 2.0, 4.0}) {
                ClusterConfig cfg{.threshold = t, .linkage = linkage};
                auto got = cluster_points(pts, cfg);
                auto want = oracle::agglomerate(pts, t, to_string(linkage));
                CHECK(got == want);
            }
        }
    }
}

TEST_CASE("threshold monotonicity and permutation robustness") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        auto pts = random_points(rng, 20, 4, 4.0);
        std::size_t prev = pts.size() + 1;
        for (double t : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0}) {
            auto c = cluster_count(cluster_points(pts, {.threshold = t}));
            CHECK(c <= prev);
            prev = c;
        }
        std::vector<std::size_t> perm(pts.size());
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        oracle::Points shuffled;
        for (auto i : perm) shuffled.push_back(pts[i]);
        CHECK(cluster_count(cluster_points(pts, {})) == cluster_count(cluster_points(shuffled, {})));
    }
}

TEST_CASE("cluster_indicators partitions the indicators") {
    std::mt19937_64 rng(37);
    std::vector<Indicator> inds;
    std::vector<EmbeddingVector> embs;
    for (std::size_t i = 0; i < 40; ++i) {
        inds.push_back({"a" + std::to_string(i % 7) + "#" + std::to_string(i), "a" + std::to_string(i % 7), "t"});
        embs.push_back(mock_embed("ind" + std::to_string(i), 6, 1));
    }
    auto clusters = cluster_indicators(inds, embs, {.threshold = 0.9});
    std::size_t total = 0;
    std::set<std::string> seen;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        CHECK(clusters[c].cluster_id == c);
        CHECK_FALSE(clusters[c].members.empty());
        total += clusters[c].members.size();
        for (auto& m : clusters[c].members) CHECK(seen.insert(m).second);
    }
    CHECK(total == inds.size());
    // canonical numbering: clusters ordered by their first member
    for (std::size_t c = 1; c < clusters.size(); ++c) {
        auto pos = [&](const std::string& id) {
            return std::find_if(inds.begin(), inds.end(), [&](auto& x) { return x.id == id; }) - inds.begin();
        };
        CHECK(pos(clusters[c - 1].members.front()) < pos(clusters[c].members.front()));
    }
    auto back = TopicCluster::from_json_line(clusters[0].to_json_line());
    CHECK(back.to_json_line() == clusters[0].to_json_line());

    embs.pop_back();
    CHECK_THROWS_AS(cluster_indicators(inds, embs), DataError);
}

TEST_CASE("interpretation") {
    auto mock = std::make_shared<MockProvider>();
    Gateway gw(GatewayConfig{}, mock, {});
    TopicCluster one{0, {"a#0"}, {"a"}, std::nullopt};
    std::map<std::string, std::string> text = {{"a#0", "Comprehensive use of quotes and citations in journalism"},
                                               {"b#0", "Relies on anonymous officials"}};
    auto title = interpret_topic(gw, one, text, "m");
    CHECK(title == "Comprehensive use of quotes and");
    CHECK(interpret_topic(gw, one, text, "m") == title);

    TopicCluster empty;
    CHECK_THROWS_AS(interpret_topic(gw, empty, text, "m"), DataError);

    // sampling keeps at most max_indicators lines
    std::string seen_prompt;
    mock->set_responder([&](const ChatRequest& r) {
        seen_prompt = r.messages.back().content;
        return std::string("\"Sourcing Practices\"\n");
    });
    TopicCluster big;
    for (int i = 0; i < 30; ++i) {
        big.members.push_back("m#" + std::to_string(i));
        text["m#" + std::to_string(i)] = "statement " + std::to_string(i);
    }
    CHECK(interpret_topic(gw, big, text, "m", PromptTemplates::defaults(), 5, 1) == "Sourcing Practices");
    CHECK(std::count(seen_prompt.begin(), seen_prompt.end(), '\n') < 5 + 4);
}

TEST_CASE("predefined topics pass through") {
    auto corpus = fixture30();
    auto ta = assign_topics(corpus);
    CHECK_FALSE(ta.latent);
    for (const auto& a : corpus.articles()) CHECK(ta.topic_of.at(a.id) == *a.topic);
    CHECK(TopicAssignment::parse(ta.serialize()).topic_of == ta.topic_of);

    std::vector<Article> arts(1);
    arts[0].id = "no-topic";
    arts[0].body = "b";
    CHECK_THROWS_AS(assign_predefined_topics(Corpus(arts)), DataError);
}

TEST_CASE("latent plurality assignment") {
    // 20 articles p0..p19; article i has indicators in clusters listed below.
    const std::vector<std::vector<std::size_t>> owned = {
        {3, 3, 7}, {1}, {2, 2}, {0, 1, 1}, {4, 0, 4}, {5, 6}, {6, 5, 5}, {0}, {7, 7, 7, 1}, {2, 3},
        {1, 2, 1, 2}, {4}, {4, 4, 0, 0, 0}, {6}, {5}, {3, 7}, {7, 3, 3}, {0, 0}, {1, 6, 6}, {2}};
    // hand-computed: plurality cluster, ties to the lowest id
    const std::vector<std::size_t> expect = {3, 1, 2, 1, 4, 5, 5, 0, 7, 2, 1, 4, 0, 6, 5, 3, 3, 0, 6, 2};
    const std::set<std::size_t> tied_expect = {5, 9, 10, 15};

    std::vector<Article> arts;
    std::vector<TopicCluster> clusters(8);
    for (std::size_t c = 0; c < 8; ++c) clusters[c].cluster_id = c;
    for (std::size_t i = 0; i < owned.size(); ++i) {
        Article a;
        a.id = "p" + std::to_string(i);
        a.body = "b";
        arts.push_back(a);
        for (std::size_t k = 0; k < owned[i].size(); ++k)
            clusters[owned[i][k]].members.push_back(a.id + "#" + std::to_string(k));
    }
    Article extra;
    extra.id = "p20";
    extra.body = "b";
    extra.topic = "economy";
    arts.push_back(extra);
    clusters[2].interpretation = "Budget Framing";

    auto ta = assign_topics(Corpus(arts), &clusters);
    CHECK(ta.latent);
    for (std::size_t i = 0; i < expect.size(); ++i)
        CHECK(ta.topic_of.at("p" + std::to_string(i)) == cluster_topic_id(expect[i]));
    CHECK(ta.topic_of.at("p20") == "economy");
    std::set<std::size_t> tied;
    for (const auto& id : ta.tied) tied.insert(std::stoul(id.substr(1)));
    CHECK(tied == tied_expect);
    CHECK(ta.topic_title.at(cluster_topic_id(2)) == "Budget Framing");

    arts.push_back(Article{.id = "orphan", .body = "b"});
    CHECK_THROWS_AS(assign_topics(Corpus(arts), &clusters), DataError);
}

TEST_CASE("topic pipeline over the fixture corpus") {
    auto corpus = fixture30();
    auto dir = fresh_dir("pipeline");
    auto mock = std::make_shared<MockProvider>();
    TopicOptions opt;
    opt.model_id = "mock-chat";
    opt.run_dir = dir;
    opt.cluster.threshold = 1.2;

    std::size_t calls = 0;
    TopicRun first;
    {
        Gateway gw(GatewayConfig{.cache_dir = dir / "cache"}, mock, {mock});
        first = run_topics(corpus, gw, opt);
        calls = mock->calls();
    }
    CHECK(first.extractions.size() == 30);
    CHECK(first.indicator_count >= 60);
    CHECK(first.assignment.topic_of.size() == 30);
    for (const auto& c : first.clusters) CHECK(c.interpretation.has_value());
    CHECK(fs::exists(dir / kClusterLog));

    auto loaded = load_topic_assignment(dir);
    REQUIRE(loaded.has_value());
    CHECK(loaded->latent);
    CHECK(loaded->topic_of == first.assignment.topic_of);
    CHECK(loaded->topic_title == first.assignment.topic_title);

    Gateway gw(GatewayConfig{.cache_dir = dir / "cache"}, mock, {mock});
    auto second = run_topics(corpus, gw, opt);
    CHECK(mock->calls() == calls);
    CHECK(second.assignment.topic_of == first.assignment.topic_of);
    CHECK_FALSE(load_topic_assignment(fresh_dir("none")).has_value());
}
