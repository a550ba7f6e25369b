#include "doctest.h"

#include "biasaudit/audit.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace biasaudit;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path golden(const std::string& name) { return fs::path(BIASAUDIT_TEST_DIR) / "golden" / name; }

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "biasaudit_test_audit" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Article fixture_article() {
    Article a;
    a.id = "golden-1";
    a.title = "Explosive memo released as Trump escalates fight over Russia probe";
    a.body = slurp(golden("fixture_article.txt"));
    a.ground_truth = BiasLabel::Center;
    return a;
}

Corpus balanced_corpus(std::size_t per_label) {
    std::vector<Article> arts;
    for (std::size_t i = 0; i < per_label; ++i)
        for (auto l : kGroundTruthLabels) {
            Article a;
            a.id = std::string(to_string(l)) + "-" + std::to_string(i);
            a.title = "Headline " + a.id;
            a.body = "Body of article " + a.id + " about the budget vote.";
            a.ground_truth = l;
            a.event_id = "e" + std::to_string(i);
            arts.push_back(std::move(a));
        }
    return Corpus(std::move(arts), "balanced");
}

}  // namespace

TEST_CASE("prompt fidelity: rendered prompts byte-match golden files") {
    const Article a = fixture_article();
    CHECK(render_prompt(PromptStrategy::vanilla(), a) == slurp(golden("prompt_vanilla.txt")));
    CHECK(render_prompt(PromptStrategy::label_explanation(), a) == slurp(golden("prompt_ble.txt")));
    CHECK(render_prompt(PromptStrategy::debias_statement(), a) == slurp(golden("prompt_ds.txt")));
    CHECK(render_prompt(PromptStrategy::few_shot(3, 0), a) == slurp(golden("prompt_fewshot3_seed0.txt")));
}

TEST_CASE("default few-shot pool equals the shipped headline table") {
    std::ifstream in(golden("fewshot_pool.tsv"));
    std::string line;
    std::vector<FewShotExample> expected;
    while (std::getline(in, line)) {
        auto tab = line.find('\t');
        expected.push_back({line.substr(0, tab), *label_from_string(line.substr(tab + 1))});
    }
    const auto& pool = default_fewshot_pool();
    REQUIRE(pool.size() == expected.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        CHECK(pool[i].headline == expected[i].headline);
        CHECK(pool[i].label == expected[i].label);
    }
}

TEST_CASE("render_prompt structure") {
    const Article a = fixture_article();
    const std::string vanilla = render_prompt(PromptStrategy::vanilla(), a);
    CHECK(vanilla.find(a.body) != std::string::npos);
    CHECK(vanilla.find("{left, right, center, uncertain}") != std::string::npos);

    SUBCASE("DS sentence is the final line") {
        auto p = render_prompt(PromptStrategy::debias_statement(), a);
        CHECK(p.substr(0, vanilla.size()) == vanilla);
        CHECK(p.substr(p.rfind('\n') + 1) ==
              "Please ensure that your answer is unbiased and free from reliance on stereotypes.");
    }
    SUBCASE("composite applies parts in order") {
        auto s = PromptStrategy::parse("ble+fewshot-6+ds");
        CHECK(s.descriptor() == "ble+fewshot-6+ds");
        auto p = render_prompt(s, a);
        const auto defs = p.find("Left-wing politics");
        const auto examples = p.find("Examples:");
        const auto body = p.find("Given the article");
        CHECK(defs == 0);
        CHECK(examples > defs);
        CHECK(body > examples);
        CHECK(p.size() > vanilla.size());
        CHECK(p.ends_with("reliance on stereotypes."));
    }
    SUBCASE("title flag") {
        PromptStrategy s;
        s.include_title = true;
        CHECK(render_prompt(s, a).find(a.title + "\n\n" + a.body) != std::string::npos);
    }
    SUBCASE("purity") { CHECK(render_prompt(PromptStrategy::few_shot(9, 5), a) == render_prompt(PromptStrategy::few_shot(9, 5), a)); }
    SUBCASE("custom templates") {
        auto t = PromptTemplates::defaults();
        t.prediction = "Label this: {{ARTICLE}}";
        CHECK(render_prompt(PromptStrategy::vanilla(), a, t) == "Label this: " + a.body);
    }
}

TEST_CASE("few-shot selection") {
    const auto& pool = default_fewshot_pool();
    auto three = select_fewshot(pool, 3, 11);
    REQUIRE(three.size() == 3);
    // A whole same-event triple in L/C/R order.
    CHECK(three[0].label == BiasLabel::Left);
    CHECK(three[1].label == BiasLabel::Center);
    CHECK(three[2].label == BiasLabel::Right);
    CHECK(select_fewshot(pool, 12, 3).size() == 12);
    for (std::size_t k : kFewShotPresets) CHECK(select_fewshot(pool, k, 1).size() == k);
    bool differs = false;
    for (std::uint64_t s = 0; s < 10; ++s) differs |= select_fewshot(pool, 3, s)[0].headline != three[0].headline;
    CHECK(differs);
    CHECK_THROWS_AS(select_fewshot(pool, 13, 0), UsageError);
    CHECK_THROWS_AS(render_prompt(PromptStrategy::few_shot(13), fixture_article()), UsageError);
}

TEST_CASE("strategy descriptors") {
    CHECK(PromptStrategy::parse("vanilla").descriptor() == "vanilla");
    CHECK(PromptStrategy::parse("3-shot").descriptor() == "fewshot-3");
    CHECK(PromptStrategy::parse("DS").descriptor() == "ds");
    CHECK_THROWS_AS(PromptStrategy::parse("ds+ds"), UsageError);
    CHECK_THROWS_AS(PromptStrategy::parse("fewshot-0"), UsageError);
    CHECK_THROWS_AS(PromptStrategy::parse("chain-of-thought"), UsageError);
}

TEST_CASE("parse_label against the hand-labeled response fixture") {
    std::ifstream in(fs::path(BIASAUDIT_TEST_DIR) / "data" / "parse_label_fixture.jsonl");
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        const std::string raw = j["raw"];
        CAPTURE(raw);
        CHECK(to_string(parse_label(raw)) == j["label"].get<std::string>());
        ++n;
    }
    CHECK(n == 50);
}

TEST_CASE("parse_label idempotent on canonical strings") {
    for (auto l : {BiasLabel::Left, BiasLabel::Center, BiasLabel::Right, BiasLabel::Uncertain}) {
        std::string s(to_string(l));
        CHECK(parse_label(s) == l);
        CHECK(parse_label(" \t" + display_name(l) + "\n ") == l);
        std::string upper = s;
        for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        CHECK(parse_label(upper) == l);
    }
}

TEST_CASE("prediction records round-trip through the log format") {
    PredictionRecord r{"a1", "m", "ds", "line\n\"q\"", BiasLabel::Uncertain, BiasLabel::Right, "abc", "t", "prompt"};
    auto back = PredictionRecord::from_json_line(r.to_json_line());
    CHECK(back.raw_response == r.raw_response);
    CHECK(back.parsed == BiasLabel::Uncertain);
    CHECK(back.ground_truth == BiasLabel::Right);
    CHECK(back.prompt == "prompt");
}

TEST_CASE("run_audit: mock sweep, resumability and invalid rate") {
    const Corpus corpus = balanced_corpus(10);
    auto dir = fresh_dir("sweep");
    auto mock = std::make_shared<MockProvider>();
    GatewayConfig cfg;
    cfg.cache_dir = dir / "cache";
    Gateway gw(cfg, mock, {mock});
    AuditOptions opt;
    opt.model_id = "mock-model";
    opt.run_dir = dir / "run";

    auto first = run_audit(corpus, gw, opt);
    CHECK(first.records.size() == 30);
    CHECK(first.new_records == 30);
    CHECK(first.invalid_rate == 0.0);
    CHECK(first.provider_calls == 30);
    std::set<std::string> ids;
    for (const auto& r : first.records) ids.insert(r.article_id);
    CHECK(ids.size() == 30);

    auto second = run_audit(corpus, gw, opt);
    CHECK(second.provider_calls == 0);
    CHECK(second.new_records == 0);
    CHECK(second.skipped == 30);
    CHECK(mock->chat_calls() == 30);
    CHECK(second.records.size() == 30);

    // A different strategy in the same run dir is a separate sweep.
    opt.strategy = PromptStrategy::debias_statement();
    auto ds = run_audit(corpus, gw, opt);
    CHECK(ds.new_records == 30);
    for (const auto& r : ds.records) CHECK(r.prompt.ends_with("free from reliance on stereotypes."));
}

TEST_CASE("run_audit resumes after an interrupted sweep") {
    const Corpus corpus = balanced_corpus(10);
    auto dir = fresh_dir("resume");
    auto mock = std::make_shared<MockProvider>();
    std::atomic<int> calls{0};
    mock->set_responder([&](const ChatRequest&) -> std::string {
        if (++calls == 12) throw ProviderError(ProviderErrorKind::Auth, "key revoked");
        return "center";
    });
    Gateway gw(GatewayConfig{.concurrency = 1}, mock, {});
    AuditOptions opt;
    opt.model_id = "m";
    opt.run_dir = dir;
    CHECK_THROWS_AS(run_audit(corpus, gw, opt), ProviderError);
    const auto logged = read_prediction_log(dir / kPredictionLog).size();
    CHECK(logged == 11);

    auto resumed = run_audit(corpus, gw, opt);
    CHECK(resumed.new_records == 19);
    CHECK(resumed.records.size() == 30);
}

TEST_CASE("run_audit reports the mock refusal rate") {
    const Corpus corpus = balanced_corpus(334);
    auto mock = std::make_shared<MockProvider>(MockConfig{.seed = 3, .refusal_rate = 0.2});
    Gateway gw(GatewayConfig{}, mock, {});
    AuditOptions opt;
    opt.model_id = "m";
    opt.run_dir = fresh_dir("refusals");
    auto result = run_audit(corpus, gw, opt);
    CHECK(result.records.size() == 1002);
    CHECK(result.invalid_rate == doctest::Approx(0.20).epsilon(0.2));  // within +-0.04
}

TEST_CASE("torn final log line is ignored") {
    auto dir = fresh_dir("torn");
    PredictionRecord r{"a1", "m", "vanilla", "left", BiasLabel::Left, BiasLabel::Left, "d", "t", "p"};
    {
        std::ofstream out(dir / kPredictionLog);
        out << r.to_json_line() << "\n" << R"({"article_id":"a2","mod)";
    }
    CHECK(read_prediction_log(dir / kPredictionLog).size() == 1);
}

TEST_CASE("shipped prompt files equal the built-in templates") {
    auto shipped = PromptTemplates::load(fs::path(BIASAUDIT_DATA_DIR) / "prompts");
    const auto& d = PromptTemplates::defaults();
    CHECK(shipped.prediction == d.prediction);
    CHECK(shipped.label_definitions == d.label_definitions);
    CHECK(shipped.debias_statement == d.debias_statement);
    CHECK(shipped.fewshot_header == d.fewshot_header);
    CHECK(shipped.fewshot_item == d.fewshot_item);
    CHECK(shipped.continuation == d.continuation);
    CHECK(shipped.classifier_zero_shot == d.classifier_zero_shot);
    CHECK(shipped.classifier_few_shot == d.classifier_few_shot);
    CHECK(shipped.indicator_extraction == d.indicator_extraction);
    CHECK(shipped.topic_title == d.topic_title);
}
