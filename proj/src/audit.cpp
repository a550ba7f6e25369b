#include "biasaudit/audit.hpp"

#include "biasaudit/digest.hpp"
#include "biasaudit/error.hpp"
#include "biasaudit/jsonl.hpp"
#include "biasaudit/tokenizer.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

namespace biasaudit {
namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;
const char* kModule = "audit";

std::string strategy_part_name(const StrategyPart& p) {
    switch (p.kind) {
        case StrategyKind::Vanilla: return "vanilla";
        case StrategyKind::LabelExplanation: return "ble";
        case StrategyKind::DebiasStatement: return "ds";
        case StrategyKind::FewShot: return "fewshot-" + std::to_string(p.shots);
    }
    return "vanilla";
}

StrategyPart parse_part(std::string_view name) {
    const std::string n = to_lower(name);
    if (n == "vanilla") return {StrategyKind::Vanilla, 0};
    if (n == "ble") return {StrategyKind::LabelExplanation, 0};
    if (n == "ds") return {StrategyKind::DebiasStatement, 0};
    std::string digits;
    if (n.rfind("fewshot-", 0) == 0) digits = n.substr(8);
    else if (n.size() > 5 && n.substr(n.size() - 5) == "-shot") digits = n.substr(0, n.size() - 5);
    if (!digits.empty() && std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }))
        return {StrategyKind::FewShot, static_cast<std::size_t>(std::stoul(digits))};
    throw UsageError(kModule, "unknown strategy '" + std::string(name) +
                                  "' (expected vanilla, ble, ds, fewshot-<k> or a '+'-joined composite)");
}

// Lowercase, drop punctuation/quotes/markdown, collapse whitespace.
std::string normalize_line(std::string_view line) {
    std::string out;
    bool pending_space = false;
    for (const auto& tok : tokenize(line)) {
        if (is_punctuation_token(tok)) continue;
        std::string word;
        for (char c : tok) {
            const auto uc = static_cast<unsigned char>(c);
            if (uc < 0x80 && !std::isalnum(uc)) continue;
            word.push_back(c);
        }
        if (word.empty()) continue;
        if (pending_space) out.push_back(' ');
        out += to_lower(word);
        pending_space = true;
    }
    return out;
}

std::optional<BiasLabel> keyword_label(std::string_view word) {
    if (word == "left") return BiasLabel::Left;
    if (word == "right") return BiasLabel::Right;
    if (word == "center" || word == "centre") return BiasLabel::Center;
    if (word == "uncertain") return BiasLabel::Uncertain;
    return std::nullopt;
}

constexpr const char* kRefusalMarkers[] = {
    "i cannot",         "i can't",          "i can not",       "i'm unable",   "i am unable",
    "as an ai",         "i'm sorry",        "i am sorry",      "i apologize",  "cannot determine",
    "can't determine",  "not able to determine", "i won't",    "i will not",   "unable to determine",
    "cannot provide",   "can't provide",    "cannot assign",   "can't assign", "i'm not able"};

bool looks_like_refusal(std::string_view raw) {
    std::string text = to_lower(raw);
    // Typographic apostrophe -> ASCII.
    for (std::size_t pos; (pos = text.find("\xE2\x80\x99")) != std::string::npos;) text.replace(pos, 3, "'");
    return std::any_of(std::begin(kRefusalMarkers), std::end(kRefusalMarkers),
                       [&](const char* m) { return text.find(m) != std::string::npos; });
}

}  // namespace

const std::vector<FewShotExample>& default_fewshot_pool() {
    static const std::vector<FewShotExample> pool = {
        {"Trump Accuses His Justice Department, FBI Of Favoring Democrats", BiasLabel::Left},
        {"Explosive memo released as Trump escalates fight over Russia probe", BiasLabel::Center},
        {"Trump accuses FBI, DOJ leadership of bias against Republicans and in favor of Dems", BiasLabel::Right},
        {"Shutdown truce just delays Trump's big dilemma", BiasLabel::Left},
        {"Winners and losers from the government shutdown", BiasLabel::Center},
        {"Centrists break Senate logjam, pave new path for \xE2\x80\x98" "common sense\xE2\x80\x99 bipartisanship",
         BiasLabel::Right},
        {"North Korean insults to U.S. leaders are nothing new \xE2\x80\x94 but Trump\xE2\x80\x99s deeply personal "
         "reactions are",
         BiasLabel::Left},
        {"Trump trades 'short and fat' barb with N Korea's Kim", BiasLabel::Center},
        {"Trump Take To Social Media To Hit Back At 'Short and Fat' Kim Jong-un", BiasLabel::Right},
        {"After 16 Futile Years, Congress Will Try Again to Legalize \xE2\x80\x98" "Dreamers\xE2\x80\x99",
         BiasLabel::Left},
        {"The clock is ticking': Graham and Durbin urge action on bipartisan DREAM Act by the end of September",
         BiasLabel::Center},
        {"Republican Sen. Cory Gardner agrees to support bipartisan Dream Act after Trump rescinds DACA",
         BiasLabel::Right},
    };
    return pool;
}

PromptStrategy PromptStrategy::few_shot(std::size_t k, std::uint64_t seed) {
    PromptStrategy s;
    s.parts = {{StrategyKind::FewShot, k}};
    s.seed = seed;
    return s;
}

std::string PromptStrategy::descriptor() const {
    std::string out;
    for (const auto& p : parts) {
        if (p.kind == StrategyKind::Vanilla && parts.size() > 1) continue;
        if (!out.empty()) out += "+";
        out += strategy_part_name(p);
    }
    return out.empty() ? "vanilla" : out;
}

PromptStrategy PromptStrategy::parse(std::string_view descriptor) {
    PromptStrategy s;
    std::size_t start = 0;
    while (start <= descriptor.size()) {
        std::size_t end = descriptor.find('+', start);
        if (end == std::string_view::npos) end = descriptor.size();
        auto part = parse_part(descriptor.substr(start, end - start));
        if (part.kind != StrategyKind::Vanilla) s.parts.push_back(part);
        start = end + 1;
    }
    s.validate();
    return s;
}

void PromptStrategy::validate() const {
    std::set<StrategyKind> seen;
    for (const auto& p : parts) {
        if (!seen.insert(p.kind).second)
            throw UsageError(kModule, "composite strategy repeats '" + strategy_part_name(p) + "'");
        if (p.kind == StrategyKind::FewShot) {
            if (p.shots == 0) throw UsageError(kModule, "few-shot k must be >= 1");
            if (p.shots > fewshot_pool.size())
                throw UsageError(kModule, "few-shot k=" + std::to_string(p.shots) + " exceeds pool of " +
                                              std::to_string(fewshot_pool.size()) + " headlines");
        }
    }
}

std::vector<FewShotExample> select_fewshot(const std::vector<FewShotExample>& pool, std::size_t k,
                                           std::uint64_t seed) {
    if (k > pool.size())
        throw UsageError(kModule, "few-shot k=" + std::to_string(k) + " exceeds pool of " +
                                      std::to_string(pool.size()) + " headlines");
    const std::size_t group = pool.size() % 3 == 0 ? 3 : 1;
    std::vector<std::size_t> groups(pool.size() / group);
    for (std::size_t i = 0; i < groups.size(); ++i) groups[i] = i;
    seeded_shuffle(groups, seed);
    std::vector<FewShotExample> out;
    for (std::size_t g : groups) {
        for (std::size_t j = 0; j < group && out.size() < k; ++j) out.push_back(pool[g * group + j]);
        if (out.size() == k) break;
    }
    return out;
}

std::vector<FewShotExample> fewshot_pool_from_triples(const Corpus& corpus, const std::vector<EventTriple>& triples) {
    std::vector<FewShotExample> pool;
    for (const auto& t : triples)
        for (auto l : kGroundTruthLabels) pool.push_back({corpus.at(t.id_for(l)).title, l});
    return pool;
}

std::string article_slot(const Article& article, bool include_title) {
    if (include_title && !article.title.empty()) return article.title + "\n\n" + article.body;
    return article.body;
}

std::string render_prompt(const PromptStrategy& strategy, const Article& article, const PromptTemplates& templates) {
    if (article.body.empty()) throw DataError(kModule, "article '" + article.id + "' has an empty body");
    strategy.validate();
    std::string prefix;
    std::string suffix;
    for (const auto& part : strategy.parts) {
        switch (part.kind) {
            case StrategyKind::Vanilla: break;
            case StrategyKind::LabelExplanation: prefix += templates.label_definitions + "\n\n"; break;
            case StrategyKind::FewShot: {
                prefix += templates.fewshot_header + "\n";
                for (const auto& ex : select_fewshot(strategy.fewshot_pool, part.shots, strategy.seed)) {
                    std::string item = fill_placeholder(templates.fewshot_item, "HEADLINE", ex.headline);
                    prefix += fill_placeholder(item, "LABEL", to_string(ex.label)) + "\n";
                }
                prefix += "\n";
                break;
            }
            case StrategyKind::DebiasStatement: suffix += "\n" + templates.debias_statement; break;
        }
    }
    return prefix + fill_placeholder(templates.prediction, "ARTICLE", article_slot(article, strategy.include_title)) +
           suffix;
}

BiasLabel parse_label(std::string_view raw) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= raw.size()) {
        std::size_t end = raw.find('\n', start);
        if (end == std::string_view::npos) end = raw.size();
        lines.push_back(raw.substr(start, end - start));
        start = end + 1;
    }
    for (auto it = lines.rbegin(); it != lines.rend(); ++it)
        if (auto l = keyword_label(normalize_line(*it))) return *l;

    if (looks_like_refusal(raw)) return BiasLabel::Invalid;

    std::set<BiasLabel> found;
    std::string word;
    const std::string lower = to_lower(raw);
    for (std::size_t i = 0; i <= lower.size(); ++i) {
        const char c = i < lower.size() ? lower[i] : ' ';
        if (c >= 'a' && c <= 'z') {
            word.push_back(c);
            continue;
        }
        if (auto l = keyword_label(word)) found.insert(*l);
        word.clear();
    }
    return found.size() == 1 ? *found.begin() : BiasLabel::Invalid;
}

std::string PredictionRecord::to_json_line() const {
    ordered_json j;
    j["article_id"] = article_id;
    j["model_id"] = model_id;
    j["strategy"] = strategy;
    j["ground_truth"] = std::string(to_string(ground_truth));
    j["parsed"] = std::string(to_string(parsed));
    j["raw_response"] = raw_response;
    j["request_digest"] = request_digest;
    j["timestamp"] = timestamp;
    j["prompt"] = prompt;
    return j.dump();
}

PredictionRecord PredictionRecord::from_json_line(std::string_view line) {
    const json j = json::parse(line);
    PredictionRecord r;
    r.article_id = j.at("article_id").get<std::string>();
    r.model_id = j.at("model_id").get<std::string>();
    r.strategy = j.at("strategy").get<std::string>();
    auto gt = label_from_string(j.at("ground_truth").get<std::string>());
    auto parsed = label_from_string(j.at("parsed").get<std::string>());
    if (!gt || !is_ground_truth(*gt) || !parsed) throw DataError(kModule, "prediction record has an invalid label");
    r.ground_truth = *gt;
    r.parsed = *parsed;
    r.raw_response = j.at("raw_response").get<std::string>();
    r.request_digest = j.value("request_digest", "");
    r.timestamp = j.value("timestamp", "");
    r.prompt = j.value("prompt", "");
    return r;
}

std::vector<PredictionRecord> read_prediction_log(const std::filesystem::path& path) {
    std::vector<PredictionRecord> out;
    for_each_log_line(path, kModule, [&](std::string_view line) { out.push_back(PredictionRecord::from_json_line(line)); });
    return out;
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

AuditResult run_audit(const Corpus& corpus, Gateway& gateway, const AuditOptions& options) {
    options.strategy.validate();
    if (options.model_id.empty()) throw UsageError(kModule, "model id is required");
    const PromptTemplates& templates = options.templates ? *options.templates : PromptTemplates::defaults();
    const std::string strategy = options.strategy.descriptor();
    std::filesystem::create_directories(options.run_dir);
    const auto log_path = options.run_dir / kPredictionLog;

    std::set<std::string> done;
    for (const auto& r : read_prediction_log(log_path))
        if (r.model_id == options.model_id && r.strategy == strategy) done.insert(r.article_id);

    std::vector<const Article*> pending;
    for (const auto& a : corpus.articles())
        if (!done.count(a.id)) pending.push_back(&a);

    AuditResult result;
    result.skipped = corpus.size() - pending.size();
    const std::size_t calls_before = gateway.stats().provider_calls;

    {
        std::ofstream log(log_path, std::ios::binary | std::ios::app);
        if (!log) throw DataError(kModule, "cannot write '" + log_path.string() + "'");
        std::mutex log_mutex;
        std::size_t completed = 0;
        gateway.for_each(pending.size(), [&](std::size_t i) {
            const Article& article = *pending[i];
            PredictionRecord rec;
            rec.article_id = article.id;
            rec.model_id = options.model_id;
            rec.strategy = strategy;
            rec.ground_truth = article.ground_truth;
            rec.prompt = render_prompt(options.strategy, article, templates);
            auto request =
                ChatRequest::user(options.model_id, rec.prompt, options.temperature, options.max_output_tokens);
            rec.request_digest = gateway.chat_key(request).digest;
            rec.raw_response = gateway.complete(request).text;
            rec.parsed = parse_label(rec.raw_response);
            rec.timestamp = utc_timestamp();
            std::lock_guard lock(log_mutex);
            log << rec.to_json_line() << '\n';
            log.flush();
            ++completed;
            if (options.progress) options.progress(completed, pending.size());
        });
        result.new_records = completed;
    }
    result.provider_calls = gateway.stats().provider_calls - calls_before;

    for (auto& r : read_prediction_log(log_path))
        if (r.model_id == options.model_id && r.strategy == strategy && corpus.find(r.article_id))
            result.records.push_back(std::move(r));
    std::sort(result.records.begin(), result.records.end(),
              [](const PredictionRecord& a, const PredictionRecord& b) { return a.article_id < b.article_id; });
    if (!result.records.empty()) {
        const auto invalid = std::count_if(result.records.begin(), result.records.end(),
                                           [](const PredictionRecord& r) { return r.parsed == BiasLabel::Invalid; });
        result.invalid_rate = static_cast<double>(invalid) / static_cast<double>(result.records.size());
    }
    return result;
}

}  // namespace biasaudit
