#pragma once

#include "biasaudit/corpus.hpp"
#include "biasaudit/gateway.hpp"
#include "biasaudit/label.hpp"
#include "biasaudit/prompts.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace biasaudit {

enum class StrategyKind { Vanilla, LabelExplanation, FewShot, DebiasStatement };

struct StrategyPart {
    StrategyKind kind = StrategyKind::Vanilla;
    std::size_t shots = 0;  // FewShot only
};

struct FewShotExample {
    std::string headline;
    BiasLabel label = BiasLabel::Center;
};

/// Twelve headlines (four same-event left/center/right triples) shipped as
/// the default few-shot pool.
const std::vector<FewShotExample>& default_fewshot_pool();

/// Few-shot presets offered by the CLI.
inline constexpr std::size_t kFewShotPresets[] = {3, 6, 9, 12};

/// How a prediction prompt is built. No parts (or only Vanilla) is the plain
/// prompt; several parts form a composite applied in the listed order.
struct PromptStrategy {
    std::vector<StrategyPart> parts;
    std::vector<FewShotExample> fewshot_pool = default_fewshot_pool();
    std::uint64_t seed = 0;
    bool include_title = false;

    static PromptStrategy vanilla() { return {}; }
    static PromptStrategy label_explanation() { return {{{StrategyKind::LabelExplanation, 0}}}; }
    static PromptStrategy few_shot(std::size_t k, std::uint64_t seed = 0);
    static PromptStrategy debias_statement() { return {{{StrategyKind::DebiasStatement, 0}}}; }

    /// "vanilla", "ble", "ds", "fewshot-3", or composites joined by '+'
    /// ("ble+fewshot-6+ds").
    std::string descriptor() const;
    static PromptStrategy parse(std::string_view descriptor);

    /// Throws UsageError for duplicate kinds, k == 0 or k > pool size.
    void validate() const;
};

/// Seeded selection: whole left/center/right triples of the pool (pool order
/// groups them by three) are shuffled and concatenated, then cut to k.
std::vector<FewShotExample> select_fewshot(const std::vector<FewShotExample>& pool, std::size_t k,
                                           std::uint64_t seed);

/// Headline pool built from complete event triples (titles, L/C/R order).
std::vector<FewShotExample> fewshot_pool_from_triples(const Corpus& corpus, const std::vector<EventTriple>& triples);

/// The text substituted for {{ARTICLE}}: the body, or "title\n\nbody".
std::string article_slot(const Article& article, bool include_title);

std::string render_prompt(const PromptStrategy& strategy, const Article& article,
                          const PromptTemplates& templates = PromptTemplates::defaults());

/// Total: maps any model response to a label. Lines are scanned from last to
/// first for one that normalizes to exactly left/right/center/uncertain;
/// refusals map to Invalid; otherwise a single distinct label keyword in the
/// whole text wins; anything else is Invalid.
BiasLabel parse_label(std::string_view raw);

struct PredictionRecord {
    std::string article_id;
    std::string model_id;
    std::string strategy;
    std::string raw_response;
    BiasLabel parsed = BiasLabel::Invalid;
    BiasLabel ground_truth = BiasLabel::Center;
    std::string request_digest;
    std::string timestamp;  // UTC, ISO-8601
    std::string prompt;

    std::string to_json_line() const;
    static PredictionRecord from_json_line(std::string_view line);
};

/// Reads a line-delimited prediction log; a torn final line (no newline,
/// unparsable) is ignored.
std::vector<PredictionRecord> read_prediction_log(const std::filesystem::path& path);

struct AuditOptions {
    std::string model_id;
    PromptStrategy strategy;
    std::filesystem::path run_dir;
    double temperature = 0.0;
    int max_output_tokens = 512;
    const PromptTemplates* templates = nullptr;  // defaults when null
    std::function<void(std::size_t done, std::size_t total)> progress;
};

struct AuditResult {
    std::vector<PredictionRecord> records;  // this sweep's records, sorted by article id
    std::size_t new_records = 0;
    std::size_t skipped = 0;  // already in the log
    std::size_t provider_calls = 0;
    double invalid_rate = 0.0;
};

inline constexpr const char* kPredictionLog = "predictions.jsonl";

/// Runs one (model, strategy) prediction sweep over the corpus. Records are
/// appended to run_dir/predictions.jsonl as they complete; articles already
/// logged for the same model and strategy are skipped.
AuditResult run_audit(const Corpus& corpus, Gateway& gateway, const AuditOptions& options);

/// Current UTC time, ISO-8601 with seconds.
std::string utc_timestamp();

}  // namespace biasaudit
