#pragma once

#include "biasaudit/corpus.hpp"
#include "biasaudit/gateway.hpp"
#include "biasaudit/lexicon.hpp"
#include "biasaudit/prompts.hpp"

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace biasaudit {

enum class LabelMethod { Embedding, Vocabulary, ClassifierZeroShot, ClassifierFewShot };

inline constexpr std::array<LabelMethod, 4> kLabelMethods = {
    LabelMethod::Embedding, LabelMethod::Vocabulary, LabelMethod::ClassifierZeroShot, LabelMethod::ClassifierFewShot};

/// "embedding", "vocab", "zero_shot", "few_shot".
std::string to_string(LabelMethod m);
std::optional<LabelMethod> method_from_string(std::string_view s);

std::string render_continuation_prompt(std::string_view prefix, const PromptTemplates& templates);

/// The model's continuation of `prefix`, verbatim. Throws DataError for an
/// empty prefix or an empty continuation.
std::string continue_article(Gateway& gateway, std::string_view prefix, const std::string& model_id,
                             const PromptTemplates& templates = PromptTemplates::defaults(),
                             int max_output_tokens = 1024);

/// Similarity of the suffix to each reference, indexed left/center/right.
/// A reference that is empty after truncation has no score.
struct EmbeddingLabel {
    BiasLabel label = BiasLabel::Invalid;  // Invalid only when no reference survived truncation
    std::array<std::optional<double>, 3> similarity;
    bool tie = false;
    std::string provider_id;
};

/// Argmax over the available references. Ties at the maximum resolve to
/// Center and set the tie flag. Throws DataError on zero-norm vectors,
/// dimension mismatch, or vectors from different providers.
EmbeddingLabel argmax_label(const EmbeddingVector& suffix, const std::array<std::optional<EmbeddingVector>, 3>& refs);

/// Embeds the suffix and drop_prefix(reference, n) for the triple's three
/// articles and returns the argmax label.
EmbeddingLabel label_by_embedding(Gateway& gateway, const std::string& suffix, const EventTriple& triple,
                                  const Corpus& corpus, std::size_t n, std::string_view provider_id = {});

struct VocabularyLabel {
    BiasLabel label = BiasLabel::Center;
    std::uint64_t left_hits = 0;
    std::uint64_t right_hits = 0;
    bool tie = false;
};

/// Counts lowercased suffix tokens found on each side of the vocabulary.
/// Equal counts give a Center tie. Throws DataError for an empty vocabulary.
VocabularyLabel label_by_vocabulary(std::string_view suffix, const Vocabulary& vocab);

enum class ClassifierMode { ZeroShot, FewShot };

struct ClassifierReferences {
    std::string left, center, right;
};

std::string render_classifier_prompt(std::string_view suffix, ClassifierMode mode,
                                     const ClassifierReferences* refs, const PromptTemplates& templates);

struct ClassifierLabel {
    BiasLabel label = BiasLabel::Invalid;
    std::string raw_response;
};

/// Few-shot mode needs the references (UsageError otherwise).
ClassifierLabel label_by_classifier(Gateway& gateway, std::string_view suffix, ClassifierMode mode,
                                    const ClassifierReferences* refs, const std::string& model_id,
                                    const PromptTemplates& templates = PromptTemplates::defaults());

struct RelativeSplit {
    double pct_left = 0;   // 0-100
    double pct_right = 0;
    std::size_t left = 0;
    std::size_t right = 0;
    std::size_t excluded = 0;  // Center, Uncertain, Invalid
    bool empty = true;         // no Left or Right labels at all
};

RelativeSplit relative_left_right(const std::vector<BiasLabel>& labels);

struct ContinuationResult {
    std::string article_id;
    BiasLabel source_label = BiasLabel::Center;
    std::string event_id;
    std::string model_id;
    std::size_t prefix_tokens = 0;  // requested n
    std::string suffix;
    std::size_t suffix_tokens = 0;
    std::map<std::string, BiasLabel> labels;  // method name -> label
    std::map<std::string, bool> ties;
    std::array<std::optional<double>, 3> similarity;
    std::string embedding_provider;
    std::uint64_t left_hits = 0;
    std::uint64_t right_hits = 0;
    std::map<std::string, std::string> classifier_responses;

    std::string to_json_line() const;
    static ContinuationResult from_json_line(std::string_view line);
};

inline constexpr const char* kContinuationLog = "continuations.jsonl";

/// Later lines for the same (article, n, model) supersede earlier ones; a
/// torn final line is ignored.
std::vector<ContinuationResult> read_continuation_log(const std::filesystem::path& path);

struct ContinuationOptions {
    std::string model_id;
    std::vector<std::size_t> lengths = kDefaultPrefixLengths;
    std::vector<LabelMethod> methods = {LabelMethod::Embedding};
    std::filesystem::path run_dir;
    const Vocabulary* vocabulary = nullptr;         // required for the vocabulary method
    const PromptTemplates* templates = nullptr;     // defaults when null
    std::string classifier_model;                   // defaults to model_id
    std::string embedding_provider;                 // first registered when empty
    int max_output_tokens = 1024;
    std::function<void(std::size_t done, std::size_t total)> progress;
};

struct ContinuationRun {
    std::vector<ContinuationResult> results;  // sorted by (n, article id)
    std::size_t new_results = 0;
    std::size_t skipped = 0;
};

/// Continues every article of every complete triple at each prefix length,
/// labels the suffixes with the requested methods, and appends results to
/// run_dir/continuations.jsonl. Work already logged with all requested
/// methods is skipped.
ContinuationRun run_continuation(const Corpus& corpus, Gateway& gateway, const ContinuationOptions& options);

struct SplitRow {
    std::size_t n = 0;
    std::string method;
    double pct_left = 0;
    double pct_right = 0;
    std::size_t ties = 0;
    std::size_t count = 0;
    bool empty = true;
};

/// One row per (n, method) in ascending n and method order.
std::vector<SplitRow> split_table(const std::vector<ContinuationResult>& results);

}  // namespace biasaudit
