#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace biasaudit {

/// Editable prompt texts. Placeholders are written {{NAME}}; each template
/// lists the ones it uses. Defaults ship as data/prompts/<name>.txt.
struct PromptTemplates {
    // {{ARTICLE}}
    std::string prediction;
    // Prepended verbatim by the bias-label-explanation strategy.
    std::string label_definitions;
    // Appended as the final line by the debiasing-statement strategy.
    std::string debias_statement;
    // Few-shot block: header, then one item per example ({{HEADLINE}}, {{LABEL}}).
    std::string fewshot_header;
    std::string fewshot_item;
    // {{ARTICLE}}
    std::string continuation;
    // {{ARTICLE}}; the few-shot variant also {{LEFT}}, {{CENTER}}, {{RIGHT}}.
    std::string classifier_zero_shot;
    std::string classifier_few_shot;
    // {{ARTICLE}}
    std::string indicator_extraction;
    // {{INDICATORS}}
    std::string topic_title;

    static const PromptTemplates& defaults();

    /// Starts from defaults() and replaces every template that has a
    /// <name>.txt file in dir.
    static PromptTemplates load(const std::filesystem::path& dir);

    /// Writes every template to dir/<name>.txt.
    void save(const std::filesystem::path& dir) const;
};

/// Replaces every {{key}} occurrence. Substituted text is never rescanned.
std::string fill_placeholder(std::string_view tmpl, std::string_view key, std::string_view value);

}  // namespace biasaudit
