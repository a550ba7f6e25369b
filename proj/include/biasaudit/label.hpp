#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace biasaudit {

enum class BiasLabel { Left = 0, Center = 1, Right = 2, Uncertain = 3, Invalid = 4 };

inline constexpr std::array<BiasLabel, 3> kGroundTruthLabels = {BiasLabel::Left, BiasLabel::Center,
                                                                BiasLabel::Right};
inline constexpr std::array<BiasLabel, 5> kPredictionLabels = {
    BiasLabel::Left, BiasLabel::Center, BiasLabel::Right, BiasLabel::Uncertain, BiasLabel::Invalid};

inline constexpr bool is_ground_truth(BiasLabel l) noexcept {
    return l == BiasLabel::Left || l == BiasLabel::Center || l == BiasLabel::Right;
}

inline constexpr std::string_view to_string(BiasLabel l) noexcept {
    switch (l) {
        case BiasLabel::Left: return "left";
        case BiasLabel::Center: return "center";
        case BiasLabel::Right: return "right";
        case BiasLabel::Uncertain: return "uncertain";
        case BiasLabel::Invalid: return "invalid";
    }
    return "invalid";
}

// Capitalized form used in prompts and human tables.
inline std::string display_name(BiasLabel l) {
    std::string s(to_string(l));
    if (!s.empty()) s[0] = static_cast<char>(s[0] - 'a' + 'A');
    return s;
}

/// Parses a serialized label (case-insensitive, exact). Returns nullopt for
/// anything outside the five canonical names.
inline std::optional<BiasLabel> label_from_string(std::string_view s) {
    std::string lower;
    lower.reserve(s.size());
    for (char c : s) lower.push_back(static_cast<char>((c >= 'A' && c <= 'Z') ? c - 'A' + 'a' : c));
    for (auto l : kPredictionLabels)
        if (lower == to_string(l)) return l;
    return std::nullopt;
}

inline constexpr std::size_t index_of(BiasLabel l) noexcept { return static_cast<std::size_t>(l); }

}  // namespace biasaudit
