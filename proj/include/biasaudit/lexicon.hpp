#pragma once

#include "biasaudit/corpus.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace biasaudit {

struct StopwordList {
    std::string id;
    std::set<std::string, std::less<>> words;

    bool contains(std::string_view token) const { return words.count(token) > 0; }
};

/// The frozen English list shipped as data/stopwords_en_v1.txt.
const StopwordList& default_stopwords();

/// One word per line; blank lines and '#' comments ignored. The id is the
/// file stem.
StopwordList load_stopwords(const std::filesystem::path& path);

/// Lowercased tokens with punctuation, clitics and stopwords removed.
std::vector<std::string> content_tokens(std::string_view text, const StopwordList& stopwords);

using FrequencyTable = std::map<std::string, std::uint64_t, std::less<>>;

struct SideFrequencies {
    FrequencyTable left;
    FrequencyTable right;
    std::uint64_t left_total = 0;   // token occurrences on the left side
    std::uint64_t right_total = 0;
    std::string corpus_id;
    std::string stopword_id;
};

/// Per-side token frequencies over Left and Right articles; Center articles
/// are ignored. Throws DataError if either side has no articles.
SideFrequencies count_side_frequencies(const Corpus& corpus, const StopwordList& stopwords = default_stopwords(),
                                       std::size_t workers = 1);

struct VocabularyConfig {
    double ratio_factor = 2.0;
    std::size_t left_top_k = 2000;
};

struct Vocabulary {
    FrequencyTable left;
    FrequencyTable right;
    VocabularyConfig config;
    std::string corpus_id;
    std::string stopword_id;
    std::uint64_t left_sum = 0;
    std::uint64_t right_sum = 0;
    bool left_short = false;       // fewer than left_top_k left candidates
    bool right_shortfall = false;  // right candidates ran out before matching left_sum
    std::uint64_t right_overshoot = 0;

    bool empty() const { return left.empty() && right.empty(); }

    /// Header lines "# key\tvalue", then "left\ttoken\tfreq" and
    /// "right\ttoken\tfreq" rows ordered by descending frequency, then token.
    std::string serialize() const;
    static Vocabulary parse(std::string_view text);

    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);
};

/// Tokens whose left ratio exceeds ratio_factor times their right ratio are
/// left candidates; the left side keeps the left_top_k most frequent
/// (ties by token). Right candidates are defined symmetrically and taken in
/// descending frequency until their sum first reaches the left sum.
Vocabulary build_vocabulary(const SideFrequencies& freqs, const VocabularyConfig& config = {});

/// The candidate rule on its own; exposed for monotonicity checks.
bool is_left_candidate(std::uint64_t left_freq, std::uint64_t left_total, std::uint64_t right_freq,
                       std::uint64_t right_total, double ratio_factor);

}  // namespace biasaudit
