#pragma once

#include "biasaudit/label.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace biasaudit {

struct Article {
    std::string id;
    std::string title;
    std::string body;
    BiasLabel ground_truth = BiasLabel::Center;  // Left, Center or Right only
    std::optional<std::string> event_id;
    std::optional<std::string> topic;
    std::string source;
    std::optional<std::string> split;  // "train"/"test"/...; used by fine-tune sampling
    std::size_t token_count = 0;
};

struct EventTriple {
    std::string event_id;
    std::string left_id;
    std::string center_id;
    std::string right_id;

    const std::string& id_for(BiasLabel label) const;
};

/// Immutable after load. Articles keep file order; ids are unique.
class Corpus {
public:
    Corpus() = default;
    explicit Corpus(std::vector<Article> articles, std::string corpus_id = {});

    const std::vector<Article>& articles() const noexcept { return articles_; }
    std::size_t size() const noexcept { return articles_.size(); }
    bool empty() const noexcept { return articles_.empty(); }

    const Article* find(std::string_view id) const;
    const Article& at(std::string_view id) const;

    /// Identifier recorded in manifests (file stem or caller-supplied).
    const std::string& corpus_id() const noexcept { return corpus_id_; }

    /// Number of articles per ground-truth label.
    std::size_t count(BiasLabel label) const;

    /// Canonical line-delimited serialization (same schema as the input
    /// records); two loads of the same file serialize identically.
    std::string serialize() const;

    /// SHA-256 of serialize().
    std::string content_hash() const;

private:
    std::vector<Article> articles_;
    std::unordered_map<std::string, std::size_t> index_;
    std::string corpus_id_;
};

enum class CorpusFormat { JsonLines, Csv, Tsv };

/// Picks a format from the file extension (.jsonl/.ndjson, .csv, .tsv).
CorpusFormat format_from_extension(const std::filesystem::path& path);

/// Loads and validates a corpus file. Errors name the offending line.
Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format);
Corpus load_corpus(const std::filesystem::path& path);

/// Parses line-delimited records from memory (used by tests and load_corpus).
Corpus parse_corpus_jsonl(std::string_view content, std::string corpus_id = {});

/// Serializes one article as a corpus record line (no trailing newline).
std::string article_to_json_line(const Article& article);

struct IncompleteEvent {
    std::string event_id;
    std::vector<BiasLabel> present;
};

struct TripleBuild {
    std::vector<EventTriple> triples;       // sorted by event_id
    std::vector<IncompleteEvent> incomplete; // sorted by event_id
};

/// Groups articles by event_id into complete L/C/R triples. Events missing a
/// label are reported in `incomplete`; a duplicate label within an event is a
/// data error.
TripleBuild build_triples(const Corpus& corpus);

struct Prefix {
    std::string text;
    std::size_t tokens = 0;  // min(n, token_count)
};

/// First min(n, token_count) tokens of the body, detokenized.
Prefix take_prefix(const Article& article, std::size_t n);
Prefix take_prefix(std::string_view text, std::size_t n);

/// take_prefix for several lengths at once (e.g. {20, 40, 80, 160, 320}).
std::vector<Prefix> take_prefixes(const Article& article, const std::vector<std::size_t>& lengths);

/// Remainder after removing the first n tokens; empty when n >= token count.
std::string drop_prefix(std::string_view text, std::size_t n);

inline const std::vector<std::size_t> kDefaultPrefixLengths = {20, 40, 80, 160, 320};

}  // namespace biasaudit
