#pragma once

#include "biasaudit/corpus.hpp"
#include "biasaudit/gateway.hpp"
#include "biasaudit/prompts.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace biasaudit {

struct Indicator {
    std::string id;  // "<article_id>#<k>"
    std::string article_id;
    std::string text;
};

/// Splits model output into indicator texts: quoted items when the output
/// has any, otherwise non-empty lines with list markers removed.
std::vector<std::string> parse_indicators(std::string_view raw);

struct IndicatorExtraction {
    std::string article_id;
    std::string model_id;
    std::string raw_response;
    std::vector<Indicator> indicators;
    bool unparseable = false;  // no indicator could be read from the output

    std::string to_json_line() const;
    static IndicatorExtraction from_json_line(std::string_view line);
};

IndicatorExtraction extract_indicators(Gateway& gateway, const Article& article, const std::string& model_id,
                                       const PromptTemplates& templates = PromptTemplates::defaults());

enum class Linkage { Ward, Single, Complete, Average };

std::string to_string(Linkage l);
std::optional<Linkage> linkage_from_string(std::string_view s);

struct ClusterConfig {
    double threshold = 2.0;
    Linkage linkage = Linkage::Ward;
    std::size_t max_points = 25000;
    bool normalize = false;  // unit-normalize vectors before clustering
};

/// One step of the hierarchy: clusters holding points `a` and `b` joined at
/// `height`. Ward heights use sqrt(2*nu*nv/(nu+nv)) * |cu - cv|, which is
/// the Euclidean distance for two singletons.
struct Merge {
    std::size_t a = 0;
    std::size_t b = 0;
    double height = 0;
};

/// Full agglomerative hierarchy (n-1 merges, ascending height).
std::vector<Merge> build_hierarchy(const std::vector<std::vector<double>>& points, Linkage linkage);

/// Flat clustering: merges continue while the smallest linkage distance is
/// at most the threshold. Returns a cluster id per point; ids are numbered
/// in order of each cluster's first point.
std::vector<std::size_t> cluster_points(const std::vector<std::vector<double>>& points, const ClusterConfig& config);

struct TopicCluster {
    std::size_t cluster_id = 0;
    std::vector<std::string> members;       // indicator ids, input order
    std::vector<std::string> article_ids;   // sorted, unique
    std::optional<std::string> interpretation;

    std::string to_json_line() const;
    static TopicCluster from_json_line(std::string_view line);
};

/// Clusters indicator embeddings (parallel vectors). Throws DataError on an
/// empty input, mismatched dimensions, or more points than config.max_points.
std::vector<TopicCluster> cluster_indicators(const std::vector<Indicator>& indicators,
                                             const std::vector<EmbeddingVector>& embeddings,
                                             const ClusterConfig& config = {});

/// One-line title for a cluster from at most max_indicators member texts
/// (seeded sample when the cluster is larger).
std::string interpret_topic(Gateway& gateway, const TopicCluster& cluster,
                            const std::map<std::string, std::string>& indicator_text, const std::string& model_id,
                            const PromptTemplates& templates = PromptTemplates::defaults(),
                            std::size_t max_indicators = 20, std::uint64_t seed = 0);

struct TopicAssignment {
    bool latent = false;
    std::map<std::string, std::string> topic_of;      // article id -> topic id
    std::map<std::string, std::string> topic_title;   // topic id -> interpretation (latent mode)
    std::vector<std::string> tied;                    // articles whose plurality was tied

    /// "article_id\ttopic" lines, sorted by article id.
    std::string serialize() const;
    static TopicAssignment parse(std::string_view text);
};

/// Topic id of a latent cluster ("cluster-0007").
std::string cluster_topic_id(std::size_t cluster_id);

/// Pass-through of each article's topic field; DataError if any is missing.
TopicAssignment assign_predefined_topics(const Corpus& corpus);

/// Each article goes to the cluster holding most of its indicators; ties
/// go to the lowest cluster id and are listed. DataError for an article
/// with no indicators and no topic field of its own.
TopicAssignment assign_latent_topics(const Corpus& corpus, const std::vector<TopicCluster>& clusters);

/// Latent assignment when clusters are given, predefined otherwise.
TopicAssignment assign_topics(const Corpus& corpus, const std::vector<TopicCluster>* clusters = nullptr);

inline constexpr const char* kIndicatorLog = "indicators.jsonl";
inline constexpr const char* kClusterLog = "clusters.jsonl";
inline constexpr const char* kTopicAssignment = "topic_assignment.tsv";

struct TopicOptions {
    std::string model_id;
    std::filesystem::path run_dir;
    ClusterConfig cluster;
    std::string embedding_provider;
    std::size_t title_indicators = 20;
    std::uint64_t seed = 0;
    const PromptTemplates* templates = nullptr;
    std::function<void(std::size_t done, std::size_t total)> progress;
};

struct TopicRun {
    std::vector<IndicatorExtraction> extractions;  // corpus order
    std::vector<TopicCluster> clusters;
    TopicAssignment assignment;
    std::vector<std::string> unparseable;  // articles whose output yielded no indicators
    std::size_t indicator_count = 0;
};

/// extract (resumable via indicators.jsonl) -> embed -> cluster -> interpret
/// -> assign; writes clusters.jsonl and topic_assignment.tsv.
TopicRun run_topics(const Corpus& corpus, Gateway& gateway, const TopicOptions& options);

/// Reads topic_assignment.tsv (and titles from clusters.jsonl when present).
std::optional<TopicAssignment> load_topic_assignment(const std::filesystem::path& run_dir);

/// Writes topic_assignment.tsv for a predefined-topic corpus.
void save_topic_assignment(const std::filesystem::path& run_dir, const TopicAssignment& assignment);

}  // namespace biasaudit
