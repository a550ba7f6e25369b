#pragma once

#include "biasaudit/metrics.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace biasaudit {

/// Identity of one run directory. Written once; later invocations on the
/// same directory must agree on every field except created_at.
struct RunManifest {
    std::string run_id;  // digest of the identifying fields
    std::string kind;    // "audit", "continue", "topics"
    std::string corpus_id;
    std::string corpus_sha256;
    std::string model_id;
    std::string strategy;
    std::string chat_provider;
    std::string embedding_provider;
    std::string config_json;  // compact JSON object
    std::string created_at;

    void assign_run_id();
    std::string to_json() const;
    static RunManifest from_json(std::string_view text);
};

inline constexpr const char* kManifestFile = "manifest.json";

/// Writes manifest.json unless it exists; an existing manifest for a
/// different run is a UsageError. Returns the manifest in force.
RunManifest write_manifest_once(const std::filesystem::path& run_dir, RunManifest manifest);
std::optional<RunManifest> read_manifest(const std::filesystem::path& run_dir);

/// confusion, metrics and bti (.tsv + .json), plus topic_bti when the run
/// directory has a topic assignment. Inputs are the manifest and the
/// prediction log only.
std::vector<std::filesystem::path> write_audit_reports(const std::filesystem::path& run_dir);

/// topics_scatter.tsv and topics_ranked.tsv from the prediction log and the
/// topic assignment; DataError when the run has no topic data.
std::vector<std::filesystem::path> write_topic_reports(const std::filesystem::path& run_dir, std::size_t k = 5);

/// continuation_splits.tsv/json from the continuation log.
std::vector<std::filesystem::path> write_continuation_reports(const std::filesystem::path& run_dir);

/// Side-by-side table of measured values against the reference values in
/// reference_json. Each run is "<table>/<row>" paired with a run directory.
std::vector<std::filesystem::path> write_comparison_report(
    const std::filesystem::path& out_dir, const std::vector<std::pair<std::string, std::filesystem::path>>& runs,
    const std::filesystem::path& reference_json);

std::filesystem::path default_reference_values();

}  // namespace biasaudit
