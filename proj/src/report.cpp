#include "biasaudit/report.hpp"

#include "biasaudit/audit.hpp"
#include "biasaudit/continuation.hpp"
#include "biasaudit/digest.hpp"
#include "biasaudit/error.hpp"
#include "biasaudit/jsonl.hpp"
#include "biasaudit/topics.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace biasaudit {
namespace {

const char* kModule = "cli_report";
using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

ordered_json optional_number(std::optional<double> v) { return v ? ordered_json(*v) : ordered_json(); }

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

std::string signed_fixed(double v, int decimals) {
    if (std::fabs(v) < 0.5 * std::pow(10.0, -decimals)) v = 0.0;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%+.*f", decimals, v);
    return buf;
}

RunManifest require_manifest(const fs::path& run_dir) {
    auto m = read_manifest(run_dir);
    if (!m) throw DataError(kModule, "no manifest.json in " + run_dir.string());
    return *m;
}

std::vector<PredictionRecord> run_records(const fs::path& run_dir, const RunManifest& m) {
    std::vector<PredictionRecord> out;
    for (auto& r : read_prediction_log(run_dir / kPredictionLog))
        if (r.model_id == m.model_id && r.strategy == m.strategy) out.push_back(std::move(r));
    std::sort(out.begin(), out.end(),
              [](const PredictionRecord& a, const PredictionRecord& b) { return a.article_id < b.article_id; });
    return out;
}

fs::path emit(const fs::path& path, const std::string& content) {
    write_text_file(path, content, kModule);
    return path;
}

std::string run_header(const RunManifest& m) { return "# run\t" + m.run_id + "\t" + kManifestFile + "\n"; }

std::vector<std::string> suite_values(const MetricSuite& s, const BiasTendency& bt) {
    return {format_bti(bt.bti1),          format_bti(bt.bti2),         format_percent(s.precision),
            format_percent(s.recall),     format_percent(s.biased_f1), format_percent(s.micro_f1),
            format_percent(s.macro_f1)};
}

const std::vector<std::string> kSuiteColumns = {"bti1",      "bti2",     "precision", "recall",
                                                "biased_f1", "micro_f1", "macro_f1"};

}  // namespace

void RunManifest::assign_run_id() {
    run_id = sha256_hex(kind + "\n" + corpus_sha256 + "\n" + model_id + "\n" + strategy + "\n" + chat_provider +
                        "\n" + embedding_provider + "\n" + config_json)
                 .substr(0, 12);
}

std::string RunManifest::to_json() const {
    ordered_json j;
    j["run_id"] = run_id;
    j["kind"] = kind;
    j["corpus_id"] = corpus_id;
    j["corpus_sha256"] = corpus_sha256;
    j["model_id"] = model_id;
    j["strategy"] = strategy;
    j["chat_provider"] = chat_provider;
    j["embedding_provider"] = embedding_provider;
    j["config"] = config_json.empty() ? ordered_json::object() : ordered_json::parse(config_json);
    j["created_at"] = created_at;
    return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(std::string_view text) {
    const json j = json::parse(text);
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.kind = j.value("kind", "");
    m.corpus_id = j.value("corpus_id", "");
    m.corpus_sha256 = j.value("corpus_sha256", "");
    m.model_id = j.value("model_id", "");
    m.strategy = j.value("strategy", "");
    m.chat_provider = j.value("chat_provider", "");
    m.embedding_provider = j.value("embedding_provider", "");
    m.config_json = j.contains("config") ? ordered_json::parse(j["config"].dump()).dump() : "{}";
    m.created_at = j.value("created_at", "");
    return m;
}

std::optional<RunManifest> read_manifest(const fs::path& run_dir) {
    const auto path = run_dir / kManifestFile;
    if (!fs::exists(path)) return std::nullopt;
    try {
        return RunManifest::from_json(read_text_file(path, kModule));
    } catch (const json::exception& e) {
        throw DataError(kModule, "unreadable " + path.string() + ": " + e.what());
    }
}

RunManifest write_manifest_once(const fs::path& run_dir, RunManifest manifest) {
    manifest.assign_run_id();
    if (auto existing = read_manifest(run_dir)) {
        if (existing->run_id != manifest.run_id)
            throw UsageError(kModule, run_dir.string() + " already holds run " + existing->run_id + " (" +
                                          existing->kind + ", " + existing->model_id + ", " + existing->strategy +
                                          "); use a fresh --run-dir");
        return *existing;
    }
    fs::create_directories(run_dir);
    emit(run_dir / kManifestFile, manifest.to_json());
    return manifest;
}

std::vector<fs::path> write_audit_reports(const fs::path& run_dir) {
    const auto m = require_manifest(run_dir);
    const auto records = run_records(run_dir, m);
    if (records.empty()) throw DataError(kModule, "no predictions for this run in " + run_dir.string());
    const auto t = tally(records);
    const auto suite = binary_metrics(t);
    const auto bt = bias_tendency(t);
    std::vector<fs::path> written;

    {
        std::string tsv = run_header(m) + "ground_truth";
        for (auto p : kPredictionLabels) tsv += "\t" + std::string(to_string(p));
        tsv += "\ttotal\n";
        ordered_json rows = ordered_json::object();
        for (auto g : kGroundTruthLabels) {
            tsv += to_string(g);
            ordered_json row;
            for (auto p : kPredictionLabels) {
                tsv += "\t" + std::to_string(t.count(g, p));
                row[std::string(to_string(p))] = t.count(g, p);
            }
            tsv += "\t" + std::to_string(t.row_total(g)) + "\n";
            row["total"] = t.row_total(g);
            rows[std::string(to_string(g))] = row;
        }
        ordered_json j;
        j["run_id"] = m.run_id;
        j["manifest"] = kManifestFile;
        j["rows"] = rows;
        j["total"] = t.total();
        written.push_back(emit(run_dir / "confusion.tsv", tsv));
        written.push_back(emit(run_dir / "confusion.json", j.dump(2) + "\n"));
    }
    {
        const auto values = suite_values(suite, bt);
        std::string tsv = run_header(m) + "metric\tvalue\tflag\n";
        for (std::size_t i = 2; i < kSuiteColumns.size(); ++i)
            tsv += kSuiteColumns[i] + "\t" + values[i] + "\t" + (suite.flagged(kSuiteColumns[i]) ? "undefined" : "") +
                   "\n";
        std::string zero_denominators;
        for (const auto& u : suite.undefined) zero_denominators += (zero_denominators.empty() ? "" : ",") + u;
        const auto invalid = t.column_total(BiasLabel::Invalid), uncertain = t.column_total(BiasLabel::Uncertain);
        const double n = static_cast<double>(t.total());
        tsv += "invalid_rate\t" + format_percent(static_cast<double>(invalid) / n) + "\t\n";
        tsv += "uncertain_rate\t" + format_percent(static_cast<double>(uncertain) / n) + "\t\n";
        tsv += "count\t" + std::to_string(t.total()) + "\t\n";
        tsv += "zero_denominators\t" + (zero_denominators.empty() ? "none" : zero_denominators) + "\t\n";

        ordered_json j;
        j["run_id"] = m.run_id;
        j["manifest"] = kManifestFile;
        j["model_id"] = m.model_id;
        j["strategy"] = m.strategy;
        j["count"] = t.total();
        j["precision"] = suite.precision;
        j["recall"] = suite.recall;
        j["biased_f1"] = suite.biased_f1;
        j["micro_f1"] = suite.micro_f1;
        j["macro_f1"] = suite.macro_f1;
        j["undefined"] = suite.undefined;
        j["invalid_rate"] = static_cast<double>(invalid) / n;
        j["uncertain_rate"] = static_cast<double>(uncertain) / n;
        written.push_back(emit(run_dir / "metrics.tsv", tsv));
        written.push_back(emit(run_dir / "metrics.json", j.dump(2) + "\n"));

        std::string bti = run_header(m) + "index\tvalue\tflag\n";
        bti += "bti1\t" + values[0] + "\t" + (bt.bti1 ? "" : "undefined") + "\n";
        bti += "bti2\t" + values[1] + "\t" + (bt.bti2 ? "" : "undefined") + "\n";
        ordered_json b;
        b["run_id"] = m.run_id;
        b["manifest"] = kManifestFile;
        b["bti1"] = optional_number(bt.bti1);
        b["bti2"] = optional_number(bt.bti2);
        b["left_total"] = bt.left_total;
        b["center_total"] = bt.center_total;
        b["right_total"] = bt.right_total;
        written.push_back(emit(run_dir / "bti.tsv", bti));
        written.push_back(emit(run_dir / "bti.json", b.dump(2) + "\n"));
    }
    if (auto ta = load_topic_assignment(run_dir)) {
        const auto topics = per_topic(records, ta->topic_of);
        std::string tsv = run_header(m) + "topic\ttitle\tbti1\tbti2\tfrequency\tflag\n";
        ordered_json arr = ordered_json::array();
        for (const auto& [topic, s] : topics) {
            auto title = ta->topic_title.count(topic) ? ta->topic_title.at(topic) : topic;
            tsv += topic + "\t" + title + "\t" + format_bti(s.tendency.bti1) + "\t" + format_bti(s.tendency.bti2) +
                   "\t" + std::to_string(s.frequency) + "\t" + (s.tendency.defined() ? "" : "undefined_bti") + "\n";
            arr.push_back({{"topic", topic},
                           {"title", title},
                           {"bti1", optional_number(s.tendency.bti1)},
                           {"bti2", optional_number(s.tendency.bti2)},
                           {"frequency", s.frequency}});
        }
        ordered_json j;
        j["run_id"] = m.run_id;
        j["manifest"] = kManifestFile;
        j["topics"] = arr;
        written.push_back(emit(run_dir / "topic_bti.tsv", tsv));
        written.push_back(emit(run_dir / "topic_bti.json", j.dump(2) + "\n"));
    }
    return written;
}

std::vector<fs::path> write_topic_reports(const fs::path& run_dir, std::size_t k) {
    const auto m = require_manifest(run_dir);
    auto ta = load_topic_assignment(run_dir);
    if (!ta) throw DataError(kModule, "no topic data in " + run_dir.string() + " (missing " + kTopicAssignment + ")");
    const auto records = run_records(run_dir, m);
    if (records.empty()) throw DataError(kModule, "no predictions for this run in " + run_dir.string());
    const auto topics = per_topic(records, ta->topic_of);
    auto title_of = [&](const std::string& t) { return ta->topic_title.count(t) ? ta->topic_title.at(t) : t; };

    std::string scatter = run_header(m) + "topic_id\tinterpretation\tbti1\tbti2\tfrequency\n";
    for (const auto& [topic, s] : topics)
        scatter += topic + "\t" + title_of(topic) + "\t" + format_bti(s.tendency.bti1) + "\t" +
                   format_bti(s.tendency.bti2) + "\t" + std::to_string(s.frequency) + "\n";

    std::string ranked = run_header(m);
    bool header_done = false;
    for (auto [by, name] : {std::pair{RankBy::Bti1, "bti1"}, std::pair{RankBy::Bti2, "bti2"}}) {
        const auto r = rank_topics(topics, by, k);
        if (!header_done) {
            ranked += "# mean_frequency\t" + fixed(r.mean_frequency, 2) + "\n";
            ranked += "ranked_by\tend\trank\ttopic_id\tinterpretation\tbti1\tbti2\tfrequency\n";
            header_done = true;
        }
        auto rows = [&](const std::vector<TopicStats>& list, const char* end) {
            for (std::size_t i = 0; i < list.size(); ++i) {
                const auto& s = list[i];
                ranked += std::string(name) + "\t" + end + "\t" + std::to_string(i + 1) + "\t" + s.topic + "\t" +
                          title_of(s.topic) + "\t" + format_bti(s.tendency.bti1) + "\t" +
                          format_bti(s.tendency.bti2) + "\t" + std::to_string(s.frequency) + "\n";
            }
        };
        rows(r.top, "top");
        rows(r.bottom, "bottom");
    }
    return {emit(run_dir / "topics_scatter.tsv", scatter), emit(run_dir / "topics_ranked.tsv", ranked)};
}

std::vector<fs::path> write_continuation_reports(const fs::path& run_dir) {
    const auto m = require_manifest(run_dir);
    std::vector<ContinuationResult> results;
    for (auto& r : read_continuation_log(run_dir / kContinuationLog))
        if (r.model_id == m.model_id) results.push_back(std::move(r));
    if (results.empty()) throw DataError(kModule, "no continuation results in " + run_dir.string());
    const auto rows = split_table(results);

    std::string tsv = run_header(m) + "n\tmethod\tpct_left\tpct_right\tties\tcount\n";
    ordered_json arr = ordered_json::array();
    for (const auto& r : rows) {
        tsv += std::to_string(r.n) + "\t" + r.method + "\t" + fixed(r.pct_left, 1) + "\t" + fixed(r.pct_right, 1) +
               "\t" + std::to_string(r.ties) + "\t" + std::to_string(r.count) + "\n";
        arr.push_back({{"n", r.n},
                       {"method", r.method},
                       {"pct_left", r.pct_left},
                       {"pct_right", r.pct_right},
                       {"ties", r.ties},
                       {"count", r.count},
                       {"empty_denominator", r.empty}});
    }
    std::map<std::size_t, std::pair<double, std::size_t>> suffix_len;
    for (const auto& r : results) {
        suffix_len[r.prefix_tokens].first += static_cast<double>(r.suffix_tokens);
        ++suffix_len[r.prefix_tokens].second;
    }
    ordered_json lens = ordered_json::object();
    for (const auto& [n, p] : suffix_len) lens[std::to_string(n)] = p.first / static_cast<double>(p.second);

    ordered_json j;
    j["run_id"] = m.run_id;
    j["manifest"] = kManifestFile;
    j["splits"] = arr;
    j["mean_suffix_tokens"] = lens;
    return {emit(run_dir / "continuation_splits.tsv", tsv), emit(run_dir / "continuation_splits.json", j.dump(2) + "\n")};
}

fs::path default_reference_values() { return fs::path(BIASAUDIT_DATA_DIR) / "reference_values.json"; }

std::vector<fs::path> write_comparison_report(const fs::path& out_dir,
                                              const std::vector<std::pair<std::string, fs::path>>& runs,
                                              const fs::path& reference_json) {
    ordered_json ref;
    try {
        ref = ordered_json::parse(read_text_file(reference_json, kModule));
    } catch (const json::exception& e) {
        throw DataError(kModule, "unreadable reference values: " + std::string(e.what()));
    }
    std::map<std::string, fs::path> run_for;
    for (const auto& [key, dir] : runs) {
        auto slash = key.find('/');
        if (slash == std::string::npos) throw UsageError(kModule, "run key '" + key + "' must be <table>/<row>");
        auto table = key.substr(0, slash), row = key.substr(slash + 1);
        if (!ref.contains(table) || !ref[table]["rows"].contains(row))
            throw UsageError(kModule, "no reference row '" + key + "'");
        run_for[key] = dir;
    }

    std::string tsv = "table\trow\tcolumn\treference\tmeasured\tdelta\n";
    ordered_json out = ordered_json::array();
    auto add = [&](const std::string& table, const std::string& row, const std::string& col, const std::string& reference,
                   const std::string& measured, const std::string& delta) {
        tsv += table + "\t" + row + "\t" + col + "\t" + reference + "\t" + measured + "\t" + delta + "\n";
        out.push_back({{"table", table}, {"row", row}, {"column", col}, {"reference", reference}, {"measured", measured},
                       {"delta", delta}});
    };

    for (const auto& [table, entry] : ref.items()) {
        const std::string kind = entry.value("kind", "");
        const auto columns = entry.at("columns").get<std::vector<std::string>>();
        for (const auto& [row, values] : entry.at("rows").items()) {
            const std::string key = table + "/" + row;
            auto run = run_for.find(key);
            const bool have = run != run_for.end();

            if (kind == "audit") {
                std::vector<std::optional<double>> measured(columns.size());
                if (have) {
                    auto m = require_manifest(run->second);
                    auto t = tally(run_records(run->second, m));
                    auto s = binary_metrics(t);
                    auto bt = bias_tendency(t);
                    measured = {bt.bti1,           bt.bti2,          s.precision * 100, s.recall * 100,
                                s.biased_f1 * 100, s.micro_f1 * 100, s.macro_f1 * 100};
                }
                for (std::size_t c = 0; c < columns.size(); ++c) {
                    const double p = values[c].get<double>();
                    const bool is_bti = c < 2;
                    auto fmt = [&](double v) { return is_bti ? signed_fixed(v, 2) : fixed(v, 1); };
                    add(table, row, columns[c], fmt(p), measured[c] ? fmt(*measured[c]) : "NA",
                        measured[c] ? signed_fixed(*measured[c] - p, is_bti ? 2 : 1) : "NA");
                }
            } else if (kind == "continuation") {
                std::map<std::size_t, SplitRow> by_n;
                if (have) {
                    const std::string method = entry.at("methods").at(row).get<std::string>();
                    auto m = read_manifest(run->second);
                    std::vector<ContinuationResult> results;
                    for (auto& r : read_continuation_log(run->second / kContinuationLog))
                        if (!m || r.model_id == m->model_id) results.push_back(std::move(r));
                    for (const auto& sr : split_table(results))
                        if (sr.method == method) by_n[sr.n] = sr;
                }
                for (std::size_t c = 0; c < columns.size(); ++c) {
                    const double pl = values[c][0].get<double>(), pr = values[c][1].get<double>();
                    auto it = by_n.find(std::stoul(columns[c]));
                    const bool ok = it != by_n.end() && !it->second.empty;
                    add(table, row, columns[c], fixed(pl, 1) + "/" + fixed(pr, 1),
                        ok ? fixed(it->second.pct_left, 1) + "/" + fixed(it->second.pct_right, 1) : "NA",
                        ok ? signed_fixed(it->second.pct_left - pl, 1) : "NA");
                }
            } else if (kind == "topics") {
                std::optional<double> top, bottom;
                if (have) {
                    auto m = require_manifest(run->second);
                    auto ta = load_topic_assignment(run->second);
                    if (!ta) throw DataError(kModule, "no topic data in " + run->second.string());
                    auto r = rank_topics(per_topic(run_records(run->second, m), ta->topic_of), RankBy::Bti1, 1);
                    if (!r.top.empty()) top = r.top.front().tendency.bti1;
                    if (!r.bottom.empty()) bottom = r.bottom.front().tendency.bti1;
                }
                std::optional<double> measured[2] = {top, bottom};
                for (std::size_t c = 0; c < 2; ++c) {
                    const double p = values[c].get<double>();
                    add(table, row, columns[c], signed_fixed(p, 2), measured[c] ? signed_fixed(*measured[c], 2) : "NA",
                        measured[c] ? signed_fixed(*measured[c] - p, 2) : "NA");
                }
            } else if (kind == "clusters") {
                std::optional<long long> measured[2];
                if (have) {
                    long long indicators = 0, clusters = 0;
                    for_each_log_line(run->second / kIndicatorLog, kModule, [&](std::string_view line) {
                        indicators += static_cast<long long>(IndicatorExtraction::from_json_line(line).indicators.size());
                    });
                    for_each_log_line(run->second / kClusterLog, kModule, [&](std::string_view) { ++clusters; });
                    measured[0] = indicators;
                    measured[1] = clusters;
                }
                for (std::size_t c = 0; c < 2; ++c) {
                    const long long p = values[c].get<long long>();
                    add(table, row, columns[c], std::to_string(p), measured[c] ? std::to_string(*measured[c]) : "NA",
                        measured[c] ? (*measured[c] - p >= 0 ? "+" : "") + std::to_string(*measured[c] - p) : "NA");
                }
            }
        }
    }
    fs::create_directories(out_dir);
    ordered_json j;
    j["reference"] = reference_json.filename().string();
    j["rows"] = out;
    return {emit(out_dir / "comparison.tsv", tsv), emit(out_dir / "comparison.json", j.dump(2) + "\n")};
}

}  // namespace biasaudit
