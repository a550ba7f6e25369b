#include "biasaudit/topics.hpp"

#include "biasaudit/digest.hpp"
#include "biasaudit/error.hpp"
#include "biasaudit/jsonl.hpp"
#include "biasaudit/tokenizer.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>

namespace biasaudit {
namespace {

const char* kModule = "topics";
using nlohmann::json;
using nlohmann::ordered_json;

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

// Quoted spans delimited by ASCII double quotes or typographic double quotes.
std::vector<std::string> quoted_items(std::string_view raw) {
    static const std::string open_curly = "\xE2\x80\x9C", close_curly = "\xE2\x80\x9D";
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < raw.size()) {
        std::string_view closer;
        std::size_t body = 0;
        if (raw[i] == '"') {
            closer = "\"";
            body = i + 1;
        } else if (raw.compare(i, open_curly.size(), open_curly) == 0) {
            closer = close_curly;
            body = i + open_curly.size();
        } else {
            ++i;
            continue;
        }
        auto end = raw.find(closer, body);
        if (end == std::string_view::npos) break;
        auto item = trim(raw.substr(body, end - body));
        if (!item.empty()) out.push_back(std::move(item));
        i = end + closer.size();
    }
    return out;
}

std::string strip_list_marker(std::string line) {
    static const std::string bullet = "\xE2\x80\xA2";
    if (line.rfind(bullet, 0) == 0) return trim(line.substr(bullet.size()));
    if (!line.empty() && (line[0] == '-' || line[0] == '*')) return trim(line.substr(1));
    std::size_t d = 0;
    while (d < line.size() && std::isdigit(static_cast<unsigned char>(line[d]))) ++d;
    if (d > 0 && d < line.size() && (line[d] == '.' || line[d] == ')')) return trim(line.substr(d + 1));
    return line;
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

}  // namespace

std::vector<std::string> parse_indicators(std::string_view raw) {
    auto quoted = quoted_items(raw);
    if (!quoted.empty()) return quoted;
    std::vector<std::string> out;
    std::istringstream in{std::string(raw)};
    std::string line;
    while (std::getline(in, line)) {
        line = strip_list_marker(trim(line));
        if (line.empty() || line.back() == ':') continue;
        out.push_back(line);
    }
    return out;
}

std::string IndicatorExtraction::to_json_line() const {
    ordered_json j;
    j["article_id"] = article_id;
    j["model_id"] = model_id;
    j["raw_response"] = raw_response;
    std::vector<std::string> texts;
    for (const auto& i : indicators) texts.push_back(i.text);
    j["indicators"] = texts;
    j["unparseable"] = unparseable;
    return j.dump();
}

IndicatorExtraction IndicatorExtraction::from_json_line(std::string_view line) {
    const json j = json::parse(line);
    IndicatorExtraction e;
    e.article_id = j.at("article_id").get<std::string>();
    e.model_id = j.at("model_id").get<std::string>();
    e.raw_response = j.value("raw_response", "");
    e.unparseable = j.value("unparseable", false);
    std::size_t k = 0;
    for (const auto& t : j.at("indicators"))
        e.indicators.push_back({e.article_id + "#" + std::to_string(k++), e.article_id, t.get<std::string>()});
    return e;
}

IndicatorExtraction extract_indicators(Gateway& gateway, const Article& article, const std::string& model_id,
                                       const PromptTemplates& templates) {
    if (templates.indicator_extraction.find("{{ARTICLE}}") == std::string::npos)
        throw UsageError(kModule, "indicator template has no {{ARTICLE}} placeholder");
    IndicatorExtraction e;
    e.article_id = article.id;
    e.model_id = model_id;
    auto prompt = fill_placeholder(templates.indicator_extraction, "ARTICLE", article.body);
    e.raw_response = gateway.complete(ChatRequest::user(model_id, prompt, 0.0, 1024)).text;
    std::size_t k = 0;
    for (auto& t : parse_indicators(e.raw_response))
        e.indicators.push_back({article.id + "#" + std::to_string(k++), article.id, std::move(t)});
    e.unparseable = e.indicators.empty();
    return e;
}

std::string to_string(Linkage l) {
    switch (l) {
        case Linkage::Ward: return "ward";
        case Linkage::Single: return "single";
        case Linkage::Complete: return "complete";
        case Linkage::Average: return "average";
    }
    return "?";
}

std::optional<Linkage> linkage_from_string(std::string_view s) {
    for (auto l : {Linkage::Ward, Linkage::Single, Linkage::Complete, Linkage::Average})
        if (to_string(l) == s) return l;
    return std::nullopt;
}

std::vector<Merge> build_hierarchy(const std::vector<std::vector<double>>& points, Linkage linkage) {
    const std::size_t n = points.size();
    std::vector<Merge> merges;
    if (n < 2) return merges;
    merges.reserve(n - 1);

    std::vector<bool> active(n, true);
    std::vector<std::size_t> size(n, 1), rep(n);
    std::iota(rep.begin(), rep.end(), 0);

    // Ward works from centroids; the others keep a condensed distance matrix
    // updated with Lance-Williams.
    std::vector<std::vector<double>> centroid;
    std::vector<double> matrix;
    auto cell = [n](std::size_t i, std::size_t j) {
        if (i > j) std::swap(i, j);
        return i * n - i * (i + 1) / 2 + (j - i - 1);
    };
    if (linkage == Linkage::Ward) {
        centroid = points;
    } else {
        matrix.resize(n * (n - 1) / 2);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) matrix[cell(i, j)] = std::sqrt(sq_dist(points[i], points[j]));
    }
    auto dist = [&](std::size_t i, std::size_t j) {
        if (linkage != Linkage::Ward) return matrix[cell(i, j)];
        const double ni = static_cast<double>(size[i]), nj = static_cast<double>(size[j]);
        return std::sqrt(2.0 * ni * nj / (ni + nj) * sq_dist(centroid[i], centroid[j]));
    };

    // Nearest-neighbour chain: valid for every reducible linkage offered here.
    std::vector<std::size_t> chain;
    std::size_t remaining = n, first_active = 0;
    constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
    while (remaining > 1) {
        if (chain.empty()) {
            while (!active[first_active]) ++first_active;
            chain.push_back(first_active);
        }
        const std::size_t a = chain.back();
        const std::size_t prev = chain.size() >= 2 ? chain[chain.size() - 2] : none;
        std::size_t best = prev;
        double best_d = prev == none ? std::numeric_limits<double>::infinity() : dist(a, prev);
        for (std::size_t x = 0; x < n; ++x) {
            if (!active[x] || x == a) continue;
            const double d = dist(a, x);
            if (d < best_d) {
                best_d = d;
                best = x;
            }
        }
        if (best != prev) {
            chain.push_back(best);
            continue;
        }
        chain.pop_back();
        chain.pop_back();
        const std::size_t keep = std::min(a, prev), drop = std::max(a, prev);
        merges.push_back({rep[keep], rep[drop], best_d});
        if (linkage == Linkage::Ward) {
            const double na = static_cast<double>(size[keep]), nb = static_cast<double>(size[drop]);
            for (std::size_t k = 0; k < centroid[keep].size(); ++k)
                centroid[keep][k] = (na * centroid[keep][k] + nb * centroid[drop][k]) / (na + nb);
            centroid[drop].clear();
            centroid[drop].shrink_to_fit();
        } else {
            for (std::size_t k = 0; k < n; ++k) {
                if (!active[k] || k == keep || k == drop) continue;
                const double dk = matrix[cell(keep, k)], dd = matrix[cell(drop, k)];
                double v = 0;
                if (linkage == Linkage::Single) v = std::min(dk, dd);
                else if (linkage == Linkage::Complete) v = std::max(dk, dd);
                else
                    v = (static_cast<double>(size[keep]) * dk + static_cast<double>(size[drop]) * dd) /
                        static_cast<double>(size[keep] + size[drop]);
                matrix[cell(keep, k)] = v;
            }
        }
        size[keep] += size[drop];
        rep[keep] = std::min(rep[keep], rep[drop]);
        active[drop] = false;
        --remaining;
    }
    std::stable_sort(merges.begin(), merges.end(), [](const Merge& x, const Merge& y) { return x.height < y.height; });
    return merges;
}

std::vector<std::size_t> cluster_points(const std::vector<std::vector<double>>& points, const ClusterConfig& config) {
    if (points.empty()) throw DataError(kModule, "clustering needs at least one embedding");
    if (points.size() > config.max_points)
        throw DataError(kModule, std::to_string(points.size()) + " points exceed the clustering limit of " +
                                     std::to_string(config.max_points));
    if (!(config.threshold >= 0)) throw UsageError(kModule, "threshold must be non-negative");
    const std::size_t dim = points.front().size();
    for (const auto& p : points)
        if (p.size() != dim) throw DataError(kModule, "embedding dimension mismatch");

    const std::vector<std::vector<double>>* input = &points;
    std::vector<std::vector<double>> normalized;
    if (config.normalize) {
        normalized = points;
        for (auto& p : normalized) {
            const double norm = std::sqrt(std::inner_product(p.begin(), p.end(), p.begin(), 0.0));
            if (norm == 0) throw DataError(kModule, "cannot normalize a zero vector");
            for (auto& x : p) x /= norm;
        }
        input = &normalized;
    }

    UnionFind uf(points.size());
    for (const auto& m : build_hierarchy(*input, config.linkage)) {
        if (m.height > config.threshold) break;
        uf.unite(m.a, m.b);
    }
    std::vector<std::size_t> label(points.size());
    std::map<std::size_t, std::size_t> id_of_root;
    for (std::size_t i = 0; i < points.size(); ++i) {
        auto [it, _] = id_of_root.emplace(uf.find(i), id_of_root.size());
        label[i] = it->second;
    }
    return label;
}

std::string TopicCluster::to_json_line() const {
    ordered_json j;
    j["cluster_id"] = cluster_id;
    j["members"] = members;
    j["article_ids"] = article_ids;
    j["interpretation"] = interpretation ? ordered_json(*interpretation) : ordered_json();
    return j.dump();
}

TopicCluster TopicCluster::from_json_line(std::string_view line) {
    const json j = json::parse(line);
    TopicCluster c;
    c.cluster_id = j.at("cluster_id").get<std::size_t>();
    c.members = j.at("members").get<std::vector<std::string>>();
    c.article_ids = j.at("article_ids").get<std::vector<std::string>>();
    if (j.contains("interpretation") && !j["interpretation"].is_null())
        c.interpretation = j["interpretation"].get<std::string>();
    return c;
}

std::vector<TopicCluster> cluster_indicators(const std::vector<Indicator>& indicators,
                                             const std::vector<EmbeddingVector>& embeddings,
                                             const ClusterConfig& config) {
    if (indicators.size() != embeddings.size())
        throw DataError(kModule, "indicator and embedding counts differ");
    std::vector<std::vector<double>> points;
    points.reserve(embeddings.size());
    for (const auto& e : embeddings) points.push_back(e.values);
    auto label = cluster_points(points, config);

    std::size_t k = 0;
    for (auto l : label) k = std::max(k, l + 1);
    std::vector<TopicCluster> clusters(k);
    std::vector<std::set<std::string>> articles(k);
    for (std::size_t i = 0; i < label.size(); ++i) {
        clusters[label[i]].members.push_back(indicators[i].id);
        articles[label[i]].insert(indicators[i].article_id);
    }
    for (std::size_t c = 0; c < k; ++c) {
        clusters[c].cluster_id = c;
        clusters[c].article_ids.assign(articles[c].begin(), articles[c].end());
    }
    return clusters;
}

std::string interpret_topic(Gateway& gateway, const TopicCluster& cluster,
                            const std::map<std::string, std::string>& indicator_text, const std::string& model_id,
                            const PromptTemplates& templates, std::size_t max_indicators, std::uint64_t seed) {
    if (cluster.members.empty()) throw DataError(kModule, "cannot interpret an empty cluster");
    std::vector<std::size_t> pick(cluster.members.size());
    std::iota(pick.begin(), pick.end(), 0);
    if (max_indicators > 0 && pick.size() > max_indicators) {
        seeded_shuffle(pick, seed_from(cluster.members.front(), seed));
        pick.resize(max_indicators);
        std::sort(pick.begin(), pick.end());
    }
    std::string listing;
    for (auto i : pick) {
        auto it = indicator_text.find(cluster.members[i]);
        if (it == indicator_text.end()) throw DataError(kModule, "unknown indicator '" + cluster.members[i] + "'");
        if (!listing.empty()) listing += '\n';
        listing += "- " + it->second;
    }
    auto prompt = fill_placeholder(templates.topic_title, "INDICATORS", listing);
    auto raw = gateway.complete(ChatRequest::user(model_id, prompt, 0.0, 64)).text;

    std::istringstream in(raw);
    std::string line, title;
    while (std::getline(in, line))
        if (!(title = trim(line)).empty()) break;
    for (const char* prefix : {"Topic title:", "Topic:", "Title:"})
        if (title.rfind(prefix, 0) == 0) {
            title = trim(title.substr(std::string_view(prefix).size()));
            break;
        }
    if (title.size() >= 2 && title.front() == '"' && title.back() == '"') title = title.substr(1, title.size() - 2);
    if (title.empty()) throw DataError(kModule, "model returned an empty topic title");
    return title;
}

std::string cluster_topic_id(std::size_t cluster_id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "cluster-%04zu", cluster_id);
    return buf;
}

std::string TopicAssignment::serialize() const {
    std::string out = std::string("# mode\t") + (latent ? "latent" : "predefined") + "\n";
    for (const auto& [a, t] : topic_of) out += a + "\t" + t + "\n";
    return out;
}

TopicAssignment TopicAssignment::parse(std::string_view text) {
    TopicAssignment ta;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line.rfind("# mode\t", 0) == 0) {
            ta.latent = line.substr(7) == "latent";
            continue;
        }
        auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 == line.size())
            throw DataError(kModule, "topic assignment line " + std::to_string(lineno) + ": expected article<TAB>topic");
        ta.topic_of[line.substr(0, tab)] = line.substr(tab + 1);
    }
    return ta;
}

TopicAssignment assign_predefined_topics(const Corpus& corpus) {
    TopicAssignment ta;
    for (const auto& a : corpus.articles()) {
        if (!a.topic || a.topic->empty()) throw DataError(kModule, "article '" + a.id + "' has no topic");
        ta.topic_of[a.id] = *a.topic;
    }
    return ta;
}

TopicAssignment assign_latent_topics(const Corpus& corpus, const std::vector<TopicCluster>& clusters) {
    std::map<std::string, std::map<std::size_t, std::size_t>> votes;
    for (const auto& c : clusters)
        for (const auto& m : c.members) {
            auto hash = m.rfind('#');
            ++votes[hash == std::string::npos ? m : m.substr(0, hash)][c.cluster_id];
        }
    TopicAssignment ta;
    ta.latent = true;
    for (const auto& c : clusters)
        if (c.interpretation) ta.topic_title[cluster_topic_id(c.cluster_id)] = *c.interpretation;
    for (const auto& a : corpus.articles()) {
        auto it = votes.find(a.id);
        if (it == votes.end()) {
            if (!a.topic || a.topic->empty())
                throw DataError(kModule, "article '" + a.id + "' has neither a topic nor indicators");
            ta.topic_of[a.id] = *a.topic;
            continue;
        }
        std::size_t best = 0, best_votes = 0, at_best = 0;
        for (const auto& [cid, n] : it->second) {  // ascending cluster id
            if (n > best_votes) {
                best = cid;
                best_votes = n;
                at_best = 1;
            } else if (n == best_votes) {
                ++at_best;
            }
        }
        if (at_best > 1) ta.tied.push_back(a.id);
        ta.topic_of[a.id] = cluster_topic_id(best);
    }
    return ta;
}

TopicAssignment assign_topics(const Corpus& corpus, const std::vector<TopicCluster>* clusters) {
    return clusters ? assign_latent_topics(corpus, *clusters) : assign_predefined_topics(corpus);
}

TopicRun run_topics(const Corpus& corpus, Gateway& gateway, const TopicOptions& options) {
    if (options.model_id.empty()) throw UsageError(kModule, "model id is required");
    const PromptTemplates& templates = options.templates ? *options.templates : PromptTemplates::defaults();
    std::filesystem::create_directories(options.run_dir);
    const auto log_path = options.run_dir / kIndicatorLog;

    std::map<std::string, IndicatorExtraction> done;
    for_each_log_line(log_path, kModule, [&](std::string_view line) {
        auto e = IndicatorExtraction::from_json_line(line);
        if (e.model_id == options.model_id) done[e.article_id] = std::move(e);
    });

    std::vector<const Article*> pending;
    for (const auto& a : corpus.articles())
        if (!done.count(a.id)) pending.push_back(&a);
    {
        std::ofstream log(log_path, std::ios::binary | std::ios::app);
        if (!log) throw DataError(kModule, "cannot write '" + log_path.string() + "'");
        std::mutex mu;
        std::size_t completed = 0;
        gateway.for_each(pending.size(), [&](std::size_t i) {
            auto e = extract_indicators(gateway, *pending[i], options.model_id, templates);
            std::lock_guard lock(mu);
            log << e.to_json_line() << '\n';
            log.flush();
            done[e.article_id] = std::move(e);
            ++completed;
            if (options.progress) options.progress(completed, pending.size());
        });
    }

    TopicRun run;
    std::vector<Indicator> indicators;
    std::map<std::string, std::string> text_of;
    for (const auto& a : corpus.articles()) {
        auto& e = done.at(a.id);
        if (e.unparseable) run.unparseable.push_back(a.id);
        for (const auto& ind : e.indicators) {
            indicators.push_back(ind);
            text_of[ind.id] = ind.text;
        }
        run.extractions.push_back(e);
    }
    run.indicator_count = indicators.size();
    if (indicators.empty()) throw DataError(kModule, "no indicators were extracted");

    std::vector<std::string> texts;
    texts.reserve(indicators.size());
    for (const auto& i : indicators) texts.push_back(i.text);
    auto embeddings = gateway.embed(texts, options.embedding_provider);
    run.clusters = cluster_indicators(indicators, embeddings, options.cluster);

    gateway.for_each(run.clusters.size(), [&](std::size_t c) {
        run.clusters[c].interpretation = interpret_topic(gateway, run.clusters[c], text_of, options.model_id,
                                                         templates, options.title_indicators, options.seed);
    });

    run.assignment = assign_latent_topics(corpus, run.clusters);

    std::string cluster_log;
    for (const auto& c : run.clusters) cluster_log += c.to_json_line() + "\n";
    write_text_file(options.run_dir / kClusterLog, cluster_log, kModule);
    write_text_file(options.run_dir / kTopicAssignment, run.assignment.serialize(), kModule);
    return run;
}

std::optional<TopicAssignment> load_topic_assignment(const std::filesystem::path& run_dir) {
    const auto path = run_dir / kTopicAssignment;
    if (!std::filesystem::exists(path)) return std::nullopt;
    auto ta = TopicAssignment::parse(read_text_file(path, kModule));
    for_each_log_line(run_dir / kClusterLog, kModule, [&](std::string_view line) {
        auto c = TopicCluster::from_json_line(line);
        if (c.interpretation) ta.topic_title[cluster_topic_id(c.cluster_id)] = *c.interpretation;
    });
    return ta;
}

void save_topic_assignment(const std::filesystem::path& run_dir, const TopicAssignment& assignment) {
    write_text_file(run_dir / kTopicAssignment, assignment.serialize(), kModule);
}

}  // namespace biasaudit
