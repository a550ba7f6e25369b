#include "biasaudit/continuation.hpp"

#include "biasaudit/audit.hpp"
#include "biasaudit/error.hpp"
#include "biasaudit/jsonl.hpp"
#include "biasaudit/tokenizer.hpp"

#include "json.hpp"

#include <algorithm>
#include <mutex>
#include <set>
#include <tuple>

namespace biasaudit {
namespace {

const char* kModule = "continuation";
using nlohmann::json;
using nlohmann::ordered_json;

constexpr std::array<BiasLabel, 3> kSides = {BiasLabel::Left, BiasLabel::Center, BiasLabel::Right};

}  // namespace

std::string to_string(LabelMethod m) {
    switch (m) {
        case LabelMethod::Embedding: return "embedding";
        case LabelMethod::Vocabulary: return "vocab";
        case LabelMethod::ClassifierZeroShot: return "zero_shot";
        case LabelMethod::ClassifierFewShot: return "few_shot";
    }
    return "?";
}

std::optional<LabelMethod> method_from_string(std::string_view s) {
    if (s == "vocabulary") return LabelMethod::Vocabulary;
    for (auto m : kLabelMethods)
        if (to_string(m) == s) return m;
    return std::nullopt;
}

std::string render_continuation_prompt(std::string_view prefix, const PromptTemplates& templates) {
    return fill_placeholder(templates.continuation, "ARTICLE", prefix);
}

std::string continue_article(Gateway& gateway, std::string_view prefix, const std::string& model_id,
                             const PromptTemplates& templates, int max_output_tokens) {
    if (prefix.empty()) throw DataError(kModule, "empty prefix");
    auto request = ChatRequest::user(model_id, render_continuation_prompt(prefix, templates), 0.0, max_output_tokens);
    auto text = gateway.complete(request).text;
    if (text.empty()) throw DataError(kModule, "model returned an empty continuation");
    return text;
}

EmbeddingLabel argmax_label(const EmbeddingVector& suffix, const std::array<std::optional<EmbeddingVector>, 3>& refs) {
    EmbeddingLabel out;
    out.provider_id = suffix.provider_id;
    double best = 0;
    std::vector<std::size_t> winners;
    for (std::size_t i = 0; i < 3; ++i) {
        if (!refs[i]) continue;
        if (refs[i]->provider_id != suffix.provider_id)
            throw DataError(kModule, "suffix and reference embeddings come from different providers ('" +
                                         suffix.provider_id + "' vs '" + refs[i]->provider_id + "')");
        const double s = cosine_similarity(suffix, *refs[i]);
        out.similarity[i] = s;
        if (winners.empty() || s > best) {
            best = s;
            winners = {i};
        } else if (s == best) {
            winners.push_back(i);
        }
    }
    if (winners.empty()) return out;
    out.tie = winners.size() > 1;
    out.label = out.tie ? BiasLabel::Center : kSides[winners.front()];
    return out;
}

EmbeddingLabel label_by_embedding(Gateway& gateway, const std::string& suffix, const EventTriple& triple,
                                  const Corpus& corpus, std::size_t n, std::string_view provider_id) {
    std::vector<std::string> texts = {suffix};
    std::array<int, 3> slot{-1, -1, -1};
    for (std::size_t i = 0; i < 3; ++i) {
        auto ref = drop_prefix(corpus.at(triple.id_for(kSides[i])).body, n);
        if (ref.empty()) continue;
        slot[i] = static_cast<int>(texts.size());
        texts.push_back(std::move(ref));
    }
    if (texts.size() == 1) {
        EmbeddingLabel none;
        none.provider_id = gateway.embedding_provider_id(provider_id);
        return none;
    }
    auto vecs = gateway.embed(texts, provider_id);
    std::array<std::optional<EmbeddingVector>, 3> refs;
    for (std::size_t i = 0; i < 3; ++i)
        if (slot[i] >= 0) refs[i] = vecs[static_cast<std::size_t>(slot[i])];
    return argmax_label(vecs[0], refs);
}

VocabularyLabel label_by_vocabulary(std::string_view suffix, const Vocabulary& vocab) {
    if (vocab.empty()) throw DataError(kModule, "vocabulary is empty");
    VocabularyLabel out;
    for (const auto& tok : tokenize(suffix)) {
        auto low = to_lower(tok);
        if (vocab.left.count(low)) ++out.left_hits;
        else if (vocab.right.count(low)) ++out.right_hits;
    }
    if (out.left_hits > out.right_hits) out.label = BiasLabel::Left;
    else if (out.right_hits > out.left_hits) out.label = BiasLabel::Right;
    else out.tie = true;
    return out;
}

std::string render_classifier_prompt(std::string_view suffix, ClassifierMode mode, const ClassifierReferences* refs,
                                     const PromptTemplates& templates) {
    if (mode == ClassifierMode::ZeroShot) return fill_placeholder(templates.classifier_zero_shot, "ARTICLE", suffix);
    if (!refs) throw UsageError(kModule, "few-shot classification needs the event triple");
    std::string p = fill_placeholder(templates.classifier_few_shot, "ARTICLE", suffix);
    p = fill_placeholder(p, "LEFT", refs->left);
    p = fill_placeholder(p, "CENTER", refs->center);
    return fill_placeholder(p, "RIGHT", refs->right);
}

ClassifierLabel label_by_classifier(Gateway& gateway, std::string_view suffix, ClassifierMode mode,
                                    const ClassifierReferences* refs, const std::string& model_id,
                                    const PromptTemplates& templates) {
    auto request = ChatRequest::user(model_id, render_classifier_prompt(suffix, mode, refs, templates), 0.0, 512);
    ClassifierLabel out;
    out.raw_response = gateway.complete(request).text;
    out.label = parse_label(out.raw_response);
    return out;
}

RelativeSplit relative_left_right(const std::vector<BiasLabel>& labels) {
    RelativeSplit s;
    for (auto l : labels) {
        if (l == BiasLabel::Left) ++s.left;
        else if (l == BiasLabel::Right) ++s.right;
        else ++s.excluded;
    }
    const auto denom = s.left + s.right;
    s.empty = denom == 0;
    if (!s.empty) {
        s.pct_left = 100.0 * static_cast<double>(s.left) / static_cast<double>(denom);
        s.pct_right = 100.0 - s.pct_left;
    }
    return s;
}

std::string ContinuationResult::to_json_line() const {
    ordered_json j;
    j["article_id"] = article_id;
    j["source_label"] = std::string(to_string(source_label));
    j["event_id"] = event_id;
    j["model_id"] = model_id;
    j["prefix_tokens"] = prefix_tokens;
    j["suffix"] = suffix;
    j["suffix_tokens"] = suffix_tokens;
    ordered_json labels = ordered_json::object(), tie_flags = ordered_json::object();
    for (const auto& [m, l] : this->labels) labels[m] = std::string(to_string(l));
    for (const auto& [m, t] : ties) tie_flags[m] = t;
    j["labels"] = labels;
    j["ties"] = tie_flags;
    if (this->labels.count("embedding")) {
        ordered_json sim = ordered_json::object();
        for (std::size_t i = 0; i < 3; ++i)
            sim[std::string(to_string(kSides[i]))] = similarity[i] ? ordered_json(*similarity[i]) : ordered_json();
        j["similarity"] = sim;
        j["embedding_provider"] = embedding_provider;
    }
    if (this->labels.count("vocab")) j["vocab_hits"] = {{"left", left_hits}, {"right", right_hits}};
    if (!classifier_responses.empty()) j["classifier_responses"] = classifier_responses;
    return j.dump();
}

ContinuationResult ContinuationResult::from_json_line(std::string_view line) {
    const json j = json::parse(line);
    ContinuationResult r;
    r.article_id = j.at("article_id").get<std::string>();
    auto src = label_from_string(j.at("source_label").get<std::string>());
    if (!src || !is_ground_truth(*src)) throw DataError(kModule, "bad source_label");
    r.source_label = *src;
    r.event_id = j.value("event_id", "");
    r.model_id = j.at("model_id").get<std::string>();
    r.prefix_tokens = j.at("prefix_tokens").get<std::size_t>();
    r.suffix = j.at("suffix").get<std::string>();
    r.suffix_tokens = j.value("suffix_tokens", std::size_t{0});
    for (const auto& [m, l] : j.at("labels").items()) {
        auto label = label_from_string(l.get<std::string>());
        if (!label) throw DataError(kModule, "bad label for method '" + m + "'");
        r.labels[m] = *label;
    }
    if (j.contains("ties"))
        for (const auto& [m, t] : j["ties"].items()) r.ties[m] = t.get<bool>();
    if (j.contains("similarity"))
        for (std::size_t i = 0; i < 3; ++i) {
            const auto& v = j["similarity"].at(std::string(to_string(kSides[i])));
            if (!v.is_null()) r.similarity[i] = v.get<double>();
        }
    r.embedding_provider = j.value("embedding_provider", "");
    if (j.contains("vocab_hits")) {
        r.left_hits = j["vocab_hits"].at("left").get<std::uint64_t>();
        r.right_hits = j["vocab_hits"].at("right").get<std::uint64_t>();
    }
    if (j.contains("classifier_responses"))
        r.classifier_responses = j["classifier_responses"].get<std::map<std::string, std::string>>();
    return r;
}

std::vector<ContinuationResult> read_continuation_log(const std::filesystem::path& path) {
    std::map<std::tuple<std::string, std::size_t, std::string>, ContinuationResult> latest;
    for_each_log_line(path, kModule, [&](std::string_view line) {
        auto r = ContinuationResult::from_json_line(line);
        auto key = std::make_tuple(r.article_id, r.prefix_tokens, r.model_id);
        latest[key] = std::move(r);
    });
    std::vector<ContinuationResult> out;
    for (auto& [_, r] : latest) out.push_back(std::move(r));
    return out;
}

ContinuationRun run_continuation(const Corpus& corpus, Gateway& gateway, const ContinuationOptions& options) {
    if (options.model_id.empty()) throw UsageError(kModule, "model id is required");
    if (options.lengths.empty()) throw UsageError(kModule, "at least one prefix length is required");
    if (options.methods.empty()) throw UsageError(kModule, "at least one labeling method is required");
    for (auto n : options.lengths)
        if (n == 0) throw UsageError(kModule, "prefix length must be positive");
    const bool want_vocab = std::count(options.methods.begin(), options.methods.end(), LabelMethod::Vocabulary) > 0;
    if (want_vocab && (!options.vocabulary || options.vocabulary->empty()))
        throw UsageError(kModule, "the vocab method needs a vocabulary file");
    const PromptTemplates& templates = options.templates ? *options.templates : PromptTemplates::defaults();
    const std::string classifier_model = options.classifier_model.empty() ? options.model_id : options.classifier_model;

    auto build = build_triples(corpus);
    if (build.triples.empty()) throw DataError(kModule, "corpus has no complete left/center/right event triples");

    std::filesystem::create_directories(options.run_dir);
    const auto log_path = options.run_dir / kContinuationLog;

    std::set<std::string> wanted;
    for (auto m : options.methods) wanted.insert(to_string(m));
    std::set<std::pair<std::string, std::size_t>> done;
    for (const auto& r : read_continuation_log(log_path)) {
        if (r.model_id != options.model_id) continue;
        bool complete = std::all_of(wanted.begin(), wanted.end(), [&](const std::string& m) { return r.labels.count(m) > 0; });
        if (complete) done.emplace(r.article_id, r.prefix_tokens);
    }

    struct Work {
        const EventTriple* triple;
        const Article* article;
        std::size_t n;
    };
    std::vector<Work> pending;
    std::size_t total = 0;
    for (auto n : options.lengths)
        for (const auto& t : build.triples)
            for (auto side : kSides) {
                ++total;
                const Article& a = corpus.at(t.id_for(side));
                if (!done.count({a.id, n})) pending.push_back({&t, &a, n});
            }

    ContinuationRun run;
    run.skipped = total - pending.size();
    {
        std::ofstream log(log_path, std::ios::binary | std::ios::app);
        if (!log) throw DataError(kModule, "cannot write '" + log_path.string() + "'");
        std::mutex log_mutex;
        std::size_t completed = 0;
        gateway.for_each(pending.size(), [&](std::size_t i) {
            const Work& w = pending[i];
            ContinuationResult r;
            r.article_id = w.article->id;
            r.source_label = w.article->ground_truth;
            r.event_id = w.triple->event_id;
            r.model_id = options.model_id;
            r.prefix_tokens = w.n;
            r.suffix = continue_article(gateway, take_prefix(*w.article, w.n).text, options.model_id, templates,
                                        options.max_output_tokens);
            r.suffix_tokens = tokenize(r.suffix).size();
            for (auto m : options.methods) {
                const auto name = to_string(m);
                switch (m) {
                    case LabelMethod::Embedding: {
                        auto e = label_by_embedding(gateway, r.suffix, *w.triple, corpus, w.n, options.embedding_provider);
                        r.labels[name] = e.label;
                        r.ties[name] = e.tie;
                        r.similarity = e.similarity;
                        r.embedding_provider = e.provider_id;
                        break;
                    }
                    case LabelMethod::Vocabulary: {
                        auto v = label_by_vocabulary(r.suffix, *options.vocabulary);
                        r.labels[name] = v.label;
                        r.ties[name] = v.tie;
                        r.left_hits = v.left_hits;
                        r.right_hits = v.right_hits;
                        break;
                    }
                    case LabelMethod::ClassifierZeroShot:
                    case LabelMethod::ClassifierFewShot: {
                        ClassifierReferences refs;
                        const bool few = m == LabelMethod::ClassifierFewShot;
                        if (few) {
                            refs.left = drop_prefix(corpus.at(w.triple->left_id).body, w.n);
                            refs.center = drop_prefix(corpus.at(w.triple->center_id).body, w.n);
                            refs.right = drop_prefix(corpus.at(w.triple->right_id).body, w.n);
                        }
                        auto c = label_by_classifier(gateway, r.suffix,
                                                     few ? ClassifierMode::FewShot : ClassifierMode::ZeroShot,
                                                     few ? &refs : nullptr, classifier_model, templates);
                        r.labels[name] = c.label;
                        r.classifier_responses[name] = c.raw_response;
                        break;
                    }
                }
            }
            std::lock_guard lock(log_mutex);
            log << r.to_json_line() << '\n';
            log.flush();
            ++completed;
            if (options.progress) options.progress(completed, pending.size());
        });
        run.new_results = completed;
    }

    std::set<std::size_t> lengths(options.lengths.begin(), options.lengths.end());
    for (auto& r : read_continuation_log(log_path))
        if (r.model_id == options.model_id && lengths.count(r.prefix_tokens) && corpus.find(r.article_id))
            run.results.push_back(std::move(r));
    std::sort(run.results.begin(), run.results.end(), [](const ContinuationResult& a, const ContinuationResult& b) {
        return std::tie(a.prefix_tokens, a.article_id) < std::tie(b.prefix_tokens, b.article_id);
    });
    return run;
}

std::vector<SplitRow> split_table(const std::vector<ContinuationResult>& results) {
    std::map<std::size_t, std::map<std::string, std::vector<const ContinuationResult*>>> groups;
    for (const auto& r : results)
        for (const auto& [m, _] : r.labels) groups[r.prefix_tokens][m].push_back(&r);

    auto method_rank = [](const std::string& m) {
        auto parsed = method_from_string(m);
        return parsed ? static_cast<int>(*parsed) : 99;
    };
    std::vector<SplitRow> rows;
    for (const auto& [n, by_method] : groups) {
        std::vector<std::string> methods;
        for (const auto& [m, _] : by_method) methods.push_back(m);
        std::stable_sort(methods.begin(), methods.end(),
                         [&](const auto& a, const auto& b) { return method_rank(a) < method_rank(b); });
        for (const auto& m : methods) {
            const auto& rs = by_method.at(m);
            std::vector<BiasLabel> labels;
            SplitRow row;
            row.n = n;
            row.method = m;
            for (const auto* r : rs) {
                labels.push_back(r->labels.at(m));
                auto t = r->ties.find(m);
                if (t != r->ties.end() && t->second) ++row.ties;
            }
            auto s = relative_left_right(labels);
            row.pct_left = s.pct_left;
            row.pct_right = s.pct_right;
            row.empty = s.empty;
            row.count = rs.size();
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace biasaudit
