#include "biasaudit/cli.hpp"

#include "biasaudit/audit.hpp"
#include "biasaudit/continuation.hpp"
#include "biasaudit/corpus.hpp"
#include "biasaudit/error.hpp"
#include "biasaudit/finetune.hpp"
#include "biasaudit/lexicon.hpp"
#include "biasaudit/metrics.hpp"
#include "biasaudit/prompts.hpp"
#include "biasaudit/report.hpp"
#include "biasaudit/topics.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <cstdlib>
#include <ostream>

namespace biasaudit {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;
const char* kModule = "cli";

struct Globals {
    std::string corpus;
    std::string model = "gpt-3.5-turbo-0613";
    std::string provider = "openai";
    std::string cache_dir;
    std::string prompts_dir;
    std::string embedding_model = "text-embedding-ada-002";
    std::uint64_t seed = 0;
    bool mock = false;
    std::size_t concurrency = 4;
};

struct Session {
    std::shared_ptr<ChatProvider> chat;
    std::vector<std::shared_ptr<EmbeddingProvider>> embedders;
    std::unique_ptr<Gateway> gateway;
};

std::optional<std::string> lookup_env(const CliEnvironment& env, const std::string& name) {
    if (env.getenv) return env.getenv(name);
    if (const char* v = std::getenv(name.c_str()); v && *v) return std::string(v);
    return std::nullopt;
}

std::string api_key(const CliEnvironment& env) {
    for (const char* name : {"BIASAUDIT_API_KEY", "OPENAI_API_KEY"})
        if (auto v = lookup_env(env, name)) return *v;
    return {};
}

bool use_mock(const Globals& g) { return g.mock || g.provider == "mock"; }

std::string base_url_for(const std::string& provider) {
    if (provider == "openai") return "https://api.openai.com";
    if (provider.rfind("http://", 0) == 0 || provider.rfind("https://", 0) == 0) return provider;
    throw UsageError(kModule, "unknown --provider '" + provider + "' (mock, openai, or a base URL)");
}

OpenAICompatibleConfig http_config(const Globals& g, const CliEnvironment& env) {
    OpenAICompatibleConfig cfg;
    cfg.provider_id = g.provider == "openai" ? "openai" : g.provider;
    cfg.api_key = api_key(env);
    cfg.embedding_model = g.embedding_model;
    if (cfg.api_key.empty())
        throw ProviderError(ProviderErrorKind::Config,
                            "no credentials: set BIASAUDIT_API_KEY or OPENAI_API_KEY, or pass --mock");
    return cfg;
}

Session open_session(const Globals& g, const CliEnvironment& env, const fs::path& run_dir) {
    Session s;
    if (env.chat) {
        s.chat = env.chat;
        s.embedders = env.embedders;
        if (s.embedders.empty())
            if (auto e = std::dynamic_pointer_cast<EmbeddingProvider>(env.chat)) s.embedders.push_back(e);
    } else if (use_mock(g)) {
        MockConfig mc;
        mc.seed = g.seed;
        auto mock = std::make_shared<MockProvider>(mc);
        s.chat = mock;
        s.embedders = {mock};
    } else {
        auto transport = std::make_shared<HttpTransport>(base_url_for(g.provider));
        auto provider = std::make_shared<OpenAICompatibleProvider>(transport, http_config(g, env));
        s.chat = provider;
        s.embedders = {provider};
    }
    if (g.concurrency == 0) throw UsageError(kModule, "--concurrency must be at least 1");
    GatewayConfig gc;
    gc.concurrency = g.concurrency;
    gc.cache_dir = g.cache_dir.empty() ? run_dir / "cache" : fs::path(g.cache_dir);
    s.gateway = std::make_unique<Gateway>(gc, s.chat, s.embedders);
    return s;
}

Corpus require_corpus(const Globals& g) {
    if (g.corpus.empty()) throw UsageError(kModule, "--corpus is required");
    return load_corpus(g.corpus);
}

PromptTemplates templates_for(const Globals& g) {
    return g.prompts_dir.empty() ? PromptTemplates::defaults() : PromptTemplates::load(g.prompts_dir);
}

RunManifest base_manifest(const std::string& kind, const Corpus& corpus, const Globals& g, const Session& s) {
    RunManifest m;
    m.kind = kind;
    m.corpus_id = corpus.corpus_id();
    m.corpus_sha256 = corpus.content_hash();
    m.model_id = g.model;
    m.chat_provider = s.chat->id();
    m.created_at = utc_timestamp();
    return m;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s + ",") {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (c != ' ') {
            cur += c;
        }
    }
    return out;
}

void print_files(std::ostream& out, const std::vector<fs::path>& files) {
    for (const auto& f : files) out << "wrote " << f.string() << "\n";
}

void install_topics(const fs::path& from, const fs::path& to) {
    auto ta = load_topic_assignment(from);
    if (!ta) throw DataError(kModule, "no topic assignment in " + from.string());
    fs::create_directories(to);
    if (fs::exists(from / kClusterLog))
        fs::copy_file(from / kClusterLog, to / kClusterLog, fs::copy_options::overwrite_existing);
    fs::copy_file(from / kTopicAssignment, to / kTopicAssignment, fs::copy_options::overwrite_existing);
}

void print_calls(std::ostream& out, const Session& s) {
    const auto st = s.gateway->stats();
    out << "provider calls: " << st.provider_calls << " (cache hits " << st.cache_hits << ", retries " << st.retries
        << ")\n";
}

// ---------------------------------------------------------------------------

struct AuditFlags {
    std::string run_dir;
    std::string strategy = "vanilla";
    std::string topics_dir;
    bool include_title = false;
};

int cmd_audit(const Globals& g, const AuditFlags& f, const CliEnvironment& env, std::ostream& out) {
    const auto corpus = require_corpus(g);
    auto strategy = PromptStrategy::parse(f.strategy);
    strategy.seed = g.seed;
    strategy.include_title = f.include_title;
    strategy.validate();
    const auto templates = templates_for(g);
    const fs::path run_dir = f.run_dir;
    auto session = open_session(g, env, run_dir);

    auto m = base_manifest("audit", corpus, g, session);
    m.strategy = strategy.descriptor();
    ordered_json cfg;
    cfg["include_title"] = f.include_title;
    cfg["seed"] = g.seed;
    cfg["temperature"] = 0.0;
    cfg["prompts"] = g.prompts_dir.empty() ? "default" : g.prompts_dir;
    m.config_json = cfg.dump();
    m = write_manifest_once(run_dir, m);

    AuditOptions opt;
    opt.model_id = g.model;
    opt.strategy = strategy;
    opt.run_dir = run_dir;
    opt.templates = &templates;
    const auto result = run_audit(corpus, *session.gateway, opt);

    if (!f.topics_dir.empty()) {
        install_topics(f.topics_dir, run_dir);
    } else if (!load_topic_assignment(run_dir) &&
               std::all_of(corpus.articles().begin(), corpus.articles().end(),
                           [](const Article& a) { return a.topic.has_value(); })) {
        save_topic_assignment(run_dir, assign_predefined_topics(corpus));
    }

    auto files = write_audit_reports(run_dir);
    if (load_topic_assignment(run_dir)) {
        auto more = write_topic_reports(run_dir);
        files.insert(files.end(), more.begin(), more.end());
    }

    const auto t = tally(result.records);
    const auto suite = binary_metrics(t);
    const auto bt = bias_tendency(t);
    out << "run " << m.run_id << ": " << result.records.size() << " articles (" << result.new_records << " new, "
        << result.skipped << " resumed)\n";
    out << "bti1 " << format_bti(bt.bti1) << "  bti2 " << format_bti(bt.bti2) << "  pre "
        << format_percent(suite.precision) << "  rec " << format_percent(suite.recall) << "  bif1 "
        << format_percent(suite.biased_f1) << "  mif1 " << format_percent(suite.micro_f1) << "  maf1 "
        << format_percent(suite.macro_f1) << "  invalid " << format_percent(result.invalid_rate) << "\n";
    print_calls(out, session);
    print_files(out, files);
    return 0;
}

struct ContinueFlags {
    std::string run_dir;
    std::string lengths = "20,40,80,160,320";
    std::string methods = "embedding";
    std::string vocab;
    std::string classifier_model;
};

int cmd_continue(const Globals& g, const ContinueFlags& f, const CliEnvironment& env, std::ostream& out) {
    const auto corpus = require_corpus(g);
    ContinuationOptions opt;
    opt.model_id = g.model;
    opt.run_dir = f.run_dir;
    opt.classifier_model = f.classifier_model;
    opt.lengths.clear();
    for (const auto& s : split_list(f.lengths)) {
        std::size_t n = 0;
        try {
            n = std::stoul(s);
        } catch (const std::exception&) {
            throw UsageError(kModule, "bad prefix length '" + s + "'");
        }
        if (n == 0) throw UsageError(kModule, "prefix lengths must be positive");
        opt.lengths.push_back(n);
    }
    opt.methods.clear();
    for (const auto& s : split_list(f.methods)) {
        auto method = method_from_string(s);
        if (!method) throw UsageError(kModule, "unknown method '" + s + "' (embedding, vocab, zero_shot, few_shot)");
        opt.methods.push_back(*method);
    }
    if (opt.lengths.empty() || opt.methods.empty()) throw UsageError(kModule, "--lengths and --methods are required");
    std::optional<Vocabulary> vocab;
    const bool wants_vocab =
        std::find(opt.methods.begin(), opt.methods.end(), LabelMethod::Vocabulary) != opt.methods.end();
    if (wants_vocab && f.vocab.empty())
        throw UsageError(kModule, "the vocab method needs --vocab <file> (build one with the lexicon command)");
    if (!f.vocab.empty()) {
        vocab = Vocabulary::load(f.vocab);
        opt.vocabulary = &*vocab;
    }
    const auto templates = templates_for(g);
    opt.templates = &templates;

    auto session = open_session(g, env, f.run_dir);
    auto m = base_manifest("continue", corpus, g, session);
    m.strategy = "continuation";
    m.embedding_provider = session.gateway->embedding_provider_id();
    ordered_json cfg;
    cfg["lengths"] = opt.lengths;
    ordered_json methods = ordered_json::array();
    for (auto meth : opt.methods) methods.push_back(to_string(meth));
    cfg["methods"] = methods;
    cfg["classifier_model"] = f.classifier_model.empty() ? g.model : f.classifier_model;
    cfg["vocabulary"] = vocab ? vocab->corpus_id + "/" + vocab->stopword_id : "";
    cfg["embedding_model"] = session.embedders.empty() ? "" : session.embedders.front()->model();
    m.config_json = cfg.dump();
    m = write_manifest_once(f.run_dir, m);

    const auto run = run_continuation(corpus, *session.gateway, opt);
    const auto files = write_continuation_reports(f.run_dir);
    out << "run " << m.run_id << ": " << run.results.size() << " continuations (" << run.new_results << " new, "
        << run.skipped << " resumed)\n";
    out << "n\tmethod\tpct_left\tpct_right\tties\tcount\n";
    for (const auto& r : split_table(run.results)) {
        char line[160];
        std::snprintf(line, sizeof line, "%zu\t%s\t%.1f\t%.1f\t%zu\t%zu\n", r.n, r.method.c_str(), r.pct_left,
                      r.pct_right, r.ties, r.count);
        out << line;
    }
    print_calls(out, session);
    print_files(out, files);
    return 0;
}

struct LexiconFlags {
    std::string out;
    double ratio = 2.0;
    std::size_t top_k = 2000;
    std::string stopwords;
};

int cmd_lexicon(const Globals& g, const LexiconFlags& f, std::ostream& out) {
    const auto corpus = require_corpus(g);
    if (!(f.ratio > 0)) throw UsageError(kModule, "--ratio must be positive");
    if (f.top_k == 0) throw UsageError(kModule, "--top-k must be positive");
    const auto stopwords = f.stopwords.empty() ? default_stopwords() : load_stopwords(f.stopwords);
    const auto freqs = count_side_frequencies(corpus, stopwords, g.concurrency);
    const auto vocab = build_vocabulary(freqs, {f.ratio, f.top_k});
    vocab.save(f.out);
    out << "left " << vocab.left.size() << " tokens (sum " << vocab.left_sum << "), right " << vocab.right.size()
        << " tokens (sum " << vocab.right_sum << ")";
    if (vocab.left_short) out << " [fewer left candidates than top-k]";
    if (vocab.right_shortfall) out << " [right side short of the left sum]";
    out << "\nwrote " << f.out << "\n";
    return 0;
}

struct TopicFlags {
    std::string run_dir;
    std::string audit_dir;
    std::string linkage = "ward";
    double threshold = 2.0;
    bool predefined = false;
    bool normalize = false;
    std::size_t title_indicators = 20;
    std::size_t top_k = 5;
};

int cmd_topics(const Globals& g, const TopicFlags& f, const CliEnvironment& env, std::ostream& out) {
    const auto corpus = require_corpus(g);
    const fs::path run_dir = f.run_dir;
    if (f.predefined) {
        fs::create_directories(run_dir);
        const auto ta = assign_predefined_topics(corpus);
        save_topic_assignment(run_dir, ta);
        std::set<std::string> distinct;
        for (const auto& [a, t] : ta.topic_of) distinct.insert(t);
        out << distinct.size() << " predefined topics over " << ta.topic_of.size() << " articles\n";
    } else {
        auto linkage = linkage_from_string(f.linkage);
        if (!linkage) throw UsageError(kModule, "unknown linkage '" + f.linkage + "'");
        if (!(f.threshold > 0)) throw UsageError(kModule, "--threshold must be positive");
        const auto templates = templates_for(g);
        auto session = open_session(g, env, run_dir);

        TopicOptions opt;
        opt.model_id = g.model;
        opt.run_dir = run_dir;
        opt.cluster.threshold = f.threshold;
        opt.cluster.linkage = *linkage;
        opt.cluster.normalize = f.normalize;
        opt.title_indicators = f.title_indicators;
        opt.seed = g.seed;
        opt.templates = &templates;

        auto m = base_manifest("topics", corpus, g, session);
        m.strategy = "indicators";
        m.embedding_provider = session.gateway->embedding_provider_id();
        ordered_json cfg;
        cfg["threshold"] = f.threshold;
        cfg["linkage"] = to_string(*linkage);
        cfg["normalize"] = f.normalize;
        cfg["title_indicators"] = f.title_indicators;
        cfg["seed"] = g.seed;
        cfg["embedding_model"] = session.embedders.empty() ? "" : session.embedders.front()->model();
        m.config_json = cfg.dump();
        m = write_manifest_once(run_dir, m);

        const auto run = run_topics(corpus, *session.gateway, opt);
        out << "run " << m.run_id << ": " << run.indicator_count << " indicators -> " << run.clusters.size()
            << " clusters";
        if (!run.unparseable.empty()) out << " (" << run.unparseable.size() << " articles without indicators)";
        out << "\n";
        if (!run.assignment.tied.empty())
            out << run.assignment.tied.size() << " articles had tied plurality votes\n";
        print_calls(out, session);
    }
    if (!f.audit_dir.empty()) {
        install_topics(run_dir, f.audit_dir);
        auto files = write_audit_reports(f.audit_dir);
        auto more = write_topic_reports(f.audit_dir, f.top_k);
        files.insert(files.end(), more.begin(), more.end());
        print_files(out, files);
    }
    return 0;
}

struct FinetuneFlags {
    std::string out;
    std::string mix = "LCR";
    std::string strategy = "vanilla";
    std::string base_model = "gpt-3.5-turbo-0613";
    std::size_t total = 300;
    std::size_t lc_left = 0;
    int epochs = 3;
    int batch_size = 32;
    bool right_shift = false;
    bool submit = false;
};

int cmd_finetune(const Globals& g, const FinetuneFlags& f, const CliEnvironment& env, std::ostream& out) {
    auto corpus = require_corpus(g);
    if (f.right_shift) corpus = relabel_right_shift(corpus);
    auto mix = FineTuneMix::parse(f.mix, f.total, g.seed);
    mix.lc_left = f.lc_left;
    auto strategy = PromptStrategy::parse(f.strategy);
    strategy.seed = g.seed;
    strategy.validate();
    const auto ds = build_ft_dataset(corpus, mix, templates_for(g), strategy);
    write_ft_dataset(ds, f.out);
    out << "mix " << mix.name() << ":";
    for (const auto& [label, n] : ds.histogram) out << " " << to_string(label) << "=" << n;
    out << (ds.from_train_split ? " (train split)" : "") << "\nwrote " << f.out << "\n";

    if (f.submit) {
        std::shared_ptr<FineTuneBackend> backend = env.finetune;
        if (!backend) {
            if (use_mock(g))
                backend = std::make_shared<MockFineTuneBackend>();
            else
                backend = std::make_shared<OpenAIFineTuneBackend>(
                    std::make_shared<HttpTransport>(base_url_for(g.provider)), http_config(g, env));
        }
        FineTuneHyperparams hp;
        hp.epochs = f.epochs;
        hp.batch_size = f.batch_size;
        const auto job = submit_ft_job(*backend, f.out, f.base_model, hp);
        out << "job " << job.id << " " << job.status << " (file " << job.training_file << ", base " << job.model
            << ")\n";
    }
    return 0;
}

struct ReportFlags {
    std::string what;
    std::string run_dir;
    std::string out;
    std::string reference;
    std::vector<std::string> runs;
    std::size_t top_k = 5;
};

int cmd_report(const ReportFlags& f, std::ostream& out) {
    if (f.what == "compare") {
        std::vector<std::pair<std::string, fs::path>> runs;
        for (const auto& r : f.runs) {
            auto eq = r.find('=');
            if (eq == std::string::npos) throw UsageError(kModule, "--run expects <table>/<row>=<run dir>");
            runs.emplace_back(r.substr(0, eq), r.substr(eq + 1));
        }
        const fs::path ref = f.reference.empty() ? default_reference_values() : fs::path(f.reference);
        print_files(out, write_comparison_report(f.out.empty() ? fs::path(".") : fs::path(f.out), runs, ref));
        return 0;
    }
    if (f.run_dir.empty()) throw UsageError(kModule, "--run-dir is required");
    if (f.what == "audit")
        print_files(out, write_audit_reports(f.run_dir));
    else if (f.what == "topics")
        print_files(out, write_topic_reports(f.run_dir, f.top_k));
    else
        print_files(out, write_continuation_reports(f.run_dir));
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const CliEnvironment& env) {
    CLI::App app{"Political-leaning audits of chat models over left/center/right article corpora", "biasaudit"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--corpus", g.corpus, "Corpus file (.jsonl, .csv, .tsv)");
    app.add_option("--model", g.model, "Chat model id")->capture_default_str();
    app.add_option("--provider", g.provider, "mock, openai, or a base URL of a compatible server")
        ->capture_default_str();
    app.add_option("--cache-dir", g.cache_dir, "Response cache (default <run dir>/cache)");
    app.add_option("--prompts", g.prompts_dir, "Directory of prompt template overrides");
    app.add_option("--embedding-model", g.embedding_model, "Embedding model id")->capture_default_str();
    app.add_option("--seed", g.seed, "Seed for sampling and the mock provider")->capture_default_str();
    app.add_flag("--mock", g.mock, "Use the offline mock provider");
    app.add_option("--concurrency", g.concurrency, "Parallel provider calls")->capture_default_str();

    AuditFlags af;
    auto* audit = app.add_subcommand("audit", "Predict a label for every article and write metric reports");
    audit->add_option("--run-dir", af.run_dir, "Run directory")->required();
    audit->add_option("--strategy", af.strategy, "vanilla, ble, ds, fewshot-K, or a '+' composite")
        ->capture_default_str();
    audit->add_flag("--include-title", af.include_title, "Prepend the title to the article text");
    audit->add_option("--topics-dir", af.topics_dir, "Use the topic assignment from a topics run");

    ContinueFlags cf;
    auto* cont = app.add_subcommand("continue", "Continuation probe over event triples");
    cont->add_option("--run-dir", cf.run_dir, "Run directory")->required();
    cont->add_option("--lengths", cf.lengths, "Comma-separated prefix lengths")->capture_default_str();
    cont->add_option("--methods", cf.methods, "embedding, vocab, zero_shot, few_shot")->capture_default_str();
    cont->add_option("--vocab", cf.vocab, "Vocabulary file from the lexicon command");
    cont->add_option("--classifier-model", cf.classifier_model, "Model for the classifier methods");

    LexiconFlags lf;
    auto* lex = app.add_subcommand("lexicon", "Build the left/right vocabulary");
    lex->add_option("--out", lf.out, "Output file")->required();
    lex->add_option("--ratio", lf.ratio, "Ratio factor")->capture_default_str();
    lex->add_option("--top-k", lf.top_k, "Left-side size")->capture_default_str();
    lex->add_option("--stopwords", lf.stopwords, "Stopword file, one word per line");

    TopicFlags tf;
    auto* top = app.add_subcommand("topics", "Extract indicators, cluster them, and assign topics");
    top->add_option("--run-dir", tf.run_dir, "Run directory")->required();
    top->add_flag("--predefined", tf.predefined, "Use the corpus topic field instead of clustering");
    top->add_option("--threshold", tf.threshold, "Distance threshold")->capture_default_str();
    top->add_option("--linkage", tf.linkage, "ward, single, complete, average")->capture_default_str();
    top->add_flag("--normalize", tf.normalize, "Unit-normalize embeddings before clustering");
    top->add_option("--title-indicators", tf.title_indicators, "Indicators shown per title prompt")
        ->capture_default_str();
    top->add_option("--audit-dir", tf.audit_dir, "Install the assignment into an audit run and report");
    top->add_option("--top-k", tf.top_k, "Ranked extract size")->capture_default_str();

    FinetuneFlags ff;
    auto* ft = app.add_subcommand("finetune", "Write a fine-tuning dataset and optionally submit a job");
    ft->add_option("--out", ff.out, "Training file")->required();
    ft->add_option("--mix", ff.mix, "L, LC, LCR, or left=N,center=N,right=N")->capture_default_str();
    ft->add_option("--total", ff.total, "Examples")->capture_default_str();
    ft->add_option("--lc-left", ff.lc_left, "Left examples in the LC mix (default half)");
    ft->add_flag("--right-shift", ff.right_shift, "Relabel center as left and right as center first");
    ft->add_option("--strategy", ff.strategy, "Prompt strategy of the user turns")->capture_default_str();
    ft->add_flag("--submit", ff.submit, "Upload the file and create a job");
    ft->add_option("--base-model", ff.base_model, "Model to fine-tune")->capture_default_str();
    ft->add_option("--epochs", ff.epochs)->capture_default_str();
    ft->add_option("--batch-size", ff.batch_size)->capture_default_str();

    ReportFlags rf;
    auto* rep = app.add_subcommand("report", "Regenerate reports from run logs");
    rep->add_option("what", rf.what, "audit, topics, continue, compare")
        ->required()
        ->check(CLI::IsMember({"audit", "topics", "continue", "compare"}));
    rep->add_option("--run-dir", rf.run_dir, "Run directory");
    rep->add_option("--top-k", rf.top_k, "Ranked extract size")->capture_default_str();
    rep->add_option("--run", rf.runs, "<table>/<row>=<run dir> (compare)");
    rep->add_option("--out", rf.out, "Output directory (compare)");
    rep->add_option("--reference", rf.reference, "Reference values file (compare)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 1;
    }

    try {
        if (*audit) return cmd_audit(g, af, env, out);
        if (*cont) return cmd_continue(g, cf, env, out);
        if (*lex) return cmd_lexicon(g, lf, out);
        if (*top) return cmd_topics(g, tf, env, out);
        if (*ft) return cmd_finetune(g, ff, env, out);
        return cmd_report(rf, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(e.category());
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        err << "error: malformed JSON: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace biasaudit
