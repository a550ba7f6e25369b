#include "biasaudit/finetune.hpp"

#include "biasaudit/digest.hpp"
#include "biasaudit/error.hpp"
#include "biasaudit/jsonl.hpp"

#include "json.hpp"

#include <algorithm>
#include <sstream>

namespace biasaudit {
namespace {

const char* kModule = "finetune";
using nlohmann::json;
using nlohmann::ordered_json;

FineTuneJob job_from_json(const json& j) {
    FineTuneJob job;
    try {
        job.id = j.at("id").get<std::string>();
        job.status = j.value("status", "");
        job.training_file = j.value("training_file", "");
        job.model = j.value("model", "");
        if (j.contains("fine_tuned_model") && j["fine_tuned_model"].is_string())
            job.fine_tuned_model = j["fine_tuned_model"].get<std::string>();
    } catch (const json::exception&) {
        throw ProviderError(ProviderErrorKind::Malformed, "fine-tuning job response lacks an id");
    }
    return job;
}

json parse_body(const std::string& body, const char* what) {
    try {
        return json::parse(body);
    } catch (const json::parse_error&) {
        throw ProviderError(ProviderErrorKind::Malformed, std::string("malformed ") + what + " response");
    }
}

}  // namespace

std::map<BiasLabel, std::size_t> FineTuneMix::counts() const {
    if (total == 0 && kind != MixKind::Custom) throw UsageError(kModule, "fine-tune mix total must be positive");
    std::map<BiasLabel, std::size_t> c;
    switch (kind) {
        case MixKind::L:
            c[BiasLabel::Left] = total;
            break;
        case MixKind::LC: {
            const std::size_t left = lc_left ? lc_left : total / 2;
            if (left > total) throw UsageError(kModule, "LC left count exceeds total");
            c[BiasLabel::Left] = left;
            c[BiasLabel::Center] = total - left;
            break;
        }
        case MixKind::LCR: {
            const std::size_t base = total / 3, rem = total % 3;
            c[BiasLabel::Left] = base + (rem >= 1 ? 1 : 0);
            c[BiasLabel::Center] = base + (rem >= 2 ? 1 : 0);
            c[BiasLabel::Right] = base;
            break;
        }
        case MixKind::Custom: {
            std::size_t sum = 0;
            for (const auto& [l, n] : custom) {
                if (!is_ground_truth(l)) throw UsageError(kModule, "custom mix labels must be left, center or right");
                sum += n;
            }
            if (sum == 0) throw UsageError(kModule, "fine-tune mix total must be positive");
            c = custom;
            break;
        }
    }
    return c;
}

std::string FineTuneMix::name() const {
    switch (kind) {
        case MixKind::L: return "L";
        case MixKind::LC: return "LC";
        case MixKind::LCR: return "LCR";
        case MixKind::Custom: return "custom";
    }
    return "?";
}

FineTuneMix FineTuneMix::parse(std::string_view spec, std::size_t total, std::uint64_t seed) {
    FineTuneMix m;
    m.total = total;
    m.seed = seed;
    const std::string s(spec);
    if (s == "L" || s == "l") m.kind = MixKind::L;
    else if (s == "LC" || s == "lc") m.kind = MixKind::LC;
    else if (s == "LCR" || s == "lcr") m.kind = MixKind::LCR;
    else {
        m.kind = MixKind::Custom;
        std::istringstream in(s);
        std::string part;
        while (std::getline(in, part, ',')) {
            auto eq = part.find('=');
            auto label = eq == std::string::npos ? std::nullopt : label_from_string(part.substr(0, eq));
            if (!label || !is_ground_truth(*label))
                throw UsageError(kModule, "bad mix '" + s + "' (use L, LC, LCR or left=N,center=N,right=N)");
            try {
                m.custom[*label] = std::stoul(part.substr(eq + 1));
            } catch (const std::logic_error&) {
                throw UsageError(kModule, "bad count in mix '" + s + "'");
            }
        }
        m.total = 0;
        for (const auto& [_, n] : m.custom) m.total += n;
    }
    return m;
}

FineTuneDataset build_ft_dataset(const Corpus& corpus, const FineTuneMix& mix, const PromptTemplates& templates,
                                 const PromptStrategy& strategy) {
    const auto wanted = mix.counts();
    FineTuneDataset ds;
    ds.from_train_split = std::any_of(corpus.articles().begin(), corpus.articles().end(),
                                      [](const Article& a) { return a.split.has_value(); });

    std::map<BiasLabel, std::vector<const Article*>> pool;
    for (const auto& a : corpus.articles())
        if (!ds.from_train_split || a.split == "train") pool[a.ground_truth].push_back(&a);

    std::vector<const Article*> chosen;
    for (const auto& [label, n] : wanted) {
        auto& p = pool[label];
        if (p.size() < n)
            throw DataError(kModule, "mix " + mix.name() + " needs " + std::to_string(n) + " " +
                                         std::string(to_string(label)) + " articles, only " +
                                         std::to_string(p.size()) + " available" +
                                         (ds.from_train_split ? " in the train split" : ""));
        std::sort(p.begin(), p.end(), [](const Article* x, const Article* y) { return x->id < y->id; });
        seeded_shuffle(p, seed_from(to_string(label), mix.seed));
        chosen.insert(chosen.end(), p.begin(), p.begin() + static_cast<std::ptrdiff_t>(n));
        ds.histogram[label] = n;
    }
    seeded_shuffle(chosen, seed_from("order", mix.seed));

    for (const Article* a : chosen) {
        ordered_json line;
        line["messages"] = ordered_json::array(
            {{{"role", "user"}, {"content", render_prompt(strategy, *a, templates)}},
             {{"role", "assistant"}, {"content", std::string(to_string(a->ground_truth))}}});
        ds.training_jsonl += line.dump() + "\n";
        ds.article_ids.push_back(a->id);
    }

    ordered_json m;
    m["mix"] = mix.name();
    ordered_json counts = ordered_json::object();
    for (const auto& [l, n] : wanted) counts[std::string(to_string(l))] = n;
    m["counts"] = counts;
    m["total"] = chosen.size();
    m["seed"] = mix.seed;
    m["corpus_id"] = corpus.corpus_id();
    m["corpus_sha256"] = corpus.content_hash();
    m["train_split_only"] = ds.from_train_split;
    m["strategy"] = strategy.descriptor();
    m["prompt_template_sha256"] = sha256_hex(templates.prediction);
    m["training_file_sha256"] = sha256_hex(ds.training_jsonl);
    m["article_ids"] = ds.article_ids;
    ds.manifest_json = m.dump(2) + "\n";
    return ds;
}

void write_ft_dataset(const FineTuneDataset& dataset, const std::filesystem::path& out_path) {
    write_text_file(out_path, dataset.training_jsonl, kModule);
    auto manifest = out_path;
    manifest += ".manifest.json";
    write_text_file(manifest, dataset.manifest_json, kModule);
}

Corpus relabel_right_shift(const Corpus& corpus) {
    std::vector<Article> out;
    for (const auto& a : corpus.articles()) {
        if (a.ground_truth == BiasLabel::Left) continue;
        Article b = a;
        b.ground_truth = a.ground_truth == BiasLabel::Center ? BiasLabel::Left : BiasLabel::Center;
        out.push_back(std::move(b));
    }
    return Corpus(std::move(out), corpus.corpus_id() + "+right_shift");
}

OpenAIFineTuneBackend::OpenAIFineTuneBackend(std::shared_ptr<Transport> transport, OpenAICompatibleConfig config)
    : transport_(std::move(transport)), config_(std::move(config)) {}

std::vector<std::pair<std::string, std::string>> OpenAIFineTuneBackend::headers() const {
    if (config_.api_key.empty())
        throw ProviderError(ProviderErrorKind::Config, "no API key configured for '" + config_.provider_id + "'");
    return {{config_.auth_header, "Bearer " + config_.api_key}};
}

std::string OpenAIFineTuneBackend::upload(const std::string& filename, const std::string& content) {
    HttpRequest http;
    http.path = config_.api_prefix + "/files";
    http.headers = headers();
    http.multipart = {{"purpose", "fine-tune", "", ""}, {"file", content, filename, "application/jsonl"}};
    auto resp = transport_->send(http);
    raise_for_status(resp, "file upload");
    auto j = parse_body(resp.body, "file upload");
    if (!j.contains("id") || !j["id"].is_string())
        throw ProviderError(ProviderErrorKind::Malformed, "file upload response lacks an id");
    return j["id"].get<std::string>();
}

FineTuneJob OpenAIFineTuneBackend::create_job(const std::string& file_id, const std::string& model,
                                              const FineTuneHyperparams& params) {
    ordered_json body;
    body["training_file"] = file_id;
    body["model"] = model;
    ordered_json hp;
    hp["n_epochs"] = params.epochs;
    hp["batch_size"] = params.batch_size;
    if (params.learning_rate_multiplier) hp["learning_rate_multiplier"] = *params.learning_rate_multiplier;
    body["hyperparameters"] = hp;
    if (!params.suffix.empty()) body["suffix"] = params.suffix;
    HttpRequest http;
    http.path = config_.api_prefix + "/fine_tuning/jobs";
    http.headers = headers();
    http.body = body.dump();
    auto resp = transport_->send(http);
    raise_for_status(resp, "fine-tuning job");
    return job_from_json(parse_body(resp.body, "fine-tuning job"));
}

FineTuneJob OpenAIFineTuneBackend::job_status(const std::string& job_id) {
    HttpRequest http;
    http.method = "GET";
    http.path = config_.api_prefix + "/fine_tuning/jobs/" + job_id;
    http.headers = headers();
    auto resp = transport_->send(http);
    raise_for_status(resp, "fine-tuning status");
    return job_from_json(parse_body(resp.body, "fine-tuning status"));
}

std::string MockFineTuneBackend::upload(const std::string& filename, const std::string& content) {
    ++uploads_;
    return "file-" + sha256_hex(filename + "\n" + content).substr(0, 16);
}

FineTuneJob MockFineTuneBackend::create_job(const std::string& file_id, const std::string& model,
                                            const FineTuneHyperparams& params) {
    FineTuneJob job;
    job.id = "ftjob-" + sha256_hex(file_id + "\n" + model + "\n" + std::to_string(params.epochs) + "\n" +
                                   std::to_string(params.batch_size))
                            .substr(0, 16);
    job.status = "queued";
    job.training_file = file_id;
    job.model = model;
    jobs_[job.id] = job;
    return job;
}

FineTuneJob MockFineTuneBackend::job_status(const std::string& job_id) {
    auto it = jobs_.find(job_id);
    if (it == jobs_.end()) throw ProviderError(ProviderErrorKind::Rejected, "unknown fine-tuning job " + job_id);
    it->second.status = "succeeded";
    it->second.fine_tuned_model = "ft:" + it->second.model + ":mock:" + job_id.substr(6);
    return it->second;
}

FineTuneJob submit_ft_job(FineTuneBackend& backend, const std::filesystem::path& training_file,
                          const std::string& model_id, const FineTuneHyperparams& params) {
    if (model_id.empty()) throw UsageError(kModule, "base model id is required");
    if (params.epochs <= 0 || params.batch_size <= 0)
        throw UsageError(kModule, "epochs and batch size must be positive");
    const std::string content = read_text_file(training_file, kModule);
    if (content.empty()) throw DataError(kModule, "training file is empty");
    const auto file_id = backend.upload(training_file.filename().string(), content);
    return backend.create_job(file_id, model_id, params);
}

}  // namespace biasaudit
