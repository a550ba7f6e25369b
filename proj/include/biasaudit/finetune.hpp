#pragma once

#include "biasaudit/audit.hpp"
#include "biasaudit/corpus.hpp"
#include "biasaudit/gateway.hpp"
#include "biasaudit/prompts.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace biasaudit {

enum class MixKind { L, LC, LCR, Custom };

struct FineTuneMix {
    MixKind kind = MixKind::LCR;
    std::size_t total = 300;
    std::uint64_t seed = 0;
    std::map<BiasLabel, std::size_t> custom;  // Custom only
    std::size_t lc_left = 0;                  // LC only; 0 means total/2

    /// Requested examples per label.
    std::map<BiasLabel, std::size_t> counts() const;
    /// "L", "LC", "LCR" or "custom".
    std::string name() const;

    /// "L", "LC", "LCR", or "left=100,center=200[,right=0]".
    static FineTuneMix parse(std::string_view spec, std::size_t total = 300, std::uint64_t seed = 0);
};

struct FineTuneDataset {
    std::string training_jsonl;  // one {"messages": [...]} object per line
    std::string manifest_json;
    std::vector<std::string> article_ids;  // in file order
    std::map<BiasLabel, std::size_t> histogram;
    bool from_train_split = false;
};

/// Samples the mix (from split=="train" articles when the corpus has splits)
/// and renders each article as a user turn holding the prediction prompt and
/// an assistant turn holding the lowercase label.
FineTuneDataset build_ft_dataset(const Corpus& corpus, const FineTuneMix& mix,
                                 const PromptTemplates& templates = PromptTemplates::defaults(),
                                 const PromptStrategy& strategy = PromptStrategy::vanilla());

/// Writes the training file and "<out_path>.manifest.json".
void write_ft_dataset(const FineTuneDataset& dataset, const std::filesystem::path& out_path);

/// Center becomes Left, Right becomes Center, Left articles are dropped.
/// The returned corpus id carries a "+right_shift" suffix.
Corpus relabel_right_shift(const Corpus& corpus);

struct FineTuneHyperparams {
    int epochs = 3;
    int batch_size = 32;
    std::optional<double> learning_rate_multiplier;
    std::string suffix;
};

struct FineTuneJob {
    std::string id;
    std::string status;
    std::string training_file;
    std::string model;
    std::optional<std::string> fine_tuned_model;
};

class FineTuneBackend {
public:
    virtual ~FineTuneBackend() = default;
    virtual std::string upload(const std::string& filename, const std::string& content) = 0;
    virtual FineTuneJob create_job(const std::string& file_id, const std::string& model,
                                   const FineTuneHyperparams& params) = 0;
    virtual FineTuneJob job_status(const std::string& job_id) = 0;
};

/// Files and fine-tuning job endpoints of the common open HTTP schema.
class OpenAIFineTuneBackend final : public FineTuneBackend {
public:
    OpenAIFineTuneBackend(std::shared_ptr<Transport> transport, OpenAICompatibleConfig config);
    std::string upload(const std::string& filename, const std::string& content) override;
    FineTuneJob create_job(const std::string& file_id, const std::string& model,
                           const FineTuneHyperparams& params) override;
    FineTuneJob job_status(const std::string& job_id) override;

private:
    std::vector<std::pair<std::string, std::string>> headers() const;
    std::shared_ptr<Transport> transport_;
    OpenAICompatibleConfig config_;
};

/// Offline backend: ids are digests of the inputs, jobs report "succeeded"
/// on the first status poll.
class MockFineTuneBackend final : public FineTuneBackend {
public:
    std::string upload(const std::string& filename, const std::string& content) override;
    FineTuneJob create_job(const std::string& file_id, const std::string& model,
                           const FineTuneHyperparams& params) override;
    FineTuneJob job_status(const std::string& job_id) override;
    std::size_t uploads() const noexcept { return uploads_; }

private:
    std::map<std::string, FineTuneJob> jobs_;
    std::size_t uploads_ = 0;
};

/// Uploads the training file and creates a job.
FineTuneJob submit_ft_job(FineTuneBackend& backend, const std::filesystem::path& training_file,
                          const std::string& model_id, const FineTuneHyperparams& params = {});

}  // namespace biasaudit
