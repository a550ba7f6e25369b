#pragma once

#include "biasaudit/audit.hpp"
#include "biasaudit/corpus.hpp"
#include "biasaudit/label.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace biasaudit {

/// count(g, p) for ground truth g in {L, C, R} and prediction p in
/// {L, C, R, Uncertain, Invalid}.
class ConfusionTally {
public:
    void add(BiasLabel ground_truth, BiasLabel predicted, std::uint64_t n = 1);
    std::uint64_t count(BiasLabel ground_truth, BiasLabel predicted) const;
    /// All predictions for one ground-truth label, Uncertain/Invalid included.
    std::uint64_t row_total(BiasLabel ground_truth) const;
    std::uint64_t column_total(BiasLabel predicted) const;
    std::uint64_t total() const;

    /// Left and Right exchanged in both ground truth and predictions.
    ConfusionTally mirrored() const;

    ConfusionTally& operator+=(const ConfusionTally& other);
    friend bool operator==(const ConfusionTally&, const ConfusionTally&) = default;

private:
    std::array<std::array<std::uint64_t, 5>, 3> counts_{};
};

/// Tallies records by their article's ground truth; throws DataError for a
/// record whose article is not in the corpus.
ConfusionTally tally(const std::vector<PredictionRecord>& records, const Corpus& corpus);

/// Tallies records by the ground truth stored in each record.
ConfusionTally tally(const std::vector<PredictionRecord>& records);

/// count(L,C)/total(L) - count(R,C)/total(R); nullopt when a row is empty.
std::optional<double> bti1(const ConfusionTally& t);

/// count(C,R)/total(C) - count(C,L)/total(C); nullopt when total(C) is 0.
std::optional<double> bti2(const ConfusionTally& t);

/// Positive values mean a left-leaning model.
struct BiasTendency {
    std::optional<double> bti1;
    std::optional<double> bti2;
    std::uint64_t left_total = 0;
    std::uint64_t center_total = 0;
    std::uint64_t right_total = 0;

    bool defined() const { return bti1.has_value() && bti2.has_value(); }
};

BiasTendency bias_tendency(const ConfusionTally& t);

/// Binary detection metrics with "biased" = {Left, Right} as the positive
/// class on both axes; Center, Uncertain and Invalid predictions are
/// negative. Values are fractions in [0, 1].
struct MetricSuite {
    double precision = 0;
    double recall = 0;
    double biased_f1 = 0;
    double micro_f1 = 0;  // equals binary accuracy
    double macro_f1 = 0;  // mean of biased-class F1 and center-class F1
    /// Components whose denominator was zero and were reported as 0
    /// ("precision", "recall", "negative_precision", ...).
    std::vector<std::string> undefined;

    bool flagged(std::string_view component) const;
};

MetricSuite binary_metrics(const ConfusionTally& t);

struct TopicStats {
    std::string topic;
    ConfusionTally tally;
    BiasTendency tendency;
    std::uint64_t frequency = 0;  // instance count
};

/// Per-topic tallies and BTI. Every record's article must have a topic in
/// `topic_of` (DataError otherwise).
std::map<std::string, TopicStats> per_topic(const std::vector<PredictionRecord>& records,
                                            const std::map<std::string, std::string>& topic_of);

enum class RankBy { Bti1, Bti2 };

struct TopicRanking {
    double mean_frequency = 0;
    std::vector<TopicStats> eligible;  // above-average frequency, BTI defined; sorted descending
    std::vector<TopicStats> top;
    std::vector<TopicStats> bottom;    // most negative first
};

/// Keeps topics whose frequency is strictly above the mean topic frequency,
/// ranks them by the chosen index, and returns the k highest and k lowest.
TopicRanking rank_topics(const std::map<std::string, TopicStats>& topics, RankBy by, std::size_t k = 5);

/// Percentages with one decimal ("66.7"), BTI with sign and two decimals
/// ("+0.20", "-1.00", "+0.00"); undefined BTI prints as "NA".
std::string format_percent(double fraction);
std::string format_bti(std::optional<double> value);

}  // namespace biasaudit
