#include "biasaudit/metrics.hpp"

#include "biasaudit/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace biasaudit {
namespace {

const char* kModule = "metrics";

std::size_t row_of(BiasLabel g) {
    if (!is_ground_truth(g)) throw DataError(kModule, "ground truth must be left, center or right");
    return index_of(g);
}

BiasLabel mirror(BiasLabel l) {
    if (l == BiasLabel::Left) return BiasLabel::Right;
    if (l == BiasLabel::Right) return BiasLabel::Left;
    return l;
}

double ratio(std::uint64_t num, std::uint64_t den) { return static_cast<double>(num) / static_cast<double>(den); }

}  // namespace

void ConfusionTally::add(BiasLabel g, BiasLabel p, std::uint64_t n) { counts_[row_of(g)][index_of(p)] += n; }

std::uint64_t ConfusionTally::count(BiasLabel g, BiasLabel p) const { return counts_[row_of(g)][index_of(p)]; }

std::uint64_t ConfusionTally::row_total(BiasLabel g) const {
    std::uint64_t s = 0;
    for (auto v : counts_[row_of(g)]) s += v;
    return s;
}

std::uint64_t ConfusionTally::column_total(BiasLabel p) const {
    std::uint64_t s = 0;
    for (const auto& row : counts_) s += row[index_of(p)];
    return s;
}

std::uint64_t ConfusionTally::total() const {
    std::uint64_t s = 0;
    for (auto g : kGroundTruthLabels) s += row_total(g);
    return s;
}

ConfusionTally ConfusionTally::mirrored() const {
    ConfusionTally out;
    for (auto g : kGroundTruthLabels)
        for (auto p : kPredictionLabels) out.add(mirror(g), mirror(p), count(g, p));
    return out;
}

ConfusionTally& ConfusionTally::operator+=(const ConfusionTally& other) {
    for (std::size_t g = 0; g < counts_.size(); ++g)
        for (std::size_t p = 0; p < counts_[g].size(); ++p) counts_[g][p] += other.counts_[g][p];
    return *this;
}

ConfusionTally tally(const std::vector<PredictionRecord>& records, const Corpus& corpus) {
    ConfusionTally t;
    for (const auto& r : records) {
        const Article* a = corpus.find(r.article_id);
        if (!a) throw DataError(kModule, "record references unknown article '" + r.article_id + "'");
        t.add(a->ground_truth, r.parsed);
    }
    return t;
}

ConfusionTally tally(const std::vector<PredictionRecord>& records) {
    ConfusionTally t;
    for (const auto& r : records) t.add(r.ground_truth, r.parsed);
    return t;
}

std::optional<double> bti1(const ConfusionTally& t) {
    const auto left = t.row_total(BiasLabel::Left);
    const auto right = t.row_total(BiasLabel::Right);
    if (left == 0 || right == 0) return std::nullopt;
    return ratio(t.count(BiasLabel::Left, BiasLabel::Center), left) -
           ratio(t.count(BiasLabel::Right, BiasLabel::Center), right);
}

std::optional<double> bti2(const ConfusionTally& t) {
    const auto center = t.row_total(BiasLabel::Center);
    if (center == 0) return std::nullopt;
    return ratio(t.count(BiasLabel::Center, BiasLabel::Right), center) -
           ratio(t.count(BiasLabel::Center, BiasLabel::Left), center);
}

BiasTendency bias_tendency(const ConfusionTally& t) {
    return {bti1(t), bti2(t), t.row_total(BiasLabel::Left), t.row_total(BiasLabel::Center),
            t.row_total(BiasLabel::Right)};
}

bool MetricSuite::flagged(std::string_view component) const {
    return std::find(undefined.begin(), undefined.end(), component) != undefined.end();
}

MetricSuite binary_metrics(const ConfusionTally& t) {
    if (t.total() == 0) throw DataError(kModule, "binary metrics need at least one prediction");
    auto biased = [](BiasLabel l) { return l == BiasLabel::Left || l == BiasLabel::Right; };
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (auto g : kGroundTruthLabels)
        for (auto p : kPredictionLabels) {
            const auto n = t.count(g, p);
            if (biased(g) && biased(p)) tp += n;
            else if (!biased(g) && biased(p)) fp += n;
            else if (biased(g)) fn += n;
            else tn += n;
        }

    MetricSuite m;
    auto safe = [&](std::uint64_t num, std::uint64_t den, const char* name) {
        if (den == 0) {
            m.undefined.emplace_back(name);
            return 0.0;
        }
        return ratio(num, den);
    };
    auto f1 = [&](double p, double r, const char* name) {
        if (p + r == 0.0) {
            m.undefined.emplace_back(name);
            return 0.0;
        }
        return 2.0 * p * r / (p + r);
    };
    m.precision = safe(tp, tp + fp, "precision");
    m.recall = safe(tp, tp + fn, "recall");
    m.biased_f1 = f1(m.precision, m.recall, "biased_f1");
    const double neg_precision = safe(tn, tn + fn, "negative_precision");
    const double neg_recall = safe(tn, tn + fp, "negative_recall");
    const double neg_f1 = f1(neg_precision, neg_recall, "negative_f1");
    m.micro_f1 = ratio(tp + tn, t.total());
    m.macro_f1 = (m.biased_f1 + neg_f1) / 2.0;
    return m;
}

std::map<std::string, TopicStats> per_topic(const std::vector<PredictionRecord>& records,
                                            const std::map<std::string, std::string>& topic_of) {
    std::map<std::string, TopicStats> out;
    for (const auto& r : records) {
        auto it = topic_of.find(r.article_id);
        if (it == topic_of.end()) throw DataError(kModule, "article '" + r.article_id + "' has no topic");
        auto& stats = out[it->second];
        stats.topic = it->second;
        stats.tally.add(r.ground_truth, r.parsed);
        ++stats.frequency;
    }
    for (auto& [_, stats] : out) stats.tendency = bias_tendency(stats.tally);
    return out;
}

TopicRanking rank_topics(const std::map<std::string, TopicStats>& topics, RankBy by, std::size_t k) {
    TopicRanking r;
    if (topics.empty()) return r;
    double sum = 0;
    for (const auto& [_, s] : topics) sum += static_cast<double>(s.frequency);
    r.mean_frequency = sum / static_cast<double>(topics.size());
    auto key = [by](const TopicStats& s) { return by == RankBy::Bti1 ? s.tendency.bti1 : s.tendency.bti2; };
    for (const auto& [_, s] : topics)
        if (static_cast<double>(s.frequency) > r.mean_frequency && key(s)) r.eligible.push_back(s);
    std::stable_sort(r.eligible.begin(), r.eligible.end(),
                     [&](const TopicStats& a, const TopicStats& b) { return *key(a) > *key(b); });
    const std::size_t n = std::min(k, r.eligible.size());
    r.top.assign(r.eligible.begin(), r.eligible.begin() + static_cast<std::ptrdiff_t>(n));
    r.bottom.assign(r.eligible.rbegin(), r.eligible.rbegin() + static_cast<std::ptrdiff_t>(n));
    return r;
}

std::string format_percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", fraction * 100.0 + 0.0);
    return buf;
}

std::string format_bti(std::optional<double> value) {
    if (!value) return "NA";
    double v = *value;
    if (std::fabs(v) < 0.005) v = 0.0;  // avoid "-0.00"
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.2f", v);
    return buf;
}

}  // namespace biasaudit
