#include "biasaudit/lexicon.hpp"

#include "biasaudit/error.hpp"
#include "biasaudit/parallel.hpp"
#include "biasaudit/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>

namespace biasaudit {
namespace {

const char* kModule = "lexicon";

const char* kBuiltinStopwords[] = {
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "you're", "you've",
    "you'll", "you'd", "your", "yours", "yourself", "yourselves", "he", "him", "his", "himself",
    "she", "she's", "her", "hers", "herself", "it", "it's", "its", "itself", "they", "them",
    "their", "theirs", "themselves", "what", "which", "who", "whom", "this", "that", "that'll",
    "these", "those", "am", "is", "are", "was", "were", "be", "been", "being", "have", "has",
    "had", "having", "do", "does", "did", "doing", "a", "an", "the", "and", "but", "if", "or",
    "because", "as", "until", "while", "of", "at", "by", "for", "with", "about", "against",
    "between", "into", "through", "during", "before", "after", "above", "below", "to", "from",
    "up", "down", "in", "out", "on", "off", "over", "under", "again", "further", "then", "once",
    "here", "there", "when", "where", "why", "how", "all", "any", "both", "each", "few", "more",
    "most", "other", "some", "such", "no", "nor", "not", "only", "own", "same", "so", "than",
    "too", "very", "s", "t", "can", "will", "just", "don", "don't", "should", "should've", "now",
    "d", "ll", "m", "o", "re", "ve", "y", "ain", "aren", "aren't", "couldn", "couldn't", "didn",
    "didn't", "doesn", "doesn't", "hadn", "hadn't", "hasn", "hasn't", "haven", "haven't", "isn",
    "isn't", "ma", "mightn", "mightn't", "mustn", "mustn't", "needn", "needn't", "shan", "shan't",
    "shouldn", "shouldn't", "wasn", "wasn't", "weren", "weren't", "won", "won't", "wouldn",
    "wouldn't"
};

bool has_alnum(std::string_view s) {
    return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c) || c >= 0x80; });
}

using Ranked = std::vector<std::pair<std::string, std::uint64_t>>;

Ranked ranked(const FrequencyTable& t) {
    Ranked out(t.begin(), t.end());
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    return out;  // map order already breaks ties by token
}

std::string format_factor(double f) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", f);
    return buf;
}

}  // namespace

const StopwordList& default_stopwords() {
    static const StopwordList list = [] {
        StopwordList l;
        l.id = "stopwords_en_v1";
        for (const char* w : kBuiltinStopwords) l.words.emplace(w);
        return l;
    }();
    return list;
}

StopwordList load_stopwords(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(kModule, "cannot open stopword list " + path.string());
    StopwordList l;
    l.id = path.stem().string();
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        l.words.insert(to_lower(line));
    }
    return l;
}

std::vector<std::string> content_tokens(std::string_view text, const StopwordList& stopwords) {
    std::vector<std::string> out;
    for (auto& tok : tokenize(text)) {
        if (is_punctuation_token(tok) || is_clitic_token(tok) || !has_alnum(tok)) continue;
        auto low = to_lower(tok);
        if (stopwords.contains(low)) continue;
        out.push_back(std::move(low));
    }
    return out;
}

SideFrequencies count_side_frequencies(const Corpus& corpus, const StopwordList& stopwords, std::size_t workers) {
    if (corpus.count(BiasLabel::Left) == 0 || corpus.count(BiasLabel::Right) == 0)
        throw DataError(kModule, "corpus needs both left and right articles");

    SideFrequencies f;
    f.corpus_id = corpus.corpus_id();
    f.stopword_id = stopwords.id;
    std::mutex merge;
    const auto& arts = corpus.articles();
    parallel_for(arts.size(), workers, [&](std::size_t i) {
        const Article& a = arts[i];
        if (a.ground_truth == BiasLabel::Center) return;
        FrequencyTable local;
        std::uint64_t n = 0;
        for (auto& t : content_tokens(a.body, stopwords)) {
            ++local[t];
            ++n;
        }
        std::lock_guard lock(merge);
        auto& side = a.ground_truth == BiasLabel::Left ? f.left : f.right;
        for (auto& [t, c] : local) side[t] += c;
        (a.ground_truth == BiasLabel::Left ? f.left_total : f.right_total) += n;
    });
    return f;
}

bool is_left_candidate(std::uint64_t lf, std::uint64_t lt, std::uint64_t rf, std::uint64_t rt, double factor) {
    // lf/lt > factor * rf/rt, cross-multiplied
    return static_cast<long double>(lf) * rt > static_cast<long double>(factor) * rf * lt;
}

Vocabulary build_vocabulary(const SideFrequencies& freqs, const VocabularyConfig& config) {
    if (freqs.left_total == 0 || freqs.right_total == 0)
        throw DataError(kModule, "side token totals must be positive");
    if (!(config.ratio_factor > 0)) throw UsageError(kModule, "ratio_factor must be positive");

    auto freq_in = [](const FrequencyTable& t, const std::string& k) -> std::uint64_t {
        auto it = t.find(k);
        return it == t.end() ? 0 : it->second;
    };

    FrequencyTable left_cand, right_cand;
    for (const auto& [tok, lf] : freqs.left)
        if (is_left_candidate(lf, freqs.left_total, freq_in(freqs.right, tok), freqs.right_total, config.ratio_factor))
            left_cand[tok] = lf;
    for (const auto& [tok, rf] : freqs.right)
        if (is_left_candidate(rf, freqs.right_total, freq_in(freqs.left, tok), freqs.left_total, config.ratio_factor))
            right_cand[tok] = rf;

    Vocabulary v;
    v.config = config;
    v.corpus_id = freqs.corpus_id;
    v.stopword_id = freqs.stopword_id;

    auto lr = ranked(left_cand);
    v.left_short = lr.size() < config.left_top_k;
    for (std::size_t i = 0; i < lr.size() && i < config.left_top_k; ++i) {
        v.left.insert(lr[i]);
        v.left_sum += lr[i].second;
    }

    for (const auto& [tok, rf] : ranked(right_cand)) {
        if (v.right_sum >= v.left_sum) break;
        v.right.emplace(tok, rf);
        v.right_sum += rf;
    }
    v.right_shortfall = v.right_sum < v.left_sum;
    v.right_overshoot = v.right_shortfall ? 0 : v.right_sum - v.left_sum;
    return v;
}

std::string Vocabulary::serialize() const {
    std::ostringstream out;
    out << "# format\tbiasaudit-vocabulary-v1\n";
    out << "# corpus_id\t" << corpus_id << "\n";
    out << "# stopwords\t" << stopword_id << "\n";
    out << "# ratio_factor\t" << format_factor(config.ratio_factor) << "\n";
    out << "# left_top_k\t" << config.left_top_k << "\n";
    out << "# left_sum\t" << left_sum << "\n";
    out << "# right_sum\t" << right_sum << "\n";
    out << "# left_short\t" << (left_short ? 1 : 0) << "\n";
    out << "# right_shortfall\t" << (right_shortfall ? 1 : 0) << "\n";
    out << "# right_overshoot\t" << right_overshoot << "\n";
    for (const auto& [t, c] : ranked(left)) out << "left\t" << t << "\t" << c << "\n";
    for (const auto& [t, c] : ranked(right)) out << "right\t" << t << "\t" << c << "\n";
    return out.str();
}

Vocabulary Vocabulary::parse(std::string_view text) {
    Vocabulary v;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    auto fail = [&](const std::string& what) {
        throw DataError(kModule, "vocabulary line " + std::to_string(lineno) + ": " + what);
    };
    auto to_u64 = [&](const std::string& s) -> std::uint64_t {
        try {
            std::size_t used = 0;
            auto n = std::stoull(s, &used);
            if (used != s.size()) fail("bad number '" + s + "'");
            return n;
        } catch (const std::logic_error&) {
            fail("bad number '" + s + "'");
        }
        return 0;
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line.rfind("# ", 0) == 0) {
            auto tab = line.find('\t');
            if (tab == std::string::npos) continue;
            auto key = line.substr(2, tab - 2), value = line.substr(tab + 1);
            if (key == "corpus_id") v.corpus_id = value;
            else if (key == "stopwords") v.stopword_id = value;
            else if (key == "ratio_factor") v.config.ratio_factor = std::stod(value);
            else if (key == "left_top_k") v.config.left_top_k = to_u64(value);
            else if (key == "left_short") v.left_short = value == "1";
            else if (key == "right_shortfall") v.right_shortfall = value == "1";
            else if (key == "right_overshoot") v.right_overshoot = to_u64(value);
            continue;
        }
        auto t1 = line.find('\t');
        auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
        if (t2 == std::string::npos) fail("expected side, token and frequency");
        auto side = line.substr(0, t1), tok = line.substr(t1 + 1, t2 - t1 - 1);
        auto n = to_u64(line.substr(t2 + 1));
        if (side == "left") {
            v.left[tok] = n;
            v.left_sum += n;
        } else if (side == "right") {
            v.right[tok] = n;
            v.right_sum += n;
        } else {
            fail("unknown side '" + side + "'");
        }
    }
    for (const auto& [t, _] : v.left)
        if (v.right.count(t)) throw DataError(kModule, "token '" + t + "' on both sides");
    return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(kModule, "cannot write " + path.string());
    out << serialize();
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(kModule, "vocabulary file not found: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

}  // namespace biasaudit
