#pragma once

// Independent reimplementations used as test oracles for the lexicon module.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

struct Doc {
    char side;  // 'L', 'C' or 'R'
    std::string text;
};

struct Counts {
    std::map<std::string, std::uint64_t> left, right;
    std::uint64_t left_total = 0, right_total = 0;
};

// Synthetic texts are space-separated words with no punctuation, so a plain
// split is enough here.
inline Counts recount(const std::vector<Doc>& docs, const std::set<std::string>& stop) {
    Counts c;
    for (const auto& d : docs) {
        if (d.side == 'C') continue;
        std::string word;
        auto flush = [&] {
            if (word.empty()) return;
            for (auto& ch : word) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            if (!stop.count(word)) {
                if (d.side == 'L') { ++c.left[word]; ++c.left_total; }
                else { ++c.right[word]; ++c.right_total; }
            }
            word.clear();
        };
        for (char ch : d.text) {
            if (ch == ' ') flush();
            else word += ch;
        }
        flush();
    }
    return c;
}

struct Vocab {
    std::map<std::string, std::uint64_t> left, right;
    std::uint64_t left_sum = 0, right_sum = 0;
    bool right_shortfall = false;
};

// Exhaustive check of the inclusion rule over every token seen, factor 2,
// exact integer arithmetic.
inline Vocab build(const Counts& c, std::size_t top_k) {
    std::set<std::string> all;
    for (auto& [t, _] : c.left) all.insert(t);
    for (auto& [t, _] : c.right) all.insert(t);
    auto get = [](const std::map<std::string, std::uint64_t>& m, const std::string& t) -> std::uint64_t {
        auto it = m.find(t);
        return it == m.end() ? 0 : it->second;
    };
    std::vector<std::pair<std::string, std::uint64_t>> lc, rc;
    for (const auto& t : all) {
        unsigned __int128 lf = get(c.left, t), rf = get(c.right, t);
        if (lf * c.right_total > 2 * rf * c.left_total) lc.emplace_back(t, lf);
        if (rf * c.left_total > 2 * lf * c.right_total) rc.emplace_back(t, rf);
    }
    auto order = [](const auto& a, const auto& b) { return a.second != b.second ? a.second > b.second : a.first < b.first; };
    std::sort(lc.begin(), lc.end(), order);
    std::sort(rc.begin(), rc.end(), order);
    Vocab v;
    for (std::size_t i = 0; i < lc.size() && i < top_k; ++i) {
        v.left.insert(lc[i]);
        v.left_sum += lc[i].second;
    }
    std::size_t i = 0;
    while (v.right_sum < v.left_sum && i < rc.size()) {
        v.right.insert(rc[i]);
        v.right_sum += rc[i].second;
        ++i;
    }
    v.right_shortfall = v.right_sum < v.left_sum;
    return v;
}

}  // namespace oracle
