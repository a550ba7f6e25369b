#include "biasaudit/tokenizer.hpp"

#include <algorithm>
#include <array>

namespace biasaudit {
namespace {

// Multi-byte punctuation: typographic quotes, dashes, ellipsis, guillemets.
constexpr std::array<std::string_view, 10> kUtf8Punct = {
    "\xE2\x80\x98", "\xE2\x80\x99", "\xE2\x80\x9C", "\xE2\x80\x9D", "\xE2\x80\x93",
    "\xE2\x80\x94", "\xE2\x80\xA6", "\xC2\xAB",     "\xC2\xBB",     "\xE2\x80\x9E"};

constexpr std::string_view kNbsp = "\xC2\xA0";

constexpr std::array<std::string_view, 7> kClitics = {"n't", "'s", "'ll", "'re", "'ve", "'m", "'d"};

// Length of the unit (character) starting at text[pos].
std::size_t unit_length(std::string_view text, std::size_t pos) {
    const auto c = static_cast<unsigned char>(text[pos]);
    std::size_t len = 1;
    if (c >= 0xF0 && c < 0xF8) len = 4;
    else if (c >= 0xE0) len = 3;
    else if (c >= 0xC0) len = 2;
    if (len == 1 || pos + len > text.size()) return 1;
    for (std::size_t i = 1; i < len; ++i) {
        const auto cc = static_cast<unsigned char>(text[pos + i]);
        if ((cc & 0xC0) != 0x80) return 1;
    }
    return len;
}

bool is_space_unit(std::string_view unit) {
    if (unit.size() == 1) {
        const char c = unit[0];
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
    }
    return unit == kNbsp;
}

bool is_punct_unit(std::string_view unit) {
    if (unit.size() == 1) {
        const auto c = static_cast<unsigned char>(unit[0]);
        return c < 0x80 && ((c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) ||
                            (c >= 0x5B && c <= 0x60) || (c >= 0x7B && c <= 0x7E));
    }
    return std::find(kUtf8Punct.begin(), kUtf8Punct.end(), unit) != kUtf8Punct.end();
}

std::vector<std::string_view> split_units(std::string_view text) {
    std::vector<std::string_view> units;
    for (std::size_t pos = 0; pos < text.size();) {
        const std::size_t len = unit_length(text, pos);
        units.push_back(text.substr(pos, len));
        pos += len;
    }
    return units;
}

// Normalizes the typographic apostrophe and ASCII case for clitic matching.
std::string clitic_key(std::string_view s) {
    std::string out;
    for (std::size_t i = 0; i < s.size();) {
        if (s.compare(i, 3, "\xE2\x80\x99") == 0) {
            out.push_back('\'');
            i += 3;
        } else {
            char c = s[i++];
            out.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c);
        }
    }
    return out;
}

// Byte length of the clitic that `word` ends with, or 0.
std::size_t clitic_suffix_length(std::string_view word) {
    for (std::string_view clitic : kClitics) {
        // A clitic spans 2-3 ASCII characters; the typographic apostrophe adds 2 bytes.
        for (std::size_t extra : {std::size_t{0}, std::size_t{2}}) {
            const std::size_t len = clitic.size() + extra;
            if (word.size() < len) continue;
            std::string_view tail = word.substr(word.size() - len);
            if (clitic_key(tail) == clitic) return len;
        }
    }
    return 0;
}

void tokenize_chunk(std::string_view chunk, std::vector<std::string>& out) {
    if (chunk.empty()) return;
    auto units = split_units(chunk);
    if (std::all_of(units.begin(), units.end(), is_punct_unit)) {
        for (auto u : units) out.emplace_back(u);
        return;
    }

    std::size_t end = units.size();
    while (end > 0 && is_punct_unit(units[end - 1])) --end;
    std::size_t begin = 0;
    auto join = [&](std::size_t from, std::size_t to) {
        if (from >= to) return std::string_view{};
        const char* first = units[from].data();
        const char* last = units[to - 1].data() + units[to - 1].size();
        return std::string_view(first, static_cast<std::size_t>(last - first));
    };

    std::string_view rest = join(0, end);
    if (!is_clitic_token(rest)) {
        while (begin < end && is_punct_unit(units[begin])) out.emplace_back(units[begin++]);
        std::string_view core = join(begin, end);
        const std::size_t clitic_len = clitic_suffix_length(core);
        if (clitic_len > 0 && clitic_len < core.size()) {
            tokenize_chunk(core.substr(0, core.size() - clitic_len), out);
            out.emplace_back(core.substr(core.size() - clitic_len));
        } else {
            out.emplace_back(core);
        }
    } else {
        out.emplace_back(rest);
    }
    for (std::size_t i = end; i < units.size(); ++i) out.emplace_back(units[i]);
}

}  // namespace

bool is_punctuation_token(std::string_view token) {
    if (token.empty()) return false;
    auto units = split_units(token);
    return std::all_of(units.begin(), units.end(), is_punct_unit);
}

bool is_clitic_token(std::string_view token) {
    const std::string key = clitic_key(token);
    return std::find(kClitics.begin(), kClitics.end(), key) != kClitics.end();
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t chunk_start = 0;
    bool in_chunk = false;
    for (std::size_t pos = 0; pos < text.size();) {
        const std::size_t len = unit_length(text, pos);
        if (is_space_unit(text.substr(pos, len))) {
            if (in_chunk) tokenize_chunk(text.substr(chunk_start, pos - chunk_start), tokens);
            in_chunk = false;
        } else if (!in_chunk) {
            chunk_start = pos;
            in_chunk = true;
        }
        pos += len;
    }
    if (in_chunk) tokenize_chunk(text.substr(chunk_start), tokens);
    return tokens;
}

std::string detokenize(std::span<const std::string> tokens) {
    std::string out;
    bool prev_is_word = false;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::string& tok = tokens[i];
        const bool punct = is_punctuation_token(tok);
        const bool clitic = !punct && is_clitic_token(tok);
        // Clitics attach only to a preceding word; otherwise "( 's" would re-split as "(", "'", "s".
        const bool attach = i > 0 && (punct || (clitic && prev_is_word));
        if (i > 0 && !attach) out.push_back(' ');
        out += tok;
        prev_is_word = !punct && !clitic;
    }
    return out;
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return out;
}

}  // namespace biasaudit
