#include "biasaudit/corpus.hpp"

#include "biasaudit/digest.hpp"
#include "biasaudit/error.hpp"
#include "biasaudit/tokenizer.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <sstream>

namespace biasaudit {
namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

const char* kModule = "corpus";

std::string line_error(std::size_t line, const std::string& what) {
    return "line " + std::to_string(line) + ": " + what;
}

BiasLabel parse_ground_truth(const std::string& value, std::size_t line) {
    auto label = label_from_string(value);
    if (!label || !is_ground_truth(*label))
        throw DataError(kModule, line_error(line, "unknown label '" + value + "' (expected left, center or right)"));
    return *label;
}

using Fields = std::map<std::string, std::string>;

Article article_from_fields(const Fields& fields, std::size_t line) {
    auto get = [&](const char* key) -> const std::string* {
        auto it = fields.find(key);
        return it == fields.end() ? nullptr : &it->second;
    };
    auto optional_field = [&](const char* key) -> std::optional<std::string> {
        const std::string* v = get(key);
        if (!v || v->empty()) return std::nullopt;
        return *v;
    };

    Article a;
    const std::string* id = get("id");
    if (!id || id->empty()) throw DataError(kModule, line_error(line, "missing field 'id'"));
    a.id = *id;
    const std::string* body = get("body");
    if (!body || body->empty()) throw DataError(kModule, line_error(line, "missing or empty field 'body'"));
    a.body = *body;
    const std::string* label = get("label");
    if (!label) throw DataError(kModule, line_error(line, "missing field 'label'"));
    a.ground_truth = parse_ground_truth(*label, line);
    if (const std::string* title = get("title")) a.title = *title;
    if (const std::string* source = get("source")) a.source = *source;
    a.event_id = optional_field("event_id");
    a.topic = optional_field("topic");
    a.split = optional_field("split");
    a.token_count = tokenize(a.body).size();
    return a;
}

Fields fields_from_json(const json& record, std::size_t line) {
    if (!record.is_object()) throw DataError(kModule, line_error(line, "record is not an object"));
    Fields fields;
    for (auto it = record.begin(); it != record.end(); ++it) {
        if (it->is_null()) continue;
        if (it->is_string()) fields[it.key()] = it->get<std::string>();
        else if (it->is_number_integer()) fields[it.key()] = std::to_string(it->get<long long>());
        else throw DataError(kModule, line_error(line, "field '" + it.key() + "' must be a string"));
    }
    return fields;
}

// One delimiter-separated record; CSV honours RFC 4180 quoting (fields may
// span lines), TSV decodes \t, \n and \\ escapes.
struct TableReader {
    std::string_view text;
    char delim;
    std::size_t pos = 0;
    std::size_t line = 1;

    bool done() const { return pos >= text.size(); }

    std::vector<std::string> next_record() {
        std::vector<std::string> fields;
        std::string field;
        bool quoted = false;
        bool field_started = false;
        while (pos < text.size()) {
            char c = text[pos++];
            if (delim == ',' && quoted) {
                if (c == '"') {
                    if (pos < text.size() && text[pos] == '"') {
                        field.push_back('"');
                        ++pos;
                    } else {
                        quoted = false;
                    }
                } else {
                    if (c == '\n') ++line;
                    field.push_back(c);
                }
                continue;
            }
            if (c == '\r') continue;
            if (c == '\n') {
                ++line;
                fields.push_back(std::move(field));
                return fields;
            }
            if (c == delim) {
                fields.push_back(std::move(field));
                field.clear();
                field_started = false;
                continue;
            }
            if (delim == ',' && c == '"' && !field_started) {
                quoted = true;
                field_started = true;
                continue;
            }
            if (delim == '\t' && c == '\\' && pos < text.size()) {
                char e = text[pos++];
                field.push_back(e == 't' ? '\t' : e == 'n' ? '\n' : e);
                field_started = true;
                continue;
            }
            field.push_back(c);
            field_started = true;
        }
        if (quoted) throw DataError(kModule, line_error(line, "unterminated quoted field"));
        fields.push_back(std::move(field));
        return fields;
    }
};

Corpus parse_table(std::string_view content, char delim, std::string corpus_id) {
    TableReader reader{content, delim};
    if (reader.done()) throw DataError(kModule, "empty table: header row required");
    std::vector<std::string> header = reader.next_record();
    std::vector<Article> articles;
    while (!reader.done()) {
        const std::size_t line = reader.line;
        auto values = reader.next_record();
        if (values.size() == 1 && values[0].empty()) continue;
        if (values.size() != header.size())
            throw DataError(kModule, line_error(line, "expected " + std::to_string(header.size()) + " fields, got " +
                                                          std::to_string(values.size())));
        Fields fields;
        for (std::size_t i = 0; i < header.size(); ++i) fields[header[i]] = values[i];
        articles.push_back(article_from_fields(fields, line));
    }
    return Corpus(std::move(articles), std::move(corpus_id));
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(kModule, "cannot open corpus file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

const std::string& EventTriple::id_for(BiasLabel label) const {
    switch (label) {
        case BiasLabel::Left: return left_id;
        case BiasLabel::Center: return center_id;
        case BiasLabel::Right: return right_id;
        default: throw std::invalid_argument("EventTriple::id_for: not a ground-truth label");
    }
}

Corpus::Corpus(std::vector<Article> articles, std::string corpus_id)
    : articles_(std::move(articles)), corpus_id_(std::move(corpus_id)) {
    for (std::size_t i = 0; i < articles_.size(); ++i) {
        if (!is_ground_truth(articles_[i].ground_truth))
            throw DataError(kModule, "article '" + articles_[i].id + "': ground truth must be left, center or right");
        if (!index_.emplace(articles_[i].id, i).second)
            throw DataError(kModule, "duplicate article id '" + articles_[i].id + "'");
    }
}

const Article* Corpus::find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    return it == index_.end() ? nullptr : &articles_[it->second];
}

const Article& Corpus::at(std::string_view id) const {
    if (const Article* a = find(id)) return *a;
    throw DataError(kModule, "unknown article id '" + std::string(id) + "'");
}

std::size_t Corpus::count(BiasLabel label) const {
    return static_cast<std::size_t>(
        std::count_if(articles_.begin(), articles_.end(), [&](const Article& a) { return a.ground_truth == label; }));
}

std::string article_to_json_line(const Article& a) {
    ordered_json j;
    j["id"] = a.id;
    j["title"] = a.title;
    j["body"] = a.body;
    j["label"] = std::string(to_string(a.ground_truth));
    if (a.event_id) j["event_id"] = *a.event_id;
    if (a.topic) j["topic"] = *a.topic;
    if (!a.source.empty()) j["source"] = a.source;
    if (a.split) j["split"] = *a.split;
    return j.dump();
}

std::string Corpus::serialize() const {
    std::string out;
    for (const auto& a : articles_) {
        out += article_to_json_line(a);
        out.push_back('\n');
    }
    return out;
}

std::string Corpus::content_hash() const { return sha256_hex(serialize()); }

CorpusFormat format_from_extension(const std::filesystem::path& path) {
    const std::string ext = to_lower(path.extension().string());
    if (ext == ".csv") return CorpusFormat::Csv;
    if (ext == ".tsv") return CorpusFormat::Tsv;
    return CorpusFormat::JsonLines;
}

Corpus parse_corpus_jsonl(std::string_view content, std::string corpus_id) {
    std::vector<Article> articles;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= content.size()) {
        std::size_t end = content.find('\n', start);
        if (end == std::string_view::npos) end = content.size();
        std::string_view line = content.substr(start, end - start);
        ++line_no;
        start = end + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) {
            if (end == content.size()) break;
            continue;
        }
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(kModule, line_error(line_no, std::string("malformed record: ") + e.what()));
        }
        articles.push_back(article_from_fields(fields_from_json(record, line_no), line_no));
        if (end == content.size()) break;
    }
    return Corpus(std::move(articles), std::move(corpus_id));
}

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
    if (!std::filesystem::exists(path)) throw DataError(kModule, "corpus file not found: '" + path.string() + "'");
    const std::string content = read_file(path);
    std::string id = path.stem().string();
    switch (format) {
        case CorpusFormat::Csv: return parse_table(content, ',', std::move(id));
        case CorpusFormat::Tsv: return parse_table(content, '\t', std::move(id));
        case CorpusFormat::JsonLines: break;
    }
    return parse_corpus_jsonl(content, std::move(id));
}

Corpus load_corpus(const std::filesystem::path& path) { return load_corpus(path, format_from_extension(path)); }

TripleBuild build_triples(const Corpus& corpus) {
    std::map<std::string, std::array<const Article*, 3>> events;
    for (const auto& a : corpus.articles()) {
        if (!a.event_id) continue;
        auto& slots = events[*a.event_id];
        auto& slot = slots[index_of(a.ground_truth)];
        if (slot)
            throw DataError(kModule, "event '" + *a.event_id + "' has two " + std::string(to_string(a.ground_truth)) +
                                         " articles ('" + slot->id + "', '" + a.id + "')");
        slot = &a;
    }
    TripleBuild out;
    for (const auto& [event, slots] : events) {
        if (slots[0] && slots[1] && slots[2]) {
            out.triples.push_back({event, slots[0]->id, slots[1]->id, slots[2]->id});
        } else {
            IncompleteEvent inc{event, {}};
            for (auto l : kGroundTruthLabels)
                if (slots[index_of(l)]) inc.present.push_back(l);
            out.incomplete.push_back(std::move(inc));
        }
    }
    return out;
}

Prefix take_prefix(std::string_view text, std::size_t n) {
    if (n == 0) throw std::invalid_argument("take_prefix: n must be >= 1");
    auto tokens = tokenize(text);
    const std::size_t used = std::min(n, tokens.size());
    return {detokenize(std::span<const std::string>(tokens.data(), used)), used};
}

Prefix take_prefix(const Article& article, std::size_t n) { return take_prefix(article.body, n); }

std::vector<Prefix> take_prefixes(const Article& article, const std::vector<std::size_t>& lengths) {
    auto tokens = tokenize(article.body);
    std::vector<Prefix> out;
    out.reserve(lengths.size());
    for (std::size_t n : lengths) {
        if (n == 0) throw std::invalid_argument("take_prefixes: n must be >= 1");
        const std::size_t used = std::min(n, tokens.size());
        out.push_back({detokenize(std::span<const std::string>(tokens.data(), used)), used});
    }
    return out;
}

std::string drop_prefix(std::string_view text, std::size_t n) {
    if (n == 0) throw std::invalid_argument("drop_prefix: n must be >= 1");
    auto tokens = tokenize(text);
    if (n >= tokens.size()) return {};
    return detokenize(std::span<const std::string>(tokens.data() + n, tokens.size() - n));
}

}  // namespace biasaudit
