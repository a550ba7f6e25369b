#pragma once

#include "biasaudit/error.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

namespace biasaudit {

/// Calls fn(line) for each non-empty line of a line-delimited log. A final
/// line without a newline that fails to parse is treated as a torn write and
/// dropped; any other failure is a DataError naming the line. A missing file
/// reads as empty.
template <typename Fn>
void for_each_log_line(const std::filesystem::path& path, const char* module, Fn&& fn) {
    if (!std::filesystem::exists(path)) return;
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string content = ss.str();
    std::size_t start = 0, line_no = 0;
    while (start < content.size()) {
        std::size_t end = content.find('\n', start);
        const bool torn = end == std::string::npos;
        if (torn) end = content.size();
        ++line_no;
        std::string_view line(content.data() + start, end - start);
        start = end + 1;
        if (line.empty()) continue;
        try {
            fn(line);
        } catch (const std::exception& e) {
            if (torn) break;
            throw DataError(module, path.filename().string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
}

/// Replaces `path` with `content` via a temporary file and rename.
inline void write_text_file(const std::filesystem::path& path, std::string_view content, const char* module) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError(module, "cannot write '" + path.string() + "'");
        out << content;
        if (!out.flush()) throw DataError(module, "cannot write '" + path.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_text_file(const std::filesystem::path& path, const char* module) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(module, "cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace biasaudit
