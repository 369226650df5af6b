#include "forge/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace forge::text {

namespace {
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }
}  // namespace

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), lower);
    return out;
}

std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n\f\v";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(s.substr(start));
            return out;
        }
        out.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
    if (prefix.size() > s.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i)
        if (lower(s[i]) != lower(prefix[i])) return false;
    return true;
}

bool contains_keyword(std::string_view haystack, std::string_view keyword) {
    if (keyword.empty() || keyword.size() > haystack.size()) return false;
    const std::string hay = to_lower(haystack);
    const std::string key = to_lower(keyword);
    const bool check_front = is_alnum(key.front());
    const bool check_back = is_alnum(key.back());
    std::size_t pos = 0;
    while ((pos = hay.find(key, pos)) != std::string::npos) {
        const bool front_ok = !check_front || pos == 0 || !is_alnum(hay[pos - 1]);
        const std::size_t end = pos + key.size();
        const bool back_ok = !check_back || end == hay.size() || !is_alnum(hay[end]);
        if (front_ok && back_ok) return true;
        ++pos;
    }
    return false;
}

std::string tail(std::string_view s, std::size_t max_bytes) {
    if (s.size() <= max_bytes) return std::string(s);
    auto cut = s.substr(s.size() - max_bytes);
    const auto nl = cut.find('\n');
    if (nl != std::string_view::npos && nl + 1 < cut.size()) cut.remove_prefix(nl + 1);
    return std::string(cut);
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& p, std::string_view content) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

std::string normalize_relative(std::string_view path) {
    if (path.empty() || path.front() == '/' || path.find('\0') != std::string_view::npos) return {};
    std::vector<std::string> parts;
    for (auto& seg : split(path, '/')) {
        if (seg.empty() || seg == ".") continue;
        if (seg == "..") {
            if (parts.empty()) return {};
            parts.pop_back();
            continue;
        }
        parts.push_back(seg);
    }
    std::string out;
    for (const auto& p : parts) {
        if (!out.empty()) out += '/';
        out += p;
    }
    return out;
}

namespace {
bool segment_matches(std::string_view pat, std::string_view s) {
    // iterative '*' matcher
    std::size_t p = 0, i = 0, star = std::string_view::npos, mark = 0;
    while (i < s.size()) {
        if (p < pat.size() && pat[p] == '*') {
            star = p++;
            mark = i;
        } else if (p < pat.size() && pat[p] == s[i]) {
            ++p;
            ++i;
        } else if (star != std::string_view::npos) {
            p = star + 1;
            i = ++mark;
        } else {
            return false;
        }
    }
    while (p < pat.size() && pat[p] == '*') ++p;
    return p == pat.size();
}
}  // namespace

bool path_matches(std::string_view pattern, std::string_view path) {
    if (pattern.size() >= 3 && pattern.substr(pattern.size() - 3) == "/**") {
        const auto dir = pattern.substr(0, pattern.size() - 3);
        if (path == dir) return true;
        if (path.size() > dir.size() && path.substr(0, dir.size()) == dir && path[dir.size()] == '/')
            return true;
        return false;
    }
    const auto pp = split(pattern, '/');
    const auto sp = split(path, '/');
    if (pp.size() != sp.size()) return false;
    for (std::size_t k = 0; k < pp.size(); ++k)
        if (!segment_matches(pp[k], sp[k])) return false;
    return true;
}

}  // namespace forge::text
