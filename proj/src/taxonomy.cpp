#include "forge/taxonomy.hpp"

#include <algorithm>
#include <charconv>

#include <fmt/format.h>

#include "defaults_generated.hpp"
#include "forge/corpus.hpp"
#include "forge/error.hpp"
#include "forge/text.hpp"

namespace forge::taxonomy {

namespace {

double parse_number(std::string_view s, int lineno) {
    double v = 0;
    const auto t = text::trim(s);
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size())
        throw ConfigError(fmt::format("taxonomy line {}: `{}` is not a number", lineno, t));
    return v;
}

std::string checked_cwe(std::string_view s, int lineno) {
    const auto t = std::string(text::trim(s));
    if (!corpus::is_valid_cwe_id(t)) throw ConfigError(fmt::format("taxonomy line {}: `{}` is not a CWE id", lineno, t));
    return t;
}

}  // namespace

CweCategoryMap CweCategoryMap::parse(std::string_view content) {
    CweCategoryMap m;
    std::string section;
    int lineno = 0;
    for (const auto& raw : text::split(content, '\n')) {
        ++lineno;
        const auto line = text::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(fmt::format("taxonomy line {}: unterminated section", lineno));
            section = std::string(line.substr(1, line.size() - 2));
            continue;
        }
        if (section == "top25") {
            const auto id = checked_cwe(line, lineno);
            if (std::find(m.top25_.begin(), m.top25_.end(), id) != m.top25_.end())
                throw ConfigError(fmt::format("taxonomy line {}: {} listed twice in top25", lineno, id));
            m.top25_.push_back(id);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(fmt::format("taxonomy line {}: expected `key = value`", lineno));
        const auto key = text::trim(line.substr(0, eq));
        const auto value = text::trim(line.substr(eq + 1));
        if (section == "categories") {
            const auto id = checked_cwe(key, lineno);
            if (value.empty()) throw ConfigError(fmt::format("taxonomy line {}: empty category", lineno));
            auto [it, inserted] = m.entries_.emplace(id, std::string(value));
            if (!inserted && it->second != value)
                throw ConfigError(fmt::format("taxonomy line {}: {} mapped to both {} and {}", lineno, id, it->second, value));
        } else if (section == "danger") {
            const double v = parse_number(value, lineno);
            if (v < 0) throw ConfigError(fmt::format("taxonomy line {}: negative danger score", lineno));
            m.danger_[checked_cwe(key, lineno)] = v;
        } else if (section == "settings") {
            if (key != "normalizer") throw ConfigError(fmt::format("taxonomy line {}: unknown setting `{}`", lineno, key));
            m.normalizer_ = parse_number(value, lineno);
            if (m.normalizer_ <= 0) throw ConfigError("taxonomy normalizer must be positive");
        } else {
            throw ConfigError(fmt::format("taxonomy line {}: entry outside a known section", lineno));
        }
    }
    for (const auto& [id, score] : m.danger_)
        if (score > m.normalizer_)
            throw ConfigError(fmt::format("taxonomy: danger score of {} ({}) exceeds normalizer {}", id, score, m.normalizer_));
    return m;
}

CweCategoryMap CweCategoryMap::load(const std::filesystem::path& path) {
    try {
        return parse(text::read_file(path));
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
}

const CweCategoryMap& CweCategoryMap::defaults() {
    static const CweCategoryMap m = parse(generated::kTaxonomyConf);
    return m;
}

std::string CweCategoryMap::unify(std::string_view cwe) const {
    if (!corpus::is_valid_cwe_id(cwe)) throw InvalidCweId(fmt::format("`{}` is not a CWE id", cwe));
    auto it = entries_.find(std::string(cwe));
    return it == entries_.end() ? std::string(cwe) : it->second;
}

double CweCategoryMap::danger_score(std::string_view cwe) const {
    auto it = danger_.find(std::string(cwe));
    return it == danger_.end() ? 0.0 : it->second;
}

std::string CweCategoryMap::primary_category(const std::vector<std::string>& cwes) const {
    const std::string* best = nullptr;
    double best_score = -1;
    for (const auto& c : cwes) {
        if (!corpus::is_valid_cwe_id(c)) continue;
        const double s = danger_score(c);
        if (s > best_score) {
            best_score = s;
            best = &c;
        }
    }
    return best ? unify(*best) : std::string(kUnclassified);
}

std::vector<std::string> CweCategoryMap::top25_categories() const {
    std::vector<std::string> out;
    for (const auto& id : top25_) {
        auto cat = unify(id);
        if (std::find(out.begin(), out.end(), cat) == out.end()) out.push_back(std::move(cat));
    }
    return out;
}

}  // namespace forge::taxonomy
