#include "forge/corpus.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "forge/error.hpp"
#include "forge/text.hpp"

namespace forge::corpus {

using nlohmann::json;

std::string_view to_string(ReferenceKind k) {
    switch (k) {
        case ReferenceKind::poc: return "poc";
        case ReferenceKind::patch: return "patch";
        case ReferenceKind::advisory: return "advisory";
        case ReferenceKind::other: return "other";
    }
    return "other";
}

std::string_view to_string(SourcePlatform p) {
    return p == SourcePlatform::github ? "github" : "other";
}

bool is_valid_cve_id(std::string_view id) {
    static const std::regex re(R"(CVE-\d{4}-\d{4,})");
    return std::regex_match(id.begin(), id.end(), re);
}

bool is_valid_cwe_id(std::string_view id) {
    static const std::regex re(R"(CWE-\d+)");
    return std::regex_match(id.begin(), id.end(), re);
}

std::optional<std::chrono::year_month_day> CveRecord::published_date() const {
    static const std::regex re(R"((\d{4})-(\d{2})-(\d{2}).*)");
    std::smatch m;
    if (!std::regex_match(published, m, re)) return std::nullopt;
    const std::chrono::year_month_day ymd{std::chrono::year{std::stoi(m[1])},
                                          std::chrono::month{static_cast<unsigned>(std::stoi(m[2]))},
                                          std::chrono::day{static_cast<unsigned>(std::stoi(m[3]))}};
    if (!ymd.ok()) return std::nullopt;
    return ymd;
}

// ---------------------------------------------------------------------------
// reference classification

const ReferenceKeywords& ReferenceKeywords::defaults() {
    static const ReferenceKeywords kw{
        {"poc", "exploit", "exploits", "exploit-db", "wpscan.com/vulnerability", "proof of concept",
         "proof-of-concept"},
        {"commit", "commits", "patch", "patches", "pull", "/compare/"},
        {"advisory", "advisories", "ghsa", "bulletin", "security-advisories"},
    };
    return kw;
}

ReferenceKeywords ReferenceKeywords::parse(std::string_view text) {
    ReferenceKeywords kw;
    int lineno = 0;
    for (const auto& raw : text::split(text, '\n')) {
        ++lineno;
        auto line = text::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError(fmt::format("reference keywords line {}: expected `kind = keywords`", lineno));
        const auto kind = text::to_lower(text::trim(line.substr(0, eq)));
        std::vector<std::string> words;
        for (auto& w : text::split(line.substr(eq + 1), ','))
            if (auto t = text::trim(w); !t.empty()) words.emplace_back(t);
        if (kind == "poc") kw.poc = std::move(words);
        else if (kind == "patch") kw.patch = std::move(words);
        else if (kind == "advisory") kw.advisory = std::move(words);
        else throw ConfigError(fmt::format("reference keywords line {}: unknown kind `{}`", lineno, kind));
    }
    return kw;
}

ReferenceKind classify_reference(std::string_view url, std::string_view context,
                                 const ReferenceKeywords& keywords) {
    const std::string hay = std::string(url) + " " + std::string(context);
    auto any = [&](const std::vector<std::string>& words) {
        return std::any_of(words.begin(), words.end(),
                           [&](const std::string& w) { return text::contains_keyword(hay, w); });
    };
    if (any(keywords.poc)) return ReferenceKind::poc;
    if (any(keywords.patch)) return ReferenceKind::patch;
    if (any(keywords.advisory)) return ReferenceKind::advisory;
    return ReferenceKind::other;
}

// ---------------------------------------------------------------------------
// CVE JSON 5.x

namespace {

const json* find(const json& j, std::string_view key) {
    if (!j.is_object()) return nullptr;
    auto it = j.find(std::string(key));
    return it == j.end() ? nullptr : &*it;
}

std::string get_string(const json& j, std::string_view key) {
    const json* v = find(j, key);
    return v && v->is_string() ? v->get<std::string>() : std::string{};
}

template <typename F>
void for_each_in(const json& j, std::string_view key, F&& f) {
    const json* arr = find(j, key);
    if (!arr || !arr->is_array()) return;
    for (const auto& e : *arr) f(e);
}

std::string pick_description(const json& cna) {
    const json* descs = find(cna, "descriptions");
    if (!descs || !descs->is_array() || descs->empty()) return {};
    for (const auto& d : *descs)
        if (text::starts_with_ci(get_string(d, "lang"), "en")) return get_string(d, "value");
    return get_string(descs->front(), "value");
}

void collect_cvss(const json& container, std::optional<double>& best) {
    for_each_in(container, "metrics", [&](const json& m) {
        for (const char* key : {"cvssV4_0", "cvssV3_1", "cvssV3_0", "cvssV2_0"}) {
            const json* block = find(m, key);
            if (!block) continue;
            const json* score = find(*block, "baseScore");
            if (!score || !score->is_number()) continue;
            const double s = score->get<double>();
            if (s < 0.0 || s > 10.0) continue;
            if (!best || s > *best) best = s;
        }
    });
}

void collect_cwes(const json& container, std::vector<std::string>& out) {
    static const std::regex embedded(R"(CWE-\d+)");
    for_each_in(container, "problemTypes", [&](const json& pt) {
        for_each_in(pt, "descriptions", [&](const json& d) {
            std::string id = get_string(d, "cweId");
            if (id.empty()) {
                const std::string desc = get_string(d, "description");
                std::smatch m;
                if (std::regex_search(desc, m, embedded)) id = m.str();
            }
            if (is_valid_cwe_id(id) && std::find(out.begin(), out.end(), id) == out.end())
                out.push_back(id);
        });
    });
}

void collect_ssvc(const json& adp, CveRecord& rec) {
    for_each_in(adp, "metrics", [&](const json& m) {
        const json* other = find(m, "other");
        if (!other) return;
        const std::string type = text::to_lower(get_string(*other, "type"));
        if (type == "kev") rec.cisa_kev = true;
        if (type != "ssvc") return;
        const json* content = find(*other, "content");
        if (!content) return;
        CisaSsvc ssvc;
        for_each_in(*content, "options", [&](const json& opt) {
            if (!opt.is_object()) return;
            for (const auto& [k, v] : opt.items()) {
                if (!v.is_string()) continue;
                const auto key = text::to_lower(k);
                if (key == "exploitation") ssvc.exploitation = v.get<std::string>();
                else if (key == "automatable") ssvc.automatable = v.get<std::string>();
                else if (key == "technical impact") ssvc.technical_impact = v.get<std::string>();
            }
        });
        rec.cisa_ssvc = ssvc;
    });
}

std::optional<std::string> github_repo(std::string_view url) {
    static const std::regex re(R"(^https?://(?:www\.)?github\.com/([A-Za-z0-9_.-]+)/([A-Za-z0-9_.-]+))",
                               std::regex::icase);
    std::match_results<std::string_view::const_iterator> m;
    if (!std::regex_search(url.begin(), url.end(), m, re)) return std::nullopt;
    std::string repo = m[2].str();
    if (repo.size() > 4 && repo.substr(repo.size() - 4) == ".git") repo.resize(repo.size() - 4);
    const std::string owner = m[1].str();
    if (owner == "advisories" || owner == "orgs" || owner == "settings") return std::nullopt;
    return "https://github.com/" + owner + "/" + repo;
}

}  // namespace

CveRecord parse_cve_json(std::string_view raw, const ReferenceKeywords& keywords) {
    json doc;
    try {
        doc = json::parse(raw.begin(), raw.end());
    } catch (const json::parse_error& e) {
        throw MalformedJson(e.what());
    }
    if (!doc.is_object()) throw MalformedJson("top-level value is not an object");

    const std::string version = get_string(doc, "dataVersion");
    if (version.empty() || !(version == "5" || version.rfind("5.", 0) == 0))
        throw UnsupportedSchema(fmt::format("dataVersion `{}` is not 5.x", version));

    const json* meta = find(doc, "cveMetadata");
    const std::string id = meta ? get_string(*meta, "cveId") : std::string{};
    if (id.empty()) throw MissingCveId("cveMetadata.cveId is absent");
    if (!is_valid_cve_id(id)) throw MissingCveId(fmt::format("cveMetadata.cveId `{}` is not a CVE id", id));

    CveRecord rec;
    rec.cve_id = id;
    rec.published = get_string(*meta, "datePublished");

    static const json empty = json::object();
    const json* containers = find(doc, "containers");
    const json& cna = containers && find(*containers, "cna") ? *find(*containers, "cna") : empty;
    std::vector<const json*> adps;
    if (containers) for_each_in(*containers, "adp", [&](const json& a) { adps.push_back(&a); });

    rec.description = pick_description(cna);

    collect_cvss(cna, rec.cvss);
    for (const json* a : adps) collect_cvss(*a, rec.cvss);

    collect_cwes(cna, rec.cwes);
    for (const json* a : adps) collect_cwes(*a, rec.cwes);

    const json* affected = find(cna, "affected");
    std::optional<std::string> affected_repo;
    if (affected && affected->is_array() && !affected->empty()) {
        const json& first = affected->front();
        if (auto v = get_string(first, "vendor"); !v.empty()) rec.vendor = v;
        rec.product = get_string(first, "product");
        if (auto r = get_string(first, "repo"); !r.empty()) affected_repo = r;
        for_each_in(first, "versions", [&](const json& v) {
            AffectedVersion av;
            av.status = get_string(v, "status");
            av.base = get_string(v, "version");
            if (auto lt = get_string(v, "lessThan"); !lt.empty()) av.range = "< " + lt;
            else if (auto le = get_string(v, "lessThanOrEqual"); !le.empty()) av.range = "<= " + le;
            else av.range = av.base;
            rec.affected_versions.push_back(std::move(av));
        });
    }

    std::set<std::string> seen_urls;
    auto add_refs = [&](const json& container) {
        for_each_in(container, "references", [&](const json& r) {
            const std::string url = get_string(r, "url");
            if (url.empty() || !seen_urls.insert(url).second) return;
            std::string context = get_string(r, "name");
            for_each_in(r, "tags", [&](const json& t) {
                if (t.is_string()) context += " " + t.get<std::string>();
            });
            rec.references.push_back({url, classify_reference(url, context, keywords)});
        });
    };
    add_refs(cna);
    for (const json* a : adps) add_refs(*a);

    for (const json* a : adps) collect_ssvc(*a, rec);

    const bool has_poc = std::any_of(rec.references.begin(), rec.references.end(),
                                     [](const Reference& r) { return r.kind == ReferenceKind::poc; });
    bool ssvc_exploited = false;
    if (rec.cisa_ssvc) {
        const auto e = text::to_lower(rec.cisa_ssvc->exploitation);
        ssvc_exploited = e == "poc" || e == "active";
    }
    rec.exploit_available = has_poc || ssvc_exploited || rec.cisa_kev;

    if (affected_repo) rec.repository_url = github_repo(*affected_repo).value_or(*affected_repo);
    if (!rec.repository_url) {
        for (const auto& r : rec.references) {
            if (auto g = github_repo(r.url)) {
                rec.repository_url = g;
                break;
            }
        }
    }
    if (rec.repository_url && github_repo(*rec.repository_url)) rec.source_platform = SourcePlatform::github;
    return rec;
}

// ---------------------------------------------------------------------------
// digest

namespace {

std::string escape_block(std::string_view s) {
    std::string out;
    for (const auto& line : text::split(s, '\n')) {
        std::string_view l = line;
        if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
        const auto first = l.find_first_not_of(" \t");
        if (first != std::string_view::npos && l[first] == '#') out += '\\';
        out += l;
        out += '\n';
    }
    while (!out.empty() && (out.back() == '\n' || out.back() == ' ')) out.pop_back();
    return out;
}

const char* group_heading(ReferenceKind k) {
    switch (k) {
        case ReferenceKind::poc: return "POC/Exploits";
        case ReferenceKind::patch: return "Patches";
        case ReferenceKind::advisory: return "Advisories";
        case ReferenceKind::other: return "Other References";
    }
    return "Other References";
}

}  // namespace

CveDigest render_digest(const CveRecord& rec, int reproduce_score) {
    std::vector<std::pair<std::string, std::string>> sections;

    std::string cwe_line;
    for (const auto& c : rec.cwes) {
        if (!cwe_line.empty()) cwe_line += ", ";
        cwe_line += c;
    }
    const std::string version = rec.affected_versions.empty() ? "" : rec.affected_versions.front().base;
    std::string basic;
    basic += fmt::format("- **Score**: {}\n", reproduce_score);
    basic += fmt::format("- **Vendor**: {}\n", rec.vendor);
    basic += fmt::format("- **Product**: {}\n", rec.product);
    basic += fmt::format("- **Version**: {}\n", version);
    basic += fmt::format("- **CVSS Score**: {}\n", rec.cvss ? fmt::format("{:.1f}", *rec.cvss) : "");
    basic += fmt::format("- **CWE**: {}\n", cwe_line);
    basic += fmt::format("- **Date Published**: {}\n", rec.published);
    basic += fmt::format("- **Exploit Available**: {}\n", rec.exploit_available ? "True" : "False");
    sections.emplace_back("Basic Information", basic);

    if (!text::trim(rec.description).empty())
        sections.emplace_back("Description", escape_block(text::trim(rec.description)) + "\n");

    if (!rec.product.empty() || !rec.affected_versions.empty()) {
        std::string body = fmt::format("### {} - {}\n", rec.vendor, rec.product);
        if (!rec.affected_versions.empty()) {
            body += "\n**Versions:**\n";
            for (const auto& v : rec.affected_versions) body += fmt::format("- {}: {}\n", v.status, v.range);
        }
        sections.emplace_back("Affected Products", body);
    }

    if (!rec.references.empty()) {
        std::string body;
        for (auto kind : {ReferenceKind::poc, ReferenceKind::patch, ReferenceKind::advisory, ReferenceKind::other}) {
            std::string list;
            for (const auto& r : rec.references)
                if (r.kind == kind) list += fmt::format("- {}\n", r.url);
            if (list.empty()) continue;
            if (!body.empty()) body += "\n";
            body += fmt::format("### {}\n\n{}", group_heading(kind), list);
        }
        sections.emplace_back("References and POCs", body);
    }

    if (rec.cisa_ssvc || rec.cisa_kev) {
        std::string body;
        if (rec.cisa_ssvc) {
            body += "**SSVC Decision Points**:\n";
            body += fmt::format("- Exploitation: {}\n", rec.cisa_ssvc->exploitation);
            body += fmt::format("- Automatable: {}\n", rec.cisa_ssvc->automatable);
            body += fmt::format("- Technical Impact: {}\n", rec.cisa_ssvc->technical_impact);
        }
        if (rec.cisa_kev) {
            if (!body.empty()) body += "\n";
            body += "**Known Exploited Vulnerability**: True\n";
        }
        sections.emplace_back("CISA Assessment", body);
    }

    CveDigest digest;
    digest.cve_id = rec.cve_id;
    digest.markdown = fmt::format("# {}\n", rec.cve_id);
    for (std::size_t i = 0; i < sections.size(); ++i) {
        const auto begin = digest.markdown.size() + 1;  // after the separating blank line
        digest.markdown += fmt::format("\n## {}\n\n{}", sections[i].first, sections[i].second);
        digest.section_index.push_back({sections[i].first, {begin, digest.markdown.size()}});
    }
    return digest;
}

std::vector<std::pair<std::string, ByteRange>> index_sections(std::string_view md) {
    std::vector<std::pair<std::string, ByteRange>> out;
    std::size_t pos = 0;
    while (pos < md.size()) {
        const auto eol = md.find('\n', pos);
        const auto line_end = eol == std::string_view::npos ? md.size() : eol;
        const auto line = md.substr(pos, line_end - pos);
        if (line.size() > 3 && line.substr(0, 3) == "## ") {
            if (!out.empty()) {
                // the previous section ends before the blank separator line
                const bool blank_before = pos >= 2 && md[pos - 1] == '\n' && md[pos - 2] == '\n';
                out.back().second.end = blank_before ? pos - 1 : pos;
            }
            out.push_back({std::string(line.substr(3)), {pos, md.size()}});
        }
        if (eol == std::string_view::npos) break;
        pos = eol + 1;
    }
    return out;
}

DigestSummary summarize_digest(std::string_view md) {
    DigestSummary s;
    for (const auto& raw : text::split(md, '\n')) {
        std::string_view line = raw;
        if (s.cve_id.empty() && line.rfind("# ", 0) == 0) s.cve_id = std::string(text::trim(line.substr(2)));
        auto value_of = [&](std::string_view label) -> std::optional<std::string_view> {
            const std::string prefix = fmt::format("- **{}**:", label);
            if (line.rfind(prefix, 0) != 0) return std::nullopt;
            return text::trim(line.substr(prefix.size()));
        };
        if (auto v = value_of("Date Published")) s.published = std::string(*v);
        if (auto v = value_of("CWE")) {
            for (auto& c : text::split(*v, ','))
                if (auto t = text::trim(c); !t.empty()) s.cwes.emplace_back(t);
        }
    }
    return s;
}

Corpus load_corpus(const std::filesystem::path& path, const ReferenceKeywords& keywords) {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    if (fs::is_directory(path)) {
        for (const auto& e : fs::recursive_directory_iterator(path))
            if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(path);
    }

    Corpus c;
    std::set<std::string> ids;
    for (const auto& f : files) {
        try {
            auto rec = parse_cve_json(text::read_file(f), keywords);
            if (!ids.insert(rec.cve_id).second) {
                c.issues.push_back({f, "DuplicateCveId", rec.cve_id + " already loaded; skipped"});
                continue;
            }
            c.records.push_back(std::move(rec));
        } catch (const Error& e) {
            c.issues.push_back({f, e.kind(), e.what()});
        } catch (const std::exception& e) {
            c.issues.push_back({f, "IoError", e.what()});
        }
    }
    std::sort(c.records.begin(), c.records.end(),
              [](const CveRecord& a, const CveRecord& b) { return a.cve_id < b.cve_id; });
    return c;
}

}  // namespace forge::corpus
