#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace forge::corpus {

enum class ReferenceKind { poc, patch, advisory, other };
std::string_view to_string(ReferenceKind k);

enum class SourcePlatform { github, other };
std::string_view to_string(SourcePlatform p);

struct Reference {
    std::string url;
    ReferenceKind kind = ReferenceKind::other;
    friend bool operator==(const Reference&, const Reference&) = default;
};

// One `affected[0].versions[]` entry. `status` is the constraint kind
// ("affected" / "unaffected"), `range` the rendered constraint ("< 1.2.4").
struct AffectedVersion {
    std::string status;
    std::string range;
    std::string base;  // raw `version` field
    friend bool operator==(const AffectedVersion&, const AffectedVersion&) = default;
};

struct CisaSsvc {
    std::string exploitation;
    std::string automatable;
    std::string technical_impact;
    friend bool operator==(const CisaSsvc&, const CisaSsvc&) = default;
};

struct CveRecord {
    std::string cve_id;
    std::string description;
    std::optional<double> cvss;
    std::vector<std::string> cwes;
    std::string vendor = "Unknown";
    std::string product;
    std::vector<AffectedVersion> affected_versions;
    std::vector<Reference> references;
    std::string published;  // ISO-8601 UTC as recorded, e.g. 2025-11-14T06:00:09.051Z
    bool exploit_available = false;
    std::optional<CisaSsvc> cisa_ssvc;
    bool cisa_kev = false;
    std::optional<std::string> repository_url;
    SourcePlatform source_platform = SourcePlatform::other;

    // Calendar date of `published`; nullopt when absent or unparseable.
    std::optional<std::chrono::year_month_day> published_date() const;

    friend bool operator==(const CveRecord&, const CveRecord&) = default;
};

bool is_valid_cve_id(std::string_view id);
bool is_valid_cwe_id(std::string_view id);

// Keyword tables for reference classification. Matching is case-insensitive
// over "url + context" with alphanumeric word boundaries.
struct ReferenceKeywords {
    std::vector<std::string> poc;
    std::vector<std::string> patch;
    std::vector<std::string> advisory;

    static const ReferenceKeywords& defaults();
    // Plain text, one `kind = kw1, kw2, ...` line per kind; `#` comments.
    static ReferenceKeywords parse(std::string_view text);
};

ReferenceKind classify_reference(std::string_view url, std::string_view context,
                                 const ReferenceKeywords& keywords = ReferenceKeywords::defaults());

CveRecord parse_cve_json(std::string_view raw,
                         const ReferenceKeywords& keywords = ReferenceKeywords::defaults());

struct ByteRange {
    std::size_t begin = 0;
    std::size_t end = 0;  // exclusive
    friend bool operator==(const ByteRange&, const ByteRange&) = default;
};

struct CveDigest {
    std::string cve_id;
    std::string markdown;
    std::vector<std::pair<std::string, ByteRange>> section_index;  // document order
};

CveDigest render_digest(const CveRecord& record, int reproduce_score);

// Recovers the `## ` section spans of a rendered digest.
std::vector<std::pair<std::string, ByteRange>> index_sections(std::string_view markdown);

// Fields a digest exposes back to downstream consumers (bench metadata).
struct DigestSummary {
    std::string cve_id;
    std::string published;
    std::vector<std::string> cwes;
};
DigestSummary summarize_digest(std::string_view markdown);

struct LoadIssue {
    std::filesystem::path file;
    std::string kind;
    std::string message;
};

struct Corpus {
    std::vector<CveRecord> records;  // unique cve_id, sorted by cve_id
    std::vector<LoadIssue> issues;
};

// Reads one JSON file or every `*.json` file under a directory (the public
// `cves/<year>/<bucket>/CVE-*.json` layout works as is). Files that fail to
// parse and duplicate ids are reported in `issues`, not thrown.
Corpus load_corpus(const std::filesystem::path& path,
                   const ReferenceKeywords& keywords = ReferenceKeywords::defaults());

}  // namespace forge::corpus
