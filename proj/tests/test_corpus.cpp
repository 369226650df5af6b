#include <doctest.h>

#include <map>

#include <fmt/format.h>

#include "forge/corpus.hpp"
#include "forge/error.hpp"
#include "support/support.hpp"

using namespace forge;
namespace fs = std::filesystem;
using namespace forge::corpus;
using forge::testing::fixture;

namespace {

CveRecord load(std::string_view rel) { return parse_cve_json(text::read_file(fixture(rel))); }

using K = ReferenceKind;

struct Golden {
    std::string description;
    std::optional<double> cvss;
    std::vector<std::string> cwes;
    std::string vendor;
    std::string product;
    std::vector<AffectedVersion> affected;
    std::vector<Reference> references;
    std::string published;
    bool exploit;
    std::optional<CisaSsvc> ssvc;
    bool kev;
    std::optional<std::string> repo;
    SourcePlatform platform;
};

// Transcribed by hand from tests/fixtures/corpus/golden/*.json.
const std::map<std::string, Golden>& golden_table() {
    static const std::map<std::string, Golden> t{
        {"CVE-2024-1001",
         {"Path traversal in the note download endpoint.", 7.5, {"CWE-22"}, "acme", "flask notes app",
          {{"affected", "< 1.4.2", "1.0"}},
          {{"https://github.com/acme/notes/commit/abc123", K::patch},
           {"https://www.exploit-db.com/exploits/51234", K::poc},
           {"https://example.com/blog", K::other}},
          "2024-03-01T10:00:00.000Z", true, std::nullopt, false, "https://github.com/acme/notes",
          SourcePlatform::github}},
        {"CVE-2024-1002",
         {"SQL injection in the cart.", 9.3, {"CWE-89", "CWE-564"}, "Acme", "shop-php",
          {{"affected", "<= 2.3.0", "2.0.0"}},
          {{"https://github.com/acme/shop/security/advisories/GHSA-abcd-efgh-ijkl", K::advisory}},
          "2024-03-05T00:00:00Z", false, std::nullopt, false, "https://github.com/acme/shop", SourcePlatform::github}},
        {"CVE-2024-1003",
         {"Debordement de tampon.", std::nullopt, {}, "Unknown", "", {}, {}, "2024-04-10T08:30:00.000Z", false,
          std::nullopt, false, std::nullopt, SourcePlatform::other}},
        {"CVE-2024-1004",
         {"Stored XSS via the caption field.", 6.1, {"CWE-79"}, "WordPress plugin", "Gallery Lite",
          {{"affected", "< 3.2", "0"}},
          {{"https://plugins.trac.wordpress.org/changeset/301", K::other}},
          "2024-05-20T00:00:00.000Z", false, CisaSsvc{"none", "yes", "partial"}, false, std::nullopt,
          SourcePlatform::other}},
        {"CVE-2024-1005",
         {"Heap overflow in the decoder.", 10.0, {"CWE-787"}, "libfoo project", "libfoo",
          {{"affected", "1.2.0", "1.2.0"}}, {}, "2024-06-01T00:00:00.000Z", true, std::nullopt, true,
          "https://github.com/foo/libfoo", SourcePlatform::github}},
        {"CVE-2024-1006",
         {"Template evaluation allows code injection.", 8.0, {"CWE-94"}, "grp", "proj", {},
          {{"https://gitlab.com/grp/proj/-/issues/7", K::poc}}, "2024-06-15T00:00:00.000Z", true, std::nullopt,
          false, "https://gitlab.com/grp/proj", SourcePlatform::other}},
        {"CVE-2024-1007",
         {"Regex backtracking exhausts CPU.", 7.5, {"CWE-400", "CWE-1333", "CWE-770"}, "org", "repo", {},
          {{"https://github.com/org/repo/pull/12", K::patch}}, "2024-07-01T00:00:00.000Z", false, std::nullopt,
          false, "https://github.com/org/repo", SourcePlatform::github}},
        {"CVE-2024-1008",
         {"Stack overflow in the httpd handler.", 4.3, {"CWE-121"}, "Tenda", "AC15 firmware",
          {{"affected", "15.03.05.19", "15.03.05.19"}},
          {{"https://github.com/someone/vulns/blob/main/tenda/poc.md", K::poc}}, "2024-07-09T00:00:00.000Z", true,
          std::nullopt, false, "https://github.com/someone/vulns", SourcePlatform::github}},
        {"CVE-2024-1009",
         {"Authentication bypass in the golang gateway.", 9.8, {"CWE-287"}, "gw", "gateway",
          {{"affected", "< 3.1.0", "3.0.0"}, {"unaffected", "3.1.0", "3.1.0"}}, {}, "2024-08-01T00:00:00.000Z",
          false, std::nullopt, false, std::nullopt, SourcePlatform::other}},
        {"CVE-2024-1010",
         {"Information disclosure in SMB.", 5.3, {"CWE-200"}, "Microsoft", "Windows SMB", {},
          {{"https://msrc.example.com/update-guide/CVE-2024-1010", K::advisory},
           {"https://nvd.nist.gov/vuln/detail/CVE-2024-1010", K::other}},
          "2024-08-13T17:00:00.000Z", false, std::nullopt, false, std::nullopt, SourcePlatform::other}},
        {"CVE-2024-1011",
         {"Use after free when closing a stream.", 7.8, {"CWE-416"}, "imgkit", "imgkit", {}, {},
          "2024-09-02T00:00:00.000Z", true, CisaSsvc{"active", "no", "total"}, false, std::nullopt,
          SourcePlatform::other}},
        {"CVE-2024-10012",
         {"Unrestricted upload in the node.js middleware.", 8.1, {"CWE-434"}, "expressjs", "express-upload",
          {{"affected", "< 1.0.1", "1.0.0"}},
          {{"https://github.com/expressjs/upload/compare/v1.0.0...v1.0.1", K::patch},
           {"https://snyk.io/vuln/SNYK-JS-1", K::other}},
          "2024-10-30T00:00:00.000Z", false, std::nullopt, false, "https://github.com/expressjs/upload",
          SourcePlatform::github}},
    };
    return t;
}

const char* kCreta10686 =
    "# CVE-2025-10686\n"
    "\n"
    "## Basic Information\n"
    "\n"
    "- **Score**: 88\n"
    "- **Vendor**: Unknown\n"
    "- **Product**: Creta Testimonial Showcase\n"
    "- **Version**: 0\n"
    "- **CVSS Score**: 7.2\n"
    "- **CWE**: \n"
    "- **Date Published**: 2025-11-14T06:00:09.051Z\n"
    "- **Exploit Available**: True\n"
    "\n"
    "## Description\n"
    "\n"
    "The Creta Testimonial Showcase WordPress plugin before 1.2.4 is \n"
    "vulnerable to Local File Inclusion. This makes it possible for \n"
    "authenticated attackers, with editor-level access and above, to \n"
    "include and execute arbitrary files on the server, allowing the \n"
    "execution of any PHP code in those files.\n"
    "\n"
    "## Affected Products\n"
    "\n"
    "### Unknown - Creta Testimonial Showcase\n"
    "\n"
    "**Versions:**\n"
    "- affected: < 1.2.4\n"
    "\n"
    "## References and POCs\n"
    "\n"
    "### POC/Exploits\n"
    "\n"
    "- https://wpscan.com/vulnerability/27d58c5a-ab87-41aa-a806-53fa96d4351c/\n"
    "\n"
    "## CISA Assessment\n"
    "\n"
    "**SSVC Decision Points**:\n"
    "- Exploitation: poc\n"
    "- Automatable: no\n"
    "- Technical Impact: total\n";

std::size_t count(std::string_view hay, std::string_view needle) {
    std::size_t n = 0;
    for (auto p = hay.find(needle); p != std::string_view::npos; p = hay.find(needle, p + 1)) ++n;
    return n;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("creta testimonial record fields") {
    const auto r = load("corpus/CVE-2025-10686.json");
    CHECK(r.cve_id == "CVE-2025-10686");
    REQUIRE(r.cvss.has_value());
    CHECK(*r.cvss == doctest::Approx(7.2));
    CHECK(r.exploit_available);
    CHECK(r.vendor == "Unknown");
    CHECK(r.product == "Creta Testimonial Showcase");
    REQUIRE(r.affected_versions.size() == 1);
    CHECK(r.affected_versions[0].range == "< 1.2.4");
    CHECK(r.affected_versions[0].status == "affected");
    CHECK(r.cwes.empty());
    REQUIRE(r.references.size() == 1);
    CHECK(r.references[0].kind == ReferenceKind::poc);
    REQUIRE(r.cisa_ssvc.has_value());
    CHECK(*r.cisa_ssvc == CisaSsvc{"poc", "no", "total"});
    CHECK(r.published == "2025-11-14T06:00:09.051Z");
}

TEST_CASE("creta testimonial digest is byte exact") {
    const auto d = render_digest(load("corpus/CVE-2025-10686.json"), 88);
    CHECK(d.cve_id == "CVE-2025-10686");
    CHECK(d.markdown == kCreta10686);
    CHECK(d.markdown.find("- **Score**: 88\n") != std::string::npos);
    CHECK(d.markdown.find("- **CVSS Score**: 7.2\n") != std::string::npos);
}

TEST_CASE("digest leaks no excluded metadata") {
    const auto md = render_digest(load("corpus/CVE-2025-10686.json"), 88).markdown;
    for (const char* s : {"1bfdd5d7-9f5a-4d9b-9f62-54f4a5e4e0a3", "134c704f-9b21-4f2e-91b3-4a467353bcc0", "WPScan",
                          "CISA-ADP", "PUBLISHED", "2025-09-18T09:41:12.774Z", "2025-11-17T15:22:43.512Z",
                          "2025-11-17T15:20:01", "assigner", "dateUpdated", "dateReserved", "orgId", "shortName",
                          "CISA Coordinator", "Internal Researcher", "x_generator", "EXTERNAL"})
        CHECK_MESSAGE(md.find(s) == std::string::npos, s);
}

TEST_CASE("no metrics block leaves cvss absent") {
    const auto r = load("corpus/no-metrics.json");
    CHECK_FALSE(r.cvss.has_value());
    const auto md = render_digest(r, 0).markdown;
    CHECK(md.find("- **CVSS Score**: \n") != std::string::npos);
}

TEST_CASE("twelve record golden table") {
    const auto c = load_corpus(fixture("corpus/golden"));
    CHECK(c.issues.empty());
    REQUIRE(c.records.size() == golden_table().size());
    for (const auto& r : c.records) {
        CAPTURE(r.cve_id);
        const auto it = golden_table().find(r.cve_id);
        REQUIRE(it != golden_table().end());
        const auto& g = it->second;
        CHECK(r.description == g.description);
        CHECK(r.cvss.has_value() == g.cvss.has_value());
        if (r.cvss && g.cvss) CHECK(*r.cvss == doctest::Approx(*g.cvss));
        CHECK(r.cwes == g.cwes);
        CHECK(r.vendor == g.vendor);
        CHECK(r.product == g.product);
        CHECK(r.affected_versions == g.affected);
        CHECK(r.references == g.references);
        CHECK(r.published == g.published);
        CHECK(r.exploit_available == g.exploit);
        CHECK(r.cisa_ssvc == g.ssvc);
        CHECK(r.cisa_kev == g.kev);
        CHECK(r.repository_url == g.repo);
        CHECK(r.source_platform == g.platform);
    }
}

TEST_CASE("parse errors") {
    CHECK_THROWS_AS(load("corpus/invalid/truncated.json"), MalformedJson);
    CHECK_THROWS_AS(load("corpus/invalid/no-id.json"), MissingCveId);
    CHECK_THROWS_AS(load("corpus/invalid/v4.json"), UnsupportedSchema);
    CHECK_THROWS_AS(parse_cve_json("[1, 2]"), MalformedJson);
    CHECK_THROWS_AS(parse_cve_json(R"({"dataVersion": "5.0", "cveMetadata": {"cveId": "CVE-24-1"}})"), MissingCveId);
    CHECK_THROWS_AS(parse_cve_json(R"({"dataVersion": "6.0", "cveMetadata": {"cveId": "CVE-2024-1234"}})"),
                    UnsupportedSchema);
}

TEST_CASE("load_corpus reports bad files and duplicates") {
    forge::testing::TempDir dir("corpus");
    fs::copy(fixture("corpus/golden/CVE-2024-1001.json"), dir / "a.json");
    fs::copy(fixture("corpus/invalid"), dir / "nested", fs::copy_options::recursive);
    const auto c = load_corpus(dir.path());
    REQUIRE(c.records.size() == 1);
    CHECK(c.records[0].cve_id == "CVE-2024-1001");
    std::map<std::string, int> kinds;
    for (const auto& i : c.issues) ++kinds[i.kind];
    CHECK(kinds["MalformedJson"] == 1);
    CHECK(kinds["MissingCveId"] == 1);
    CHECK(kinds["UnsupportedSchema"] == 1);
    CHECK(c.issues.size() == 4);
}

TEST_CASE("classify_reference") {
    CHECK(classify_reference("https://wpscan.com/vulnerability/27d58c5a/", "POC/Exploits") == ReferenceKind::poc);
    CHECK(classify_reference("https://github.com/x/y/commit/abc123", "") == ReferenceKind::patch);
    CHECK(classify_reference("https://example.com/blog", "") == ReferenceKind::other);
    CHECK(classify_reference("https://example.com/a", "exploit") == ReferenceKind::poc);
    CHECK(classify_reference("https://github.com/x/y/pull/3", "") == ReferenceKind::patch);
    CHECK(classify_reference("https://github.com/x/y/compare/a...b", "") == ReferenceKind::patch);
    CHECK(classify_reference("https://example.com/security-advisories/1", "") == ReferenceKind::advisory);
    CHECK(classify_reference("https://example.com/epoch", "") == ReferenceKind::other);
    CHECK(classify_reference("https://example.com/commit/1", "exploit") == ReferenceKind::poc);
}

TEST_CASE("reference keywords from config") {
    const auto kw = ReferenceKeywords::parse("# comment\npoc = boom\npatch = fixit, mend\n");
    CHECK(kw.poc == std::vector<std::string>{"boom"});
    CHECK(kw.patch == std::vector<std::string>{"fixit", "mend"});
    CHECK(kw.advisory.empty());
    CHECK(classify_reference("https://x.org/boom", "", kw) == ReferenceKind::poc);
    CHECK(classify_reference("https://x.org/commit/1", "", kw) == ReferenceKind::other);
    CHECK_THROWS_AS(ReferenceKeywords::parse("poc boom"), ConfigError);
    CHECK_THROWS_AS(ReferenceKeywords::parse("bogus = a"), ConfigError);
}

TEST_CASE("shipped keyword config matches built-in defaults") {
    const auto kw = ReferenceKeywords::parse(text::read_file(fs::path(FORGE_SOURCE_DIR) / "config/reference_keywords.conf"));
    const auto& d = ReferenceKeywords::defaults();
    CHECK(kw.poc == d.poc);
    CHECK(kw.patch == d.patch);
    CHECK(kw.advisory == d.advisory);
}

TEST_CASE("empty cwe list renders an empty CWE line") {
    auto r = forge::testing::plain_record("CVE-2025-0001");
    const auto md = render_digest(r, 5).markdown;
    CHECK(md.find("- **CWE**: \n") != std::string::npos);
    r.cwes = {"CWE-79", "CWE-80"};
    CHECK(render_digest(r, 5).markdown.find("- **CWE**: CWE-79, CWE-80\n") != std::string::npos);
}

TEST_CASE("section index spans are ordered and disjoint") {
    for (const auto& r : load_corpus(fixture("corpus/golden")).records) {
        const auto d = render_digest(r, 42);
        const auto idx = index_sections(d.markdown);
        CHECK(idx == d.section_index);
        std::size_t prev_end = 0;
        for (const auto& [name, range] : idx) {
            CHECK(range.begin >= prev_end);
            CHECK(range.begin < range.end);
            CHECK(range.end <= d.markdown.size());
            CHECK(d.markdown.compare(range.begin, 3 + name.size(), "## " + name) == 0);
            prev_end = range.end;
        }
        REQUIRE_FALSE(idx.empty());
        CHECK(idx.front().first == "Basic Information");
    }
}

TEST_CASE("digest labels appear exactly once for populated fields") {
    for (const auto& r : load_corpus(fixture("corpus/golden")).records) {
        CAPTURE(r.cve_id);
        const auto md = render_digest(r, 1).markdown;
        for (const char* label : {"**Score**", "**Vendor**", "**Product**", "**Version**", "**CVSS Score**",
                                  "**CWE**", "**Date Published**", "**Exploit Available**"})
            CHECK(count(md, label) == 1);
        CHECK(count(md, "## Description") == (r.description.empty() ? 0u : 1u));
        CHECK(count(md, "## References and POCs") == (r.references.empty() ? 0u : 1u));
        CHECK(count(md, "## CISA Assessment") == (r.cisa_ssvc || r.cisa_kev ? 1u : 0u));
        for (const auto& ref : r.references) CHECK(count(md, "- " + ref.url + "\n") == 1);
        for (const auto& v : r.affected_versions) CHECK(count(md, "- " + v.status + ": " + v.range + "\n") == 1);
        if (r.cvss) CHECK(count(md, fmt::format("- **CVSS Score**: {:.1f}\n", *r.cvss)) == 1);
    }
}

TEST_CASE("parse and render are deterministic") {
    const auto raw = text::read_file(fixture("corpus/CVE-2025-10686.json"));
    const auto a = parse_cve_json(raw);
    const auto b = parse_cve_json(raw);
    CHECK(a == b);
    CHECK(render_digest(a, 88).markdown == render_digest(b, 88).markdown);
}

TEST_CASE("summarize_digest recovers id, date and cwes") {
    auto r = forge::testing::plain_record("CVE-2025-4242");
    r.cwes = {"CWE-22", "CWE-23"};
    r.published = "2025-02-03T04:05:06Z";
    const auto s = summarize_digest(render_digest(r, 10).markdown);
    CHECK(s.cve_id == "CVE-2025-4242");
    CHECK(s.published == "2025-02-03T04:05:06Z");
    CHECK(s.cwes == r.cwes);
}

TEST_CASE("published_date") {
    auto r = forge::testing::plain_record("CVE-2025-0002");
    r.published = "2025-11-14T06:00:09.051Z";
    REQUIRE(r.published_date());
    CHECK(*r.published_date() == std::chrono::year_month_day{std::chrono::year{2025}, std::chrono::month{11},
                                                              std::chrono::day{14}});
    r.published = "garbage";
    CHECK_FALSE(r.published_date());
    r.published = "2025-02-30";
    CHECK_FALSE(r.published_date());
}

TEST_CASE("id validators") {
    CHECK(is_valid_cve_id("CVE-2025-10686"));
    CHECK(is_valid_cve_id("CVE-1999-0001"));
    CHECK_FALSE(is_valid_cve_id("CVE-2025-123"));
    CHECK_FALSE(is_valid_cve_id("cve-2025-1234"));
    CHECK(is_valid_cwe_id("CWE-79"));
    CHECK_FALSE(is_valid_cwe_id("CWE-"));
    CHECK_FALSE(is_valid_cwe_id("NVD-CWE-Other"));
}

}  // TEST_SUITE
