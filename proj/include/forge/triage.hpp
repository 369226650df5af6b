#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/taxonomy.hpp"

namespace forge::triage {

enum class RuleCategory { evidence, tech_stack, constraint };
std::string_view to_string(RuleCategory c);

enum class RecordField { references, description, product, vendor, cisa };

struct KeywordMatcher {
    std::vector<std::string> keywords;
};
struct RegexMatcher {
    std::string source;
    std::regex re;
};
struct RefKindMatcher {
    corpus::ReferenceKind kind;
};
struct PresentMatcher {};

using Matcher = std::variant<KeywordMatcher, RegexMatcher, RefKindMatcher, PresentMatcher>;

struct ScoreRule {
    std::string name;
    RuleCategory category = RuleCategory::evidence;
    std::vector<RecordField> fields;
    Matcher matcher;
    int points = 0;

    bool matches(const corpus::CveRecord& record) const;
};

using RuleSet = std::vector<ScoreRule>;

// Throws ConfigError on duplicate names or a points sign that contradicts
// the category (constraints <= 0, evidence/tech_stack >= 0).
void validate_rules(const RuleSet& rules);
RuleSet parse_rules(std::string_view text);
RuleSet load_rules(const std::filesystem::path& path);
const RuleSet& default_rules();

struct TriageScore {
    std::string cve_id;
    int s_base = 0;
    std::vector<std::pair<std::string, int>> matched_rules;
    double cwe_component = 0;
    double cvss_component = 0;
    int s_div = 0;
    int s_nov = 0;
    double s_final = 0;
};

TriageScore reproduce_score(const corpus::CveRecord& record, const RuleSet& rules);

// repository_url when present, else "vendor/product" (lower-cased).
std::string repo_key(const corpus::CveRecord& record);

struct SelectionState {
    std::vector<std::string> selected;
    std::map<std::string, int> per_category_count;  // all picks
    std::map<std::string, int> per_repo_count;      // all picks
    std::map<std::string, int> phase2_category_count;
    std::map<std::string, int> phase2_repo_count;
    int quota = 0;
};

TriageScore composite_score(const TriageScore& base, const corpus::CveRecord& record,
                            const taxonomy::CweCategoryMap& taxonomy, const SelectionState& selection);

struct SelectionOptions {
    int phase1_per_category = 2;
    int phase2_category_cap = 10;
    int phase2_repo_cap = 10;
};

struct Selection {
    std::string cve_id;
    TriageScore score;
    int phase = 1;
    std::string category;
    std::string repo;
};

// Two-phase diversity selection. Candidates are order-normalized by cve_id
// first, so the result depends only on the candidate set.
std::vector<Selection> select_benchmark(std::vector<corpus::CveRecord> candidates, const RuleSet& rules,
                                        const taxonomy::CweCategoryMap& taxonomy, int quota,
                                        const SelectionOptions& options = {});

// -------------------------------------------------------------------------
// semantic filtering hook

struct JudgeVerdict {
    bool keep = true;
    std::string reason;
};

class Judge {
public:
    virtual ~Judge() = default;
    // May throw JudgeUnavailable.
    virtual JudgeVerdict assess(const corpus::CveRecord& record) = 0;
};

struct JudgeOutcome {
    std::vector<corpus::CveRecord> kept;
    std::vector<std::pair<std::string, std::string>> dropped;  // (cve_id, reason)
    std::optional<std::string> warning;
};

// If the judge becomes unavailable, every record passes through unfiltered
// and `warning` is set.
JudgeOutcome judge_filter(const std::vector<corpus::CveRecord>& records, Judge& judge);

// Offline judge: drops records whose vendor/product names a non-Linux
// platform ("linux-incompatible") and later records repeating an already
// kept (repository, CWE category) pattern ("duplicate-pattern").
class KeywordJudge : public Judge {
public:
    explicit KeywordJudge(const taxonomy::CweCategoryMap& taxonomy,
                          std::vector<std::string> incompatible = {"windows", "macos", "mac os", "ios"});
    JudgeVerdict assess(const corpus::CveRecord& record) override;

private:
    const taxonomy::CweCategoryMap& taxonomy_;
    std::vector<std::string> incompatible_;
    std::vector<std::pair<std::string, std::string>> seen_;
};

}  // namespace forge::triage
