#include "forge/triage.hpp"

#include <algorithm>
#include <charconv>
#include <set>

#include <fmt/format.h>

#include "defaults_generated.hpp"
#include "forge/error.hpp"
#include "forge/text.hpp"

namespace forge::triage {

using corpus::CveRecord;

std::string_view to_string(RuleCategory c) {
    switch (c) {
        case RuleCategory::evidence: return "evidence";
        case RuleCategory::tech_stack: return "tech_stack";
        case RuleCategory::constraint: return "constraint";
    }
    return "evidence";
}

namespace {

std::string field_text(const CveRecord& r, RecordField f) {
    switch (f) {
        case RecordField::references: {
            std::string s;
            for (const auto& ref : r.references) s += ref.url + "\n";
            return s;
        }
        case RecordField::description: return r.description;
        case RecordField::product: return r.product;
        case RecordField::vendor: return r.vendor == "Unknown" ? std::string{} : r.vendor;
        case RecordField::cisa: {
            std::string s;
            if (r.cisa_ssvc)
                s = fmt::format("exploitation: {}\nautomatable: {}\ntechnical impact: {}\n", r.cisa_ssvc->exploitation,
                                r.cisa_ssvc->automatable, r.cisa_ssvc->technical_impact);
            if (r.cisa_kev) s += "kev\n";
            return s;
        }
    }
    return {};
}

}  // namespace

bool ScoreRule::matches(const CveRecord& r) const {
    if (const auto* k = std::get_if<RefKindMatcher>(&matcher)) {
        return std::any_of(r.references.begin(), r.references.end(),
                           [&](const corpus::Reference& ref) { return ref.kind == k->kind; });
    }
    for (const auto f : fields) {
        const std::string hay = field_text(r, f);
        const bool hit = std::visit(
            [&](const auto& m) -> bool {
                using M = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<M, KeywordMatcher>) {
                    return std::any_of(m.keywords.begin(), m.keywords.end(),
                                       [&](const std::string& kw) { return text::contains_keyword(hay, kw); });
                } else if constexpr (std::is_same_v<M, RegexMatcher>) {
                    return std::regex_search(hay, m.re);
                } else if constexpr (std::is_same_v<M, PresentMatcher>) {
                    return !text::trim(hay).empty();
                } else {
                    return false;
                }
            },
            matcher);
        if (hit) return true;
    }
    return false;
}

void validate_rules(const RuleSet& rules) {
    std::set<std::string> names;
    for (const auto& r : rules) {
        if (r.name.empty()) throw ConfigError("rule with empty name");
        if (!names.insert(r.name).second) throw ConfigError(fmt::format("duplicate rule name `{}`", r.name));
        if (r.category == RuleCategory::constraint && r.points > 0)
            throw ConfigError(fmt::format("constraint rule `{}` has positive points", r.name));
        if (r.category != RuleCategory::constraint && r.points < 0)
            throw ConfigError(fmt::format("{} rule `{}` has negative points", to_string(r.category), r.name));
        if (r.fields.empty() && !std::holds_alternative<RefKindMatcher>(r.matcher))
            throw ConfigError(fmt::format("rule `{}` selects no fields", r.name));
    }
}

namespace {

std::vector<std::string> split_columns(std::string_view line) {
    std::vector<std::string> cols(1);
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '\\' && i + 1 < line.size() && line[i + 1] == '|') {
            cols.back() += '|';
            ++i;
        } else if (line[i] == '|') {
            cols.emplace_back();
        } else {
            cols.back() += line[i];
        }
    }
    for (auto& c : cols) c = std::string(text::trim(c));
    return cols;
}

RecordField parse_field(std::string_view s, int lineno) {
    if (s == "references") return RecordField::references;
    if (s == "description") return RecordField::description;
    if (s == "product") return RecordField::product;
    if (s == "vendor") return RecordField::vendor;
    if (s == "cisa") return RecordField::cisa;
    throw ConfigError(fmt::format("rules line {}: unknown field `{}`", lineno, s));
}

Matcher parse_matcher(std::string_view s, int lineno) {
    if (s == "present") return PresentMatcher{};
    const auto colon = s.find(':');
    if (colon == std::string_view::npos) throw ConfigError(fmt::format("rules line {}: bad matcher `{}`", lineno, s));
    const auto kind = text::trim(s.substr(0, colon));
    const auto arg = text::trim(s.substr(colon + 1));
    if (kind == "keywords") {
        KeywordMatcher m;
        for (auto& w : text::split(arg, ','))
            if (auto t = text::trim(w); !t.empty()) m.keywords.emplace_back(t);
        if (m.keywords.empty()) throw ConfigError(fmt::format("rules line {}: empty keyword list", lineno));
        return m;
    }
    if (kind == "regex") {
        try {
            return RegexMatcher{std::string(arg), std::regex(std::string(arg), std::regex::icase | std::regex::ECMAScript)};
        } catch (const std::regex_error& e) {
            throw ConfigError(fmt::format("rules line {}: invalid regex: {}", lineno, e.what()));
        }
    }
    if (kind == "ref_kind") {
        if (arg == "poc") return RefKindMatcher{corpus::ReferenceKind::poc};
        if (arg == "patch") return RefKindMatcher{corpus::ReferenceKind::patch};
        if (arg == "advisory") return RefKindMatcher{corpus::ReferenceKind::advisory};
        if (arg == "other") return RefKindMatcher{corpus::ReferenceKind::other};
        throw ConfigError(fmt::format("rules line {}: unknown reference kind `{}`", lineno, arg));
    }
    throw ConfigError(fmt::format("rules line {}: unknown matcher kind `{}`", lineno, kind));
}

}  // namespace

RuleSet parse_rules(std::string_view content) {
    RuleSet rules;
    int lineno = 0;
    for (const auto& raw : text::split(content, '\n')) {
        ++lineno;
        const auto line = text::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const auto cols = split_columns(line);
        if (cols.size() != 5)
            throw ConfigError(fmt::format("rules line {}: expected 5 columns, found {}", lineno, cols.size()));
        ScoreRule r;
        r.name = cols[0];
        if (cols[1] == "evidence") r.category = RuleCategory::evidence;
        else if (cols[1] == "tech_stack") r.category = RuleCategory::tech_stack;
        else if (cols[1] == "constraint") r.category = RuleCategory::constraint;
        else throw ConfigError(fmt::format("rules line {}: unknown category `{}`", lineno, cols[1]));
        for (auto& f : text::split(cols[2], ','))
            if (auto t = text::trim(f); !t.empty()) r.fields.push_back(parse_field(t, lineno));
        r.matcher = parse_matcher(cols[3], lineno);
        auto [ptr, ec] = std::from_chars(cols[4].data(), cols[4].data() + cols[4].size(), r.points);
        if (ec != std::errc{} || ptr != cols[4].data() + cols[4].size())
            throw ConfigError(fmt::format("rules line {}: points `{}` is not an integer", lineno, cols[4]));
        rules.push_back(std::move(r));
    }
    validate_rules(rules);
    return rules;
}

RuleSet load_rules(const std::filesystem::path& path) {
    try {
        return parse_rules(text::read_file(path));
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
}

const RuleSet& default_rules() {
    static const RuleSet rules = parse_rules(generated::kRulesConf);
    return rules;
}

TriageScore reproduce_score(const CveRecord& record, const RuleSet& rules) {
    TriageScore s;
    s.cve_id = record.cve_id;
    std::vector<bool> hit(rules.size());
    const ScoreRule* best_stack = nullptr;
    for (std::size_t i = 0; i < rules.size(); ++i) {
        hit[i] = rules[i].matches(record);
        if (hit[i] && rules[i].category == RuleCategory::tech_stack &&
            (!best_stack || rules[i].points > best_stack->points))
            best_stack = &rules[i];
    }
    for (std::size_t i = 0; i < rules.size(); ++i) {
        if (!hit[i]) continue;
        if (rules[i].category == RuleCategory::tech_stack && &rules[i] != best_stack) continue;
        s.matched_rules.emplace_back(rules[i].name, rules[i].points);
        s.s_base += rules[i].points;
    }
    s.s_final = s.s_base;
    return s;
}

std::string repo_key(const CveRecord& record) {
    if (record.repository_url) return text::to_lower(*record.repository_url);
    return text::to_lower(record.vendor + "/" + record.product);
}

TriageScore composite_score(const TriageScore& base, const CveRecord& record,
                            const taxonomy::CweCategoryMap& taxonomy, const SelectionState& selection) {
    TriageScore s = base;
    double best_danger = 0;
    for (const auto& cwe : record.cwes) best_danger = std::max(best_danger, taxonomy.danger_score(cwe));
    s.cwe_component = best_danger / taxonomy.normalizer() * 30.0;
    s.cvss_component = record.cvss ? *record.cvss * 2.0 : 0.0;

    const auto cat = taxonomy.primary_category(record.cwes);
    const auto cat_it = selection.per_category_count.find(cat);
    const int cat_seen = cat_it == selection.per_category_count.end() ? 0 : cat_it->second;
    s.s_div = cat_seen == 0 ? 20 : (cat_seen < 3 ? 10 : 0);

    const auto repo_it = selection.per_repo_count.find(repo_key(record));
    s.s_nov = (repo_it == selection.per_repo_count.end() || repo_it->second == 0) ? 10 : 0;

    s.s_final = s.s_base + s.cwe_component + s.cvss_component + s.s_div + s.s_nov;
    return s;
}

std::vector<Selection> select_benchmark(std::vector<CveRecord> candidates, const RuleSet& rules,
                                        const taxonomy::CweCategoryMap& taxonomy, int quota,
                                        const SelectionOptions& options) {
    std::sort(candidates.begin(), candidates.end(),
              [](const CveRecord& a, const CveRecord& b) { return a.cve_id < b.cve_id; });

    struct Candidate {
        const CveRecord* record;
        TriageScore base;
        std::string category;
        std::string repo;
        bool taken = false;
    };
    std::vector<Candidate> pool;
    pool.reserve(candidates.size());
    for (const auto& r : candidates)
        pool.push_back({&r, reproduce_score(r, rules), taxonomy.primary_category(r.cwes), repo_key(r)});

    SelectionState state;
    state.quota = std::max(quota, 0);
    std::vector<Selection> out;

    auto take = [&](Candidate& c, int phase) {
        auto scored = composite_score(c.base, *c.record, taxonomy, state);
        c.taken = true;
        state.selected.push_back(c.record->cve_id);
        ++state.per_category_count[c.category];
        ++state.per_repo_count[c.repo];
        if (phase == 2) {
            ++state.phase2_category_count[c.category];
            ++state.phase2_repo_count[c.repo];
        }
        out.push_back({c.record->cve_id, std::move(scored), phase, c.category, c.repo});
    };
    auto full = [&] { return static_cast<int>(out.size()) >= state.quota; };

    // Phase 1: top-N by s_base within each Top 25 category.
    for (const auto& cat : taxonomy.top25_categories()) {
        if (full()) break;
        std::vector<Candidate*> members;
        for (auto& c : pool)
            if (!c.taken && c.category == cat) members.push_back(&c);
        std::sort(members.begin(), members.end(), [](const Candidate* a, const Candidate* b) {
            if (a->base.s_base != b->base.s_base) return a->base.s_base > b->base.s_base;
            return a->record->cve_id < b->record->cve_id;
        });
        for (int k = 0; k < options.phase1_per_category && k < static_cast<int>(members.size()) && !full(); ++k)
            take(*members[static_cast<std::size_t>(k)], 1);
    }

    // Phase 2: greedy by s_final against the evolving state, with caps.
    while (!full()) {
        Candidate* best = nullptr;
        double best_score = 0;
        for (auto& c : pool) {
            if (c.taken) continue;
            auto cat_it = state.phase2_category_count.find(c.category);
            if (cat_it != state.phase2_category_count.end() && cat_it->second >= options.phase2_category_cap) continue;
            auto repo_it = state.phase2_repo_count.find(c.repo);
            if (repo_it != state.phase2_repo_count.end() && repo_it->second >= options.phase2_repo_cap) continue;
            const double s = composite_score(c.base, *c.record, taxonomy, state).s_final;
            // pool is sorted by cve_id, so strict > keeps the smaller id on ties
            if (!best || s > best_score) {
                best = &c;
                best_score = s;
            }
        }
        if (!best) break;
        take(*best, 2);
    }
    return out;
}

JudgeOutcome judge_filter(const std::vector<CveRecord>& records, Judge& judge) {
    JudgeOutcome out;
    try {
        for (const auto& r : records) {
            auto v = judge.assess(r);
            if (v.keep) out.kept.push_back(r);
            else out.dropped.emplace_back(r.cve_id, v.reason);
        }
    } catch (const JudgeUnavailable& e) {
        out.kept = records;
        out.dropped.clear();
        out.warning = fmt::format("judge unavailable, records passed through unfiltered: {}", e.what());
    }
    return out;
}

KeywordJudge::KeywordJudge(const taxonomy::CweCategoryMap& taxonomy, std::vector<std::string> incompatible)
    : taxonomy_(taxonomy), incompatible_(std::move(incompatible)) {}

JudgeVerdict KeywordJudge::assess(const CveRecord& r) {
    for (const auto& kw : incompatible_)
        if (text::contains_keyword(r.vendor, kw) || text::contains_keyword(r.product, kw))
            return {false, "linux-incompatible"};
    std::pair<std::string, std::string> pattern{repo_key(r), taxonomy_.primary_category(r.cwes)};
    if (std::find(seen_.begin(), seen_.end(), pattern) != seen_.end()) return {false, "duplicate-pattern"};
    seen_.push_back(std::move(pattern));
    return {true, {}};
}

}  // namespace forge::triage
