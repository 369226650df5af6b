#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace forge::taxonomy {

inline constexpr std::string_view kUnclassified = "unclassified";

// CWE semantic aggregation, MITRE Top 25 ordering and per-CWE danger scores.
// Immutable after construction; share freely across threads.
class CweCategoryMap {
public:
    CweCategoryMap() = default;

    // Plain-text format, see config/taxonomy.conf. Throws ConfigError.
    static CweCategoryMap parse(std::string_view text);
    static CweCategoryMap load(const std::filesystem::path& path);
    static const CweCategoryMap& defaults();

    // Mapped category, or the id itself for unmapped ids. Throws InvalidCweId.
    std::string unify(std::string_view cwe) const;
    // Configured score, 0 when unlisted.
    double danger_score(std::string_view cwe) const;
    double normalizer() const { return normalizer_; }

    // Category of the highest-danger CWE in `cwes` (first wins ties);
    // kUnclassified when the list is empty.
    std::string primary_category(const std::vector<std::string>& cwes) const;

    // Top 25 ids mapped through unify(), de-duplicated, rank order kept.
    std::vector<std::string> top25_categories() const;

    const std::map<std::string, std::string>& entries() const { return entries_; }
    const std::vector<std::string>& top25() const { return top25_; }
    const std::map<std::string, double>& danger_scores() const { return danger_; }

private:
    std::map<std::string, std::string> entries_;
    std::vector<std::string> top25_;
    std::map<std::string, double> danger_;
    double normalizer_ = 57.0;
};

}  // namespace forge::taxonomy
