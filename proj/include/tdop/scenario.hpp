#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tdop/doppler.hpp"

/// Scenario files, the builtin metric catalog, and the run / sweep / check
/// drivers behind the command-line tool.
///
/// A scenario file is line oriented:
///
///     # comment
///     [section]
///     key = item, "quoted item", ...
///
/// Every numeric item is an expression over the [params] section; quoted
/// items may contain commas. Sections: params, metric, constants, transport,
/// path.observed, path.observer1, path.observer2, intersections, momentum,
/// outputs.
namespace tdop::scenario {

struct Entry {
    std::string key;
    std::vector<std::string> items;
    std::vector<bool> quoted;
    int line = 0;
};

struct Section {
    std::string name;
    std::vector<Entry> entries;
    int line = 0;

    const Entry* find(std::string_view key) const;
};

class Document {
public:
    std::vector<Section> sections;

    const Section* find(std::string_view name) const;
    /// Replace (or add) a single-item value.
    void set(std::string_view section, std::string_view key, std::string value);
};

Document parse_document(std::string_view text);
Document read_document(const std::filesystem::path& path);
std::string serialize(const Document& doc);

// ---------------------------------------------------------------------------
// Builtin catalog
// ---------------------------------------------------------------------------

struct BuiltinInfo {
    std::string name;
    std::vector<std::pair<std::string, double>> parameters; // name, default
    std::string coordinates;
    std::string description;
};

const std::vector<BuiltinInfo>& builtin_catalog();
MetricField make_builtin(std::string_view name, const std::map<std::string, double>& parameters, double c = 1.0);

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

struct BuildOptions {
    std::optional<double> tol_abs;
    std::optional<double> tol_rel;
    bool solve_intersections = false;
};

struct Loaded {
    Document document;
    DopplerScenario scenario;
    std::string description; // metric / transport summary for report headers
};

Loaded build(const Document& doc, const BuildOptions& options = {});
Loaded load_text(std::string_view text, const BuildOptions& options = {});
Loaded load_file(const std::filesystem::path& path, const BuildOptions& options = {});

// ---------------------------------------------------------------------------
// Drivers
// ---------------------------------------------------------------------------

enum class Format { text, table, json };
Format parse_format(std::string_view name);

/// Exit codes: 0 success, 2 validation, 3 numerical, 4 consistency.
int exit_code(FailureClass cls);

/// A residual above this turns a strict run into a consistency failure.
inline constexpr double kStrictResidual = 1e-7;

struct RunOptions {
    Format format = Format::text;
    bool strict = false;
};

struct RunOutcome {
    DopplerReport report;
    std::string output;
    int exit_code = 0;
};

RunOutcome run(const Loaded& loaded, const RunOptions& options = {});

struct SweepRow {
    double value = 0.0;
    std::optional<DopplerReport> report;
    std::string error;
    int exit_code = 0;
};

/// One independent run per value with `axis` ("section.key") overridden.
std::vector<SweepRow> sweep(const Document& doc, std::string_view axis, const std::vector<double>& values,
                            const BuildOptions& options = {});
std::string format_sweep(std::string_view axis, const std::vector<SweepRow>& rows, Format format);

struct CheckItem {
    std::string name;
    bool passed = false;
    double value = 0.0;
    double bound = 0.0;
    std::string detail;
};

struct CheckSummary {
    std::string suite;
    unsigned long long seed = 0;
    std::vector<CheckItem> items;

    bool passed() const;
};

inline constexpr unsigned long long kDefaultSeed = 12345;

/// suite ∈ {transport, doppler, all}.
CheckSummary check(const DopplerScenario& scn, std::string_view suite, unsigned long long seed = kDefaultSeed);
std::string format_check(const CheckSummary& summary);

std::string format_report(const DopplerReport& report, Format format, std::string_view description = {});

}  // namespace tdop::scenario
