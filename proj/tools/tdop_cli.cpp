#include <charconv>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tdop/scenario.hpp"

namespace sc = tdop::scenario;

namespace {

struct Common {
    std::string file;
    std::string format;
    std::optional<double> tol_abs;
    std::optional<double> tol_rel;
    bool solve = false;

    sc::BuildOptions build() const { return {tol_abs, tol_rel, solve}; }
};

void add_common(CLI::App* cmd, Common& c)
{
    cmd->add_option("file", c.file, "scenario file")->required();
    cmd->add_option("--format", c.format, "text, table or json (default: [outputs] format, else text)");
    cmd->add_option("--tol-abs", c.tol_abs, "absolute ODE tolerance");
    cmd->add_option("--tol-rel", c.tol_rel, "relative ODE tolerance");
    cmd->add_flag("--solve-intersections", c.solve, "refine r/s intersections from the given guesses");
}

std::string output_setting(const sc::Document& doc, const char* key)
{
    if (const auto* out = doc.find("outputs"))
        if (const auto* e = out->find(key); e && !e->items.empty()) return e->items[0];
    return {};
}

sc::Format resolve_format(const Common& c, const sc::Document& doc)
{
    std::string name = c.format.empty() ? output_setting(doc, "format") : c.format;
    return sc::parse_format(name.empty() ? "text" : name);
}

std::vector<double> parse_values(const std::vector<std::string>& items)
{
    std::vector<double> out;
    for (const auto& raw : items) {
        std::string s = raw;
        s.erase(0, s.find_first_not_of(" \t"));
        s.erase(s.find_last_not_of(" \t") + 1);
        if (s.empty()) continue;
        double v = 0.0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size())
            throw tdop::ValidationError("sweep value '" + raw + "' is not a number");
        out.push_back(v);
    }
    return out;
}

int fail(const tdop::Error& e)
{
    std::fprintf(stderr, "error: %s\n", e.what());
    return sc::exit_code(e.failure_class());
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Relative energies of a particle seen by two observers in a (pseudo-)Riemannian manifold"};
    app.require_subcommand(1);

    Common common;
    bool strict = false;
    auto* run = app.add_subcommand("run", "evaluate one scenario and print the report");
    add_common(run, common);
    run->add_flag("--strict", strict, "exit 4 when the consistency residual exceeds 1e-7");

    auto* sweep = app.add_subcommand("sweep", "re-run a scenario over values of one numeric field");
    add_common(sweep, common);
    std::string axis;
    std::vector<std::string> values;
    sweep->add_option("--axis", axis, "section.key to vary (default: [outputs] sweep)");
    auto* values_opt = sweep->add_option("--values", values, "comma separated values (default: [outputs] values)")
                           ->delimiter(',')
                           ->expected(0, CLI::detail::expected_max_vector_size);

    auto* check = app.add_subcommand("check", "run an invariant suite");
    add_common(check, common);
    std::string suite = "all";
    unsigned long long seed = sc::kDefaultSeed;
    check->add_option("--suite", suite, "transport, doppler or all");
    check->add_option("--seed", seed, "seed for the randomized checks");

    auto* catalog = app.add_subcommand("catalog", "list the builtin metrics");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (catalog->parsed()) {
            for (const auto& b : sc::builtin_catalog()) {
                std::printf("%s\n  coordinates: %s\n  %s\n  parameters:", b.name.c_str(), b.coordinates.c_str(),
                            b.description.c_str());
                for (const auto& [name, value] : b.parameters) std::printf(" %s (default %.17g)", name.c_str(), value);
                std::printf("\n");
            }
            return 0;
        }

        sc::Document doc = sc::read_document(common.file);
        sc::Format format = resolve_format(common, doc);

        if (run->parsed()) {
            sc::Loaded loaded = sc::build(doc, common.build());
            sc::RunOutcome out = sc::run(loaded, {format, strict});
            std::fputs(out.output.c_str(), stdout);
            if (out.exit_code != 0)
                std::fprintf(stderr, "error: consistency residual %.17g exceeds %.17g\n", out.report.residual,
                             sc::kStrictResidual);
            return out.exit_code;
        }

        if (sweep->parsed()) {
            if (axis.empty()) axis = output_setting(doc, "sweep");
            if (axis.empty()) throw tdop::ValidationError("sweep: no axis given (--axis or [outputs] sweep)");
            if (values_opt->count() == 0) {
                if (const auto* out = doc.find("outputs"))
                    if (const auto* e = out->find("values")) values = e->items;
            }
            auto rows = sc::sweep(doc, axis, parse_values(values), common.build());
            std::fputs(sc::format_sweep(axis, rows, format).c_str(), stdout);
            int code = 0;
            for (const auto& row : rows) {
                if (row.exit_code == 0) continue;
                std::fprintf(stderr, "error at %s = %.17g: %s\n", axis.c_str(), row.value, row.error.c_str());
                code = std::max(code, row.exit_code);
            }
            return code;
        }

        sc::Loaded loaded = sc::build(doc, common.build());
        sc::CheckSummary summary = sc::check(loaded.scenario, suite, seed);
        std::fputs(sc::format_check(summary).c_str(), stdout);
        return summary.passed() ? 0 : sc::exit_code(tdop::FailureClass::consistency);
    } catch (const tdop::Error& e) {
        return fail(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
