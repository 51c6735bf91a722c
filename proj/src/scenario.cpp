#include "tdop/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace tdop::scenario {

namespace {

std::string trim(std::string_view s)
{
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

[[noreturn]] void line_error(int line, const std::string& message)
{
    throw ValidationError("scenario line " + std::to_string(line) + ": " + message);
}

std::string fmt17(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_vector(const Vector& v)
{
    std::string out = "[";
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += fmt17(v[i]);
    }
    return out + "]";
}

bool is_identifier(std::string_view s)
{
    if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

// Portable uniform doubles in [-1, 1): mt19937_64 output is fully specified.
class Random {
public:
    explicit Random(unsigned long long seed) : rng_(seed) {}
    double unit() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
    double symmetric() { return 2.0 * unit() - 1.0; }
    Vector vector(Eigen::Index n)
    {
        Vector v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = symmetric();
        return v;
    }

private:
    std::mt19937_64 rng_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Document
// ---------------------------------------------------------------------------

const Entry* Section::find(std::string_view key) const
{
    for (const auto& e : entries)
        if (e.key == key) return &e;
    return nullptr;
}

const Section* Document::find(std::string_view name) const
{
    for (const auto& s : sections)
        if (s.name == name) return &s;
    return nullptr;
}

void Document::set(std::string_view section, std::string_view key, std::string value)
{
    auto sec = std::find_if(sections.begin(), sections.end(), [&](const Section& s) { return s.name == section; });
    if (sec == sections.end()) {
        sections.push_back(Section{std::string(section), {}, 0});
        sec = std::prev(sections.end());
    }
    auto ent = std::find_if(sec->entries.begin(), sec->entries.end(), [&](const Entry& e) { return e.key == key; });
    if (ent == sec->entries.end()) {
        sec->entries.push_back(Entry{std::string(key), {}, {}, 0});
        ent = std::prev(sec->entries.end());
    }
    ent->items = {std::move(value)};
    ent->quoted = {false};
}

Document parse_document(std::string_view text)
{
    Document doc;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        bool in_quote = false;
        std::size_t cut = raw.size();
        for (std::size_t i = 0; i < raw.size(); ++i) {
            if (raw[i] == '"') in_quote = !in_quote;
            if (raw[i] == '#' && !in_quote) {
                cut = i;
                break;
            }
        }
        if (in_quote) line_error(line, "unterminated quoted string");
        std::string content = trim(std::string_view(raw).substr(0, cut));
        if (content.empty()) continue;

        if (content.front() == '[') {
            if (content.back() != ']') line_error(line, "section header must end with ']'");
            std::string name = trim(std::string_view(content).substr(1, content.size() - 2));
            if (name.empty()) line_error(line, "empty section name");
            if (doc.find(name)) line_error(line, "duplicate section [" + name + "]");
            doc.sections.push_back(Section{name, {}, line});
            continue;
        }

        std::size_t eq = content.find('=');
        if (eq == std::string::npos) line_error(line, "expected 'key = value'");
        if (doc.sections.empty()) line_error(line, "key outside of any section");
        std::string key = trim(std::string_view(content).substr(0, eq));
        if (key.empty()) line_error(line, "empty key");
        Section& sec = doc.sections.back();
        if (sec.find(key)) line_error(line, "duplicate key '" + key + "' in [" + sec.name + "]");

        Entry entry{key, {}, {}, line};
        std::string_view rest = std::string_view(content).substr(eq + 1);
        std::size_t pos = 0;
        for (;;) {
            while (pos < rest.size() && std::isspace(static_cast<unsigned char>(rest[pos]))) ++pos;
            if (pos < rest.size() && rest[pos] == '"') {
                std::size_t close = rest.find('"', pos + 1);
                entry.items.emplace_back(rest.substr(pos + 1, close - pos - 1));
                entry.quoted.push_back(true);
                pos = close + 1;
                while (pos < rest.size() && std::isspace(static_cast<unsigned char>(rest[pos]))) ++pos;
                if (pos < rest.size() && rest[pos] != ',')
                    line_error(line, "unexpected text after quoted item in '" + key + "'");
            } else {
                std::size_t comma = rest.find(',', pos);
                std::string item = trim(rest.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
                if (item.empty()) line_error(line, "empty item in '" + key + "'");
                if (item.find('"') != std::string::npos) line_error(line, "stray quote in '" + key + "'");
                entry.items.push_back(item);
                entry.quoted.push_back(false);
                pos = comma == std::string_view::npos ? rest.size() : comma;
            }
            if (pos >= rest.size()) break;
            ++pos; // comma
        }
        sec.entries.push_back(std::move(entry));
    }
    return doc;
}

Document read_document(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open scenario file '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_document(buf.str());
}

std::string serialize(const Document& doc)
{
    std::string out;
    for (std::size_t s = 0; s < doc.sections.size(); ++s) {
        if (s) out += '\n';
        out += "[" + doc.sections[s].name + "]\n";
        for (const auto& e : doc.sections[s].entries) {
            out += e.key + " = ";
            for (std::size_t i = 0; i < e.items.size(); ++i) {
                if (i) out += ", ";
                bool quote = e.quoted[i] || e.items[i].find(',') != std::string::npos;
                out += quote ? "\"" + e.items[i] + "\"" : e.items[i];
            }
            out += '\n';
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Builtin catalog
// ---------------------------------------------------------------------------

const std::vector<BuiltinInfo>& builtin_catalog()
{
    static const std::vector<BuiltinInfo> catalog = {
        {"minkowski", {{"n", 4.0}}, "t, x, y, z (t, x1.. for n > 4)",
         "flat spacetime, g = diag(-c^2, 1, ..., 1), signature (-+..+)"},
        {"schwarzschild", {{"M", 1.0}}, "t, r, th, ph",
         "vacuum exterior of mass M, f = 1 - 2M/(c^2 r), g = diag(-c^2 f, 1/f, r^2, r^2 sin^2 th)"},
        {"euclidean", {{"n", 3.0}}, "x, y, z (x1.. for n > 3)", "flat Riemannian space, g = identity"},
        {"sphere2", {{"radius", 1.0}}, "th, ph", "round 2-sphere, g = diag(R^2, R^2 sin^2 th)"},
    };
    return catalog;
}

namespace {

std::vector<std::vector<expr::Expression>> diagonal(const std::vector<std::string>& coords,
                                                     const std::vector<std::string>& entries)
{
    const std::size_t n = coords.size();
    std::vector<std::vector<expr::Expression>> g(n, std::vector<expr::Expression>(n, expr::Expression::literal(0.0, coords)));
    for (std::size_t i = 0; i < n; ++i) g[i][i] = expr::parse(entries[i], coords);
    return g;
}

std::size_t dimension_parameter(double value, const char* builtin)
{
    if (!(value >= 1.0) || value != std::floor(value) || value > 16.0)
        throw ValidationError(std::string("metric: ") + builtin + " needs an integer dimension n in [1, 16]");
    return static_cast<std::size_t>(value);
}

}  // namespace

MetricField make_builtin(std::string_view name, const std::map<std::string, double>& parameters, double c)
{
    auto it = std::find_if(builtin_catalog().begin(), builtin_catalog().end(),
                           [&](const BuiltinInfo& b) { return b.name == name; });
    if (it == builtin_catalog().end()) throw ValidationError("metric: unknown builtin '" + std::string(name) + "'");
    for (const auto& [key, value] : parameters) {
        (void)value;
        bool known = std::any_of(it->parameters.begin(), it->parameters.end(),
                                 [&](const auto& p) { return p.first == key; });
        if (!known) throw ValidationError("metric: builtin '" + it->name + "' has no parameter '" + key + "'");
    }
    auto param = [&](const std::string& key) {
        auto p = parameters.find(key);
        if (p != parameters.end()) return p->second;
        for (const auto& [k, d] : it->parameters)
            if (k == key) return d;
        return 0.0;
    };
    if (!(c > 0.0)) throw ValidationError("metric: c must be positive");

    if (name == "minkowski") {
        std::size_t n = dimension_parameter(param("n"), "minkowski");
        if (n < 2) throw ValidationError("metric: minkowski needs n >= 2");
        std::vector<std::string> coords = {"t"};
        static const char* spatial[] = {"x", "y", "z"};
        for (std::size_t i = 1; i < n; ++i) coords.push_back(n <= 4 ? spatial[i - 1] : "x" + std::to_string(i));
        std::vector<std::string> entries(n, "1");
        entries[0] = "-(" + fmt17(c) + ")^2";
        return MetricField(coords, diagonal(coords, entries));
    }
    if (name == "euclidean") {
        std::size_t n = dimension_parameter(param("n"), "euclidean");
        std::vector<std::string> coords;
        static const char* names[] = {"x", "y", "z"};
        for (std::size_t i = 0; i < n; ++i) coords.push_back(n <= 3 ? names[i] : "x" + std::to_string(i + 1));
        return MetricField(coords, diagonal(coords, std::vector<std::string>(n, "1")));
    }
    if (name == "schwarzschild") {
        double M = param("M");
        if (!(M > 0.0)) throw ValidationError("metric: schwarzschild needs M > 0");
        std::vector<std::string> coords = {"t", "r", "th", "ph"};
        std::string cc = "(" + fmt17(c) + ")";
        std::string f = "(1 - 2*" + fmt17(M) + "/(" + cc + "^2*r))";
        return MetricField(coords, diagonal(coords, {"-" + cc + "^2*" + f, "1/" + f, "r^2", "r^2*sin(th)^2"}));
    }
    // sphere2
    double R = param("radius");
    if (!(R > 0.0)) throw ValidationError("metric: sphere2 needs radius > 0");
    std::vector<std::string> coords = {"th", "ph"};
    std::string R2 = "(" + fmt17(R) + ")^2";
    return MetricField(coords, diagonal(coords, {R2, R2 + "*sin(th)^2"}));
}

// ---------------------------------------------------------------------------
// Building a scenario from a document
// ---------------------------------------------------------------------------

namespace {

class Builder {
public:
    explicit Builder(const Document& doc) : doc_(doc) {}

    Loaded build(const BuildOptions& options);

private:
    [[noreturn]] void fail(const Section& sec, const std::string& message) const
    {
        throw ValidationError("[" + sec.name + "] " + message);
    }
    [[noreturn]] void fail(const Section& sec, const Entry& e, const std::string& message) const
    {
        throw ValidationError("[" + sec.name + "] " + e.key + " (line " + std::to_string(e.line) + "): " + message);
    }

    void allow_keys(const Section& sec, std::initializer_list<std::string_view> keys) const
    {
        for (const auto& e : sec.entries)
            if (std::find(keys.begin(), keys.end(), e.key) == keys.end()) fail(sec, e, "unknown key");
    }

    const Section& require_section(std::string_view name) const
    {
        const Section* s = doc_.find(name);
        if (!s) throw ValidationError("missing section [" + std::string(name) + "]");
        return *s;
    }

    const Entry& require_key(const Section& sec, std::string_view key) const
    {
        const Entry* e = sec.find(key);
        if (!e) fail(sec, "missing key '" + std::string(key) + "'");
        return *e;
    }

    void require_items(const Section& sec, const Entry& e, std::size_t count) const
    {
        if (e.items.size() != count)
            fail(sec, e, "expected " + std::to_string(count) + " item(s), got " + std::to_string(e.items.size()));
    }

    /// Expression over `vars` with the params substituted.
    expr::Expression expression(const Section& sec, const Entry& e, std::size_t item,
                                std::vector<std::string> vars) const
    {
        for (const auto& v : vars)
            if (params_.count(v)) fail(sec, e, "parameter name '" + v + "' collides with a declared param");
        std::vector<std::string> all = vars;
        all.insert(all.end(), param_names_.begin(), param_names_.end());
        try {
            return expr::parse(e.items.at(item), all).bind(params_);
        } catch (const Error& err) {
            fail(sec, e, "item " + std::to_string(item + 1) + ": " + err.what());
        }
    }

    double number(const Section& sec, const Entry& e, std::size_t item) const
    {
        expr::Expression ex = expression(sec, e, item, {});
        try {
            return ex.eval(std::span<const double>{});
        } catch (const Error& err) {
            fail(sec, e, "item " + std::to_string(item + 1) + ": " + err.what());
        }
    }

    double scalar(const Section& sec, std::string_view key, double fallback) const
    {
        const Entry* e = sec.find(key);
        if (!e) return fallback;
        require_items(sec, *e, 1);
        return number(sec, *e, 0);
    }

    Vector numbers(const Section& sec, const Entry& e, std::size_t count) const
    {
        require_items(sec, e, count);
        Vector v(static_cast<Eigen::Index>(count));
        for (std::size_t i = 0; i < count; ++i) v[static_cast<Eigen::Index>(i)] = number(sec, e, i);
        return v;
    }

    void read_params();
    void read_constants(const BuildOptions& options);
    MetricField read_metric();
    TransportEngine read_transport(const MetricField& g);
    WorldLine read_path(std::string_view name, const char* default_parameter, const TransportEngine& engine,
                        std::string* parameter_out);
    MomentumSpec read_momentum(const WorldLine& observed);

    const Document& doc_;
    std::map<std::string, double> params_;
    std::vector<std::string> param_names_;
    std::vector<std::string> coords_;
    std::string observed_parameter_;
    double c_ = 1.0;
    ode::Tolerances ode_tol_;
    DopplerTolerances doppler_tol_;
    std::string description_;
};

void Builder::read_params()
{
    const Section* sec = doc_.find("params");
    if (!sec) return;
    for (const auto& e : sec->entries) {
        if (!is_identifier(e.key) || expr::is_reserved_name(e.key)) fail(*sec, e, "invalid parameter name");
        require_items(*sec, e, 1);
        double v = number(*sec, e, 0);
        params_[e.key] = v;
        param_names_.push_back(e.key);
    }
}

void Builder::read_constants(const BuildOptions& options)
{
    const Section* sec = doc_.find("constants");
    if (sec) {
        allow_keys(*sec, {"c", "tol_abs", "tol_rel", "coincidence", "collinearity", "nullity", "isometry"});
        c_ = scalar(*sec, "c", 1.0);
        ode_tol_.abs = scalar(*sec, "tol_abs", ode_tol_.abs);
        ode_tol_.rel = scalar(*sec, "tol_rel", ode_tol_.rel);
        doppler_tol_.coincidence = scalar(*sec, "coincidence", doppler_tol_.coincidence);
        doppler_tol_.collinearity = scalar(*sec, "collinearity", doppler_tol_.collinearity);
        doppler_tol_.nullity = scalar(*sec, "nullity", doppler_tol_.nullity);
        doppler_tol_.isometry = scalar(*sec, "isometry", doppler_tol_.isometry);
    }
    if (options.tol_abs) ode_tol_.abs = *options.tol_abs;
    if (options.tol_rel) ode_tol_.rel = *options.tol_rel;
    if (!(c_ > 0.0)) throw ValidationError("[constants] c must be positive");
    if (!(ode_tol_.abs > 0.0) || !(ode_tol_.rel >= 0.0)) throw ValidationError("[constants] ODE tolerances must be positive");
}

MetricField Builder::read_metric()
{
    const Section& sec = require_section("metric");
    if (const Entry* b = sec.find("builtin")) {
        require_items(sec, *b, 1);
        std::map<std::string, double> values;
        std::string desc = b->items[0] + "(";
        for (const auto& e : sec.entries) {
            if (e.key == "builtin") continue;
            require_items(sec, e, 1);
            values[e.key] = number(sec, e, 0);
            desc += (desc.back() == '(' ? "" : ", ") + e.key + "=" + fmt17(values[e.key]);
        }
        description_ = "metric: " + desc + ")";
        MetricField g = make_builtin(b->items[0], values, c_);
        coords_ = g.coordinates();
        return g;
    }

    const Entry& ce = require_key(sec, "coordinates");
    for (const auto& name : ce.items) {
        if (!is_identifier(name) || expr::is_reserved_name(name)) fail(sec, ce, "invalid coordinate name '" + name + "'");
        if (std::count(ce.items.begin(), ce.items.end(), name) > 1) fail(sec, ce, "duplicate coordinate '" + name + "'");
        if (params_.count(name)) fail(sec, ce, "coordinate '" + name + "' collides with a declared param");
    }
    coords_ = ce.items;
    const std::size_t n = coords_.size();
    auto index_of = [&](const std::string& name) -> std::optional<std::size_t> {
        auto it = std::find(coords_.begin(), coords_.end(), name);
        if (it == coords_.end()) return std::nullopt;
        return static_cast<std::size_t>(it - coords_.begin());
    };

    std::vector<std::vector<std::optional<expr::Expression>>> given(n, std::vector<std::optional<expr::Expression>>(n));
    for (const auto& e : sec.entries) {
        if (e.key == "coordinates") continue;
        if (e.key.rfind("g.", 0) != 0) fail(sec, e, "unknown key (components are written g.<coord>.<coord>)");
        std::string rest = e.key.substr(2);
        std::size_t dot = rest.find('.');
        if (dot == std::string::npos) fail(sec, e, "component key must be g.<coord>.<coord>");
        auto i = index_of(rest.substr(0, dot));
        auto j = index_of(rest.substr(dot + 1));
        if (!i || !j) fail(sec, e, "unknown coordinate in component key");
        require_items(sec, e, 1);
        given[*i][*j] = expression(sec, e, 0, coords_);
    }
    std::vector<std::vector<expr::Expression>> comps(n, std::vector<expr::Expression>(n, expr::Expression::literal(0.0, coords_)));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (given[i][j])
                comps[i][j] = *given[i][j];
            else if (given[j][i])
                comps[i][j] = *given[j][i];
        }
    description_ = "metric: explicit(" + std::to_string(n) + "D)";
    return MetricField(coords_, std::move(comps));
}

TransportEngine Builder::read_transport(const MetricField& g)
{
    const Section* sec = doc_.find("transport");
    std::string kind = "parallel";
    if (sec) {
        if (const Entry* k = sec->find("kind")) {
            require_items(*sec, *k, 1);
            kind = k->items[0];
        }
    }
    if (kind == "parallel") {
        if (sec) allow_keys(*sec, {"kind"});
        description_ += "; transport: parallel";
        return TransportEngine::parallel(g, ode_tol_);
    }
    if (kind != "linear") fail(*sec, "kind must be 'parallel' or 'linear'");

    // Coefficients are expressions in the observed path parameter.
    const std::size_t n = coords_.size();
    std::vector<std::vector<expr::Expression>> A(n, std::vector<expr::Expression>(n, expr::Expression::literal(0.0)));
    for (const auto& e : sec->entries) {
        if (e.key == "kind") continue;
        if (e.key.rfind("A.", 0) != 0) fail(*sec, e, "unknown key (coefficients are written A.<coord>.<coord>)");
        std::string rest = e.key.substr(2);
        std::size_t dot = rest.find('.');
        auto find = [&](const std::string& name) -> std::optional<std::size_t> {
            auto it = std::find(coords_.begin(), coords_.end(), name);
            if (it == coords_.end()) return std::nullopt;
            return static_cast<std::size_t>(it - coords_.begin());
        };
        if (dot == std::string::npos) fail(*sec, e, "coefficient key must be A.<coord>.<coord>");
        auto k = find(rest.substr(0, dot));
        auto j = find(rest.substr(dot + 1));
        if (!k || !j) fail(*sec, e, "unknown coordinate in coefficient key");
        require_items(*sec, e, 1);
        expr::Expression a = expression(*sec, e, 0, {observed_parameter_});
        if (!a.depends_on(observed_parameter_)) a = a.bind({{observed_parameter_, 0.0}});
        A[*k][*j] = a;
    }
    description_ += "; transport: linear";
    return TransportEngine::linear(std::move(A), ode_tol_);
}

WorldLine Builder::read_path(std::string_view name, const char* default_parameter, const TransportEngine& engine,
                             std::string* parameter_out)
{
    const Section& sec = require_section(name);
    allow_keys(sec, {"parameter", "interval", "x", "x0", "v0"});
    std::string parameter = default_parameter;
    if (const Entry* p = sec.find("parameter")) {
        require_items(sec, *p, 1);
        parameter = p->items[0];
        if (!is_identifier(parameter) || expr::is_reserved_name(parameter)) fail(sec, *p, "invalid parameter name");
        if (params_.count(parameter)) fail(sec, *p, "path parameter collides with a declared param");
    }
    if (parameter_out) *parameter_out = parameter;
    const Entry& iv = require_key(sec, "interval");
    Vector interval = numbers(sec, iv, 2);
    if (!(interval[0] <= interval[1])) fail(sec, iv, "interval must satisfy a <= b");
    const std::size_t n = coords_.size();

    const Entry* x = sec.find("x");
    const Entry* x0 = sec.find("x0");
    const Entry* v0 = sec.find("v0");
    if (x && (x0 || v0)) fail(sec, "give either x (coordinate functions) or x0/v0 (geodesic seed), not both");
    if (x) {
        require_items(sec, *x, n);
        std::vector<expr::Expression> coords;
        for (std::size_t i = 0; i < n; ++i) {
            expr::Expression e = expression(sec, *x, i, {parameter});
            coords.push_back(e);
        }
        return WorldLine::analytic(std::move(coords), interval[0], interval[1]);
    }
    if (!x0 || !v0) fail(sec, "missing x (coordinate functions) or x0 and v0 (geodesic seed)");
    Vector start = numbers(sec, *x0, n);
    Vector velocity = numbers(sec, *v0, n);
    return geodesic(engine, Point{start}, TangentVector(Point{start}, velocity), interval[0], interval[1]);
}

MomentumSpec Builder::read_momentum(const WorldLine& observed)
{
    const Section& sec = require_section("momentum");
    allow_keys(sec, {"p", "p0", "r0", "mu"});
    const Entry* p = sec.find("p");
    const Entry* p0 = sec.find("p0");
    const Entry* mu = sec.find("mu");
    int count = (p != nullptr) + (p0 != nullptr) + (mu != nullptr);
    if (count != 1) throw ValidationError("momentum: exactly one required (p, p0 or mu)");
    const std::size_t n = coords_.size();
    if (p) {
        require_items(sec, *p, n);
        ExplicitMomentum spec;
        for (std::size_t i = 0; i < n; ++i) spec.components.push_back(expression(sec, *p, i, {observed_parameter_}));
        return spec;
    }
    if (p0) {
        FreeMomentum spec;
        spec.p0 = numbers(sec, *p0, n);
        spec.r0 = scalar(sec, "r0", observed.begin());
        return spec;
    }
    if (sec.find("r0")) fail(sec, "r0 only applies to a free momentum (p0)");
    require_items(sec, *mu, 1);
    return MassMomentum{expression(sec, *mu, 0, {observed_parameter_})};
}

Loaded Builder::build(const BuildOptions& options)
{
    static const std::set<std::string> known = {"params",        "metric",         "constants",
                                                "transport",     "path.observed",  "path.observer1",
                                                "path.observer2", "intersections", "momentum",
                                                "outputs"};
    for (const auto& s : doc_.sections)
        if (!known.count(s.name))
            throw ValidationError("scenario line " + std::to_string(s.line) + ": unknown section [" + s.name + "]");

    read_params();
    read_constants(options);
    MetricField g = read_metric();

    // The observed parameter name is needed before the transport coefficients are parsed.
    if (const Section* obs = doc_.find("path.observed")) {
        observed_parameter_ = "r";
        if (const Entry* p = obs->find("parameter"); p && p->items.size() == 1) observed_parameter_ = p->items[0];
    }
    TransportEngine engine = read_transport(g);
    TransportEngine observer_engine = TransportEngine::parallel(g, ode_tol_);

    WorldLine observed = read_path("path.observed", "r", engine, &observed_parameter_);
    std::string p1, p2;
    WorldLine observer1 = read_path("path.observer1", "s", observer_engine, &p1);
    WorldLine observer2 = read_path("path.observer2", "s", observer_engine, &p2);

    const Section& is = require_section("intersections");
    allow_keys(is, {"r1", "s1", "r2", "s2", "solve"});
    double r1 = number(is, require_key(is, "r1"), 0);
    double s1 = number(is, require_key(is, "s1"), 0);
    double r2 = number(is, require_key(is, "r2"), 0);
    double s2 = number(is, require_key(is, "s2"), 0);
    bool solve = options.solve_intersections;
    if (const Entry* e = is.find("solve")) {
        require_items(is, *e, 1);
        if (e->items[0] == "true")
            solve = true;
        else if (e->items[0] != "false")
            fail(is, *e, "solve must be true or false");
    }
    if (solve) {
        std::tie(r1, s1) = solve_intersection(observed, observer1, r1, s1);
        std::tie(r2, s2) = solve_intersection(observed, observer2, r2, s2);
    }

    MomentumSpec momentum = read_momentum(observed);

    DopplerScenario scn{std::move(g), std::move(engine), std::move(observed), std::move(observer1),
                        std::move(observer2), r1, s1, r2, s2, std::move(momentum), c_, doppler_tol_};
    validate(scn);
    return Loaded{doc_, std::move(scn), description_};
}

}  // namespace

Loaded build(const Document& doc, const BuildOptions& options) { return Builder(doc).build(options); }

Loaded load_text(std::string_view text, const BuildOptions& options) { return build(parse_document(text), options); }

Loaded load_file(const std::filesystem::path& path, const BuildOptions& options)
{
    return build(read_document(path), options);
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

Format parse_format(std::string_view name)
{
    if (name == "text") return Format::text;
    if (name == "table") return Format::table;
    if (name == "json") return Format::json;
    throw ValidationError("unknown format '" + std::string(name) + "' (text, table, json)");
}

int exit_code(FailureClass cls)
{
    switch (cls) {
    case FailureClass::validation: return 2;
    case FailureClass::numerical: return 3;
    case FailureClass::consistency: return 4;
    }
    return 3;
}

namespace {

constexpr const char* kConvention = "ratio = E2/E1; E1 is the energy relative to observer 1 at gamma(r1), "
                                    "E2 relative to observer 2 at gamma(r2)";

const std::vector<std::string>& table_columns()
{
    static const std::vector<std::string> cols = {"E1",        "E2",      "E2_formula", "ratio",        "delta_E21",
                                                  "omega21",   "perp_sq", "bracket",    "z",            "z_expanded",
                                                  "residual",  "transfer_residual"};
    return cols;
}

std::vector<double> table_values(const DopplerReport& r)
{
    return {r.E1,      r.E2,      r.E2_formula, r.E1 != 0.0 ? r.E2 / r.E1 : std::nan(""),
            r.delta_E21, r.omega21, r.perp_sq,   r.bracket,
            r.z,       r.z_expanded, r.residual, r.transfer_residual};
}

nlohmann::ordered_json vector_json(const TangentVector& v)
{
    return nlohmann::ordered_json(std::vector<double>(v.components.data(), v.components.data() + v.components.size()));
}

nlohmann::ordered_json report_json(const DopplerReport& r)
{
    nlohmann::ordered_json j;
    auto num = [](double v) -> nlohmann::ordered_json {
        if (std::isfinite(v)) return v;
        return nullptr;
    };
    j["E1"] = r.E1;
    j["E2"] = r.E2;
    j["E2_formula"] = r.E2_formula;
    j["ratio"] = num(r.E1 != 0.0 ? r.E2 / r.E1 : std::nan(""));
    j["delta_E21"] = r.delta_E21;
    j["omega21"] = r.omega21;
    j["z"] = num(r.z);
    j["z_expanded"] = num(r.z_expanded);
    j["residual"] = r.residual;
    j["transfer_residual"] = r.transfer_residual;
    j["V1_sq"] = r.V1_sq;
    j["V2_sq"] = r.V2_sq;
    j["V21_sq"] = r.V21_sq;
    j["perp_sq"] = r.perp_sq;
    j["p1_sq"] = r.p1_sq;
    j["Q"] = r.Q;
    j["eps_V1"] = r.eps_V1;
    j["eps_V2"] = r.eps_V2;
    j["eps_Q"] = r.eps_Q;
    j["bracket"] = r.bracket;
    j["bracket_radical"] = r.bracket_radical;
    j["base1"] = std::vector<double>(r.V1.base.coords.data(), r.V1.base.coords.data() + r.V1.base.coords.size());
    j["base2"] = std::vector<double>(r.V2.base.coords.data(), r.V2.base.coords.data() + r.V2.base.coords.size());
    j["p1"] = vector_json(r.p1);
    j["p2"] = vector_json(r.p2);
    j["V1"] = vector_json(r.V1);
    j["V2"] = vector_json(r.V2);
    j["V21"] = vector_json(r.V21);
    j["V21_parallel"] = vector_json(r.V21_parallel);
    j["V21_perp"] = vector_json(r.V21_perp);
    j["N1"] = vector_json(r.N1);
    j["delta_p"] = vector_json(r.delta_p);
    return j;
}

}  // namespace

std::string format_report(const DopplerReport& r, Format format, std::string_view description)
{
    if (format == Format::json) {
        nlohmann::ordered_json j;
        j["convention"] = kConvention;
        if (!description.empty()) j["description"] = std::string(description);
        j["report"] = report_json(r);
        return j.dump(2) + "\n";
    }
    if (format == Format::table) {
        std::string out = "# " + std::string(kConvention) + "\n";
        const auto& cols = table_columns();
        for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
        out += '\n';
        auto vals = table_values(r);
        for (std::size_t i = 0; i < vals.size(); ++i) out += (i ? "," : "") + fmt17(vals[i]);
        return out + "\n";
    }

    std::string out;
    auto line = [&](const char* key, const std::string& value) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%-16s", key);
        out += std::string(buf) + "= " + value + "\n";
    };
    out += "# generalized Doppler report\n";
    if (!description.empty()) out += "# " + std::string(description) + "\n";
    out += "# " + std::string(kConvention) + "\n";
    line("E1", fmt17(r.E1));
    line("E2", fmt17(r.E2));
    line("E2_formula", fmt17(r.E2_formula));
    line("ratio", fmt17(r.E1 != 0.0 ? r.E2 / r.E1 : std::nan("")));
    line("delta_E21", fmt17(r.delta_E21));
    line("omega21", fmt17(r.omega21));
    line("z", fmt17(r.z));
    line("z_expanded", fmt17(r.z_expanded));
    line("residual", fmt17(r.residual));
    line("transfer_residual", fmt17(r.transfer_residual));
    line("V1_sq", fmt17(r.V1_sq));
    line("V2_sq", fmt17(r.V2_sq));
    line("V21_sq", fmt17(r.V21_sq));
    line("perp_sq", fmt17(r.perp_sq));
    line("p1_sq", fmt17(r.p1_sq));
    line("Q", fmt17(r.Q));
    line("eps_V1", fmt17(r.eps_V1));
    line("eps_V2", fmt17(r.eps_V2));
    line("eps_Q", fmt17(r.eps_Q));
    line("bracket", fmt17(r.bracket));
    line("bracket_radical", fmt17(r.bracket_radical));
    line("base1", fmt_vector(r.V1.base.coords));
    line("base2", fmt_vector(r.V2.base.coords));
    line("p1", fmt_vector(r.p1.components));
    line("p2", fmt_vector(r.p2.components));
    line("V1", fmt_vector(r.V1.components));
    line("V2", fmt_vector(r.V2.components));
    line("V21", fmt_vector(r.V21.components));
    line("V21_parallel", fmt_vector(r.V21_parallel.components));
    line("V21_perp", fmt_vector(r.V21_perp.components));
    line("N1", fmt_vector(r.N1.components));
    line("delta_p", fmt_vector(r.delta_p.components));
    return out;
}

RunOutcome run(const Loaded& loaded, const RunOptions& options)
{
    RunOutcome out;
    out.report = doppler_energy(loaded.scenario);
    out.output = format_report(out.report, options.format, loaded.description);
    if (options.strict && !(out.report.residual <= kStrictResidual)) out.exit_code = exit_code(FailureClass::consistency);
    return out;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

namespace {

std::pair<std::string, std::string> resolve_axis(const Document& doc, std::string_view axis)
{
    for (std::size_t dot = axis.find('.'); dot != std::string_view::npos; dot = axis.find('.', dot + 1)) {
        std::string section(axis.substr(0, dot));
        std::string key(axis.substr(dot + 1));
        const Section* sec = doc.find(section);
        if (!sec) continue;
        const Entry* e = sec->find(key);
        if (!e) continue;
        if (e->items.size() != 1) break;
        // numeric fields are expressions over the params only
        std::vector<std::string> names;
        if (const Section* params = doc.find("params"))
            for (const auto& p : params->entries) names.push_back(p.key);
        try {
            expr::parse(e->items[0], names);
        } catch (const Error&) {
            break;
        }
        return {section, key};
    }
    throw ValidationError("invalid sweep axis '" + std::string(axis) + "': expected section.key naming a numeric field");
}

SweepRow sweep_row(const Document& doc, const std::pair<std::string, std::string>& axis, double value,
                   const BuildOptions& options)
{
    SweepRow row;
    row.value = value;
    try {
        Document copy = doc;
        copy.set(axis.first, axis.second, fmt17(value));
        row.report = doppler_energy(build(copy, options).scenario);
    } catch (const Error& e) {
        row.error = e.what();
        row.exit_code = exit_code(e.failure_class());
    } catch (const std::exception& e) {
        row.error = e.what();
        row.exit_code = exit_code(FailureClass::numerical);
    }
    return row;
}

}  // namespace

std::vector<SweepRow> sweep(const Document& doc, std::string_view axis, const std::vector<double>& values,
                            const BuildOptions& options)
{
    auto resolved = resolve_axis(doc, axis);
    std::vector<SweepRow> rows(values.size());
    const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
    for (std::size_t start = 0; start < values.size(); start += workers) {
        std::vector<std::future<SweepRow>> batch;
        for (std::size_t i = start; i < std::min(values.size(), start + workers); ++i)
            batch.push_back(std::async(std::launch::async, sweep_row, std::cref(doc), std::cref(resolved), values[i],
                                       std::cref(options)));
        for (std::size_t i = 0; i < batch.size(); ++i) rows[start + i] = batch[i].get();
    }
    return rows;
}

std::string format_sweep(std::string_view axis, const std::vector<SweepRow>& rows, Format format)
{
    if (format == Format::json) {
        nlohmann::ordered_json j;
        j["convention"] = kConvention;
        j["axis"] = std::string(axis);
        j["rows"] = nlohmann::ordered_json::array();
        for (const auto& row : rows) {
            nlohmann::ordered_json r;
            r["value"] = row.value;
            if (row.report)
                r["report"] = report_json(*row.report);
            else
                r["error"] = row.error;
            j["rows"].push_back(r);
        }
        return j.dump(2) + "\n";
    }
    // text and table both render the delimiter-separated table
    std::string out = "# " + std::string(kConvention) + "\n" + std::string(axis);
    for (const auto& c : table_columns()) out += "," + c;
    out += ",status\n";
    for (const auto& row : rows) {
        out += fmt17(row.value);
        if (row.report) {
            for (double v : table_values(*row.report)) out += "," + fmt17(v);
            out += ",ok\n";
        } else {
            for (std::size_t i = 0; i < table_columns().size(); ++i) out += ",nan";
            std::string msg = row.error;
            std::replace(msg.begin(), msg.end(), ',', ';');
            out += ",error: " + msg + "\n";
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Invariant suites
// ---------------------------------------------------------------------------

bool CheckSummary::passed() const
{
    return std::all_of(items.begin(), items.end(), [](const CheckItem& i) { return i.passed; });
}

namespace {

void add(CheckSummary& out, std::string name, double value, double bound, std::string detail = {})
{
    out.items.push_back(CheckItem{std::move(name), value <= bound, value, bound, std::move(detail)});
}

void add_failure(CheckSummary& out, std::string name, std::string detail)
{
    out.items.push_back(CheckItem{std::move(name), false, std::nan(""), 0.0, std::move(detail)});
}

double ode_scale(const DopplerScenario& scn)
{
    return std::max(scn.engine.tolerances().abs, scn.engine.tolerances().rel);
}

void transport_suite(const DopplerScenario& scn, Random& rnd, CheckSummary& out)
{
    const WorldLine& line = scn.observed;
    const double bound = std::max(1e-9, 10.0 * ode_scale(scn));
    const auto n = static_cast<Eigen::Index>(scn.metric.dimension());
    auto param = [&] { return line.begin() + (line.end() - line.begin()) * rnd.unit(); };
    auto rel = [](const Vector& diff, double scale) { return diff.norm() / std::max(1.0, scale); };
    try {
        double s = param(), t = param(), u = param();
        Vector A = rnd.vector(n), B = rnd.vector(n);
        double alpha = rnd.symmetric() * 3.0, beta = rnd.symmetric() * 3.0;
        Point xs = line.position(s);

        TangentVector As(xs, A), Bs(xs, B);
        add(out, "transport.identity", rel(transport(scn.engine, line, s, s, As).components - A, A.norm()), bound);

        Vector st = transport(scn.engine, line, s, t, As).components;
        Vector stu = transport(scn.engine, line, t, u, TangentVector(line.position(t), st)).components;
        Vector su = transport(scn.engine, line, s, u, As).components;
        add(out, "transport.composition", rel(stu - su, A.norm()), bound);

        Vector back = transport(scn.engine, line, t, s, TangentVector(line.position(t), st)).components;
        add(out, "transport.inversion", rel(back - A, A.norm()), bound);

        Vector combo = transport(scn.engine, line, s, t, TangentVector(xs, alpha * A + beta * B)).components;
        Vector separate = alpha * st + beta * transport(scn.engine, line, s, t, Bs).components;
        add(out, "transport.linearity", rel(combo - separate, std::abs(alpha) * A.norm() + std::abs(beta) * B.norm()),
            1e-10);

        double iso = isometry_violation(scn.engine, scn.metric, line, 8, rnd.unit() * 1e9 + 1);
        add(out, "transport.isometry", iso, bound,
            scn.engine.is_parallel() ? "" : "linear engine: metric consistency is not implied");
    } catch (const Error& e) {
        add_failure(out, "transport.error", e.what());
    }
}

void normal_vector_checks(const MetricField& g, const TangentVector& p1, const TangentVector& V1, double E1,
                          const DopplerTolerances& tol, double& worst)
{
    Matrix gx = g.at(V1.base.coords);
    TangentVector N = normal_vector(g, p1, V1, E1, tol.collinearity, tol.nullity);
    double v_sq = dot(gx, V1.components, V1.components);
    double p_sq = dot(gx, p1.components, p1.components);
    double Q = p_sq - E1 * E1 / v_sq;
    double scale = std::max({1.0, std::abs(p_sq), E1 * E1 / std::abs(v_sq)});
    bool collinear = std::abs(Q) <= tol.collinearity * scale;
    if (collinear) {
        worst = std::max(worst, N.components.cwiseAbs().maxCoeff());
        return;
    }
    double vscale = std::sqrt(std::abs(v_sq));
    worst = std::max(worst, std::abs(dot(gx, N.components, V1.components)) / std::max(1.0, vscale));
    worst = std::max(worst, std::abs(dot(gx, N.components, N.components) - epsilon(Q)));
    double np = dot(gx, N.components, p1.components);
    if (!(np < 0.0)) worst = std::max(worst, 1.0);
    Vector rebuilt = V1.components * (dot(gx, V1.components, p1.components) / v_sq) -
                     N.components * epsilon(Q) * std::sqrt(std::abs(Q));
    worst = std::max(worst, (rebuilt - p1.components).norm() / std::max(1.0, p1.components.norm()));
}

void doppler_suite(const DopplerScenario& scn, Random& rnd, CheckSummary& out)
{
    try {
        require_consistent_transport(scn);
        add(out, "doppler.consistent_transport", 0.0, 0.0);
    } catch (const InconsistentTransportError& e) {
        add_failure(out, "doppler.consistent_transport", std::string("refused: ") + e.what());
        return;
    }

    DopplerReport rep;
    try {
        rep = doppler_energy(scn);
    } catch (const Error& e) {
        add_failure(out, "doppler.pipeline", e.what());
        return;
    }
    const double tol = ode_scale(scn);
    const double energy_bound = 10.0 * tol * std::max(1.0, std::abs(rep.E2));
    add(out, "doppler.master_consistency", rep.residual, energy_bound);
    add(out, "doppler.transfer", rep.transfer_residual, energy_bound);

    try {
        double telescoped = energy_along(scn, scn.r2) - energy_along(scn, scn.r1);
        add(out, "doppler.telescoping", std::abs(energy_change(scn) - telescoped), energy_bound);

        Matrix g1 = scn.metric.at(rep.V1.base.coords);
        double gscale = g1.cwiseAbs().maxCoeff();
        double vscale = std::max(1.0, gscale * std::pow(rep.V1.components.norm() + rep.V21.components.norm(), 2));
        double decomposition = std::max(
            {std::abs(dot(g1, rep.V21_perp.components, rep.V1.components)) / vscale,
             std::abs(dot(g1, rep.V21_perp.components, rep.V21_parallel.components)) / vscale,
             (rep.V21_parallel.components + rep.V21_perp.components - rep.V21.components).norm() /
                 std::max(1.0, rep.V21.components.norm()),
             std::abs(dot(g1, rep.V21_parallel.components, rep.V21_parallel.components) -
                      std::pow(dot(g1, rep.V1.components, rep.V21.components), 2) / rep.V1_sq) /
                 vscale});
        add(out, "doppler.decomposition", decomposition, 1e-10);

        double worst = 0.0;
        normal_vector_checks(scn.metric, rep.p1, rep.V1, rep.E1, scn.tol, worst);
        const auto n = static_cast<Eigen::Index>(scn.metric.dimension());
        for (int k = 0; k < 32; ++k) {
            Vector V = rnd.vector(n), p = rnd.vector(n);
            if (std::abs(dot(g1, V, V)) < 1e-3) continue;
            TangentVector Vt(rep.V1.base, V), pt(rep.V1.base, p);
            normal_vector_checks(scn.metric, pt, Vt, epsilon(dot(g1, V, V)) * dot(g1, p, V), scn.tol, worst);
        }
        add(out, "doppler.normal_vector", worst, 1e-9);

        Decomposition self = decompose(scn.metric, rep.V1, rep.V1, scn.tol.nullity);
        double self_bracket = dot(g1, rep.V1.components, rep.V1.components) / rep.V1_sq;
        add(out, "doppler.sqrt_normalization",
            std::abs(self_bracket - 1.0) + self.perpendicular.components.norm(), 1e-12);

        if (std::holds_alternative<FreeMomentum>(scn.momentum)) {
            double bound = std::max(1e-9, 10.0 * tol) * std::max(1.0, rep.p1.components.norm());
            add(out, "doppler.free_particle", check_free_particle(scn, 6), bound);
            add(out, "doppler.free_energy_change", std::abs(rep.delta_E21), energy_bound);
        }

        ReversalCheck rev = delta_p_reversal(scn);
        double rev_bound = std::max(1e-9, 10.0 * tol) * std::max(1.0, rep.p1.components.norm());
        add(out, "doppler.delta_p_reversal", rev.residual, rev_bound);
        add(out, "doppler.reversed_energy_change", rev.energy_residual, energy_bound);

        if (std::abs(rep.p1_sq) <= 1e-12 * std::max(1.0, rep.p1.components.squaredNorm())) {
            TangentVector carried = transport(scn.engine, scn.observed, scn.r1, scn.r2, rep.p1);
            Matrix g2 = scn.metric.at(carried.base.coords);
            add(out, "doppler.photon_stays_null", std::abs(dot(g2, carried.components, carried.components)),
                std::max(1e-9, 10.0 * tol) * std::max(1.0, rep.p1.components.squaredNorm()));
        }
    } catch (const Error& e) {
        add_failure(out, "doppler.error", e.what());
    }
}

}  // namespace

CheckSummary check(const DopplerScenario& scn, std::string_view suite, unsigned long long seed)
{
    if (suite != "transport" && suite != "doppler" && suite != "all")
        throw ValidationError("unknown suite '" + std::string(suite) + "' (transport, doppler, all)");
    CheckSummary out;
    out.suite = std::string(suite);
    out.seed = seed;
    Random rnd(seed);
    if (suite == "transport" || suite == "all") transport_suite(scn, rnd, out);
    if (suite == "doppler" || suite == "all") doppler_suite(scn, rnd, out);
    return out;
}

std::string format_check(const CheckSummary& summary)
{
    std::string out = "# suite " + summary.suite + ", seed " + std::to_string(summary.seed) + "\n";
    for (const auto& item : summary.items) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-4s %-32s value %-24s bound %s", item.passed ? "PASS" : "FAIL",
                      item.name.c_str(), fmt17(item.value).c_str(), fmt17(item.bound).c_str());
        out += buf;
        if (!item.detail.empty()) out += "  (" + item.detail + ")";
        out += '\n';
    }
    out += summary.passed() ? "# all checks passed\n" : "# FAILED\n";
    return out;
}

}  // namespace tdop::scenario
