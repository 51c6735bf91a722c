#include "tdop/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace tdop::expr {

namespace {

struct FunctionName {
    std::string_view name;
    Function fn;
};

constexpr FunctionName kFunctions[] = {
    {"sin", Function::sin},   {"cos", Function::cos},   {"tan", Function::tan},
    {"sinh", Function::sinh}, {"cosh", Function::cosh}, {"tanh", Function::tanh},
    {"exp", Function::exp},   {"ln", Function::ln},     {"sqrt", Function::sqrt},
    {"abs", Function::abs},
};

std::optional<Function> lookup_function(std::string_view name)
{
    for (const auto& f : kFunctions)
        if (f.name == name) return f.fn;
    return std::nullopt;
}

std::string_view function_name(Function fn)
{
    for (const auto& f : kFunctions)
        if (f.fn == fn) return f.name;
    return "?";
}

// ---------------------------------------------------------------------------
// Node construction with constant folding
// ---------------------------------------------------------------------------

NodePtr make_number(double v)
{
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::number;
    n->value = v;
    return n;
}

NodePtr make_pi()
{
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::pi;
    return n;
}

NodePtr make_variable(std::size_t index)
{
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::variable;
    n->var = index;
    return n;
}

NodePtr raw_negate(NodePtr a)
{
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::negate;
    n->lhs = std::move(a);
    return n;
}

NodePtr raw_binary(BinaryOp op, NodePtr a, NodePtr b)
{
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::binary;
    n->op = op;
    n->lhs = std::move(a);
    n->rhs = std::move(b);
    return n;
}

NodePtr raw_call(Function fn, NodePtr a)
{
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::call;
    n->fn = fn;
    n->lhs = std::move(a);
    return n;
}

std::optional<double> constant_of(const NodePtr& n)
{
    if (n->kind == Node::Kind::number) return n->value;
    if (n->kind == Node::Kind::pi) return std::numbers::pi;
    return std::nullopt;
}

bool is_value(const NodePtr& n, double v)
{
    return n->kind == Node::Kind::number && n->value == v;
}

double apply_function(Function fn, double x)
{
    switch (fn) {
    case Function::sin: return std::sin(x);
    case Function::cos: return std::cos(x);
    case Function::tan: return std::tan(x);
    case Function::sinh: return std::sinh(x);
    case Function::cosh: return std::cosh(x);
    case Function::tanh: return std::tanh(x);
    case Function::exp: return std::exp(x);
    case Function::ln: return x > 0.0 ? std::log(x) : std::nan("");
    case Function::sqrt: return x >= 0.0 ? std::sqrt(x) : std::nan("");
    case Function::abs: return std::abs(x);
    }
    return std::nan("");
}

double apply_binary(BinaryOp op, double a, double b)
{
    switch (op) {
    case BinaryOp::add: return a + b;
    case BinaryOp::sub: return a - b;
    case BinaryOp::mul: return a * b;
    case BinaryOp::div: return b != 0.0 ? a / b : std::nan("");
    case BinaryOp::pow: return std::pow(a, b);
    }
    return std::nan("");
}

NodePtr negate(NodePtr a)
{
    if (auto c = constant_of(a)) return make_number(-*c);
    return raw_negate(std::move(a));
}

NodePtr binary(BinaryOp op, NodePtr a, NodePtr b)
{
    auto ca = constant_of(a);
    auto cb = constant_of(b);
    if (ca && cb) {
        double v = apply_binary(op, *ca, *cb);
        if (std::isfinite(v)) return make_number(v);
        return raw_binary(op, std::move(a), std::move(b));
    }
    switch (op) {
    case BinaryOp::add:
        if (is_value(a, 0.0)) return b;
        if (is_value(b, 0.0)) return a;
        break;
    case BinaryOp::sub:
        if (is_value(b, 0.0)) return a;
        if (is_value(a, 0.0)) return negate(std::move(b));
        break;
    case BinaryOp::mul:
        if (is_value(a, 0.0) || is_value(b, 0.0)) return make_number(0.0);
        if (is_value(a, 1.0)) return b;
        if (is_value(b, 1.0)) return a;
        break;
    case BinaryOp::div:
        if (is_value(b, 1.0)) return a;
        break;
    case BinaryOp::pow:
        if (is_value(b, 1.0)) return a;
        break;
    }
    return raw_binary(op, std::move(a), std::move(b));
}

NodePtr call(Function fn, NodePtr a)
{
    if (auto c = constant_of(a)) {
        double v = apply_function(fn, *c);
        if (std::isfinite(v)) return make_number(v);
    }
    return raw_call(fn, std::move(a));
}

NodePtr add(NodePtr a, NodePtr b) { return binary(BinaryOp::add, std::move(a), std::move(b)); }
NodePtr sub(NodePtr a, NodePtr b) { return binary(BinaryOp::sub, std::move(a), std::move(b)); }
NodePtr mul(NodePtr a, NodePtr b) { return binary(BinaryOp::mul, std::move(a), std::move(b)); }
NodePtr div(NodePtr a, NodePtr b) { return binary(BinaryOp::div, std::move(a), std::move(b)); }
NodePtr pow(NodePtr a, NodePtr b) { return binary(BinaryOp::pow, std::move(a), std::move(b)); }

bool tree_depends_on(const Node& n, std::size_t var)
{
    switch (n.kind) {
    case Node::Kind::number:
    case Node::Kind::pi: return false;
    case Node::Kind::variable: return n.var == var;
    case Node::Kind::negate:
    case Node::Kind::call: return tree_depends_on(*n.lhs, var);
    case Node::Kind::binary: return tree_depends_on(*n.lhs, var) || tree_depends_on(*n.rhs, var);
    }
    return false;
}

bool has_variables(const Node& n)
{
    switch (n.kind) {
    case Node::Kind::number:
    case Node::Kind::pi: return false;
    case Node::Kind::variable: return true;
    case Node::Kind::negate:
    case Node::Kind::call: return has_variables(*n.lhs);
    case Node::Kind::binary: return has_variables(*n.lhs) || has_variables(*n.rhs);
    }
    return false;
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

int precedence(const Node& n)
{
    switch (n.kind) {
    case Node::Kind::number: return n.value < 0.0 ? 0 : 5;
    case Node::Kind::pi:
    case Node::Kind::variable:
    case Node::Kind::call: return 5;
    case Node::Kind::negate: return 3;
    case Node::Kind::binary:
        switch (n.op) {
        case BinaryOp::add:
        case BinaryOp::sub: return 1;
        case BinaryOp::mul:
        case BinaryOp::div: return 2;
        case BinaryOp::pow: return 4;
        }
    }
    return 0;
}

std::string format_number(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void print(const Node& n, const std::vector<std::string>& vars, std::string& out);

void print_child(const Node& child, int min_prec, const std::vector<std::string>& vars,
                 std::string& out)
{
    bool paren = precedence(child) < min_prec;
    if (paren) out += '(';
    print(child, vars, out);
    if (paren) out += ')';
}

void print(const Node& n, const std::vector<std::string>& vars, std::string& out)
{
    switch (n.kind) {
    case Node::Kind::number: out += format_number(n.value); return;
    case Node::Kind::pi: out += "pi"; return;
    case Node::Kind::variable: out += vars.at(n.var); return;
    case Node::Kind::negate:
        out += '-';
        print_child(*n.lhs, 4, vars, out);
        return;
    case Node::Kind::call:
        out += function_name(n.fn);
        out += '(';
        print(*n.lhs, vars, out);
        out += ')';
        return;
    case Node::Kind::binary:
        switch (n.op) {
        case BinaryOp::add:
            print_child(*n.lhs, 1, vars, out);
            out += " + ";
            print_child(*n.rhs, 2, vars, out);
            return;
        case BinaryOp::sub:
            print_child(*n.lhs, 1, vars, out);
            out += " - ";
            print_child(*n.rhs, 2, vars, out);
            return;
        case BinaryOp::mul:
            print_child(*n.lhs, 2, vars, out);
            out += '*';
            print_child(*n.rhs, 3, vars, out);
            return;
        case BinaryOp::div:
            print_child(*n.lhs, 2, vars, out);
            out += '/';
            print_child(*n.rhs, 3, vars, out);
            return;
        case BinaryOp::pow:
            print_child(*n.lhs, 5, vars, out);
            out += '^';
            print_child(*n.rhs, 4, vars, out);
            return;
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

[[noreturn]] void domain_failure(const Node& n, const std::vector<std::string>& vars,
                                 const char* what)
{
    std::string text;
    print(n, vars, text);
    throw DomainError(std::string(what) + " in '" + text + "'");
}

double evaluate(const Node& n, std::span<const double> values, const std::vector<std::string>& vars)
{
    switch (n.kind) {
    case Node::Kind::number: return n.value;
    case Node::Kind::pi: return std::numbers::pi;
    case Node::Kind::variable: return values[n.var];
    case Node::Kind::negate: return -evaluate(*n.lhs, values, vars);
    case Node::Kind::call: {
        double x = evaluate(*n.lhs, values, vars);
        if (n.fn == Function::ln && !(x > 0.0)) domain_failure(n, vars, "logarithm of non-positive value");
        if (n.fn == Function::sqrt && x < 0.0) domain_failure(n, vars, "square root of negative value");
        double v = apply_function(n.fn, x);
        if (!std::isfinite(v)) domain_failure(n, vars, "non-finite result");
        return v;
    }
    case Node::Kind::binary: {
        double a = evaluate(*n.lhs, values, vars);
        double b = evaluate(*n.rhs, values, vars);
        if (n.op == BinaryOp::div && b == 0.0) domain_failure(n, vars, "division by zero");
        double v = apply_binary(n.op, a, b);
        if (!std::isfinite(v)) domain_failure(n, vars, "non-finite result");
        return v;
    }
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// Differentiation
// ---------------------------------------------------------------------------

NodePtr derive(const NodePtr& n, std::size_t var)
{
    switch (n->kind) {
    case Node::Kind::number:
    case Node::Kind::pi: return make_number(0.0);
    case Node::Kind::variable: return make_number(n->var == var ? 1.0 : 0.0);
    case Node::Kind::negate: return negate(derive(n->lhs, var));
    case Node::Kind::binary: {
        const NodePtr& u = n->lhs;
        const NodePtr& v = n->rhs;
        switch (n->op) {
        case BinaryOp::add: return add(derive(u, var), derive(v, var));
        case BinaryOp::sub: return sub(derive(u, var), derive(v, var));
        case BinaryOp::mul: return add(mul(derive(u, var), v), mul(u, derive(v, var)));
        case BinaryOp::div:
            return div(sub(mul(derive(u, var), v), mul(u, derive(v, var))), pow(v, make_number(2.0)));
        case BinaryOp::pow: {
            bool base_varies = tree_depends_on(*u, var);
            bool exp_varies = tree_depends_on(*v, var);
            if (!base_varies && !exp_varies) return make_number(0.0);
            if (!exp_varies) {
                // d(u^c) = c u^(c-1) u'
                return mul(mul(v, pow(u, sub(v, make_number(1.0)))), derive(u, var));
            }
            if (!base_varies) {
                // d(c^v) = c^v ln(c) v'
                return mul(mul(n, call(Function::ln, u)), derive(v, var));
            }
            // d(u^v) = u^v (v' ln u + v u'/u)
            return mul(n, add(mul(derive(v, var), call(Function::ln, u)),
                              div(mul(v, derive(u, var)), u)));
        }
        }
        break;
    }
    case Node::Kind::call: {
        const NodePtr& u = n->lhs;
        NodePtr du = derive(u, var);
        if (is_value(du, 0.0)) return make_number(0.0);
        switch (n->fn) {
        case Function::sin: return mul(call(Function::cos, u), du);
        case Function::cos: return negate(mul(call(Function::sin, u), du));
        case Function::tan: return div(du, pow(call(Function::cos, u), make_number(2.0)));
        case Function::sinh: return mul(call(Function::cosh, u), du);
        case Function::cosh: return mul(call(Function::sinh, u), du);
        case Function::tanh:
            return mul(sub(make_number(1.0), pow(n, make_number(2.0))), du);
        case Function::exp: return mul(n, du);
        case Function::ln: return div(du, u);
        case Function::sqrt: return div(du, mul(make_number(2.0), n));
        case Function::abs: return mul(du, div(u, n));
        }
        break;
    }
    }
    return make_number(0.0);
}

// ---------------------------------------------------------------------------
// Substitution
// ---------------------------------------------------------------------------

NodePtr substitute(const NodePtr& n, const std::vector<std::optional<double>>& bound,
                   const std::vector<std::size_t>& remap)
{
    switch (n->kind) {
    case Node::Kind::number:
    case Node::Kind::pi: return n;
    case Node::Kind::variable:
        if (bound[n->var]) return make_number(*bound[n->var]);
        return make_variable(remap[n->var]);
    case Node::Kind::negate: return negate(substitute(n->lhs, bound, remap));
    case Node::Kind::call: return call(n->fn, substitute(n->lhs, bound, remap));
    case Node::Kind::binary:
        return binary(n->op, substitute(n->lhs, bound, remap), substitute(n->rhs, bound, remap));
    }
    return n;
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

class Parser {
public:
    Parser(std::string_view text, const std::vector<std::string>& vars) : text_(text), vars_(vars) {}

    NodePtr parse()
    {
        skip_space();
        if (pos_ == text_.size()) throw ParseError(pos_, "empty expression");
        NodePtr n = parse_sum();
        skip_space();
        if (pos_ != text_.size()) {
            if (text_[pos_] == ')') throw ParseError(pos_, "unbalanced ')'");
            throw ParseError(pos_, std::string("unexpected '") + text_[pos_] + "'");
        }
        return n;
    }

private:
    void skip_space()
    {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c)
    {
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    NodePtr parse_sum()
    {
        NodePtr lhs = parse_product();
        for (;;) {
            if (accept('+'))
                lhs = raw_binary(BinaryOp::add, lhs, parse_product());
            else if (accept('-'))
                lhs = raw_binary(BinaryOp::sub, lhs, parse_product());
            else
                return lhs;
        }
    }

    NodePtr parse_product()
    {
        NodePtr lhs = parse_unary();
        for (;;) {
            if (accept('*'))
                lhs = raw_binary(BinaryOp::mul, lhs, parse_unary());
            else if (accept('/'))
                lhs = raw_binary(BinaryOp::div, lhs, parse_unary());
            else
                return lhs;
        }
    }

    NodePtr parse_unary()
    {
        if (accept('-')) return raw_negate(parse_unary());
        return parse_power();
    }

    NodePtr parse_power()
    {
        NodePtr base = parse_primary();
        if (accept('^')) {
            NodePtr exponent = accept('-') ? raw_negate(parse_exponent_operand()) : parse_power();
            return raw_binary(BinaryOp::pow, base, exponent);
        }
        return base;
    }

    // Right operand of '^' after a leading minus: x^-y^2 is x^(-(y^2)).
    NodePtr parse_exponent_operand()
    {
        if (accept('-')) return raw_negate(parse_exponent_operand());
        return parse_power();
    }

    NodePtr parse_primary()
    {
        skip_space();
        if (pos_ == text_.size()) throw ParseError(pos_, "unexpected end of expression");
        char c = text_[pos_];
        if (c == '(') {
            std::size_t open = pos_++;
            NodePtr inner = parse_sum();
            if (!accept(')')) throw ParseError(open, "unbalanced '('");
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (is_ident_start(c)) return parse_identifier();
        if (c == ')') throw ParseError(pos_, "unbalanced ')'");
        throw ParseError(pos_, std::string("unexpected '") + c + "'");
    }

    NodePtr parse_number()
    {
        std::size_t start = pos_;
        while (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.'))
            ++pos_;
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
            std::size_t save = pos_++;
            if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
            if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
                while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
            } else {
                pos_ = save;
            }
        }
        double value = 0.0;
        auto [end, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, value);
        if (ec != std::errc() || end != text_.data() + pos_)
            throw ParseError(start, "malformed number '" + std::string(text_.substr(start, pos_ - start)) + "'");
        return make_number(value);
    }

    NodePtr parse_identifier()
    {
        std::size_t start = pos_;
        while (pos_ < text_.size() && is_ident_char(text_[pos_])) ++pos_;
        std::string name(text_.substr(start, pos_ - start));

        if (auto fn = lookup_function(name)) {
            if (!accept('(')) throw ParseError(pos_, "function '" + name + "' requires parentheses");
            std::size_t open = pos_ - 1;
            NodePtr arg = parse_sum();
            if (!accept(')')) throw ParseError(open, "unbalanced '('");
            return raw_call(*fn, arg);
        }
        if (name == "pi") return make_pi();
        auto it = std::find(vars_.begin(), vars_.end(), name);
        if (it == vars_.end()) throw ParseError(start, "unknown identifier '" + name + "'");
        return make_variable(static_cast<std::size_t>(it - vars_.begin()));
    }

    std::string_view text_;
    const std::vector<std::string>& vars_;
    std::size_t pos_ = 0;
};

}  // namespace

bool is_reserved_name(std::string_view name)
{
    return name == "pi" || lookup_function(name).has_value();
}

Expression::Expression() : Expression(make_number(0.0), {}) {}

Expression::Expression(NodePtr root, std::vector<std::string> variables)
    : root_(std::move(root)), vars_(std::make_shared<const std::vector<std::string>>(std::move(variables)))
{
}

Expression Expression::literal(double value, std::vector<std::string> variables)
{
    return Expression(make_number(value), std::move(variables));
}

double Expression::eval(std::span<const double> values) const
{
    if (values.size() != vars_->size())
        throw ValidationError("expression expects " + std::to_string(vars_->size()) + " values, got " +
                              std::to_string(values.size()));
    return evaluate(*root_, values, *vars_);
}

double Expression::eval(const std::map<std::string, double>& binding) const
{
    std::vector<double> values;
    values.reserve(vars_->size());
    for (const auto& name : *vars_) {
        auto it = binding.find(name);
        if (it == binding.end()) throw ValidationError("no value bound for variable '" + name + "'");
        values.push_back(it->second);
    }
    return evaluate(*root_, values, *vars_);
}

std::optional<double> Expression::literal_value() const
{
    if (!has_variables(*root_)) {
        if (auto c = constant_of(root_)) return c;
        try {
            return evaluate(*root_, {}, *vars_);
        } catch (const DomainError&) {
            return std::nullopt;
        }
    }
    return std::nullopt;
}

bool Expression::depends_on(std::string_view name) const
{
    auto it = std::find(vars_->begin(), vars_->end(), name);
    if (it == vars_->end()) return false;
    return tree_depends_on(*root_, static_cast<std::size_t>(it - vars_->begin()));
}

Expression Expression::bind(const std::map<std::string, double>& values) const
{
    std::vector<std::optional<double>> bound(vars_->size());
    std::vector<std::size_t> remap(vars_->size(), 0);
    std::vector<std::string> remaining;
    for (std::size_t i = 0; i < vars_->size(); ++i) {
        auto it = values.find((*vars_)[i]);
        if (it != values.end()) {
            bound[i] = it->second;
        } else {
            remap[i] = remaining.size();
            remaining.push_back((*vars_)[i]);
        }
    }
    return Expression(substitute(root_, bound, remap), std::move(remaining));
}

std::string Expression::to_string() const
{
    std::string out;
    print(*root_, *vars_, out);
    return out;
}

Expression parse(std::string_view text, std::vector<std::string> variables)
{
    for (const auto& v : variables) {
        if (v.empty() || !is_ident_start(v.front()) ||
            !std::all_of(v.begin(), v.end(), is_ident_char))
            throw ValidationError("invalid variable name '" + v + "'");
        if (is_reserved_name(v)) throw ValidationError("variable name '" + v + "' is reserved");
    }
    for (std::size_t i = 0; i < variables.size(); ++i)
        for (std::size_t j = i + 1; j < variables.size(); ++j)
            if (variables[i] == variables[j])
                throw ValidationError("duplicate variable name '" + variables[i] + "'");
    Parser parser(text, variables);
    NodePtr root = parser.parse();
    return Expression(std::move(root), std::move(variables));
}

Expression differentiate(const Expression& e, std::string_view var)
{
    const auto& vars = e.variables();
    auto it = std::find(vars.begin(), vars.end(), var);
    if (it == vars.end()) throw ValidationError("'" + std::string(var) + "' is not a variable of the expression");
    return Expression(derive(e.root_ptr(), static_cast<std::size_t>(it - vars.begin())), vars);
}

}  // namespace tdop::expr
