#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tdop/error.hpp"

/// Scalar expressions over named real variables: parsing, evaluation and
/// exact symbolic differentiation.
///
/// Grammar (highest binding first):
///
///     primary := number | pi | name | func '(' sum ')' | '(' sum ')'
///     power   := primary [ '^' ( '-' power | power ) ]      right-assoc
///     unary   := '-' unary | power
///     product := unary { ('*' | '/') unary }
///     sum     := product { ('+' | '-') product }
///
/// so `-x^2` is `-(x^2)` and `2^3^2` is `2^(3^2)`.
namespace tdop::expr {

enum class Function { sin, cos, tan, sinh, cosh, tanh, exp, ln, sqrt, abs };
enum class BinaryOp { add, sub, mul, div, pow };

struct Node {
    enum class Kind { number, pi, variable, negate, binary, call };

    Kind kind = Kind::number;
    double value = 0.0;  // number
    std::size_t var = 0; // variable: index into the declared variable list
    BinaryOp op = BinaryOp::add;
    Function fn = Function::sin;
    std::shared_ptr<const Node> lhs; // negate / call operand, binary left
    std::shared_ptr<const Node> rhs; // binary right
};

using NodePtr = std::shared_ptr<const Node>;

/// Immutable expression tree plus its declared variable list. Cheap to copy;
/// copies share the tree, which is never mutated.
class Expression {
public:
    /// The literal 0 with no variables.
    Expression();
    Expression(NodePtr root, std::vector<std::string> variables);

    static Expression literal(double value, std::vector<std::string> variables = {});

    const std::vector<std::string>& variables() const noexcept { return *vars_; }
    const Node& root() const noexcept { return *root_; }
    const NodePtr& root_ptr() const noexcept { return root_; }

    /// Values are given in declared-variable order.
    double eval(std::span<const double> values) const;
    double eval(const std::map<std::string, double>& binding) const;

    /// Value when the tree is a plain literal (after folding).
    std::optional<double> literal_value() const;
    bool depends_on(std::string_view name) const;

    /// Replace the named variables by numbers and refold. Variables that are
    /// not bound stay declared, in their original relative order.
    Expression bind(const std::map<std::string, double>& values) const;

    /// Re-parseable text; numbers carry 17 significant digits.
    std::string to_string() const;

private:
    NodePtr root_;
    std::shared_ptr<const std::vector<std::string>> vars_;
};

Expression parse(std::string_view text, std::vector<std::string> variables);

/// Exact partial derivative with respect to a declared variable. Constant
/// subtrees fold to literals; x*0, x*1, x+0 and x^1 collapse.
Expression differentiate(const Expression& e, std::string_view var);

bool is_reserved_name(std::string_view name);

}  // namespace tdop::expr
