#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "tdop/expr.hpp"

using namespace tdop;
using tdop::expr::differentiate;
using tdop::expr::parse;

TEST_SUITE("expr")
{
    TEST_CASE("literals and grammar")
    {
        CHECK(parse("1", {}).literal_value() == 1.0);
        auto e = parse("-(2/r)", {"r"});
        CHECK(e.root().kind == expr::Node::Kind::negate);
        CHECK(e.root().lhs->kind == expr::Node::Kind::binary);
        CHECK(e.root().lhs->op == expr::BinaryOp::div);
        CHECK(parse("r^2*sin(th)^2", {"r", "th"}).eval({{"r", 2.0}, {"th", std::numbers::pi / 2}}) == doctest::Approx(4.0));
    }

    TEST_CASE("precedence and associativity")
    {
        CHECK(parse("-x^2", {"x"}).eval({{"x", 3.0}}) == -9.0);
        CHECK(parse("2^3^2", {}).literal_value() == 512.0);
        CHECK(parse("8/4/2", {}).literal_value() == 1.0);
        CHECK(parse("8-4-2", {}).literal_value() == 2.0);
        CHECK(parse("2+3*4", {}).literal_value() == 14.0);
        CHECK(parse("x^-2", {"x"}).eval({{"x", 2.0}}) == 0.25);
        CHECK(parse("2*pi", {}).literal_value() == doctest::Approx(2 * std::numbers::pi));
    }

    TEST_CASE("evaluation")
    {
        CHECK(parse("x+1", {"x"}).eval({{"x", 0.0}}) == 1.0);
        CHECK(parse("1-2/r", {"r"}).eval({{"r", 4.0}}) == 0.5);
        CHECK_THROWS_AS(parse("ln(x)", {"x"}).eval({{"x", -1.0}}), DomainError);
        CHECK_THROWS_AS(parse("sqrt(x)", {"x"}).eval({{"x", -1.0}}), DomainError);
        CHECK_THROWS_AS(parse("1/x", {"x"}).eval({{"x", 0.0}}), DomainError);
        CHECK_THROWS_AS(parse("x+y", {"x", "y"}).eval({{"x", 0.0}}), ValidationError);
    }

    TEST_CASE("parse errors carry positions")
    {
        CHECK_THROWS_AS(parse("q + 1", {"x"}), ParseError);
        CHECK_THROWS_AS(parse("sin x", {"x"}), ParseError);
        CHECK_THROWS_AS(parse("", {"x"}), ParseError);
        CHECK_THROWS_AS(parse("x +", {"x"}), ParseError);
        try {
            parse("1 + foo", {});
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            CHECK(e.position() == 4);
        }
    }

    TEST_CASE("unbalanced parentheses are rejected")
    {
        fixtures::ExpressionGenerator gen(7);
        for (int i = 0; i < 200; ++i) {
            std::string text = gen.generate(3);
            REQUIRE_NOTHROW(parse(text, {"x", "y"}));
            if (text.find('(') == std::string::npos) continue;
            std::string dropped_open = text, dropped_close = text;
            dropped_open.erase(dropped_open.find('('), 1);
            dropped_close.erase(dropped_close.rfind(')'), 1);
            CHECK_THROWS_AS(parse(dropped_open, {"x", "y"}), ParseError);
            CHECK_THROWS_AS(parse(dropped_close, {"x", "y"}), ParseError);
            CHECK_THROWS_AS(parse("(" + text, {"x", "y"}), ParseError);
            CHECK_THROWS_AS(parse(text + ")", {"x", "y"}), ParseError);
        }
    }

    TEST_CASE("derivatives")
    {
        auto d = differentiate(parse("x^2", {"x"}), "x");
        for (double x : {-1.5, 0.0, 2.0}) CHECK(d.eval({{"x", x}}) == doctest::Approx(2 * x));

        auto e = parse("1 - 2/r", {"r"});
        auto dr = differentiate(e, "r");
        CHECK(dr.eval({{"r", 3.0}}) == doctest::Approx(2.0 / 9.0).epsilon(1e-14));
        double h = 1e-5;
        double fd = (e.eval({{"r", 3 + h}}) - e.eval({{"r", 3 - h}})) / (2 * h);
        CHECK(std::abs(fd - dr.eval({{"r", 3.0}})) < 1e-8);

        auto p = parse("sin(t)*t", {"t"});
        auto dt = differentiate(p, "t");
        for (double t : {0.3, 1.7}) CHECK(dt.eval({{"t", t}}) == doctest::Approx(std::cos(t) * t + std::sin(t)));

        CHECK(differentiate(parse("x*y + 3", {"x", "y"}), "y").eval({{"x", 5.0}, {"y", 1.0}}) == 5.0);
        CHECK(differentiate(parse("7", {"x"}), "x").literal_value() == 0.0);
    }

    TEST_CASE("abs derivative is undefined at zero")
    {
        auto d = differentiate(parse("abs(x)", {"x"}), "x");
        CHECK(d.eval({{"x", 2.0}}) == 1.0);
        CHECK(d.eval({{"x", -2.0}}) == -1.0);
        CHECK_THROWS_AS(d.eval({{"x", 0.0}}), DomainError);
    }

    TEST_CASE("simplification rules")
    {
        auto simplified = [](const std::string& text) { return parse(text, {"x", "y"}).bind({{"y", 1.0}}); };
        CHECK(simplified("x*0").literal_value() == 0.0);
        CHECK(simplified("x*1").to_string() == "x");
        CHECK(simplified("x+0").to_string() == "x");
        CHECK(simplified("x^1").to_string() == "x");
        CHECK(simplified("2*3+x").to_string() == "6 + x");
        CHECK(simplified("x*y").to_string() == "x");
        CHECK(differentiate(parse("x*y", {"x", "y"}), "x").to_string() == "y");
        CHECK(differentiate(parse("x^2", {"x"}), "x").to_string() == "2*x");
    }

    TEST_CASE("to_string re-parses to the same function")
    {
        fixtures::ExpressionGenerator gen(11);
        for (int i = 0; i < 200; ++i) {
            auto e = parse(gen.generate(4), {"x", "y"});
            auto back = parse(e.to_string(), {"x", "y"});
            double x = gen.value(0.2, 2), y = gen.value(0.2, 2);
            try {
                double a = e.eval({{"x", x}, {"y", y}});
                CHECK(back.eval({{"x", x}, {"y", y}}) == a);
            } catch (const DomainError&) {
                CHECK_THROWS_AS(back.eval({{"x", x}, {"y", y}}), DomainError);
            }
        }
    }

    TEST_CASE("bind substitutes and keeps the remaining variables")
    {
        auto e = parse("a*x + b", {"x", "a", "b"}).bind({{"a", 2.0}, {"b", 1.0}});
        REQUIRE(e.variables() == std::vector<std::string>{"x"});
        CHECK(e.eval({{"x", 3.0}}) == 7.0);
    }

    TEST_CASE("evaluation is deterministic")
    {
        fixtures::ExpressionGenerator gen(3);
        for (int i = 0; i < 100; ++i) {
            auto e = parse(gen.generate(5), {"x", "y"});
            std::map<std::string, double> b{{"x", 0.7}, {"y", 1.3}};
            try {
                double first = e.eval(b);
                for (int k = 0; k < 3; ++k) CHECK(e.eval(b) == first);
            } catch (const DomainError&) {
            }
        }
    }

    TEST_CASE("derivatives agree with central differences")
    {
        auto cmp = fixtures::compare_with_finite_differences(300, 99);
        CHECK(cmp.accepted == 300);
        INFO("worst: " << cmp.worst_expression);
        CHECK(cmp.worst <= 1e-6);
    }
}
