#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "tdop/doppler.hpp"
#include "tdop/scenario.hpp"

namespace fixtures {

inline std::string num(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string("(") + buf + ")";
}

/// Uniform in [lo, hi) from the top 53 bits of mt19937_64.
inline double uniform(std::mt19937_64& rng, double lo, double hi)
{
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

inline tdop::Vec3 random_velocity(std::mt19937_64& rng, double max_speed)
{
    tdop::Vec3 dir;
    do {
        dir = {uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
    } while (dir.norm() < 0.1 || dir.norm() > 1.0);
    return dir.normalized() * uniform(rng, 0.0, max_speed);
}

inline tdop::Vec3 random_direction(std::mt19937_64& rng)
{
    tdop::Vec3 dir;
    do {
        dir = {uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
    } while (dir.norm() < 0.1 || dir.norm() > 1.0);
    return dir.normalized();
}

inline tdop::MetricField minkowski(double c = 1.0)
{
    return tdop::scenario::make_builtin("minkowski", {}, c);
}

inline tdop::MetricField schwarzschild(double M = 1.0)
{
    return tdop::scenario::make_builtin("schwarzschild", {{"M", M}});
}

/// Straight line x(u) = origin + (u - u0) * dir in parameter `name`.
inline tdop::WorldLine straight(const tdop::Vector& origin, const tdop::Vector& dir, double u0, double a, double b,
                                const std::string& name = "u")
{
    std::vector<tdop::expr::Expression> coords;
    for (Eigen::Index i = 0; i < origin.size(); ++i)
        coords.push_back(tdop::expr::parse(num(origin[i]) + " + " + num(dir[i]) + "*(" + name + " - " + num(u0) + ")",
                                           {name}));
    return tdop::WorldLine::analytic(std::move(coords), a, b);
}

/// 4-velocity gamma (c, v) scaled so that V^2 = -c^2 in coordinates with g_tt = -c^2.
inline tdop::Vector four_velocity(const tdop::Vec3& v, double c = 1.0)
{
    double g = 1.0 / std::sqrt(1.0 - v.squaredNorm() / (c * c));
    tdop::Vector V(4);
    V << g, g * v[0], g * v[1], g * v[2];
    return V;
}

/// Special-relativistic configuration: particle with 3-velocity v (|v| = c for
/// photons) through the origin, observer 1 with v1 at gamma(0), observer 2
/// with v2 at gamma(1). Momentum is free with p(0) = scale * U.
inline tdop::DopplerScenario sr_scenario(const tdop::Vec3& v, const tdop::Vec3& v1, const tdop::Vec3& v2,
                                         double scale, double c = 1.0)
{
    bool photon = std::abs(v.norm() - c) < 1e-12;
    tdop::Vector U(4);
    if (photon)
        U << 1.0, v[0], v[1], v[2];
    else
        U = four_velocity(v, c);
    tdop::MetricField g = minkowski(c);
    tdop::TransportEngine engine = tdop::TransportEngine::parallel(g);
    tdop::Vector zero = tdop::Vector::Zero(4);
    return tdop::DopplerScenario{g,
                                 engine,
                                 straight(zero, U, 0.0, -1.0, 2.0, "r"),
                                 straight(zero, four_velocity(v1, c), 0.0, -1.0, 1.0, "s"),
                                 straight(U, four_velocity(v2, c), 0.0, -1.0, 1.0, "s"),
                                 0.0,
                                 0.0,
                                 1.0,
                                 0.0,
                                 tdop::FreeMomentum{scale * U, 0.0},
                                 c,
                                 {}};
}

/// Parallel transport of the unit theta-vector once around the latitude
/// circle `theta` of the unit sphere; returns the rotation angle of the
/// result in the orthonormal (theta, phi) frame.
inline double sphere_holonomy_angle(double theta, tdop::ode::Tolerances tol = {})
{
    auto g = tdop::scenario::make_builtin("sphere2", {});
    auto engine = tdop::TransportEngine::parallel(g, tol);
    auto line = tdop::WorldLine::analytic({tdop::expr::parse(num(theta), {"u"}), tdop::expr::parse("u", {"u"})}, 0.0,
                                          2 * std::numbers::pi);
    tdop::Vector e(2);
    e << 1.0, 0.0;
    auto out = tdop::transport(engine, line, 0.0, 2 * std::numbers::pi, tdop::TangentVector(line.position(0.0), e));
    return std::atan2(out.components[1] * std::sin(theta), out.components[0]);
}

/// Random expression text over {x, y} from the full grammar.
class ExpressionGenerator {
public:
    explicit ExpressionGenerator(unsigned long long seed) : rng_(seed) {}

    std::string generate(int depth)
    {
        if (depth == 0 || pick(10) < 2) return leaf();
        switch (pick(9)) {
        case 0: return "(" + generate(depth - 1) + " + " + generate(depth - 1) + ")";
        case 1: return "(" + generate(depth - 1) + " - " + generate(depth - 1) + ")";
        case 2:
        case 3: return "(" + generate(depth - 1) + " * " + generate(depth - 1) + ")";
        case 4: return "(" + generate(depth - 1) + " / " + generate(depth - 1) + ")";
        case 5: {
            static const char* exps[] = {"2", "3", "-1", "0.5", "-2"};
            return "(" + generate(depth - 1) + ")^" + exps[pick(5)];
        }
        case 6: return "(" + generate(depth - 1) + ")^(" + generate(depth - 1) + ")";
        case 7: return "-" + generate(depth - 1);
        default: {
            static const char* fns[] = {"sin", "cos", "tan", "sinh", "cosh", "tanh", "exp", "ln", "sqrt", "abs"};
            return std::string(fns[pick(10)]) + "(" + generate(depth - 1) + ")";
        }
        }
    }

    double value(double lo, double hi) { return uniform(rng_, lo, hi); }

private:
    int pick(int n) { return static_cast<int>(rng_() % static_cast<unsigned long long>(n)); }

    std::string leaf()
    {
        switch (pick(5)) {
        case 0:
        case 1: return "x";
        case 2: return "y";
        case 3: return "pi";
        default: {
            char buf[16];
            std::snprintf(buf, sizeof buf, "%.2f", uniform(rng_, 0.1, 3.0));
            return buf;
        }
        }
    }

    std::mt19937_64 rng_;
};

struct FdComparison {
    int accepted = 0;
    int skipped = 0;
    double worst = 0.0;
    std::string worst_expression;
};

/// Symbolic derivative against the central difference with step
/// cbrt(eps) * max(1, |x|), relative to max(1, |derivative|). Samples where
/// the expression is undefined, huge, or where the difference quotient has
/// not converged (h vs h/2 disagree) are skipped.
inline FdComparison compare_with_finite_differences(int wanted, unsigned long long seed)
{
    using tdop::expr::Expression;
    FdComparison out;
    ExpressionGenerator gen(seed);
    const double root = std::cbrt(std::numeric_limits<double>::epsilon());
    while (out.accepted < wanted && out.skipped < 50 * wanted) {
        std::string text = gen.generate(4);
        Expression e = tdop::expr::parse(text, {"x", "y"});
        const std::string var = gen.value(0, 1) < 0.7 ? "x" : "y";
        Expression d = tdop::expr::differentiate(e, var);
        double x = gen.value(0.2, 2.5), y = gen.value(0.2, 2.5);
        double& moving = var == "x" ? x : y;
        try {
            double f0 = e.eval({{"x", x}, {"y", y}});
            double exact = d.eval({{"x", x}, {"y", y}});
            const double base = moving;
            auto quotient = [&](double h) {
                moving = base + h;
                double fp = e.eval({{"x", x}, {"y", y}});
                moving = base - h;
                double fm = e.eval({{"x", x}, {"y", y}});
                moving = base;
                return (fp - fm) / (2 * h);
            };
            double h = root * std::max(1.0, std::abs(base));
            double fd = quotient(h);
            double fd_half = quotient(h / 2);
            if (std::abs(f0) > 1e4 || std::abs(exact) > 1e4 ||
                std::abs(fd - fd_half) > 1e-7 * std::max(1.0, std::abs(fd))) {
                ++out.skipped;
                continue;
            }
            double err = std::abs(exact - fd) / std::max(1.0, std::abs(exact));
            if (err > out.worst) {
                out.worst = err;
                out.worst_expression = text + " d/d" + var;
            }
            ++out.accepted;
        } catch (const tdop::Error&) {
            ++out.skipped;
        }
    }
    return out;
}

}  // namespace fixtures
