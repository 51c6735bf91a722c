#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "tdop/geometry.hpp"

/// Adaptive Dormand–Prince 5(4) integrator with the 4th-order continuous
/// extension for dense output. Integrates forward or backward in time.
namespace tdop::ode {

struct Tolerances {
    double abs = 1e-10;
    double rel = 1e-10;
};

struct Options {
    Tolerances tol;
    std::size_t max_steps = 500000;
    double max_step = 0.0; // 0: unbounded
    bool dense = false;
};

/// dy/dt = f(t, y), written into the third argument.
using Rhs = std::function<void(double, const Vector&, Vector&)>;

/// Piecewise-quartic interpolant over the accepted steps.
class DenseOutput {
public:
    DenseOutput(double t0, Vector y0) : t_begin_(t0), t_end_(t0), y_begin_(std::move(y0)) {}

    double t_begin() const { return t_begin_; }
    double t_end() const { return t_end_; }
    std::size_t segments() const { return segments_.size(); }
    /// Segment boundaries in integration order, including both ends.
    std::vector<double> knots() const;

    Vector value(double t) const;
    Vector derivative(double t) const;

    void append(double t0, double h, Matrix coefficients);

private:
    struct Segment {
        double t0;
        double h;
        Matrix r; // n x 5
    };
    const Segment& locate(double t) const;

    double t_begin_;
    double t_end_;
    Vector y_begin_;
    std::vector<Segment> segments_;
};

struct Result {
    Vector y;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t evaluations = 0;
    std::optional<DenseOutput> dense;
};

/// Integrate from (t0, y0) to t1. Throws OdeError when the tolerance cannot
/// be met or the right-hand side keeps failing (e.g. leaving the chart).
Result integrate(const Rhs& f, double t0, const Vector& y0, double t1, const Options& options = {});

}  // namespace tdop::ode
