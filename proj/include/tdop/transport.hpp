#pragma once

#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "tdop/geometry.hpp"
#include "tdop/ode.hpp"

namespace tdop {

/// A parameterized path γ: [a, b] → M together with its tangent.
///
/// Analytic lines carry coordinate expressions in one parameter and use
/// their exact symbolic derivatives as tangents. Integrated lines carry the
/// dense output of a first-order (position, velocity) system and read the
/// tangent from the velocity half of the interpolant.
class WorldLine {
public:
    static WorldLine analytic(std::vector<expr::Expression> coordinates, double a, double b);
    static WorldLine integrated(ode::DenseOutput state, std::size_t dimension);

    double begin() const { return begin_; }
    double end() const { return end_; }
    std::size_t dimension() const { return dim_; }
    bool is_analytic() const;
    bool contains(double t) const;

    Point position(double t) const;
    TangentVector tangent(double t) const;
    /// Interpolant knots strictly between s and t, ordered from s towards t.
    /// Empty for analytic lines.
    std::vector<double> knots_between(double s, double t) const;

private:
    struct Analytic {
        std::vector<expr::Expression> coords;
        std::vector<expr::Expression> derivs;
    };
    using Impl = std::variant<Analytic, ode::DenseOutput>;

    WorldLine(std::shared_ptr<const Impl> impl, std::size_t dim, double a, double b);
    void check_range(double t) const;

    std::shared_ptr<const Impl> impl_;
    std::size_t dim_;
    double begin_;
    double end_;
};

/// Realization of a transport along paths as a linear ODE dV/du = K(u) V.
///
/// Parallel: K^k_j = -Γ^k_ij(γ(u)) γ̇^i(u) from the metric's Levi-Civita
/// connection. Linear: K = A(u), a user matrix of expressions in the path
/// parameter; metric consistency is not implied and must be checked.
class TransportEngine {
public:
    static TransportEngine parallel(MetricField metric, ode::Tolerances tol = {});
    static TransportEngine linear(std::vector<std::vector<expr::Expression>> coefficients,
                                  ode::Tolerances tol = {});

    bool is_parallel() const { return metric_ != nullptr; }
    std::size_t dimension() const;
    const ode::Tolerances& tolerances() const { return tol_; }
    TransportEngine with_tolerances(ode::Tolerances tol) const;

    /// K(u) along `line`.
    Matrix generator(const WorldLine& line, double u) const;
    /// dv/du for a tangent v transported along its own path at x: -Γ(x)(v, v)
    /// for parallel engines, A(u) v for linear ones.
    Vector self_transport_rate(double u, const Vector& x, const Vector& v) const;

private:
    TransportEngine() = default;
    Matrix coefficient_matrix(double u) const;

    std::shared_ptr<const MetricField> metric_;
    std::shared_ptr<const std::vector<std::vector<expr::Expression>>> coefficients_;
    ode::Tolerances tol_;
};

/// Matrix P with I_{s→t} V = P V in coordinate components.
Matrix propagator(const TransportEngine& engine, const WorldLine& line, double s, double t);

/// I^γ_{s→t} A; the result is based at γ(t).
TangentVector transport(const TransportEngine& engine, const WorldLine& line, double s, double t,
                        const TangentVector& A);

/// The I-path through x0 with initial tangent v0 at parameter a, over [a, b].
/// For parallel engines this is the geodesic equation.
WorldLine geodesic(const TransportEngine& engine, const Point& x0, const TangentVector& v0, double a, double b);

/// p(r) = I_{r0→r} p0: the momentum of a free particle.
TangentVector free_momentum(const TransportEngine& engine, const WorldLine& line, const TangentVector& p0,
                            double r0, double r);

/// max |I(A)·I(B) - A·B| / (1 + |A·B|) over random vectors transported from
/// the start of `line` to `samples` parameters spread over it.
double isometry_violation(const TransportEngine& engine, const MetricField& g, const WorldLine& line,
                          int samples = 8, unsigned long long seed = 1);

}  // namespace tdop
