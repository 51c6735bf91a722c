#include <algorithm>
#include "tdop/transport.hpp"

#include <cmath>
#include <random>

namespace tdop {

// ---------------------------------------------------------------------------
// WorldLine
// ---------------------------------------------------------------------------

WorldLine::WorldLine(std::shared_ptr<const Impl> impl, std::size_t dim, double a, double b)
    : impl_(std::move(impl)), dim_(dim), begin_(a), end_(b)
{
}

WorldLine WorldLine::analytic(std::vector<expr::Expression> coordinates, double a, double b)
{
    if (coordinates.empty()) throw ValidationError("world line: no coordinate functions");
    if (!(a <= b)) throw ValidationError("world line: interval must satisfy a <= b");
    Analytic line;
    for (const auto& c : coordinates) {
        if (c.variables().size() != 1)
            throw ValidationError("world line: coordinate functions must depend on exactly one parameter");
        if (c.variables() != coordinates.front().variables())
            throw ValidationError("world line: coordinate functions must share the parameter name");
        line.derivs.push_back(expr::differentiate(c, c.variables().front()));
    }
    line.coords = std::move(coordinates);
    const std::size_t dim = line.coords.size();
    return WorldLine(std::make_shared<const Impl>(std::move(line)), dim, a, b);
}

WorldLine WorldLine::integrated(ode::DenseOutput state, std::size_t dimension)
{
    double a = std::min(state.t_begin(), state.t_end());
    double b = std::max(state.t_begin(), state.t_end());
    return WorldLine(std::make_shared<const Impl>(std::move(state)), dimension, a, b);
}

bool WorldLine::is_analytic() const { return std::holds_alternative<Analytic>(*impl_); }

bool WorldLine::contains(double t) const
{
    const double slack = 1e-12 * std::max({1.0, std::abs(begin_), std::abs(end_)});
    return t >= begin_ - slack && t <= end_ + slack;
}

void WorldLine::check_range(double t) const
{
    if (!contains(t))
        throw ParameterRangeError("parameter " + std::to_string(t) + " outside world line interval [" +
                                  std::to_string(begin_) + ", " + std::to_string(end_) + "]");
}

Point WorldLine::position(double t) const
{
    check_range(t);
    if (const auto* line = std::get_if<Analytic>(impl_.get())) {
        Vector x(static_cast<Eigen::Index>(dim_));
        const double arg[1] = {t};
        for (std::size_t i = 0; i < dim_; ++i) x[static_cast<Eigen::Index>(i)] = line->coords[i].eval(arg);
        return Point{x};
    }
    Vector state = std::get<ode::DenseOutput>(*impl_).value(t);
    return Point{state.head(static_cast<Eigen::Index>(dim_))};
}

TangentVector WorldLine::tangent(double t) const
{
    check_range(t);
    if (const auto* line = std::get_if<Analytic>(impl_.get())) {
        Vector x(static_cast<Eigen::Index>(dim_)), v(static_cast<Eigen::Index>(dim_));
        const double arg[1] = {t};
        for (std::size_t i = 0; i < dim_; ++i) {
            x[static_cast<Eigen::Index>(i)] = line->coords[i].eval(arg);
            v[static_cast<Eigen::Index>(i)] = line->derivs[i].eval(arg);
        }
        return TangentVector(Point{x}, v);
    }
    Vector state = std::get<ode::DenseOutput>(*impl_).value(t);
    const auto n = static_cast<Eigen::Index>(dim_);
    return TangentVector(Point{state.head(n)}, state.segment(n, n));
}

std::vector<double> WorldLine::knots_between(double s, double t) const
{
    std::vector<double> out;
    const auto* dense = std::get_if<ode::DenseOutput>(impl_.get());
    if (!dense) return out;
    const double lo = std::min(s, t), hi = std::max(s, t);
    for (double k : dense->knots())
        if (k > lo && k < hi) out.push_back(k);
    std::sort(out.begin(), out.end());
    if (s > t) std::reverse(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// TransportEngine
// ---------------------------------------------------------------------------

TransportEngine TransportEngine::parallel(MetricField metric, ode::Tolerances tol)
{
    TransportEngine e;
    e.metric_ = std::make_shared<const MetricField>(std::move(metric));
    e.tol_ = tol;
    return e;
}

TransportEngine TransportEngine::linear(std::vector<std::vector<expr::Expression>> coefficients, ode::Tolerances tol)
{
    const std::size_t n = coefficients.size();
    if (n == 0) throw ValidationError("linear transport: empty coefficient matrix");
    for (const auto& row : coefficients) {
        if (row.size() != n) throw ValidationError("linear transport: coefficient matrix must be square");
        for (const auto& a : row)
            if (a.variables().size() > 1)
                throw ValidationError("linear transport: coefficients may depend only on the path parameter");
    }
    TransportEngine e;
    e.coefficients_ = std::make_shared<const std::vector<std::vector<expr::Expression>>>(std::move(coefficients));
    e.tol_ = tol;
    return e;
}

std::size_t TransportEngine::dimension() const
{
    return is_parallel() ? metric_->dimension() : coefficients_->size();
}

TransportEngine TransportEngine::with_tolerances(ode::Tolerances tol) const
{
    TransportEngine e = *this;
    e.tol_ = tol;
    return e;
}

Matrix TransportEngine::generator(const WorldLine& line, double u) const
{
    const auto n = static_cast<Eigen::Index>(dimension());
    if (line.dimension() != dimension()) throw ValidationError("transport: line and engine dimensions differ");
    Matrix K = Matrix::Zero(n, n);
    if (is_parallel()) {
        TangentVector v = line.tangent(u);
        Christoffel gamma = christoffel_at(*metric_, v.base);
        for (Eigen::Index k = 0; k < n; ++k)
            for (Eigen::Index j = 0; j < n; ++j) {
                double sum = 0.0;
                for (Eigen::Index i = 0; i < n; ++i)
                    sum += gamma(static_cast<std::size_t>(k), static_cast<std::size_t>(i), static_cast<std::size_t>(j)) *
                           v.components[i];
                K(k, j) = -sum;
            }
        return K;
    }
    return coefficient_matrix(u);
}

Matrix TransportEngine::coefficient_matrix(double u) const
{
    const auto n = static_cast<Eigen::Index>(dimension());
    Matrix K(n, n);
    const double arg[1] = {u};
    for (Eigen::Index k = 0; k < n; ++k)
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto& a = (*coefficients_)[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
            K(k, j) = a.variables().empty() ? a.eval(std::span<const double>{}) : a.eval(arg);
        }
    return K;
}

Vector TransportEngine::self_transport_rate(double u, const Vector& x, const Vector& v) const
{
    const auto n = static_cast<Eigen::Index>(dimension());
    if (!is_parallel()) return coefficient_matrix(u) * v;
    Christoffel gamma = christoffel_at(*metric_, Point{x});
    Vector acc = Vector::Zero(n);
    for (std::size_t k = 0; k < gamma.dimension(); ++k)
        for (std::size_t i = 0; i < gamma.dimension(); ++i)
            for (std::size_t j = 0; j < gamma.dimension(); ++j)
                acc[static_cast<Eigen::Index>(k)] -=
                    gamma(k, i, j) * v[static_cast<Eigen::Index>(i)] * v[static_cast<Eigen::Index>(j)];
    return acc;
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

namespace {

void require_in_line(const WorldLine& line, double t, const char* what)
{
    if (!line.contains(t))
        throw ParameterRangeError(std::string(what) + " parameter " + std::to_string(t) +
                                  " outside the path interval [" + std::to_string(line.begin()) + ", " +
                                  std::to_string(line.end()) + "]");
}

}  // namespace

Matrix propagator(const TransportEngine& engine, const WorldLine& line, double s, double t)
{
    require_in_line(line, s, "transport start");
    require_in_line(line, t, "transport end");
    const auto n = static_cast<Eigen::Index>(engine.dimension());
    if (line.dimension() != engine.dimension()) throw ValidationError("transport: line and engine dimensions differ");
    if (s == t) return Matrix::Identity(n, n);

    ode::Rhs rhs = [&](double u, const Vector& y, Vector& dy) {
        Matrix K = engine.generator(line, u);
        Eigen::Map<const Matrix> P(y.data(), n, n);
        Eigen::Map<Matrix> dP(dy.data(), n, n);
        dP.noalias() = K * P;
    };
    Matrix identity = Matrix::Identity(n, n);
    Vector y = Eigen::Map<const Vector>(identity.data(), n * n);
    ode::Options opt;
    opt.tol = engine.tolerances();
    // The interpolant of an integrated line is only C1 across its knots, so
    // integrate knot to knot to keep the step-size control valid.
    std::vector<double> stops = line.knots_between(s, t);
    stops.push_back(t);
    double from = s;
    for (double to : stops) {
        y = ode::integrate(rhs, from, y, to, opt).y;
        from = to;
    }
    return Eigen::Map<const Matrix>(y.data(), n, n);
}

TangentVector transport(const TransportEngine& engine, const WorldLine& line, double s, double t,
                        const TangentVector& A)
{
    require_in_line(line, s, "transport start");
    require_in_line(line, t, "transport end");
    if (A.dimension() != engine.dimension()) throw ValidationError("transport: vector dimension differs from engine");
    Point start = line.position(s);
    if (!same_point(start.coords, A.base.coords))
        throw BaseMismatchError("transport: vector is not based at the path point γ(s)");
    Matrix P = propagator(engine, line, s, t);
    return TangentVector(line.position(t), P * A.components);
}

WorldLine geodesic(const TransportEngine& engine, const Point& x0, const TangentVector& v0, double a, double b)
{
    const auto n = static_cast<Eigen::Index>(engine.dimension());
    if (x0.coords.size() != n || v0.components.size() != n)
        throw ValidationError("geodesic: seed dimension differs from engine");
    if (!same_point(x0.coords, v0.base.coords)) throw BaseMismatchError("geodesic: v0 is not based at x0");
    if (!(a <= b)) throw ValidationError("geodesic: interval must satisfy a <= b");

    ode::Rhs rhs = [&engine, n](double u, const Vector& y, Vector& dy) {
        dy.head(n) = y.tail(n);
        dy.tail(n) = engine.self_transport_rate(u, y.head(n), y.tail(n));
    };
    Vector y0(2 * n);
    y0 << x0.coords, v0.components;
    ode::Options opt;
    opt.tol = engine.tolerances();
    opt.dense = true;
    ode::Result res = ode::integrate(rhs, a, y0, b, opt);
    return WorldLine::integrated(std::move(*res.dense), engine.dimension());
}

TangentVector free_momentum(const TransportEngine& engine, const WorldLine& line, const TangentVector& p0,
                            double r0, double r)
{
    return transport(engine, line, r0, r, p0);
}

double isometry_violation(const TransportEngine& engine, const MetricField& g, const WorldLine& line, int samples,
                          unsigned long long seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const auto n = static_cast<Eigen::Index>(engine.dimension());
    const double start = line.begin();
    Point x0 = line.position(start);
    Matrix g0 = g.at(x0.coords);
    double worst = 0.0;
    for (int k = 1; k <= samples; ++k) {
        double u = line.begin() + (line.end() - line.begin()) * static_cast<double>(k) / samples;
        Matrix P = propagator(engine, line, start, u);
        Matrix gu = g.at(line.position(u).coords);
        Vector A(n), B(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            A[i] = unit(rng);
            B[i] = unit(rng);
        }
        double before = dot(g0, A, B);
        double after = dot(gu, P * A, P * B);
        worst = std::max(worst, std::abs(after - before) / (1.0 + std::abs(before)));
    }
    return worst;
}

}  // namespace tdop
