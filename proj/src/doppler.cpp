#include "tdop/doppler.hpp"

#include <cmath>
#include <limits>

namespace tdop {

namespace {

double eval_in_parameter(const expr::Expression& e, double r)
{
    if (e.variables().empty()) return e.eval(std::span<const double>{});
    const double arg[1] = {r};
    return e.eval(arg);
}

TangentVector rebased(const TangentVector& v, const Point& at) { return TangentVector(at, v.components); }

double vector_scale(const Matrix& g, const Vector& v)
{
    double m = v.cwiseAbs().maxCoeff();
    return g.cwiseAbs().maxCoeff() * m * m;
}

void require_non_null(double v_sq, double scale, double nullity, const char* who)
{
    if (std::abs(v_sq) <= nullity * scale)
        throw NullObserverError(std::string(who) + " velocity is null");
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

void validate(const DopplerScenario& scn)
{
    const std::size_t n = scn.metric.dimension();
    if (scn.engine.dimension() != n || scn.observed.dimension() != n || scn.observer1.dimension() != n ||
        scn.observer2.dimension() != n)
        throw ValidationError("scenario: metric, transport and path dimensions differ");
    if (!scn.observed.contains(scn.r1) || !scn.observed.contains(scn.r2))
        throw ParameterRangeError("scenario: intersection parameters r1, r2 must lie in the observed path interval");
    if (!scn.observer1.contains(scn.s1)) throw ParameterRangeError("scenario: s1 outside observer 1 interval");
    if (!scn.observer2.contains(scn.s2)) throw ParameterRangeError("scenario: s2 outside observer 2 interval");
    if (!(scn.c > 0.0)) throw ValidationError("scenario: light speed c must be positive");
    if (!same_point(scn.observed.position(scn.r1).coords, scn.observer1.position(scn.s1).coords,
                    scn.tol.coincidence))
        throw ValidationError("scenario: observed path does not meet observer 1 at (r1, s1)");
    if (!same_point(scn.observed.position(scn.r2).coords, scn.observer2.position(scn.s2).coords,
                    scn.tol.coincidence))
        throw ValidationError("scenario: observed path does not meet observer 2 at (r2, s2)");
    if (const auto* m = std::get_if<ExplicitMomentum>(&scn.momentum)) {
        if (m->components.size() != n) throw ValidationError("momentum: component count differs from dimension");
        for (const auto& e : m->components)
            if (e.variables().size() > 1)
                throw ValidationError("momentum: components may depend only on the path parameter");
    } else if (const auto* m = std::get_if<FreeMomentum>(&scn.momentum)) {
        if (static_cast<std::size_t>(m->p0.size()) != n)
            throw ValidationError("momentum: p0 component count differs from dimension");
        if (!scn.observed.contains(m->r0)) throw ParameterRangeError("momentum: r0 outside the observed path interval");
    } else if (const auto* m = std::get_if<MassMomentum>(&scn.momentum)) {
        if (m->mu.variables().size() > 1)
            throw ValidationError("momentum: mu may depend only on the path parameter");
    }
}

TangentVector momentum_at(const DopplerScenario& scn, double r)
{
    return std::visit(
        [&](const auto& spec) -> TangentVector {
            using T = std::decay_t<decltype(spec)>;
            if constexpr (std::is_same_v<T, ExplicitMomentum>) {
                Vector p(static_cast<Eigen::Index>(spec.components.size()));
                for (std::size_t i = 0; i < spec.components.size(); ++i)
                    p[static_cast<Eigen::Index>(i)] = eval_in_parameter(spec.components[i], r);
                return TangentVector(scn.observed.position(r), p);
            } else if constexpr (std::is_same_v<T, FreeMomentum>) {
                TangentVector p0(scn.observed.position(spec.r0), spec.p0);
                return free_momentum(scn.engine, scn.observed, p0, spec.r0, r);
            } else {
                TangentVector tangent = scn.observed.tangent(r);
                return TangentVector(tangent.base, eval_in_parameter(spec.mu, r) * tangent.components);
            }
        },
        scn.momentum);
}

TangentVector observer_velocity(const DopplerScenario& scn, int observer)
{
    if (observer == 1) return rebased(scn.observer1.tangent(scn.s1), scn.observed.position(scn.r1));
    if (observer == 2) return rebased(scn.observer2.tangent(scn.s2), scn.observed.position(scn.r2));
    throw ValidationError("observer index must be 1 or 2");
}

double relative_energy(const MetricField& g, const TangentVector& p, const TangentVector& V)
{
    require_same_base(p, V, "relative_energy");
    Matrix gx = g.at(V.base.coords);
    return epsilon(dot(gx, V.components, V.components)) * dot(gx, p.components, V.components);
}

TangentVector transported_velocity(const DopplerScenario& scn)
{
    return transport(scn.engine, scn.observed, scn.r2, scn.r1, observer_velocity(scn, 2));
}

TangentVector momentum_change(const DopplerScenario& scn)
{
    TangentVector p1 = momentum_at(scn, scn.r1);
    TangentVector p2 = momentum_at(scn, scn.r2);
    TangentVector carried = transport(scn.engine, scn.observed, scn.r1, scn.r2, p1);
    return TangentVector(p2.base, p2.components - carried.components);
}

double energy_change(const DopplerScenario& scn)
{
    TangentVector dp = momentum_change(scn);
    TangentVector V2 = observer_velocity(scn, 2);
    Matrix g2 = scn.metric.at(V2.base.coords);
    return epsilon(dot(g2, V2.components, V2.components)) * dot(g2, dp.components, V2.components);
}

double energy_along(const DopplerScenario& scn, double r)
{
    TangentVector carried = transport(scn.engine, scn.observed, r, scn.r2, momentum_at(scn, r));
    TangentVector V2 = observer_velocity(scn, 2);
    Matrix g2 = scn.metric.at(V2.base.coords);
    return epsilon(dot(g2, V2.components, V2.components)) * dot(g2, carried.components, V2.components);
}

Decomposition decompose(const MetricField& g, const TangentVector& base, const TangentVector& target, double nullity)
{
    require_same_base(base, target, "decompose");
    Matrix gx = g.at(base.base.coords);
    double base_sq = dot(gx, base.components, base.components);
    require_non_null(base_sq, vector_scale(gx, base.components), nullity, "observer 1");
    Vector par = base.components * (dot(gx, base.components, target.components) / base_sq);
    return Decomposition{TangentVector(target.base, par), TangentVector(target.base, target.components - par)};
}

TangentVector normal_vector(const MetricField& g, const TangentVector& p1, const TangentVector& V1, double E1,
                            double collinearity, double nullity)
{
    require_same_base(p1, V1, "normal_vector");
    Matrix gx = g.at(V1.base.coords);
    double v_sq = dot(gx, V1.components, V1.components);
    require_non_null(v_sq, vector_scale(gx, V1.components), nullity, "observer 1");
    double p_sq = dot(gx, p1.components, p1.components);
    double Q = p_sq - E1 * E1 / v_sq;
    double scale = std::max({1.0, std::abs(p_sq), E1 * E1 / std::abs(v_sq)});
    const auto n = V1.components.size();
    if (std::abs(Q) <= collinearity * scale) return TangentVector(V1.base, Vector::Zero(n));
    Vector p_perp = p1.components - V1.components * (dot(gx, V1.components, p1.components) / v_sq);
    return TangentVector(V1.base, -p_perp / (epsilon(Q) * std::sqrt(std::abs(Q))));
}

double recession_speed(const MetricField& g, const TangentVector& V21, const TangentVector& N1)
{
    require_same_base(V21, N1, "recession_speed");
    if (N1.components.isZero(0.0)) return 0.0;
    return dot(g.at(V21.base.coords), V21.components, N1.components);
}

void require_consistent_transport(const DopplerScenario& scn)
{
    if (scn.engine.is_parallel()) return;
    double violation = isometry_violation(scn.engine, scn.metric, scn.observed, 8, 1);
    if (violation > scn.tol.isometry)
        throw InconsistentTransportError("transport does not preserve the metric (isometry violation " +
                                         std::to_string(violation) +
                                         "); the energy relations require a metric-consistent transport");
}

DopplerReport doppler_energy(const DopplerScenario& scn)
{
    validate(scn);
    require_consistent_transport(scn);

    DopplerReport rep;
    rep.p1 = momentum_at(scn, scn.r1);
    rep.p2 = momentum_at(scn, scn.r2);
    rep.V1 = observer_velocity(scn, 1);
    rep.V2 = observer_velocity(scn, 2);
    const Matrix g1 = scn.metric.at(rep.V1.base.coords);
    const Matrix g2 = scn.metric.at(rep.V2.base.coords);

    rep.V1_sq = dot(g1, rep.V1.components, rep.V1.components);
    require_non_null(rep.V1_sq, vector_scale(g1, rep.V1.components), scn.tol.nullity, "observer 1");
    rep.V2_sq = dot(g2, rep.V2.components, rep.V2.components);
    rep.eps_V1 = epsilon(rep.V1_sq);
    rep.eps_V2 = epsilon(rep.V2_sq);

    rep.E1 = rep.eps_V1 * dot(g1, rep.p1.components, rep.V1.components);
    rep.E2 = rep.eps_V2 * dot(g2, rep.p2.components, rep.V2.components);

    const Matrix to_first = propagator(scn.engine, scn.observed, scn.r2, scn.r1);
    const Matrix to_second = propagator(scn.engine, scn.observed, scn.r1, scn.r2);
    rep.V21 = TangentVector(rep.V1.base, to_first * rep.V2.components);
    rep.delta_p = TangentVector(rep.V2.base, rep.p2.components - to_second * rep.p1.components);
    rep.delta_E21 = rep.eps_V2 * dot(g2, rep.delta_p.components, rep.V2.components);

    Decomposition parts = decompose(scn.metric, rep.V1, rep.V21, scn.tol.nullity);
    rep.V21_parallel = parts.parallel;
    rep.V21_perp = parts.perpendicular;
    rep.V21_sq = dot(g1, rep.V21.components, rep.V21.components);
    rep.perp_sq = dot(g1, rep.V21_perp.components, rep.V21_perp.components);

    // The bracket is V₁·(V₂)₁/(V₁)²; the radical form is only a cross-check of its magnitude.
    rep.bracket = dot(g1, rep.V1.components, rep.V21.components) / rep.V1_sq;
    double radicand = (rep.V21_sq - rep.perp_sq) / rep.V1_sq;
    double radical_scale = std::max({1.0, rep.bracket * rep.bracket, std::abs(rep.V21_sq / rep.V1_sq),
                                     std::abs(rep.perp_sq / rep.V1_sq)});
    if (std::abs(radicand - rep.bracket * rep.bracket) > scn.tol.radical * radical_scale)
        throw NumericalError("diagnostic: radicand " + std::to_string(radicand) +
                             " disagrees with the squared bracket " + std::to_string(rep.bracket * rep.bracket) +
                             " (signature or causality problem)");
    rep.bracket_radical = std::sqrt(std::max(radicand, 0.0));

    rep.p1_sq = dot(g1, rep.p1.components, rep.p1.components);
    rep.Q = rep.p1_sq - rep.E1 * rep.E1 / rep.V1_sq;
    rep.eps_Q = epsilon(rep.Q);
    rep.N1 = normal_vector(scn.metric, rep.p1, rep.V1, rep.E1, scn.tol.collinearity, scn.tol.nullity);
    rep.omega21 = recession_speed(scn.metric, rep.V21, rep.N1);

    rep.E2_formula = rep.delta_E21 + rep.eps_V1 * rep.eps_V2 * rep.E1 * rep.bracket -
                     rep.eps_V2 * rep.eps_Q * rep.omega21 * std::sqrt(std::abs(rep.Q));
    rep.residual = std::abs(rep.E2_formula - rep.E2);
    double transfer = rep.delta_E21 + rep.eps_V2 * dot(g1, rep.p1.components, rep.V21.components);
    rep.transfer_residual = std::abs(transfer - rep.E2);

    rep.z = rep.E2 != 0.0 ? (rep.E2 - rep.E1) / rep.E2 : kNaN;
    rep.z_expanded = red_shift_expanded(rep);
    return rep;
}

double red_shift(const DopplerReport& report)
{
    if (report.E2 == 0.0) throw NumericalError("red shift undefined: E2 = 0");
    return (report.E2 - report.E1) / report.E2;
}

double red_shift_expanded(const DopplerReport& r)
{
    if (r.E1 == 0.0 || r.V1_sq == 0.0) return kNaN;
    double root = std::sqrt(std::abs(r.p1_sq / (r.E1 * r.E1) - 1.0 / r.V1_sq));
    double braces = r.delta_E21 / r.E1 + r.eps_V1 * r.eps_V2 * r.bracket -
                    r.eps_V2 * r.eps_Q * epsilon(r.E1) * r.omega21 * root;
    if (braces == 0.0) return kNaN;
    return 1.0 - 1.0 / braces;
}

double gr_photon_doppler(double E1, double omega21, double perp_sq, double c)
{
    if (!(c > 0.0)) throw ValidationError("gr_photon_doppler: c must be positive");
    if (perp_sq < 0.0) throw ValidationError("gr_photon_doppler: squared transversal velocity must be non-negative");
    return E1 * (omega21 / c + std::sqrt(1.0 + perp_sq / (c * c)));
}

namespace {

void require_subluminal(const Vec3& v, double c, const char* who)
{
    if (!(v.squaredNorm() < c * c)) throw ValidationError(std::string(who) + " is superluminal");
}

}  // namespace

double sr_doppler(double E1, const Vec3& v, const Vec3& v1, const Vec3& v2, double c)
{
    if (!(c > 0.0)) throw ValidationError("sr_doppler: c must be positive");
    require_subluminal(v1, c, "observer 1");
    require_subluminal(v2, c, "observer 2");
    if (v.squaredNorm() > c * c * (1.0 + 1e-12)) throw ValidationError("particle is superluminal");
    const double c2 = c * c;
    return E1 * std::sqrt((1.0 - v1.squaredNorm() / c2) / (1.0 - v2.squaredNorm() / c2)) *
           (1.0 - v2.dot(v) / c2) / (1.0 - v1.dot(v) / c2);
}

double sr_photon_doppler(double E0, const Vec3& n, const Vec3& v1, const Vec3& v2, double c)
{
    if (std::abs(n.norm() - 1.0) > 1e-12) throw ValidationError("sr_photon_doppler: n must be a unit vector");
    // E0 is the emitted energy (observer 2); invert the constant-velocity relation for observer 1.
    double ratio = sr_doppler(1.0, c * n, v1, v2, c);
    return E0 / ratio;
}

double check_free_particle(const DopplerScenario& scn, int samples)
{
    if (samples < 2) samples = 2;
    const double a = scn.observed.begin();
    const double b = scn.observed.end();
    if (a == b) return 0.0;
    std::vector<double> params;
    for (int i = 0; i < samples; ++i) params.push_back(a + (b - a) * i / (samples - 1));
    std::vector<std::pair<double, double>> pairs;
    for (std::size_t i = 0; i + 1 < params.size(); ++i) pairs.emplace_back(params[i], params[i + 1]);
    pairs.emplace_back(params.front(), params.back());

    double worst = 0.0;
    for (auto [r, rp] : pairs) {
        TangentVector carried = transport(scn.engine, scn.observed, r, rp, momentum_at(scn, r));
        TangentVector target = momentum_at(scn, rp);
        worst = std::max(worst, (target.components - carried.components).norm());
    }
    return worst;
}

double mass_parameter(const DopplerScenario& scn, double r)
{
    TangentVector p = momentum_at(scn, r);
    TangentVector tangent = scn.observed.tangent(r);
    double tt = tangent.components.squaredNorm();
    if (tt == 0.0) throw ValidationError("mass_parameter: path tangent vanishes");
    double mu = tangent.components.dot(p.components) / tt;
    double off = (p.components - mu * tangent.components).norm();
    if (off > 1e-6 * std::max(1.0, p.components.norm()))
        throw ValidationError("mass_parameter: momentum is not collinear with the path tangent");
    return mu;
}

ReversalCheck delta_p_reversal(const DopplerScenario& scn)
{
    TangentVector p1 = momentum_at(scn, scn.r1);
    TangentVector p2 = momentum_at(scn, scn.r2);
    const Matrix to_first = propagator(scn.engine, scn.observed, scn.r2, scn.r1);
    const Matrix to_second = propagator(scn.engine, scn.observed, scn.r1, scn.r2);

    Vector forward = p2.components - to_second * p1.components; // Δp(r₁, r₂) at γ(r₂)
    Vector backward = p1.components - to_first * p2.components; // Δp(r₂, r₁) at γ(r₁)
    Vector carried = to_first * forward;

    ReversalCheck out;
    out.residual = (backward + carried).norm();
    out.unsigned_residual = (backward - carried).norm();

    TangentVector V2 = observer_velocity(scn, 2);
    Vector V21 = to_first * V2.components;
    Matrix g1 = scn.metric.at(p1.base.coords);
    Matrix g2 = scn.metric.at(p2.base.coords);
    double eps2 = epsilon(dot(g2, V2.components, V2.components));
    double direct = eps2 * dot(g2, forward, V2.components);
    double reversed = -eps2 * dot(g1, backward, V21);
    out.energy_residual = std::abs(reversed - direct);
    return out;
}

std::pair<double, double> solve_intersection(const WorldLine& observed, const WorldLine& observer, double r_guess,
                                             double s_guess)
{
    auto clamp_to = [](const WorldLine& l, double t) { return std::clamp(t, l.begin(), l.end()); };
    double r = clamp_to(observed, r_guess);
    double s = clamp_to(observer, s_guess);
    auto residual = [&](double rr, double ss) {
        return Vector(observed.position(rr).coords - observer.position(ss).coords);
    };
    Vector F = residual(r, s);
    for (int iter = 0; iter < 200; ++iter) {
        double scale = std::max(1.0, observed.position(r).coords.cwiseAbs().maxCoeff());
        if (F.norm() <= 1e-13 * scale) break;
        Matrix J(F.size(), 2);
        J.col(0) = observed.tangent(r).components;
        J.col(1) = -observer.tangent(s).components;
        Eigen::Vector2d step = J.colPivHouseholderQr().solve(-F);
        double lambda = 1.0;
        bool improved = false;
        while (lambda > 1e-8) {
            double rn = clamp_to(observed, r + lambda * step[0]);
            double sn = clamp_to(observer, s + lambda * step[1]);
            Vector Fn = residual(rn, sn);
            if (Fn.norm() < F.norm()) {
                r = rn;
                s = sn;
                F = Fn;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if (!improved) break;
    }
    double scale = std::max(1.0, observed.position(r).coords.cwiseAbs().maxCoeff());
    if (F.norm() > 1e-10 * scale)
        throw ValidationError("intersection: paths do not meet near the given guess (distance " +
                              std::to_string(F.norm()) + ")");
    return {r, s};
}

}  // namespace tdop
