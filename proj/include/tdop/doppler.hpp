#pragma once

#include <Eigen/Dense>
#include <utility>
#include <variant>

#include "tdop/transport.hpp"

/// Relative energies of a point particle seen by two observers whose world
/// lines cross the particle's world line γ, related through a transport
/// along γ.
///
/// Conventions: observer a crosses γ at γ(r_a) = x_a(s_a); V_a is the
/// tangent of x_a there; p(r) is the particle momentum; (V₂)₁ is V₂ carried
/// back to γ(r₁). Relative energy is E = ε(V²) p·V with ε(λ) = +1 for λ > 0
/// and −1 otherwise.
namespace tdop {

/// Momentum given by component expressions in the observed-line parameter.
struct ExplicitMomentum {
    std::vector<expr::Expression> components;
};

/// Momentum transported from p0 at γ(r0): a free particle.
struct FreeMomentum {
    Vector p0;
    double r0 = 0.0;
};

/// p(r) = μ(r) γ̇(r).
struct MassMomentum {
    expr::Expression mu;
};

using MomentumSpec = std::variant<ExplicitMomentum, FreeMomentum, MassMomentum>;

struct DopplerTolerances {
    double coincidence = 1e-8;   // γ(r_a) vs x_a(s_a), per coordinate
    double collinearity = 1e-10; // relative, for N₁ = 0
    double nullity = 1e-10;      // relative, for (V₁)² = 0
    double isometry = 1e-6;      // refusal threshold for linear engines
    double radical = 1e-9;       // bracket-squared vs radicand cross-check
};

struct DopplerScenario {
    MetricField metric;
    TransportEngine engine;
    WorldLine observed;
    WorldLine observer1;
    WorldLine observer2;
    double r1 = 0.0;
    double s1 = 0.0;
    double r2 = 0.0;
    double s2 = 0.0;
    MomentumSpec momentum;
    double c = 1.0;
    DopplerTolerances tol;
};

/// Checks dimensions, parameter ranges and both intersections.
void validate(const DopplerScenario& scn);

/// p(r), based at γ(r).
TangentVector momentum_at(const DopplerScenario& scn, double r);
/// V_a (a = 1, 2), rebased onto γ(r_a).
TangentVector observer_velocity(const DopplerScenario& scn, int observer);

double relative_energy(const MetricField& g, const TangentVector& p, const TangentVector& V);

/// (V₂)₁ = I_{r₂→r₁} V₂.
TangentVector transported_velocity(const DopplerScenario& scn);
/// Δp(r₁, r₂) = p₂ − I_{r₁→r₂} p₁, based at γ(r₂).
TangentVector momentum_change(const DopplerScenario& scn);
/// ΔE₂₁ = ε((V₂)²) Δp(r₁, r₂)·V₂.
double energy_change(const DopplerScenario& scn);
/// E(r, r₂) = ε((V₂)²) (I_{r→r₂} p(r))·V₂.
double energy_along(const DopplerScenario& scn, double r);

struct Decomposition {
    TangentVector parallel;
    TangentVector perpendicular;
};

/// Split `target` into parts along and orthogonal to `base`. Throws
/// NullObserverError when (base)² vanishes within `nullity`.
Decomposition decompose(const MetricField& g, const TangentVector& base, const TangentVector& target,
                        double nullity = 1e-10);

/// The unit normal N₁ in span{V₁, p₁}: N₁·V₁ = 0, (N₁)² = ε(Q), N₁·p₁ < 0
/// with Q = (p₁)² − E₁²/(V₁)². Exactly zero when |Q| is within the
/// collinearity tolerance.
TangentVector normal_vector(const MetricField& g, const TangentVector& p1, const TangentVector& V1, double E1,
                            double collinearity = 1e-10, double nullity = 1e-10);

/// ω₂₁ = (V₂)₁·N₁.
double recession_speed(const MetricField& g, const TangentVector& V21, const TangentVector& N1);

struct DopplerReport {
    TangentVector p1, p2, V1, V2, V21, V21_parallel, V21_perp, N1, delta_p;

    double E1 = 0.0;         // ε((V₁)²) p₁·V₁
    double E2 = 0.0;         // ε((V₂)²) p₂·V₂, direct
    double E2_formula = 0.0; // generalized Doppler assembly
    double delta_E21 = 0.0;
    double omega21 = 0.0;

    double V1_sq = 0.0, V2_sq = 0.0, V21_sq = 0.0, perp_sq = 0.0, p1_sq = 0.0;
    double Q = 0.0;                    // (p₁)² − E₁²/(V₁)²
    double eps_V1 = 0.0, eps_V2 = 0.0, eps_Q = 0.0;
    double bracket = 0.0;              // V₁·(V₂)₁ / (V₁)², signed
    double bracket_radical = 0.0;      // [((V₂)₁)² − ((V₂)⊥₁)²)/(V₁)²]^{1/2}

    double z = 0.0;                    // (E₂ − E₁)/E₂ from the energies
    double z_expanded = 0.0;           // expanded red-shift form, from the report terms
    double residual = 0.0;             // |E2_formula − E2|
    double transfer_residual = 0.0;         // |ΔE₂₁ + ε((V₂)²) p₁·(V₂)₁ − E2|
};

/// Runs the whole pipeline. Refuses (InconsistentTransportError) linear
/// engines that fail the isometry spot check.
DopplerReport doppler_energy(const DopplerScenario& scn);

/// (E₂ − E₁)/E₂. Throws NumericalError when E₂ = 0.
double red_shift(const DopplerReport& report);
/// The expanded red-shift form evaluated from the report's own terms.
double red_shift_expanded(const DopplerReport& report);

/// Photon in a Lorentzian spacetime seen by two observers with (V)² = −c²:
/// E₂ = E₁ [ω₂₁/c + (1 + ((V₂)⊥₁)²/c²)^{1/2}].
double gr_photon_doppler(double E1, double omega21, double perp_sq, double c = 1.0);

using Vec3 = Eigen::Vector3d;

/// Special relativity, constant 3-velocities: particle v, observers v1, v2.
double sr_doppler(double E1, const Vec3& v, const Vec3& v1, const Vec3& v2, double c = 1.0);
/// Energy detected by observer 1 for a photon along unit n emitted with
/// energy E0 by observer 2.
double sr_photon_doppler(double E0, const Vec3& n, const Vec3& v1, const Vec3& v2, double c = 1.0);

/// Refuses linear engines whose isometry violation exceeds the tolerance.
void require_consistent_transport(const DopplerScenario& scn);

/// max over sampled pairs of ‖p(r′) − I_{r→r′} p(r)‖ (Euclidean, components).
double check_free_particle(const DopplerScenario& scn, int samples = 8);

/// μ with p(r) = μ γ̇(r) (least squares over components). Throws
/// ValidationError when p is not collinear with γ̇.
double mass_parameter(const DopplerScenario& scn, double r);

struct ReversalCheck {
    double residual = 0.0;         // ‖Δp(r₂,r₁) + I_{r₂→r₁} Δp(r₁,r₂)‖
    double energy_residual = 0.0;  // |−ε((V₂)²) Δp(r₂,r₁)·(V₂)₁ − ΔE₂₁|
    double unsigned_residual = 0.0; // ‖Δp(r₂,r₁) − I_{r₂→r₁} Δp(r₁,r₂)‖
};

ReversalCheck delta_p_reversal(const DopplerScenario& scn);

/// Locate (r, s) with γ(r) = x(s) by damped Gauss–Newton from a guess.
std::pair<double, double> solve_intersection(const WorldLine& observed, const WorldLine& observer, double r_guess,
                                             double s_guess);

}  // namespace tdop
