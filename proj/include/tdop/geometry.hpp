#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "tdop/expr.hpp"

namespace tdop {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Coordinates of a point in the single chart.
struct Point {
    Vector coords;

    std::size_t dimension() const { return static_cast<std::size_t>(coords.size()); }
};

/// Element of T_x(M): components in the coordinate basis at `base`.
struct TangentVector {
    Point base;
    Vector components;

    TangentVector() = default;
    TangentVector(Point at, Vector comps);

    std::size_t dimension() const { return base.dimension(); }
};

/// Coincidence test for base points: |a_i - b_i| <= tol * max(1, |a_i|, |b_i|).
bool same_point(const Vector& a, const Vector& b, double tol = 1e-8);
void require_same_base(const TangentVector& a, const TangentVector& b, const char* context);

/// Γ^k_ij stored densely, k outermost.
class Christoffel {
public:
    explicit Christoffel(std::size_t n) : n_(n), data_(n * n * n, 0.0) {}

    std::size_t dimension() const { return n_; }
    double& operator()(std::size_t k, std::size_t i, std::size_t j) { return data_[(k * n_ + i) * n_ + j]; }
    double operator()(std::size_t k, std::size_t i, std::size_t j) const { return data_[(k * n_ + i) * n_ + j]; }

private:
    std::size_t n_;
    std::vector<double> data_;
};

/// A symmetric, nondegenerate bilinear form on each tangent space of the chart.
///
/// Either symbolic (component expressions in the coordinate names, with
/// cached exact partial derivatives) or tabulated (an arbitrary callable,
/// whose derivatives fall back to central differences).
class MetricField {
public:
    using Tabulated = std::function<Matrix(const Vector&)>;

    /// `components` is n×n; entries are expressions over `coordinates`.
    MetricField(std::vector<std::string> coordinates, std::vector<std::vector<expr::Expression>> components);
    MetricField(std::vector<std::string> coordinates, Tabulated tabulated);

    std::size_t dimension() const { return coords_.size(); }
    const std::vector<std::string>& coordinates() const { return coords_; }
    bool is_symbolic() const { return !components_.empty(); }
    const expr::Expression& component(std::size_t i, std::size_t j) const { return components_.at(i).at(j); }

    /// g_ij(x), checked for symmetry and against the degeneracy floor.
    Matrix at(const Vector& x) const;
    /// ∂_k g_ij(x) from the symbolic derivatives. Symbolic metrics only.
    Matrix partial(std::size_t k, const Vector& x) const;

private:
    Matrix evaluate_raw(const Vector& x) const;

    std::vector<std::string> coords_;
    std::vector<std::vector<expr::Expression>> components_;
    std::vector<std::vector<std::vector<expr::Expression>>> derivatives_;  // [k][i][j]
    Tabulated tabulated_;
};

/// |det g| >= floor_factor * (max|g_ij|)^n
inline constexpr double kDegeneracyFloor = 1e-12;

Matrix metric_at(const MetricField& g, const Point& x);

/// g_x(X, Y). Throws BaseMismatchError when the base points differ.
double scalar_product(const MetricField& g, const TangentVector& X, const TangentVector& Y);
/// X^T G Y for an already evaluated metric matrix.
inline double dot(const Matrix& g, const Vector& X, const Vector& Y) { return X.dot(g * Y); }

/// +1 for lambda > 0, -1 for lambda <= 0.
constexpr double epsilon(double lambda) { return lambda > 0.0 ? 1.0 : -1.0; }

/// Levi-Civita connection coefficients. Uses the symbolic derivatives when
/// available, central differences otherwise.
Christoffel christoffel_at(const MetricField& g, const Point& x);
/// Central-difference route, available for every metric.
Christoffel christoffel_fd(const MetricField& g, const Point& x);

/// Sign pattern of the eigenvalues, e.g. "-+++" (sorted ascending).
std::string signature_at(const MetricField& g, const Point& x);

}  // namespace tdop
