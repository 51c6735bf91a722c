#include "tdop/geometry.hpp"

#include <cmath>
#include <limits>

namespace tdop {

namespace {

Matrix inverse_checked(const Matrix& g)
{
    Eigen::FullPivLU<Matrix> lu(g);
    double scale = g.cwiseAbs().maxCoeff();
    double floor = kDegeneracyFloor * std::pow(scale, static_cast<double>(g.rows()));
    if (!lu.isInvertible() || std::abs(lu.determinant()) < floor || scale == 0.0)
        throw DegenerateMetricError("degenerate metric: |det g| = " + std::to_string(std::abs(lu.determinant())));
    return lu.inverse();
}

Christoffel assemble(const Matrix& ginv, const std::vector<Matrix>& dg)
{
    const auto n = static_cast<std::size_t>(ginv.rows());
    Christoffel gamma(n);
    // first kind: [ij,l] = ½(∂_i g_jl + ∂_j g_il − ∂_l g_ij)
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            for (std::size_t k = 0; k < n; ++k) {
                double sum = 0.0;
                for (std::size_t l = 0; l < n; ++l) {
                    double first = 0.5 * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
                    sum += ginv(k, l) * first;
                }
                gamma(k, i, j) = sum;
                gamma(k, j, i) = sum;
            }
        }
    }
    return gamma;
}

}  // namespace

TangentVector::TangentVector(Point at, Vector comps) : base(std::move(at)), components(std::move(comps))
{
    if (base.coords.size() != components.size())
        throw ValidationError("tangent vector components do not match base point dimension");
}

bool same_point(const Vector& a, const Vector& b, double tol)
{
    if (a.size() != b.size()) return false;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        double scale = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
        if (!(std::abs(a[i] - b[i]) <= tol * scale)) return false;
    }
    return true;
}

void require_same_base(const TangentVector& a, const TangentVector& b, const char* context)
{
    if (!same_point(a.base.coords, b.base.coords))
        throw BaseMismatchError(std::string(context) + ": vectors are based at different points");
}

MetricField::MetricField(std::vector<std::string> coordinates,
                         std::vector<std::vector<expr::Expression>> components)
    : coords_(std::move(coordinates)), components_(std::move(components))
{
    const std::size_t n = coords_.size();
    if (n == 0) throw ValidationError("metric: dimension must be positive");
    if (components_.size() != n) throw ValidationError("metric: component matrix must be n x n");
    for (const auto& row : components_) {
        if (row.size() != n) throw ValidationError("metric: component matrix must be n x n");
        for (const auto& e : row)
            if (e.variables() != coords_)
                throw ValidationError("metric: components must be expressions in the coordinates");
    }
    derivatives_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        derivatives_[k].resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            derivatives_[k][i].reserve(n);
            for (std::size_t j = 0; j < n; ++j)
                derivatives_[k][i].push_back(expr::differentiate(components_[i][j], coords_[k]));
        }
    }
}

MetricField::MetricField(std::vector<std::string> coordinates, Tabulated tabulated)
    : coords_(std::move(coordinates)), tabulated_(std::move(tabulated))
{
    if (coords_.empty()) throw ValidationError("metric: dimension must be positive");
    if (!tabulated_) throw ValidationError("metric: empty tabulated function");
}

Matrix MetricField::evaluate_raw(const Vector& x) const
{
    const auto n = static_cast<Eigen::Index>(dimension());
    if (x.size() != n) throw ValidationError("metric: point dimension does not match chart dimension");
    if (!is_symbolic()) {
        Matrix g = tabulated_(x);
        if (g.rows() != n || g.cols() != n) throw ValidationError("metric: tabulated function returned wrong shape");
        return g;
    }
    Matrix g(n, n);
    std::span<const double> values(x.data(), static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            g(i, j) = components_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].eval(values);
    return g;
}

Matrix MetricField::at(const Vector& x) const
{
    Matrix g = evaluate_raw(x);
    double scale = g.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < g.rows(); ++i)
        for (Eigen::Index j = i + 1; j < g.cols(); ++j)
            if (std::abs(g(i, j) - g(j, i)) > 1e-12 * scale)
                throw ValidationError("metric: components are not symmetric at the evaluated point");
    double floor = kDegeneracyFloor * std::pow(scale, static_cast<double>(g.rows()));
    double det = g.determinant();
    if (scale == 0.0 || !(std::abs(det) >= floor))
        throw DegenerateMetricError("degenerate metric: |det g| = " + std::to_string(std::abs(det)) +
                                    " below floor " + std::to_string(floor));
    return g;
}

Matrix MetricField::partial(std::size_t k, const Vector& x) const
{
    if (!is_symbolic()) throw ValidationError("metric: symbolic derivatives requested for tabulated metric");
    const auto n = static_cast<Eigen::Index>(dimension());
    Matrix d(n, n);
    std::span<const double> values(x.data(), static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            d(i, j) = derivatives_[k][static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].eval(values);
    return d;
}

Matrix metric_at(const MetricField& g, const Point& x) { return g.at(x.coords); }

double scalar_product(const MetricField& g, const TangentVector& X, const TangentVector& Y)
{
    require_same_base(X, Y, "scalar_product");
    return dot(g.at(X.base.coords), X.components, Y.components);
}

Christoffel christoffel_at(const MetricField& g, const Point& x)
{
    if (!g.is_symbolic()) return christoffel_fd(g, x);
    Matrix ginv = inverse_checked(g.at(x.coords));
    std::vector<Matrix> dg;
    dg.reserve(g.dimension());
    for (std::size_t k = 0; k < g.dimension(); ++k) dg.push_back(g.partial(k, x.coords));
    return assemble(ginv, dg);
}

Christoffel christoffel_fd(const MetricField& g, const Point& x)
{
    Matrix ginv = inverse_checked(g.at(x.coords));
    const double root = std::cbrt(std::numeric_limits<double>::epsilon());
    std::vector<Matrix> dg;
    dg.reserve(g.dimension());
    for (std::size_t k = 0; k < g.dimension(); ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        double h = root * std::max(1.0, std::abs(x.coords[kk]));
        Vector plus = x.coords, minus = x.coords;
        plus[kk] += h;
        minus[kk] -= h;
        double width = plus[kk] - minus[kk];
        dg.push_back((g.at(plus) - g.at(minus)) / width);
    }
    return assemble(ginv, dg);
}

std::string signature_at(const MetricField& g, const Point& x)
{
    Eigen::SelfAdjointEigenSolver<Matrix> solver(g.at(x.coords));
    std::string sig;
    for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i)
        sig += solver.eigenvalues()[i] > 0.0 ? '+' : '-';
    return sig;
}

}  // namespace tdop
