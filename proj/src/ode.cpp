#include "tdop/ode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace tdop::ode {

namespace {

constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;

constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                 a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                 a65 = -5103.0 / 18656.0;
constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0, a75 = -2187.0 / 6784.0,
                 a76 = 11.0 / 84.0;

constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0, e5 = -17253.0 / 339200.0,
                 e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

constexpr double safety = 0.9;
constexpr double beta = 0.04;
constexpr double expo1 = 0.2 - beta * 0.75;
constexpr double grow_limit = 1.0 / 0.2;  // step may shrink by at most 5x
constexpr double shrink_limit = 1.0 / 10.0; // and grow by at most 10x
constexpr int max_rhs_failures = 60;

double error_norm(const Vector& err, const Vector& y0, const Vector& y1, const Tolerances& tol)
{
    double sum = 0.0;
    for (Eigen::Index i = 0; i < err.size(); ++i) {
        double sc = tol.abs + tol.rel * std::max(std::abs(y0[i]), std::abs(y1[i]));
        double r = err[i] / sc;
        sum += r * r;
    }
    return std::sqrt(sum / static_cast<double>(std::max<Eigen::Index>(err.size(), 1)));
}

double initial_step(const Rhs& f, double t0, const Vector& y0, const Vector& f0, double direction,
                    double hmax, const Tolerances& tol, std::size_t& evaluations)
{
    double dnf = 0.0, dny = 0.0;
    for (Eigen::Index i = 0; i < y0.size(); ++i) {
        double sk = tol.abs + tol.rel * std::abs(y0[i]);
        dnf += (f0[i] / sk) * (f0[i] / sk);
        dny += (y0[i] / sk) * (y0[i] / sk);
    }
    double h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : std::sqrt(dny / dnf) * 0.01;
    h = std::min(h, hmax);

    Vector f1(y0.size());
    for (int attempt = 0;; ++attempt) {
        try {
            f(t0 + direction * h, y0 + direction * h * f0, f1);
            ++evaluations;
            break;
        } catch (const NumericalError&) {
            if (attempt > max_rhs_failures) throw;
            h *= 0.1;
        }
    }
    double der2 = 0.0;
    for (Eigen::Index i = 0; i < y0.size(); ++i) {
        double sk = tol.abs + tol.rel * std::abs(y0[i]);
        double r = (f1[i] - f0[i]) / sk;
        der2 += r * r;
    }
    der2 = std::sqrt(der2) / h;
    double der12 = std::max(std::abs(der2), std::sqrt(dnf));
    double h1 = der12 <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 0.2);
    return std::min({100.0 * h, h1, hmax});
}

}  // namespace

void DenseOutput::append(double t0, double h, Matrix coefficients)
{
    segments_.push_back(Segment{t0, h, std::move(coefficients)});
    t_end_ = t0 + h;
}

std::vector<double> DenseOutput::knots() const
{
    std::vector<double> out{t_begin_};
    for (const auto& s : segments_) out.push_back(s.t0 + s.h);
    return out;
}

const DenseOutput::Segment& DenseOutput::locate(double t) const
{
    const double lo = std::min(t_begin_, t_end_);
    const double hi = std::max(t_begin_, t_end_);
    const double slack = 1e-12 * std::max({1.0, std::abs(lo), std::abs(hi)});
    if (t < lo - slack || t > hi + slack)
        throw ParameterRangeError("parameter " + std::to_string(t) + " outside dense output range [" +
                                  std::to_string(lo) + ", " + std::to_string(hi) + "]");
    const bool forward = t_end_ >= t_begin_;
    // segments are ordered along the integration direction
    auto it = std::partition_point(segments_.begin(), segments_.end(), [&](const Segment& s) {
        double end = s.t0 + s.h;
        return forward ? end < t : end > t;
    });
    if (it == segments_.end()) return segments_.back();
    return *it;
}

Vector DenseOutput::value(double t) const
{
    if (segments_.empty()) {
        locate(t); // range check only
        return y_begin_;
    }
    const Segment& s = locate(t);
    const double th = (t - s.t0) / s.h;
    const double b = 1.0 - th;
    return s.r.col(0) + th * (s.r.col(1) + b * (s.r.col(2) + th * (s.r.col(3) + b * s.r.col(4))));
}

Vector DenseOutput::derivative(double t) const
{
    if (segments_.empty()) throw ParameterRangeError("derivative of a zero-length dense output");
    const Segment& s = locate(t);
    const double th = (t - s.t0) / s.h;
    const double b = 1.0 - th;
    Vector d = s.r.col(1) + (b - th) * s.r.col(2) + (2.0 * th * b - th * th) * s.r.col(3) +
               (2.0 * th * b * b - 2.0 * th * th * b) * s.r.col(4);
    return d / s.h;
}

Result integrate(const Rhs& f, double t0, const Vector& y0, double t1, const Options& options)
{
    Result result;
    result.y = y0;
    if (options.dense) result.dense.emplace(t0, y0);
    if (t1 == t0) return result;

    const Tolerances& tol = options.tol;
    const auto n = y0.size();
    const double direction = t1 > t0 ? 1.0 : -1.0;
    const double span = std::abs(t1 - t0);
    const double hmax = options.max_step > 0.0 ? std::min(options.max_step, span) : span;
    const double eps = std::numeric_limits<double>::epsilon();

    Vector k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), y1(n), ystage(n), err(n);
    f(t0, y0, k1);
    ++result.evaluations;

    double t = t0;
    Vector y = y0;
    double h = direction * initial_step(f, t0, y0, k1, direction, hmax, tol, result.evaluations);
    double facold = 1e-4;
    bool last_rejected = false;
    int rhs_failures = 0;

    for (std::size_t step = 0;; ++step) {
        if (step >= options.max_steps)
            throw OdeError("ODE: maximum number of steps exceeded at t = " + std::to_string(t));
        if (std::abs(h) <= 10.0 * eps * std::max(1.0, std::abs(t)))
            throw OdeError("ODE: step size underflow at t = " + std::to_string(t) + " (tolerance unreachable)");

        bool last = false;
        if ((t + 1.01 * h - t1) * direction >= 0.0) {
            h = t1 - t;
            last = true;
        }

        try {
            ystage = y + h * a21 * k1;
            f(t + c2 * h, ystage, k2);
            ystage = y + h * (a31 * k1 + a32 * k2);
            f(t + c3 * h, ystage, k3);
            ystage = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
            f(t + c4 * h, ystage, k4);
            ystage = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
            f(t + c5 * h, ystage, k5);
            ystage = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
            f(t + h, ystage, k6);
            y1 = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
            f(t + h, y1, k7);
            result.evaluations += 6;
        } catch (const NumericalError& e) {
            if (++rhs_failures > max_rhs_failures)
                throw OdeError(std::string("ODE: right-hand side failed near t = ") + std::to_string(t) + ": " +
                               e.what());
            h *= 0.5;
            last_rejected = true;
            ++result.rejected;
            continue;
        }

        err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        double errn = error_norm(err, y, y1, tol);
        if (!std::isfinite(errn)) errn = 1e10;

        double fac11 = std::pow(errn, expo1);
        double fac = fac11 / std::pow(facold, beta);
        fac = std::max(shrink_limit, std::min(grow_limit, fac / safety));
        double hnew = h / fac;

        if (errn <= 1.0) {
            facold = std::max(errn, 1e-4);
            ++result.accepted;
            rhs_failures = 0;
            if (result.dense) {
                Matrix r(n, 5);
                Vector ydiff = y1 - y;
                Vector bspl = h * k1 - ydiff;
                r.col(0) = y;
                r.col(1) = ydiff;
                r.col(2) = bspl;
                r.col(3) = ydiff - h * k7 - bspl;
                r.col(4) = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
                result.dense->append(t, h, std::move(r));
            }
            k1 = k7;
            y = y1;
            if (last) {
                t = t1;
                break;
            }
            t += h;
            if (std::abs(hnew) > hmax) hnew = direction * hmax;
            if (last_rejected) hnew = direction * std::min(std::abs(hnew), std::abs(h));
            last_rejected = false;
            h = hnew;
        } else {
            h = h / std::min(grow_limit, fac11 / safety);
            last_rejected = true;
            ++result.rejected;
        }
    }
    result.y = y;
    return result;
}

}  // namespace tdop::ode
