#include "evans/ode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

namespace evans {

namespace {

const double kSqrt15 = std::sqrt(15.0);
const double kNodes[3] = {0.5 - kSqrt15 / 10.0, 0.5, 0.5 + kSqrt15 / 10.0};

CMatrix commutator(const CMatrix& a, const CMatrix& b) { return a * b - b * a; }

double maxColumnNorm(const CMatrix& m) {
    double norm = 0.0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) norm = std::max(norm, m.col(j).norm());
    return norm;
}

}  // namespace

CMatrix magnusExponent(const CMatrix& a1, const CMatrix& a2, const CMatrix& a3, double h, double* errorEstimate) {
    // Sixth-order Magnus expansion on three Gauss nodes (Blanes-Casas-Ros form).
    const CMatrix alpha1 = h * a2;
    const CMatrix alpha2 = (kSqrt15 * h / 3.0) * (a3 - a1);
    const CMatrix alpha3 = (10.0 * h / 3.0) * (a3 - 2.0 * a2 + a1);
    const CMatrix c1 = commutator(alpha1, alpha2);
    const CMatrix c2 = (-1.0 / 60.0) * commutator(alpha1, 2.0 * alpha3 + c1);
    const CMatrix omega =
        alpha1 + alpha3 / 12.0 + (1.0 / 240.0) * commutator(-20.0 * alpha1 - alpha3 + c1, alpha2 + c2);
    if (errorEstimate) {
        const CMatrix omega4 = alpha1 + alpha3 / 12.0 - c1 / 12.0;
        *errorEstimate = (omega - omega4).norm();
    }
    return omega;
}

namespace {

constexpr double kLn2 = 0.69314718055994530942;

// Power-of-two rescale of one column (or all columns at once) so its norm
// lands in [1, 2); returns the log shift.
double rescale(CMatrix& m, Eigen::Index col, bool whole) {
    const double norm = whole ? maxColumnNorm(m) : m.col(col).norm();
    if (norm == 0.0 || !std::isfinite(norm)) return 0.0;
    int e = 0;
    std::frexp(norm, &e);
    const int shift = e - 1;
    if (shift == 0) return 0.0;
    if (whole) m *= std::ldexp(1.0, -shift);
    else m.col(col) *= std::ldexp(1.0, -shift);
    return shift * kLn2;
}

}  // namespace

Propagation propagate(const CoefficientMap& coeff, double x0, double x1, const NumericPolicy& policy,
                      const PropagateOptions& opts) {
    Propagation out;
    out.x0 = x0;
    out.x1 = x1;
    const CMatrix probe = coeff(x0);
    const auto n = probe.rows();
    CMatrix y = opts.initial ? *opts.initial : CMatrix::Identity(n, n);
    const auto k = y.cols();
    std::vector<double> logs(k, 0.0);
    // A right shift mixes columns, so those runs share one scale. Otherwise
    // Y = Q T with Q orthonormal and T upper triangular, re-factored every
    // step: columns keep separate scales and det Y = det Q prod T_jj avoids
    // the cancellation of det on nearly parallel columns.
    const bool common = opts.rightShift.has_value();
    CMatrix q, t;
    auto refactor = [&](const CMatrix& z) {
        Eigen::HouseholderQR<CMatrix> qr(z);
        q = qr.householderQ() * CMatrix::Identity(n, k);
        return CMatrix(qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>());
    };
    if (!common) {
        t = refactor(y);
        y.resize(0, 0);
    }
    auto normalizeAll = [&](bool force) {
        if (common) {
            const double norm = maxColumnNorm(y);
            if (force || norm < 0.5 || norm > 4.0) {
                const double s = rescale(y, 0, true);
                for (auto& l : logs) l += s;
            }
            return;
        }
        for (Eigen::Index j = 0; j < k; ++j) {
            const double norm = t.col(j).norm();
            if (force || norm < 0.5 || norm > 4.0) logs[j] += rescale(t, j, false);
        }
    };
    auto current = [&]() { return common ? y : CMatrix(q * t); };
    auto determinant = [&]() -> ScaledValue {
        if (common || k != n) return {};
        ScaledValue d = scaledDet(q);
        for (Eigen::Index j = 0; j < k; ++j) d *= ScaledValue(t(j, j), logs[j]);
        return d;
    };
    auto snapshot = [&]() {
        double top = -std::numeric_limits<double>::infinity();
        for (auto l : logs) top = std::max(top, l);
        if (k == 0) top = 0.0;
        ScaledMatrix m(current(), top);
        for (Eigen::Index j = 0; j < k; ++j) m.mantissa.col(j) *= std::exp(logs[j] - top);
        return m;
    };
    auto sample = [&](double x) { return GridSample{x, snapshot(), determinant()}; };
    normalizeAll(true);
    if (opts.storeGrid) out.grid.push_back(sample(x0));

    const double length = x1 - x0;
    auto finish = [&]() {
        normalizeAll(true);
        out.result = snapshot();
        out.result.renormalize();
        out.columnMantissa = current();
        out.columnLog = logs;
        if (!common && k == n) out.det = determinant();
    };
    if (length == 0.0) {
        finish();
        return out;
    }
    const double direction = length > 0 ? 1.0 : -1.0;

    auto advance = [&](double x, double h, double* err) {
        const CMatrix a1 = coeff(x + kNodes[0] * h);
        const CMatrix a2 = coeff(x + kNodes[1] * h);
        const CMatrix a3 = coeff(x + kNodes[2] * h);
        const CMatrix omega = magnusExponent(a1, a2, a3, h, err);
        const Complex tr = h * (5.0 / 18.0 * a1.trace() + 4.0 / 9.0 * a2.trace() + 5.0 / 18.0 * a3.trace());
        return std::make_pair(CMatrix(omega.exp()), tr);
    };
    auto accept = [&](const CMatrix& e, Complex tr, double h) {
        if (common) {
            y = e * y * CMatrix((-h * *opts.rightShift).exp());
        } else {
            const CMatrix r = refactor(e * q);
            t = r * t;
        }
        out.trIntegral += tr;
        ++out.stepCount;
        normalizeAll(false);
    };

    if (policy.fixedGrid) {
        const int steps = std::max(1, static_cast<int>(std::ceil(std::abs(length) / policy.step - 1e-9)));
        const double h = length / steps;
        for (int s = 0; s < steps; ++s) {
            const double x = x0 + s * h;
            double err = 0.0;
            auto [e, tr] = advance(x, h, &err);
            if (err > policy.fixedGridErrorLimit) {
                std::ostringstream os;
                os << "propagate: local error " << err << " at x = " << x << " exceeds the fixed-grid limit; "
                   << "use a finer grid (smaller step)";
                throw NumericError(os.str());
            }
            out.maxLocalError = std::max(out.maxLocalError, err);
            accept(e, tr, h);
            if (opts.storeGrid) out.grid.push_back(sample(x0 + (s + 1) * h));
        }
        finish();
        return out;
    }

    // Adaptive mode: same exponent, step controlled by the embedded estimate.
    double x = x0;
    double h = direction * std::min(policy.step, std::abs(length));
    while (direction * (x1 - x) > 0.0) {
        if (direction * (x + h - x1) > 0.0) h = x1 - x;
        double err = 0.0;
        auto [e, tr] = advance(x, h, &err);
        const double tol = policy.absTol + policy.relTol * std::max(1.0, e.norm());
        if (err <= tol) {
            x += h;
            out.maxLocalError = std::max(out.maxLocalError, err);
            accept(e, tr, h);
            if (opts.storeGrid) out.grid.push_back(sample(x));
        }
        const double factor = err > 0.0 ? 0.9 * std::pow(tol / err, 1.0 / 5.0) : 4.0;
        h *= std::clamp(factor, 0.2, 4.0);
        if (std::abs(h) < policy.minStep) {
            std::ostringstream os;
            os << "propagate: step size underflow at x = " << x;
            throw NumericError(os.str());
        }
    }
    finish();
    return out;
}

ScaledValue Propagation::determinant() const {
    if (det) return *det;
    ScaledValue d = scaledDet(columnMantissa);
    double total = 0.0;
    for (auto l : columnLog) total += l;
    return d * ScaledValue::exp(total);
}

ScaledMatrix monodromy(const CoefficientMap& coeff, double period, const NumericPolicy& policy, Complex* trIntegral) {
    const auto prop = propagate(coeff, -0.5 * period, 0.5 * period, policy);
    if (trIntegral) *trIntegral = prop.trIntegral;
    return prop.result;
}

// ---------------------------------------------------------------- Conjugator

Conjugator::Conjugator(const CoefficientMap& coeff, const CMatrix& ainf, Side side, double halfPeriod,
                       const CMatrix& basis, const NumericPolicy& policy)
    : coeff_(coeff), ainf_(ainf), basis_(basis), side_(side), halfPeriod_(halfPeriod) {
    const auto n = ainf.rows();
    const auto k = basis.cols();
    if (k == 0) {
        xs_ = {0.0, side == Side::Plus ? halfPeriod : -halfPeriod};
        ws_ = {CMatrix(n, 0), CMatrix(n, 0)};
        return;
    }
    // S = (left inverse of R) A_inf R; exact when range(R) is A_inf-invariant.
    const CMatrix leftInv = basis.completeOrthogonalDecomposition().pseudoInverse();
    shift_ = leftInv * ainf * basis;
    if ((ainf * basis - basis * shift_).norm() > 1e-8 * std::max(1.0, ainf.norm()))
        throw NumericError("Conjugator: basis does not span an invariant subspace of A_inf");
    if (k == n) dualFull_ = basis.inverse();

    const double start = side == Side::Plus ? halfPeriod : -halfPeriod;
    NumericPolicy fixed = policy;
    fixed.fixedGrid = true;
    PropagateOptions opts;
    opts.initial = basis;
    opts.rightShift = shift_;
    opts.storeGrid = true;
    const auto prop = propagate(coeff, start, 0.0, fixed, opts);

    // Stored grid runs from the far end inward; keep it ordered by x.
    xs_.reserve(prop.grid.size());
    ws_.reserve(prop.grid.size());
    for (const auto& s : prop.grid) {
        xs_.push_back(s.x);
        ws_.push_back(s.value.value());
    }
    if (side == Side::Plus) {
        std::reverse(xs_.begin(), xs_.end());
        std::reverse(ws_.begin(), ws_.end());
    }
    for (std::size_t i = 0; i < ws_.size(); ++i) {
        if (!ws_[i].allFinite()) {
            std::ostringstream os;
            os << "Conjugator: overflow at x = " << xs_[i];
            throw NumericError(os.str());
        }
        // Invertibility of P on the tracked columns: column rank via normalized singular values.
        CMatrix normalized = ws_[i];
        for (Eigen::Index j = 0; j < normalized.cols(); ++j) normalized.col(j).normalize();
        Eigen::JacobiSVD<CMatrix> svd(normalized);
        const auto& sv = svd.singularValues();
        const double cond = sv(0) / std::max(sv(sv.size() - 1), 1e-300);
        if (cond > policy.conditionLimit) {
            std::ostringstream os;
            os << "Conjugator: loss of invertibility (condition " << cond << ") at x = " << xs_[i];
            throw NumericError(os.str());
        }
    }

    // (H2) spot check: |A - A_inf| should shrink toward the far end.
    const double xa = 0.25 * start, xb = 0.75 * start;
    const double da = (coeff(xa) - ainf).norm(), db = (coeff(xb) - ainf).norm();
    if (db > da && da > 1e-14) {
        std::ostringstream os;
        os << "decay hypothesis: |A - A_inf| grows from " << da << " at x = " << xa << " to " << db << " at x = " << xb;
        warnings_.push_back(os.str());
    }
}

Conjugator Conjugator::full(const CoefficientMap& coeff, const CMatrix& ainf, Side side, double halfPeriod,
                            const NumericPolicy& policy) {
    Eigen::ComplexEigenSolver<CMatrix> solver(ainf);
    CMatrix basis = solver.eigenvectors();
    if (!basis.allFinite() || std::abs(basis.determinant()) < 1e-12) basis = CMatrix::Identity(ainf.rows(), ainf.cols());
    return Conjugator(coeff, ainf, side, halfPeriod, basis, policy);
}

CMatrix Conjugator::derivative(std::size_t i) const {
    return coeff_(xs_[i]) * ws_[i] - ws_[i] * shift_;
}

CMatrix Conjugator::columns(double x) const {
    const auto n = ainf_.rows();
    if (basis_.cols() == 0) return CMatrix(n, 0);
    const bool outside = side_ == Side::Plus ? x >= halfPeriod_ : x <= -halfPeriod_;
    if (outside) return basis_;
    const double lo = xs_.front(), hi = xs_.back();
    if (x < lo - 1e-12 || x > hi + 1e-12) throw NumericError("Conjugator: evaluation on the wrong half-line");
    x = std::clamp(x, lo, hi);
    auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
    std::size_t i = (it == xs_.begin()) ? 0 : static_cast<std::size_t>(it - xs_.begin()) - 1;
    if (i + 1 >= xs_.size()) i = xs_.size() - 2;
    const double h = xs_[i + 1] - xs_[i];
    const double t = (x - xs_[i]) / h;
    const double h00 = (1 + 2 * t) * (1 - t) * (1 - t), h10 = t * (1 - t) * (1 - t);
    const double h01 = t * t * (3 - 2 * t), h11 = t * t * (t - 1);
    return h00 * ws_[i] + (h10 * h) * derivative(i) + h01 * ws_[i + 1] + (h11 * h) * derivative(i + 1);
}

CMatrix Conjugator::matrix(double x) const {
    if (dualFull_.size() == 0) throw NumericError("Conjugator: full matrix requested from a partial basis");
    return columns(x) * dualFull_;
}

double Conjugator::sylvesterResidual() const {
    // Sixth-order centered differences at h and 2h, one Richardson step (eighth order),
    // against the ODE right-hand side. Plain sixth order at h = 0.05 sits near 1e-7.
    static const double w[3] = {3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0};
    double worst = 0.0;
    if (xs_.size() < 13 || basis_.cols() == 0) return 0.0;
    const double h = xs_[1] - xs_[0];
    for (std::size_t i = 6; i + 6 < xs_.size(); ++i) {
        CMatrix d1 = CMatrix::Zero(ws_[i].rows(), ws_[i].cols()), d2 = d1;
        for (int k = 1; k <= 3; ++k) {
            d1 += w[k - 1] * (ws_[i + k] - ws_[i - k]);
            d2 += w[k - 1] * (ws_[i + 2 * k] - ws_[i - 2 * k]);
        }
        const CMatrix d = (64.0 * d1 / h - d2 / (2.0 * h)) / 63.0;
        const double scale = std::max(1.0, ws_[i].norm());
        worst = std::max(worst, (d - derivative(i)).norm() / scale);
    }
    return worst;
}

}  // namespace evans
