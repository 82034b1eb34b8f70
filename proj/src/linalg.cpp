#include "evans/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include <boost/math/quadrature/gauss.hpp>
#include <unsupported/Eigen/MatrixFunctions>

namespace evans {

namespace {

constexpr double kLn2 = std::numbers::ln2;

std::string describe(const CMatrix& m) {
    std::ostringstream os;
    os.precision(6);
    os << "[";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        os << (i ? "; " : "");
        for (Eigen::Index j = 0; j < m.cols(); ++j) os << (j ? ", " : "") << m(i, j);
    }
    os << "]";
    return os.str();
}

bool lessByReIm(Complex a, Complex b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
}

}  // namespace

// ---------------------------------------------------------------- ScaledValue

ScaledValue::ScaledValue(Complex value) : mantissa_(value) { normalize(); }

ScaledValue::ScaledValue(Complex mantissa, double logscale) : mantissa_(mantissa), logscale_(logscale) {
    normalize();
}

ScaledValue ScaledValue::exp(Complex z) {
    // exp(z) = exp(i Im z) * 2^k * exp(r), r = Re z - k ln2 in [0, ln2)
    const double k = std::floor(z.real() / kLn2);
    const double r = z.real() - k * kLn2;
    ScaledValue out;
    out.mantissa_ = std::polar(std::exp(r), z.imag());
    out.logscale_ = k * kLn2;
    out.normalize();
    return out;
}

void ScaledValue::normalize() {
    const double a = std::abs(mantissa_);
    if (a == 0.0 || !std::isfinite(a)) {
        if (a == 0.0) {
            mantissa_ = 0.0;
            logscale_ = 0.0;
        }
        return;
    }
    int e = 0;
    std::frexp(a, &e);  // a = f * 2^e, f in [0.5, 1)
    const int shift = e - 1;
    mantissa_ = Complex(std::ldexp(mantissa_.real(), -shift), std::ldexp(mantissa_.imag(), -shift));
    // Snap logscale to an exact multiple of ln 2 so the representation is unique.
    const double k = std::round(logscale_ / kLn2);
    double residual = logscale_ - k * kLn2;
    // rounding noise from adding logscales: drop it, or 1 - eps would renormalize to 2 - eps
    if (std::abs(residual) <= 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(logscale_))) {
        logscale_ = k * kLn2;
        residual = 0.0;
    }
    if (residual != 0.0) {
        mantissa_ *= std::exp(residual);
        logscale_ = k * kLn2;
        // exp(residual) may push |m| out of [1,2); one more pass settles it.
        int e2 = 0;
        std::frexp(std::abs(mantissa_), &e2);
        const int s2 = e2 - 1;
        mantissa_ = Complex(std::ldexp(mantissa_.real(), -s2), std::ldexp(mantissa_.imag(), -s2));
        logscale_ += s2 * kLn2;
    }
    logscale_ += shift * kLn2;
}

Complex ScaledValue::value() const {
    if (isZero()) return 0.0;
    return mantissa_ * std::exp(logscale_);
}

double ScaledValue::logAbs() const {
    if (isZero()) return -std::numeric_limits<double>::infinity();
    return std::log(std::abs(mantissa_)) + logscale_;
}

Complex ScaledValue::log() const { return {logAbs(), arg()}; }

ScaledValue ScaledValue::operator*(const ScaledValue& o) const {
    if (isZero() || o.isZero()) return {};
    return ScaledValue(mantissa_ * o.mantissa_, logscale_ + o.logscale_);
}

ScaledValue ScaledValue::operator/(const ScaledValue& o) const {
    if (o.isZero()) throw NumericError("ScaledValue: division by zero");
    if (isZero()) return {};
    return ScaledValue(mantissa_ / o.mantissa_, logscale_ - o.logscale_);
}

ScaledValue ScaledValue::operator+(const ScaledValue& o) const {
    if (isZero()) return o;
    if (o.isZero()) return *this;
    const double top = std::max(logscale_, o.logscale_);
    const Complex sum = mantissa_ * std::exp(logscale_ - top) + o.mantissa_ * std::exp(o.logscale_ - top);
    return ScaledValue(sum, top);
}

ScaledValue ScaledValue::operator-(const ScaledValue& o) const { return *this + (-o); }

double ScaledValue::relativeDistance(const ScaledValue& a, const ScaledValue& b) {
    if (a.isZero() && b.isZero()) return 0.0;
    const ScaledValue diff = a - b;
    if (diff.isZero()) return 0.0;
    const double ref = std::max(a.logAbs(), b.logAbs());
    return std::exp(diff.logAbs() - ref);
}

// --------------------------------------------------------------- ScaledMatrix

void ScaledMatrix::renormalize() {
    double norm = 0.0;
    for (Eigen::Index j = 0; j < mantissa.cols(); ++j) norm = std::max(norm, mantissa.col(j).norm());
    if (norm == 0.0 || !std::isfinite(norm)) return;
    int e = 0;
    std::frexp(norm, &e);
    const int shift = e - 1;
    if (shift == 0) return;
    mantissa *= std::ldexp(1.0, -shift);
    logscale += shift * kLn2;
}

CMatrix ScaledMatrix::value() const { return mantissa * std::exp(logscale); }

ScaledMatrix ScaledMatrix::operator*(const ScaledMatrix& o) const {
    ScaledMatrix out(mantissa * o.mantissa, logscale + o.logscale);
    out.renormalize();
    return out;
}

// ------------------------------------------------------------ eigen problems

std::vector<Complex> eigenvalues(const CMatrix& m) {
    if (m.rows() != m.cols()) throw NumericError("eigenvalues: matrix is not square");
    if (!m.allFinite()) throw NumericError("eigenvalues: non-finite entries in " + describe(m));
    Eigen::ComplexEigenSolver<CMatrix> solver(m, false);
    if (solver.info() != Eigen::Success)
        throw NumericError("eigenvalues: QR iteration did not converge for " + describe(m));
    std::vector<Complex> out(solver.eigenvalues().data(), solver.eigenvalues().data() + m.rows());
    std::sort(out.begin(), out.end(), lessByReIm);
    return out;
}

std::vector<Eigenpair> eigendecompose(const CMatrix& m, double clusterTol) {
    const auto values = eigenvalues(m);
    std::vector<Eigenpair> out;
    std::vector<bool> used(values.size(), false);
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (used[i]) continue;
        Complex sum = values[i];
        int count = 1;
        used[i] = true;
        for (std::size_t j = i + 1; j < values.size(); ++j) {
            if (used[j]) continue;
            const double scale = std::max(1.0, std::abs(values[i]));
            if (std::abs(values[j] - values[i]) <= clusterTol * scale) {
                used[j] = true;
                sum += values[j];
                ++count;
            }
        }
        out.push_back({sum / static_cast<double>(count), count});
    }
    std::sort(out.begin(), out.end(), [](const Eigenpair& a, const Eigenpair& b) { return lessByReIm(a.value, b.value); });
    return out;
}

// --------------------------------------------------------------- projectors

namespace {

// Integral of (zI - m)^{-1} dz along the segment a -> b, composite
// Gauss-Legendre with `panels` panels of 16 nodes.
CMatrix segmentIntegral(const CMatrix& m, Complex a, Complex b, int panels) {
    using Gauss = boost::math::quadrature::gauss<double, 16>;
    const auto& abscissa = Gauss::abscissa();
    const auto& weights = Gauss::weights();
    const auto n = m.rows();
    const CMatrix id = CMatrix::Identity(n, n);
    CMatrix acc = CMatrix::Zero(n, n);
    const Complex h = (b - a) / static_cast<double>(panels);
    for (int p = 0; p < panels; ++p) {
        const Complex mid = a + h * (p + 0.5);
        for (std::size_t i = 0; i < abscissa.size(); ++i) {
            // boost stores non-negative abscissae only; 0 is included once for odd N.
            const double xs[2] = {abscissa[i], -abscissa[i]};
            const int count = (abscissa[i] == 0.0) ? 1 : 2;
            for (int s = 0; s < count; ++s) {
                const Complex z = mid + 0.5 * h * xs[s];
                const CMatrix res = (z * id - m).partialPivLu().solve(id);
                acc += (weights[i] * 0.5) * h * res;
            }
        }
    }
    return acc;
}

}  // namespace

CMatrix rectangleProjector(const CMatrix& m, double re0, double re1, double im0, double im1, int minNodes,
                           double tolerance) {
    const Complex c0(re0, im0), c1(re1, im0), c2(re1, im1), c3(re0, im1);
    auto integrate = [&](int panelsPerSide) {
        CMatrix total = segmentIntegral(m, c0, c1, panelsPerSide) + segmentIntegral(m, c1, c2, panelsPerSide) +
                        segmentIntegral(m, c2, c3, panelsPerSide) + segmentIntegral(m, c3, c0, panelsPerSide);
        return CMatrix(total / Complex(0.0, 2.0 * std::numbers::pi));
    };
    int panels = std::max(1, minNodes / 16);
    CMatrix prev = integrate(panels);
    for (int iter = 0; iter < 8; ++iter) {
        panels *= 2;
        CMatrix next = integrate(panels);
        const double diff = (next - prev).norm();
        if (diff <= tolerance * std::max(1.0, next.norm())) return next;
        prev = std::move(next);
    }
    throw NumericError("rectangleProjector: quadrature did not converge (eigenvalue too close to the contour)");
}

CMatrix orthonormalize(const CMatrix& m) {
    if (m.cols() == 0) return m;
    Eigen::HouseholderQR<CMatrix> qr(m);
    CMatrix q = qr.householderQ() * CMatrix::Identity(m.rows(), m.cols());
    // Fix the phase so that diag(R) is real positive: keeps bases deterministic.
    const CMatrix r = qr.matrixQR().topRows(m.cols()).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const Complex d = r(j, j);
        if (std::abs(d) > 0.0) q.col(j) *= d / std::abs(d);
    }
    return q;
}

namespace {

// Basis for range(P) of the given rank: projected reference columns when a
// frame is given, otherwise the largest-norm columns of P.
CMatrix rangeBasis(const CMatrix& projector, int rank, const CMatrix* reference) {
    const auto n = projector.rows();
    if (rank == 0) return CMatrix(n, 0);
    if (reference && reference->cols() == rank) return orthonormalize(projector * *reference);
    Eigen::ColPivHouseholderQR<CMatrix> qr(projector);
    CMatrix picked(n, rank);
    for (int j = 0; j < rank; ++j) picked.col(j) = projector.col(qr.colsPermutation().indices()(j));
    return orthonormalize(picked);
}

}  // namespace

HyperbolicSplitting splitting(const CMatrix& m, const SplitOptions& opts, const ReferenceFrame* frame) {
    const auto n = m.rows();
    HyperbolicSplitting out;
    out.mode = opts.mode;
    out.eigenvalues = eigenvalues(m);
    const auto& ev = out.eigenvalues;

    double minAbsRe = std::numeric_limits<double>::infinity();
    for (auto mu : ev) minAbsRe = std::min(minAbsRe, std::abs(mu.real()));

    double imLo = ev.front().imag(), imHi = ev.front().imag(), reLo = ev.front().real(), reHi = ev.front().real();
    for (auto mu : ev) {
        imLo = std::min(imLo, mu.imag());
        imHi = std::max(imHi, mu.imag());
        reLo = std::min(reLo, mu.real());
        reHi = std::max(reHi, mu.real());
    }
    const double pad = 1.0 + 0.5 * std::max(reHi - reLo, imHi - imLo);
    const double im0 = imLo - pad, im1 = imHi + pad;
    const CMatrix id = CMatrix::Identity(n, n);

    std::vector<Complex> stable, unstable, center;
    if (opts.mode == SplitMode::TwoWay) {
        const double window = opts.centerWindow >= 0.0 ? opts.centerWindow : 0.0;
        for (auto mu : ev) {
            if (std::abs(mu.real()) <= window || mu.real() == 0.0) {
                std::ostringstream os;
                os << "splitting: eigenvalue " << mu << " lies on the dividing boundary (|Re mu| <= " << window << ")";
                throw NumericError(os.str());
            }
            (mu.real() < 0 ? stable : unstable).push_back(mu);
        }
    } else {
        // Single eigenvalue closest to the imaginary axis is the center candidate.
        std::size_t ic = 0;
        for (std::size_t i = 1; i < ev.size(); ++i)
            if (std::abs(ev[i].real()) < std::abs(ev[ic].real())) ic = i;
        double hypGap = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < ev.size(); ++i)
            if (i != ic) hypGap = std::min(hypGap, std::abs(ev[i].real()));
        const double window = opts.centerWindow >= 0.0 ? opts.centerWindow : 0.5 * hypGap;
        if (std::abs(ev[ic].real()) > window) {
            std::ostringstream os;
            os << "splitting: no eigenvalue within the center window " << window;
            throw NumericError(os.str());
        }
        for (std::size_t i = 0; i < ev.size(); ++i) {
            if (i == ic) continue;
            if (std::abs(ev[i].real()) <= window) {
                std::ostringstream os;
                os << "splitting: second eigenvalue " << ev[i] << " inside the center window (center not simple)";
                throw NumericError(os.str());
            }
            if (std::abs(ev[i] - ev[ic]) < 1e-8 * std::max(1.0, std::abs(ev[ic])))
                throw NumericError("splitting: center eigenvalue is not simple");
            (ev[i].real() < 0 ? stable : unstable).push_back(ev[i]);
        }
        center.push_back(ev[ic]);
        out.centerEigenvalue = ev[ic];
    }

    // Dividing lines sit halfway between neighbouring groups.
    const double maxStableRe = stable.empty() ? -std::numeric_limits<double>::infinity()
                                              : std::max_element(stable.begin(), stable.end(), lessByReIm)->real();
    const double minUnstableRe = unstable.empty() ? std::numeric_limits<double>::infinity()
                                                  : std::min_element(unstable.begin(), unstable.end(), lessByReIm)->real();
    const double left = reLo - pad;
    const double right = reHi + pad;

    if (opts.mode == SplitMode::TwoWay) {
        if (stable.empty()) {
            out.projS = CMatrix::Zero(n, n);
        } else if (unstable.empty()) {
            out.projS = id;
        } else {
            const double cut = 0.5 * (maxStableRe + minUnstableRe);
            out.projS = rectangleProjector(m, left, cut, im0, im1, opts.minNodes, opts.tolerance);
        }
        out.projU = id - out.projS;
    } else {
        const double muRe = center.front().real();
        const double cutL = stable.empty() ? left : 0.5 * (maxStableRe + muRe);
        const double cutR = unstable.empty() ? right : 0.5 * (minUnstableRe + muRe);
        out.projS = stable.empty() ? CMatrix::Zero(n, n)
                                   : rectangleProjector(m, left, cutL, im0, im1, opts.minNodes, opts.tolerance);
        out.projC = rectangleProjector(m, cutL, cutR, im0, im1, opts.minNodes, opts.tolerance);
        out.projU = id - out.projS - out.projC;
    }

    out.nStable = static_cast<int>(stable.size());
    out.gap = std::numeric_limits<double>::infinity();
    for (auto mu : stable) out.gap = std::min(out.gap, std::abs(mu.real()));
    for (auto mu : unstable) out.gap = std::min(out.gap, std::abs(mu.real()));

    const int nU = static_cast<int>(unstable.size());
    const int nC = static_cast<int>(center.size());
    out.basisMinus = rangeBasis(out.projU, nU, frame ? &frame->minus : nullptr);
    out.basisPlus = rangeBasis(out.projS, out.nStable, frame ? &frame->plus : nullptr);
    out.basisCenter = nC ? rangeBasis(out.projC, nC, frame ? &frame->center : nullptr) : CMatrix(n, 0);

    CMatrix all(n, n);
    all << out.basisMinus, out.basisCenter, out.basisPlus;
    const CMatrix inv = all.fullPivLu().inverse();
    out.dualMinus = inv.topRows(nU);
    out.dualCenter = inv.middleRows(nU, nC);
    out.dualPlus = inv.bottomRows(out.nStable);

    out.traceUnstable = (m * out.projU).trace();
    out.traceStable = (m * out.projS).trace();
    out.traceCenter = nC ? (m * out.projC).trace() : Complex(0.0);
    return out;
}

ReferenceFrame frameFrom(const HyperbolicSplitting& s) { return {s.basisMinus, s.basisCenter, s.basisPlus}; }

// -------------------------------------------------------------- determinants

ScaledValue scaledDet(const CMatrix& input) {
    if (input.rows() != input.cols()) throw NumericError("scaledDet: matrix is not square");
    const auto n = input.rows();
    if (n == 0) return ScaledValue(1.0);
    CMatrix a = input;
    ScaledValue det(1.0);
    // Column equilibration by powers of two keeps the elimination in range.
    for (Eigen::Index j = 0; j < n; ++j) {
        const double norm = a.col(j).cwiseAbs().maxCoeff();
        if (norm == 0.0) return {};
        int e = 0;
        std::frexp(norm, &e);
        a.col(j) *= std::ldexp(1.0, -e);
        det = det * ScaledValue(1.0, e * kLn2);
    }
    for (Eigen::Index k = 0; k < n; ++k) {
        Eigen::Index p = k;
        double best = std::abs(a(k, k));
        for (Eigen::Index i = k + 1; i < n; ++i) {
            if (std::abs(a(i, k)) > best) {
                best = std::abs(a(i, k));
                p = i;
            }
        }
        if (best == 0.0) return {};
        if (p != k) {
            a.row(p).swap(a.row(k));
            det = -det;
        }
        const Complex pivot = a(k, k);
        det = det * ScaledValue(pivot);
        for (Eigen::Index i = k + 1; i < n; ++i) {
            const Complex f = a(i, k) / pivot;
            if (f == Complex(0.0)) continue;
            a.row(i).tail(n - k - 1) -= f * a.row(k).tail(n - k - 1);
        }
    }
    return det;
}

// --------------------------------------------------------------- exponentials

CMatrix expAction(const CMatrix& m, double t) {
    const CMatrix mt = m * t;
    if (!mt.allFinite()) throw NumericError("expAction: non-finite argument");
    CMatrix out = mt.exp();
    if (!out.allFinite())
        throw NumericError("expAction: overflow; use the group-factored scaled form (expGroup)");
    return out;
}

ScaledMatrix expGroup(const CMatrix& m, const CMatrix& projector, double t) {
    const auto n = m.rows();
    const CMatrix id = CMatrix::Identity(n, n);
    Eigen::ColPivHouseholderQR<CMatrix> qr(projector);
    qr.setThreshold(1e-8);
    const auto rank = qr.rank();
    if (rank == 0) return ScaledMatrix(id, 0.0);
    CMatrix basis(n, rank);
    for (Eigen::Index j = 0; j < rank; ++j) basis.col(j) = projector.col(qr.colsPermutation().indices()(j));
    basis = orthonormalize(basis);
    // Left inverse restricted to range(P): L = (B^* B)^{-1} B^* P = B^* P for orthonormal B.
    const CMatrix dual = basis.adjoint() * projector;
    const CMatrix block = dual * m * basis;
    double sigma = -std::numeric_limits<double>::infinity();
    for (auto mu : eigenvalues(block)) sigma = std::max(sigma, mu.real());
    const double logscale = std::max(sigma * t, 0.0);
    const CMatrix shifted = block - Complex(sigma) * CMatrix::Identity(rank, rank);
    ScaledMatrix out;
    out.logscale = logscale;
    out.mantissa = (id - projector) * std::exp(-logscale) +
                   basis * (shifted * t).exp() * dual * std::exp(sigma * t - logscale);
    out.renormalize();
    return out;
}

std::vector<std::vector<int>> subsets(int n, int k) {
    std::vector<std::vector<int>> out;
    if (k < 0 || k > n) return out;
    std::vector<int> cur(k);
    for (int i = 0; i < k; ++i) cur[i] = i;
    while (true) {
        out.push_back(cur);
        int i = k - 1;
        while (i >= 0 && cur[i] == n - k + i) --i;
        if (i < 0) break;
        ++cur[i];
        for (int j = i + 1; j < k; ++j) cur[j] = cur[j - 1] + 1;
    }
    return out;
}

CMatrix compoundMinors(const CMatrix& m, int k) {
    const auto sets = subsets(static_cast<int>(m.rows()), k);
    const auto cols = subsets(static_cast<int>(m.cols()), k);
    CMatrix out(sets.size(), cols.size());
    CMatrix sub(k, k);
    for (std::size_t r = 0; r < sets.size(); ++r)
        for (std::size_t c = 0; c < cols.size(); ++c) {
            for (int i = 0; i < k; ++i)
                for (int j = 0; j < k; ++j) sub(i, j) = m(sets[r][i], cols[c][j]);
            out(r, c) = k == 0 ? Complex(1.0, 0.0) : sub.determinant();
        }
    return out;
}

CMatrix compoundGenerator(const CMatrix& a, int k) {
    const int n = static_cast<int>(a.rows());
    const auto sets = subsets(n, k);
    std::map<std::vector<int>, Eigen::Index> index;
    for (std::size_t i = 0; i < sets.size(); ++i) index[sets[i]] = static_cast<Eigen::Index>(i);
    CMatrix out = CMatrix::Zero(sets.size(), sets.size());
    // A acting on e_J: replace each e_j (j in J) by sum_i a(i, j) e_i.
    for (std::size_t c = 0; c < sets.size(); ++c) {
        const auto& J = sets[c];
        for (int pos = 0; pos < k; ++pos) {
            for (int i = 0; i < n; ++i) {
                if (a(i, J[pos]) == Complex(0.0, 0.0)) continue;
                if (i != J[pos] && std::find(J.begin(), J.end(), i) != J.end()) continue;
                std::vector<int> I = J;
                I[pos] = i;
                // sort with sign of the permutation
                int sign = 1;
                for (int p = pos; p + 1 < k && I[p] > I[p + 1]; ++p) { std::swap(I[p], I[p + 1]); sign = -sign; }
                for (int p = pos; p > 0 && I[p] < I[p - 1]; --p) { std::swap(I[p], I[p - 1]); sign = -sign; }
                out(index[I], c) += static_cast<double>(sign) * a(i, J[pos]);
            }
        }
    }
    return out;
}

}  // namespace evans
