#pragma once

#include <complex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace evans {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

/// Raised by numerical kernels when a computation cannot produce a
/// trustworthy result (non-convergence, ill-defined splitting, ...).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Complex number stored as mantissa * exp(logscale).
///
/// The mantissa is normalized to |mantissa| in [1, 2) (or is exactly zero,
/// in which case logscale is zero), and logscale is an integer multiple of
/// ln 2, so the representation is unique.
class ScaledValue {
public:
    ScaledValue() = default;
    ScaledValue(Complex value);  // NOLINT: implicit by intent
    ScaledValue(Complex mantissa, double logscale);

    /// exp(z) without overflow.
    static ScaledValue exp(Complex z);

    Complex mantissa() const { return mantissa_; }
    double logscale() const { return logscale_; }
    bool isZero() const { return mantissa_ == Complex(0.0, 0.0); }

    /// Plain complex value; may overflow to inf or underflow to 0.
    Complex value() const;
    /// ln|v|; -inf for zero.
    double logAbs() const;
    /// Principal argument.
    double arg() const { return std::arg(mantissa_); }
    /// Complex logarithm (principal branch).
    Complex log() const;

    ScaledValue operator*(const ScaledValue& o) const;
    ScaledValue operator/(const ScaledValue& o) const;
    ScaledValue operator+(const ScaledValue& o) const;
    ScaledValue operator-(const ScaledValue& o) const;
    ScaledValue operator-() const { return ScaledValue(-mantissa_, logscale_); }
    ScaledValue& operator*=(const ScaledValue& o) { return *this = *this * o; }

    /// |a - b| / max(|a|, |b|), evaluated in scaled arithmetic.
    static double relativeDistance(const ScaledValue& a, const ScaledValue& b);

private:
    void normalize();

    Complex mantissa_{0.0, 0.0};
    double logscale_ = 0.0;
};

/// Matrix stored as mantissa * exp(logscale) with the mantissa kept near
/// unit operator norm.
struct ScaledMatrix {
    CMatrix mantissa;
    double logscale = 0.0;

    ScaledMatrix() = default;
    explicit ScaledMatrix(CMatrix m, double log = 0.0) : mantissa(std::move(m)), logscale(log) {}

    /// Bring the mantissa's max-column norm into [1, 2) (power-of-two rescale).
    void renormalize();
    /// Plain matrix; may overflow.
    CMatrix value() const;
    ScaledMatrix operator*(const ScaledMatrix& o) const;
};

struct Eigenpair {
    Complex value;
    int multiplicity = 1;
};

/// Eigenvalues with algebraic multiplicities, ordered by real part then
/// imaginary part. Eigenvalues within `clusterTol` (relative) are merged.
std::vector<Eigenpair> eigendecompose(const CMatrix& m, double clusterTol = 1e-8);

/// Plain list of eigenvalues (with repetition), same ordering.
std::vector<Complex> eigenvalues(const CMatrix& m);

enum class SplitMode { TwoWay, ThreeWay };

/// Spectral splitting of a constant matrix into stable / (center) / unstable
/// parts.
///
/// Naming follows the convention of the Evans-function bases: `basisMinus`
/// spans the unstable subspace (solutions decaying as x -> -inf) and
/// `basisPlus` spans the stable one (decaying as x -> +inf). In three-way
/// mode the unstable/stable groups are the strongly unstable/stable ones and
/// the single near-imaginary eigenvalue goes to `basisCenter`.
struct HyperbolicSplitting {
    SplitMode mode = SplitMode::TwoWay;
    std::vector<Complex> eigenvalues;
    CMatrix projS, projU, projC;  // projC is empty in two-way mode
    CMatrix basisMinus, basisCenter, basisPlus;
    CMatrix dualMinus, dualCenter, dualPlus;
    int nStable = 0;  // rank of projS (n_r in two-way mode, n_1 = dim Range Pi_ss in three-way)
    double gap = 0.0; // min |Re mu| over the hyperbolic eigenvalues
    std::optional<Complex> centerEigenvalue;

    int dim() const { return static_cast<int>(projS.rows()); }
    int nUnstable() const { return static_cast<int>(basisMinus.cols()); }
    /// tr(A Pi_u) and tr(A Pi_s) for the matrix A that was split.
    Complex traceUnstable = 0.0, traceStable = 0.0, traceCenter = 0.0;
};

/// Fixed reference vectors used to build continuous bases from projectors.
/// Each block has as many columns as the rank of the matching projector.
struct ReferenceFrame {
    CMatrix minus, center, plus;
};

struct SplitOptions {
    SplitMode mode = SplitMode::TwoWay;
    /// Half-width of the strip around the imaginary axis. Negative: only
    /// purely imaginary eigenvalues are rejected in two-way mode, and the
    /// strip is 0.5 * (gap of the other eigenvalues) in three-way mode, wide
    /// enough for balls of radius O(1/X) around an arc point.
    double centerWindow = -1.0;
    int minNodes = 64;
    double tolerance = 1e-12;
};

/// Projectors by resolvent contour quadrature (1/2 pi i) oint (zI - m)^{-1} dz
/// on rectangles separating the eigenvalue groups.
HyperbolicSplitting splitting(const CMatrix& m, const SplitOptions& opts = {},
                              const ReferenceFrame* frame = nullptr);

/// Reference frame taken from the splitting's own bases (freeze at a region center).
ReferenceFrame frameFrom(const HyperbolicSplitting& s);

/// Spectral projector onto the eigenvalues inside the rectangle
/// [re0, re1] x [im0, im1], by composite Gauss-Legendre quadrature of the
/// resolvent. Nodes are doubled until two successive results agree.
CMatrix rectangleProjector(const CMatrix& m, double re0, double re1, double im0, double im1,
                           int minNodes = 64, double tolerance = 1e-12);

/// Determinant in scaled form via partially pivoted elimination with
/// running log accumulation. Singular input gives zero.
ScaledValue scaledDet(const CMatrix& m);

/// exp(m t).
CMatrix expAction(const CMatrix& m, double t);

/// exp(m Pi t) restricted to one group of a splitting, returned scaled:
/// (I - Pi) + exp(m t) Pi with the exponential computed on the group.
ScaledMatrix expGroup(const CMatrix& m, const CMatrix& projector, double t);

/// Orthonormal basis of the column span (thin QR).
CMatrix orthonormalize(const CMatrix& m);

// ---------------------------------------------------------- exterior powers

/// k-subsets of {0, ..., n-1} in lexicographic order (the index set of the
/// k-th exterior power).
std::vector<std::vector<int>> subsets(int n, int k);

/// Multiplicative compound: entry (I, J) is the minor of m on rows I,
/// columns J. Maps w_1 ^ ... ^ w_k to the coordinates of m w_1 ^ ... ^ m w_k.
CMatrix compoundMinors(const CMatrix& m, int k);

/// Additive compound: the generator of the induced flow on k-forms, so that
/// Y' = A Y implies (compoundMinors(Y, k))' = compoundGenerator(A, k) compoundMinors(Y, k).
CMatrix compoundGenerator(const CMatrix& a, int k);

}  // namespace evans
