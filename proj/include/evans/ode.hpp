#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "evans/linalg.hpp"
#include "evans/numeric_policy.hpp"

namespace evans {

/// x -> A(x) for a fixed spectral parameter. Must be safe to call
/// concurrently (read-only tables only).
using CoefficientMap = std::function<CMatrix(double)>;

struct GridSample {
    double x;
    ScaledMatrix value;
    ScaledValue det;  // det of the value from the triangular factor (zero for shifted runs)
};

/// Result of integrating Y' = A(x) Y - Y S from x0 to x1.
struct Propagation {
    double x0 = 0.0, x1 = 0.0;
    ScaledMatrix result;
    Complex trIntegral{0.0, 0.0};  // integral of tr A from x0 to x1
    int stepCount = 0;
    double maxLocalError = 0.0;
    std::vector<GridSample> grid;  // filled when requested
    /// Same result with a separate scale per column (column j of the
    /// solution is columnMantissa.col(j) * exp(columnLog[j])). Keeps columns
    /// of very different growth from underflowing against each other.
    CMatrix columnMantissa;
    std::vector<double> columnLog;
    /// Set for square runs without a right shift (triangular-factor determinant).
    std::optional<ScaledValue> det;

    /// det of the result in scaled form.
    ScaledValue determinant() const;
};

struct PropagateOptions {
    /// Initial data Y(x0); identity when absent.
    std::optional<CMatrix> initial;
    /// Constant right factor S in Y' = A Y - Y S (zero when absent).
    std::optional<CMatrix> rightShift;
    bool storeGrid = false;
};

/// One sixth-order Magnus step for Y' = A(x) Y over [x, x + h]; A sampled at
/// the three Gauss-Legendre nodes. Returns the exponent Omega, and writes the
/// difference to the embedded fourth-order exponent into *errorEstimate.
CMatrix magnusExponent(const CMatrix& a1, const CMatrix& a2, const CMatrix& a3, double h,
                       double* errorEstimate = nullptr);

/// Fundamental solution (or the given frame) propagated from x0 to x1,
/// either direction.
Propagation propagate(const CoefficientMap& coeff, double x0, double x1, const NumericPolicy& policy,
                      const PropagateOptions& opts = {});

/// Psi(X/2) with identity data at -X/2: the monodromy over the balanced cell.
ScaledMatrix monodromy(const CoefficientMap& coeff, double period, const NumericPolicy& policy,
                       Complex* trIntegral = nullptr);

enum class Side { Minus, Plus };

/// Conjugating transformation P on one half-line, solving
///   P' = A P - P A_inf,   P(+-halfPeriod) = I,
/// integrated inward to x = 0. A is extended by A_inf beyond the half-period,
/// where P stays the identity.
///
/// The matrix is tracked through the columns W = P R for a chosen basis R of
/// (part of) C^n: W' = A W - W S with S = L A_inf R. Passing a full basis gives
/// the whole of P; passing only the columns spanning the subspace of
/// solutions decaying toward the far end keeps the integration in its
/// dominant direction.
class Conjugator {
public:
    Conjugator(const CoefficientMap& coeff, const CMatrix& ainf, Side side, double halfPeriod,
               const CMatrix& basis, const NumericPolicy& policy);

    /// Convenience: full P from a complete eigen-basis of A_inf.
    static Conjugator full(const CoefficientMap& coeff, const CMatrix& ainf, Side side, double halfPeriod,
                           const NumericPolicy& policy);

    Side side() const { return side_; }
    double halfPeriod() const { return halfPeriod_; }

    /// W(x) = P(x) R by cubic Hermite interpolation on the stored grid.
    CMatrix columns(double x) const;
    /// P(x) itself; only available when constructed with a full basis.
    CMatrix matrix(double x) const;
    /// Residual of P' - (A P - P A_inf) at the stored nodes (relative to |P|).
    double sylvesterResidual() const;
    const std::vector<double>& nodes() const { return xs_; }
    /// Largest (A - A_inf) size times e^{theta|x|}, for diagnostics of the
    /// exponential-decay hypothesis.
    const std::vector<std::string>& warnings() const { return warnings_; }

private:
    CMatrix derivative(std::size_t i) const;

    CoefficientMap coeff_;
    CMatrix ainf_, basis_, shift_, dualFull_;
    Side side_;
    double halfPeriod_;
    std::vector<double> xs_;
    std::vector<CMatrix> ws_;
    std::vector<std::string> warnings_;
};

}  // namespace evans
