#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <utility>

#include "evans/linalg.hpp"
#include "evans/models.hpp"
#include "evans/numeric_policy.hpp"
#include "evans/ode.hpp"

namespace evans {

/// Columns stored with independent scales: column j is mantissa.col(j) * exp(logs[j]).
struct ColumnScaled {
    CMatrix mantissa;
    std::vector<double> logs;
};

/// Exterior powers of Phi R for k = 0..n: forms[k] has one column per
/// k-subset of the columns of R (coordinates in the lexicographic k-subset
/// basis). Each degree is integrated as its own linear system, so a decaying
/// k-form keeps its accuracy even when individual columns do not.
struct FormSet {
    std::vector<ColumnScaled> forms;
    Complex trace{0.0, 0.0};  // integral of tr A along the propagation
};

/// Forms of Phi(x1 <- x0) R.
FormSet propagateForms(const CoefficientMap& coeff, double x0, double x1, const CMatrix& basis,
                       const NumericPolicy& policy);
/// Forms of R itself.
FormSet basisForms(const CMatrix& basis);
/// det(F - gamma G) / det R from the forms of F = Phi_a R and G = Phi_b R,
/// by Laplace expansion over the columns taken from each side.
ScaledValue combineForms(const FormSet& a, const FormSet& b, Complex gamma, const CMatrix& basis);

/// Everything gamma-independent at one lambda.
struct PeriodicPropagation {
    CMatrix basis;            // R: columns of A_inf eigen-subspaces
    HyperbolicSplitting split;
    bool threeWay = false;    // split is the three-way (transitional) one
    bool anyBasis = false;    // no splitting: eigenvector basis, split left empty
    FormSet toZeroFromLeft;   // Psi(0 <- -X/2) R
    FormSet toZeroFromRight;  // Psi(0 <- X/2) R
    FormSet cell;             // Psi(X/2 <- -X/2) R
    FormSet identity;         // R
    Complex trRightHalf{0.0, 0.0}; // int_0^{X/2} tr A
    Complex trCell{0.0, 0.0};      // int_{-X/2}^{X/2} tr A
};

class PeriodicEvansContext {
public:
    PeriodicEvansContext(SpectralSystem member, NumericPolicy policy);
    PeriodicEvansContext(const PeriodicEvansContext& other);

    const SpectralSystem& system() const { return system_; }
    const NumericPolicy& policy() const { return policy_; }
    double period() const { return system_.period; }

    /// Cached propagations at lambda (filled on first use; concurrent reads
    /// safe). With allowAnyBasis a failed splitting falls back to an
    /// eigenvector basis, which is enough for E and the balanced function.
    std::shared_ptr<const PeriodicPropagation> at(Complex lambda, SplitMode preferred = SplitMode::TwoWay,
                                                  bool allowAnyBasis = false) const;

private:
    SpectralSystem system_;
    NumericPolicy policy_;
    mutable std::mutex mutex_;
    mutable std::map<std::tuple<double, double, int>, std::shared_ptr<const PeriodicPropagation>> cache_;
};

/// det(Psi(X/2 <- -X/2) - gamma I).
ScaledValue periodicEvans(const PeriodicEvansContext& ctx, Complex lambda, Complex gamma);

/// det(Psi(0 <- -X/2) - gamma Psi(0 <- X/2)).
ScaledValue balancedEvans(const PeriodicEvansContext& ctx, Complex lambda, Complex gamma);

/// e^{-tr(A_inf Pi_u) X/2} e^{tr(A_inf Pi_s) X/2} (-gamma)^{-n_r} times the balanced function.
ScaledValue rescaledEvans(const PeriodicEvansContext& ctx, Complex lambda, Complex gamma);

/// Same with the strong projections Pi_su, Pi_ss and n_1 = rank Pi_ss.
ScaledValue transitionalPeriodic(const PeriodicEvansContext& ctx, const DispersionArc& arc, Complex lambda,
                                 Complex gamma);

}  // namespace evans
