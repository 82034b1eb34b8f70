#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <tuple>
#include <utility>

#include "evans/linalg.hpp"
#include "evans/models.hpp"
#include "evans/numeric_policy.hpp"
#include "evans/ode.hpp"

namespace evans {

/// Homoclinic system plus everything the Evans evaluations share: policy,
/// conjugator half-period and a lambda-keyed splitting memo.
class HomoclinicEvansContext {
public:
    /// halfPeriod <= 0: chosen so that |A - A_inf| < policy.tailTol beyond it.
    HomoclinicEvansContext(SpectralSystem system, NumericPolicy policy, double halfPeriod = -1.0,
                           std::optional<ReferenceFrame> frame = std::nullopt);
    HomoclinicEvansContext(const HomoclinicEvansContext& other);

    const SpectralSystem& system() const { return system_; }
    const NumericPolicy& policy() const { return policy_; }
    double halfPeriod() const { return halfPeriod_; }

    /// Splitting of A_inf(lambda); memoized (thread-safe, last write wins).
    HyperbolicSplitting split(Complex lambda, SplitMode mode) const;

private:
    SpectralSystem system_;
    NumericPolicy policy_;
    double halfPeriod_;
    std::optional<ReferenceFrame> frame_;
    mutable std::mutex mutex_;
    mutable std::map<std::tuple<double, double, int>, HyperbolicSplitting> cache_;
};

/// Smallest L on a 0.5 grid with |A(+-x) - A_inf| < tol for x in [L, L + 10].
double tailHalfPeriod(const SpectralSystem& sys, Complex lambda, double tol, double maxHalf = 400.0);

/// D^0_r(lambda) = det(P_- R^-, P_+ R^+)(0) / det(R^-, R^+).
ScaledValue homoclinicEvans(const HomoclinicEvansContext& ctx, Complex lambda);

/// (-1)^{n_r} det(W_- L^- - W_+ L^+)(0) with W_+- = P_+- R^+-: the Jost form.
ScaledValue jostEvans(const HomoclinicEvansContext& ctx, Complex lambda);

/// Decaying bases at x = 0 for a given partition of the columns of A_inf.
struct DecayingFrames {
    CMatrix minus, plus;       // P_- R^-, P_+ R^+ at x = 0
    CMatrix basisMinus, basisPlus;
};
DecayingFrames decayingFrames(const HomoclinicEvansContext& ctx, Complex lambda, const CMatrix& basisMinus,
                              const CMatrix& basisPlus);

struct ArcExtension {
    ScaledValue d1, d2;      // D^0_1, D^0_2 at the requested lambda
    Complex muC{0.0, 0.0};   // center eigenvalue of A_inf(lambda)
    int nStrongStable = 0;
};

/// Analytic extensions across an arc: the center direction joins the
/// unstable bundle (D^0_1) or the stable bundle (D^0_2).
ArcExtension arcExtension(const HomoclinicEvansContext& ctx, const DispersionArc& arc, Complex lambda);

/// e^{mu_c X/2} D^0_1 - gamma e^{-mu_c X/2} D^0_2.
ScaledValue transitionalHomoclinic(const HomoclinicEvansContext& ctx, const DispersionArc& arc, Complex lambda,
                                   Complex gamma, double period);

}  // namespace evans
