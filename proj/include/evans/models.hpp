#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "evans/linalg.hpp"
#include "evans/ode.hpp"

namespace evans {

/// First-order eigenvalue system W' = A(x, lambda) W for one member of a
/// family of waves, with its homoclinic asymptotic matrix A_inf(lambda).
struct SpectralSystem {
    std::string name;
    int dim = 0;
    std::function<CMatrix(double, Complex)> coeff;
    std::function<CMatrix(Complex)> asympt;
    double period = std::numeric_limits<double>::infinity();  // infinity for the homoclinic member
    double nu = 0.0;        // (H2) decay rate of A - A_inf
    double thetaBar = 0.0;  // (H3) rate of the periodic deviation
    std::map<std::string, double> metadata;

    bool periodic() const { return std::isfinite(period); }
    CoefficientMap at(Complex lambda) const {
        return [f = coeff, lambda](double x) { return f(x, lambda); };
    }
};

/// Wave profile with dense evaluation. State layout is model-specific
/// (e.g. (u, u') for second-order profile equations).
class Profile {
public:
    using Evaluator = std::function<std::vector<double>(double)>;

    Profile(std::vector<std::string> names, Evaluator eval, double period, double level = 0.0)
        : names_(std::move(names)), eval_(std::move(eval)), period_(period), level_(level) {}

    std::vector<double> operator()(double x) const { return eval_(x); }
    const std::vector<std::string>& names() const { return names_; }
    double period() const { return period_; }
    bool homoclinic() const { return !std::isfinite(period_); }
    /// Family parameter (Hamiltonian level, or 0 when not applicable).
    double level() const { return level_; }

private:
    std::vector<std::string> names_;
    Evaluator eval_;
    double period_;
    double level_;
};

/// Cubic Hermite table on sorted nodes (value and slope per component).
class HermiteTable {
public:
    HermiteTable() = default;
    HermiteTable(std::vector<double> xs, std::vector<std::vector<double>> values, std::vector<std::vector<double>> slopes);
    std::vector<double> operator()(double x) const;
    double front() const { return xs_.front(); }
    double back() const { return xs_.back(); }
    const std::vector<double>& nodes() const { return xs_; }

private:
    std::vector<double> xs_;
    std::vector<std::vector<double>> ys_, ds_;
};

/// Curve lambda_j(k) of homoclinic essential spectrum through a simple
/// imaginary eigenvalue mu_c = i k_* of A_inf(lambda_*).
struct DispersionArc {
    std::function<Complex(double)> paramToLambda;
    std::function<double(Complex)> lambdaToK;
    std::function<Complex(Complex)> muC;
    std::function<Complex(Complex)> muCprime;
    double kStar = 0.0;
    Complex lambdaStar{0.0, 0.0};
};

/// All lambda with i k in sigma(A_inf(lambda)), assuming A_inf affine in
/// lambda (true for every model here); degree-n polynomial in lambda.
std::vector<Complex> dispersionLambdas(const std::function<CMatrix(Complex)>& asympt, int dim, double k);

/// Arc through (lambdaStar, kStar) built from a generic A_inf by continuation
/// of the eigenvalue closest to i k. Used for models without a closed form.
DispersionArc arcFromAsymptotic(const std::function<CMatrix(Complex)>& asympt, int dim, double kStar);

// ------------------------------------------------------------ planar families

/// Profile equation u'' = a u - b u^2 (saddle at 0, center at a/b), whose
/// homoclinic is (3a/2b) sech^2(sqrt(a) x / 2) and whose closed orbits at
/// Hamiltonian level h in (-a^3/6b^2, 0) form the periodic family.
class PlanarHamiltonian {
public:
    PlanarHamiltonian(double a, double b);

    double a() const { return a_; }
    double b() const { return b_; }
    double centerLevel() const { return -a_ * a_ * a_ / (6.0 * b_ * b_); }

    /// Homoclinic (u, u').
    std::vector<double> homoclinic(double x) const;
    /// Turning points r0 < 0 < u1 < a/b < u2 of the cubic potential at level h.
    std::array<double, 3> turningPoints(double h) const;
    /// Period in closed form (complete elliptic integral, Carlson R_F).
    double period(double h) const;
    /// Same period by direct tanh-sinh quadrature of 2 int du / sqrt(2(h - V)).
    double periodByQuadrature(double h) const;
    /// Level with the given period (bisection on the monotone period map).
    double levelForPeriod(double period) const;
    /// Periodic profile at level h, peak at x = 0, evaluated on the cell
    /// [-X/2, X/2] and extended periodically. State (u, u').
    Profile periodicProfile(double h) const;
    Profile homoclinicProfile() const;
    /// u'' - (a u - b u^2) for a state sample (u, u', u'').
    double residual(double u, double upp) const { return upp - (a_ * u - b_ * u * u); }

private:
    double a_, b_;
};

struct ModelFamily {
    SpectralSystem homoclinic;
    std::function<SpectralSystem(double period)> member;  // periodic member with the given period
    std::function<Profile(double period)> profile;        // empty for periodized models
    Profile homoclinicProfile{{}, [](double) { return std::vector<double>{}; },
                              std::numeric_limits<double>::infinity()};  // no names: coefficients given directly
    std::optional<DispersionArc> arc;
};

/// u_t = u_xx - u + u^2 linearized about its pulse; true periodic members.
ModelFamily pulseModel();

/// Periodic extension of the homoclinic coefficients restricted to [-X/2, X/2].
SpectralSystem periodizedSystem(const SpectralSystem& base, double period);

struct SyntheticArcParams {
    Complex lambdaStar{0.5, 1.0};
    double kStar = 0.7;
    Complex v{1.0, 0.0};          // lambda_j(k) = lambdaStar + i v (k - kStar)
    double muU = 1.0, muS = -1.0;
    Complex slopeU{0.5, 0.0}, slopeS{-0.5, 0.0};
    Complex couplingUS{0.8, 0.0}; // u <- s coupling, profile sech(x)
    Complex couplingSU{-1.5, 0.0};// s <- u coupling, profile sech(x)
    Complex couplingUC{0.3, 0.0}; // u <- c coupling, profile sech(2x)
    Complex couplingSC{0.2, 0.0}; // s <- c coupling, profile sech(2x)
    Complex beta0{0.3, 0.0}, beta1{0.2, 0.0};  // c <- c coupling (beta0 + beta1 (lambda - lambdaStar)) sech(x)
};

struct SyntheticArcSystem {
    SyntheticArcParams params;
    SpectralSystem homoclinic;
    DispersionArc arc;
    /// Oracle constants measured once by the homoclinic Evans module.
    Complex d1{0.0, 0.0}, d2{0.0, 0.0};
    /// Closed-form ratio D^0_2 / D^0_1 = exp(-pi beta(lambda)) of this construction.
    Complex ratioClosedForm(Complex lambda) const;
};

/// Build the controlled 3x3 arc system (state order u, c, s).
SyntheticArcSystem syntheticArcSystem(const SyntheticArcParams& params);

/// Tune couplingUS (complex secant) until D^0_1(lambdaStar) = 0, producing
/// an embedded eigenvalue. Throws when the iteration fails to converge.
SyntheticArcSystem embeddedArcSystem(SyntheticArcParams params, const NumericPolicy& policy,
                                     Complex initialGuess = {1.2, 0.0});

/// KdV u_t + u u_x + u_xxx = 0 in the frame of speed c; n = 3.
ModelFamily kdvCnoidalModel(double c);

struct SaintVenantProfile {
    double F = 6.0, nu = 0.1;
    double speed = 0.0;   // c
    double flux = 0.0;    // q = H (U - c)
    double decayRate = 0.0;   // saddle eigenvalue (unstable, x -> -inf side)
    double growthRate = 0.0;  // |stable eigenvalue|
    double crestMismatch = 0.0;  // |(H, P)| jump where the two manifold branches meet
    HermiteTable table;   // (H, P) with P = nu H U'
};

/// Homoclinic roll wave of the inclined shallow-water equations, by
/// bisection on the wave speed between captured and escaping unstable
/// manifolds of the flat state (H, U) = (1, 1).
SaintVenantProfile saintVenantProfile(double F, double nu);

/// Linearized first-order system (h, m - c h, momentum flux) about the roll
/// wave; periodic members by periodizedSystem.
ModelFamily saintVenantModel(double F, double nu);

/// Constant-coefficient system W' = M(lambda) W, periodic with the given
/// period (infinite period: homoclinic with A = A_inf).
SpectralSystem constantSystem(std::string name, std::function<CMatrix(Complex)> m, int dim, double period);

/// Hill equation v'' = (lambda - a - b cos(2 pi x / X)) v. As a moves across
/// an antiperiodic gap edge, a real -1-eigenvalue crosses lambda = 0.
SpectralSystem flipFamily(double a, double b, double period);

/// Largest sup_x |A(x) - A_inf| e^{rate |x|}-style fit: slope of
/// log|A - A_inf| against |x| over [x0, x1] (negative for decay).
double tailDecaySlope(const SpectralSystem& sys, Complex lambda, double x0, double x1, int samples = 40);

/// sup over |x| <= X/2 of |A^eps(x) - A^0(x)|.
double periodicDeviation(const SpectralSystem& member, const SpectralSystem& homoclinic, Complex lambda,
                         int samples = 400);

}  // namespace evans
