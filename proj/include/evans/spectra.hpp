#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "evans/evans_per.hpp"
#include "evans/linalg.hpp"
#include "evans/models.hpp"
#include "evans/numeric_policy.hpp"
#include "evans/parallel.hpp"

namespace evans {

struct Contour {
    enum class Kind { Circle, Rectangle };
    Kind kind = Kind::Circle;
    Complex center{0.0, 0.0};
    double rx = 1.0, ry = 1.0;  // radius (circle) or half-widths (rectangle)

    static Contour circle(Complex c, double r) { return {Kind::Circle, c, r, r}; }
    static Contour rectangle(Complex c, double halfWidth, double halfHeight) {
        return {Kind::Rectangle, c, halfWidth, halfHeight};
    }
    static Contour box(double re0, double re1, double im0, double im1) {
        return rectangle({0.5 * (re0 + re1), 0.5 * (im0 + im1)}, 0.5 * (re1 - re0), 0.5 * (im1 - im0));
    }
    /// Point at parameter t in [0, 1), counterclockwise.
    Complex point(double t) const;
    bool contains(Complex z) const;
};

struct Winding {
    int value = 0;
    int nodes = 0;
    double minModulusRatio = 0.0;  // min |f| / max |f| over the final nodes
};

/// Winding of arg f around the contour by phase unwrapping; nodes are doubled
/// until the count is unchanged over two refinements and no phase step
/// exceeds pi/2.
Winding windingNumber(const EvansFn& f, const Contour& contour, const NumericPolicy& policy);

struct Root {
    Complex lambda{0.0, 0.0};
    int multiplicity = 1;
    double boxSize = 0.0;    // side of the last box (0 after Newton polish)
    bool polished = false;
};

struct RootSearch {
    std::vector<Root> roots;
    int evaluations = 0;
    bool partial = false;  // evaluation budget exceeded
    std::vector<std::string> notes;
};

/// Roots inside the rectangle by recursive quadrisection (Rouche counts) and
/// Newton polish.
RootSearch locateRoots(const EvansFn& f, const Contour& box, double targetTol, const NumericPolicy& policy,
                       int budget = 200000);

/// Newton iteration with a centered-difference derivative. Returns nullopt
/// when it fails to converge or leaves the trust radius.
std::optional<Complex> newtonRoot(const EvansFn& f, Complex start, double tol, double trust, int maxIter = 40);

/// Root curve lambda(t) following f(., t) = 0 from `start` by continuation.
std::vector<Complex> trackRoot(const std::function<ScaledValue(Complex, double)>& f, Complex start,
                               const std::vector<double>& ts, double tol);

// ------------------------------------------------------------------ lattice

/// Points lambda_j(kappa), kappa = k mod 2 pi / X, inside B(lambdaStar, radius).
std::vector<Complex> latticePoints(const DispersionArc& arc, double k, double period, double radius);

struct LatticeDistance {
    std::vector<double> distances;
    double sup = 0.0;
};

/// Per-root distance to the lattice in B(lambdaStar, 2C/X).
LatticeDistance latticeDistance(const std::vector<Complex>& roots, const DispersionArc& arc, double k, double period,
                                double C);

/// ln(d2/d1) / (mu_c'(lambda_*) X).
Complex arcCorrector(Complex d1, Complex d2, Complex muCprime, double period);

// -------------------------------------------------------------------- fits

enum class RateModel { Exponential, Algebraic };

struct RateFit {
    RateModel model = RateModel::Exponential;
    double exponent = 0.0;   // rho for C e^{-rho X}, p for C X^{-p}
    double prefactor = 0.0;  // C
    double residual = 0.0;   // RMS of the log residuals
    bool refused = false;
    std::string note;
};

struct ConvergenceRecord {
    std::vector<double> periods;
    std::vector<double> errors;
    RateFit exponential, algebraic, best;
};

RateFit fitExponential(const std::vector<double>& xs, const std::vector<double>& errs);
RateFit fitAlgebraic(const std::vector<double>& xs, const std::vector<double>& errs);
/// Both fits; best = smaller residual. Refused when fewer than 4 points or
/// any error is at or below noiseFloor.
ConvergenceRecord fitRate(const std::vector<double>& xs, const std::vector<double>& errs, double noiseFloor = 0.0);

const char* modelName(RateModel m);

// -------------------------------------------------------- stability index

struct StabilityIndex {
    int sigma = 0;
    ScaledValue atZero, atInfinity;
    double cutoff = 0.0;  // R where the sign stabilized
    std::vector<std::pair<double, int>> history;  // (R, sign)
};

/// sgn E(0, -1) * sgn E(R, -1), R doubled from realCutoff until the sign
/// is stable over two doublings and |E| grows.
StabilityIndex stabilityIndex(const PeriodicEvansContext& ctx, double realCutoff = 1.0, int maxDoublings = 8);

// ------------------------------------------------------- diffusive check

struct DiffusiveOptions {
    double originRadius = 0.05;   // small circle at 0 for (D1)
    int expectedOriginCount = 1;  // manifold dimension of periodic profiles
    std::vector<Contour> searchBoxes;  // (D2) region family
    int gammaSamples = 8;
    double kMax = -1.0;           // (D3) largest Bloch number; default 0.2 * 2 pi / X
    int kSamples = 6;
    double etaTarget = 0.0;
    double rootTol = 1e-9;
};

struct DiffusiveReport {
    int originWinding = 0;
    bool d1 = false, d2 = false, d3 = false;
    bool inconclusive = false;
    std::vector<std::pair<Complex, Complex>> unstableRoots;  // (lambda, gamma)
    double etaHat = 0.0;
    std::vector<std::string> notes;
};

DiffusiveReport diffusiveCheck(const PeriodicEvansContext& ctx, const DiffusiveOptions& opts);

/// eta with Re lambda(k) ~ -eta k^2 (least squares through the origin).
double curvatureFit(const std::vector<double>& ks, const std::vector<Complex>& lambdas);

}  // namespace evans
