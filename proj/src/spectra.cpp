#include "evans/spectra.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <sstream>

namespace evans {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

int signOf(const ScaledValue& v) {
    const double re = v.mantissa().real();
    return re > 0 ? 1 : (re < 0 ? -1 : 0);
}
}  // namespace

// ---------------------------------------------------------------- contours

Complex Contour::point(double t) const {
    t -= std::floor(t);
    if (kind == Kind::Circle) return center + std::polar(rx, kTwoPi * t);
    const double w = 2 * rx, h = 2 * ry, perim = 2 * (w + h);
    double s = t * perim;
    const Complex bl = center - Complex(rx, ry);
    if (s < w) return bl + s;
    s -= w;
    if (s < h) return bl + Complex(w, s);
    s -= h;
    if (s < w) return bl + Complex(w - s, h);
    s -= w;
    return bl + Complex(0.0, h - s);
}

bool Contour::contains(Complex z) const {
    const Complex d = z - center;
    if (kind == Kind::Circle) return std::abs(d) < rx;
    return std::abs(d.real()) < rx && std::abs(d.imag()) < ry;
}

// ----------------------------------------------------------------- winding

namespace {

struct Samples {
    std::vector<Complex> pts;
    std::vector<ScaledValue> vals;
};

Winding windingImpl(const EvansFn& f, const Contour& contour, const NumericPolicy& policy, int confirmations,
                    Samples* keep = nullptr) {
    int n = std::max(8, policy.contourNodes);
    std::vector<Complex> pts(n);
    for (int j = 0; j < n; ++j) pts[j] = contour.point(static_cast<double>(j) / n);
    std::vector<ScaledValue> vals = evaluateNodes(f, pts);

    const double floor = policy.noiseFactor * policy.relTol;
    int previous = 0, agreed = 0;
    bool havePrevious = false;
    for (int refinement = 0; refinement <= policy.maxRefinements + confirmations; ++refinement) {
        double top = -std::numeric_limits<double>::infinity(), bottom = std::numeric_limits<double>::infinity();
        for (const auto& v : vals) {
            top = std::max(top, v.logAbs());
            bottom = std::min(bottom, v.logAbs());
        }
        const double ratio = std::exp(bottom - top);
        if (!(ratio > floor)) {
            std::size_t worst = 0;
            for (std::size_t j = 0; j < vals.size(); ++j)
                if (vals[j].logAbs() < vals[worst].logAbs()) worst = j;
            std::ostringstream os;
            os << "windingNumber: |f| at the noise floor near z = " << pts[worst]
               << "; nudge the contour (shift or change its size)";
            throw NumericError(os.str());
        }
        double total = 0.0, maxStep = 0.0;
        for (int j = 0; j < n; ++j) {
            const double step = (vals[(j + 1) % n] / vals[j]).arg();
            total += step;
            maxStep = std::max(maxStep, std::abs(step));
        }
        const int w = static_cast<int>(std::lround(total / kTwoPi));
        if (maxStep < 0.5 * std::numbers::pi) {
            if (havePrevious && w == previous) {
                if (++agreed >= confirmations) {
                    if (keep) *keep = {pts, vals};
                    return {w, n, ratio};
                }
            } else {
                agreed = 0;
            }
            previous = w;
            havePrevious = true;
        }
        if (refinement == policy.maxRefinements + confirmations) break;
        // Double: keep old nodes, add midpoints.
        std::vector<Complex> mids(n);
        for (int j = 0; j < n; ++j) mids[j] = contour.point((j + 0.5) / n);
        const auto midVals = evaluateNodes(f, mids);
        std::vector<Complex> p2(2 * n);
        std::vector<ScaledValue> v2(2 * n);
        for (int j = 0; j < n; ++j) {
            p2[2 * j] = pts[j];
            v2[2 * j] = vals[j];
            p2[2 * j + 1] = mids[j];
            v2[2 * j + 1] = midVals[j];
        }
        pts.swap(p2);
        vals.swap(v2);
        n *= 2;
    }
    std::ostringstream os;
    os << "windingNumber: count did not stabilize with " << n << " nodes";
    throw NumericError(os.str());
}

}  // namespace

Winding windingNumber(const EvansFn& f, const Contour& contour, const NumericPolicy& policy) {
    return windingImpl(f, contour, policy, 2);
}

// ------------------------------------------------------------------- roots

std::optional<Complex> newtonRoot(const EvansFn& f, Complex start, double tol, double trust, int maxIter) {
    Complex z = start;
    for (int it = 0; it < maxIter; ++it) {
        const double h = 1e-6 * std::max(1.0, std::abs(z));
        const ScaledValue fz = f(z);
        if (fz.isZero()) return z;
        const ScaledValue fp = f(z + h), fm = f(z - h);
        const Complex logDeriv = ((fp - fm) / fz).value() / (2.0 * h);
        if (!std::isfinite(std::abs(logDeriv)) || std::abs(logDeriv) == 0.0) return std::nullopt;
        const Complex dz = -1.0 / logDeriv;
        z += dz;
        if (std::abs(z - start) > trust) return std::nullopt;
        if (std::abs(dz) < tol) return z;
    }
    return std::nullopt;
}

namespace {

// Roots inside a contour from the sampled boundary values: moments
// (1/2 pi i) oint z^p dlog f by the midpoint rule on the unwrapped
// increments, then the eigenvalues of the Hankel pencil (Delves-Lyness).
std::vector<Complex> momentEstimates(const Samples& s, const Contour& box, int count) {
    const std::size_t n = s.pts.size();
    const Complex c = box.center;
    const double scale = std::max(box.rx, box.ry);
    std::vector<Complex> mom(2 * count, Complex(0.0, 0.0));
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t k = (j + 1) % n;
        const ScaledValue ratio = s.vals[k] / s.vals[j];
        const Complex dlog(std::log(std::abs(ratio.mantissa())) + ratio.logscale(), ratio.arg());
        const Complex z = 0.5 * (s.pts[j] + s.pts[k]);
        const Complex zs = (z - c) / scale;
        Complex zp(1.0, 0.0);
        for (int p = 0; p < 2 * count; ++p) {
            mom[p] += zp * dlog;
            zp *= zs;
        }
    }
    for (auto& m : mom) m /= Complex(0.0, kTwoPi);
    CMatrix h0(count, count), h1(count, count);
    for (int i = 0; i < count; ++i)
        for (int j = 0; j < count; ++j) {
            h0(i, j) = mom[i + j];
            h1(i, j) = mom[i + j + 1];
        }
    const CMatrix m = h0.fullPivLu().solve(h1);
    std::vector<Complex> out;
    if (!m.allFinite()) return out;
    Eigen::ComplexEigenSolver<CMatrix> es(m, false);
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) out.push_back(c + scale * es.eigenvalues()(i));
    return out;
}

}  // namespace

RootSearch locateRoots(const EvansFn& f, const Contour& box, double targetTol, const NumericPolicy& policy,
                       int budget) {
    if (box.kind != Contour::Kind::Rectangle) throw NumericError("locateRoots: rectangle contour required");
    RootSearch out;
    std::atomic<int> evals{0};
    const EvansFn counted = [&](Complex z) {
        ++evals;
        return f(z);
    };
    struct Task {
        Contour box;
        int winding;
        Samples samples;
    };
    std::vector<Task> stack;
    // Child contours that pass close to a root are cheaper to replace by a
    // shifted split than to resolve with many nodes.
    NumericPolicy childPolicy = policy;
    childPolicy.maxRefinements = std::min(policy.maxRefinements, 2);
    Samples s0;
    const int w0 = windingImpl(counted, box, policy, 1, &s0).value;
    if (w0 != 0) stack.push_back({box, w0, std::move(s0)});

    while (!stack.empty()) {
        const Task task = stack.back();
        stack.pop_back();
        const Contour& b = task.box;
        const double size = 2.0 * std::max(b.rx, b.ry);
        if (task.winding > 1 && task.winding <= 8 && !task.samples.pts.empty()) {
            // Accept the moment estimates only when Newton confirms that
            // many distinct simple roots inside the box.
            std::vector<Complex> found;
            for (auto z0 : momentEstimates(task.samples, b, task.winding)) {
                const auto z = newtonRoot(counted, z0, 0.01 * targetTol, 0.5 * size);
                if (!z || !b.contains(*z)) break;
                bool distinct = true;
                for (auto q : found) distinct = distinct && std::abs(q - *z) > std::max(100.0 * targetTol, 1e-8 * size);
                if (!distinct) break;
                found.push_back(*z);
            }
            if (static_cast<int>(found.size()) == task.winding) {
                for (auto z : found) out.roots.push_back({z, 1, 0.0, true});
                continue;
            }
        }
        if (task.winding == 1) {
            const auto z = newtonRoot(counted, b.center, 0.01 * targetTol, size);
            if (z && b.contains(*z)) {
                out.roots.push_back({*z, 1, 0.0, true});
                continue;
            }
        }
        if (size <= targetTol || evals.load() > budget) {
            if (size > targetTol) out.partial = true;
            out.roots.push_back({b.center, task.winding, size, false});
            continue;
        }
        bool split = false;
        for (int attempt = 0; attempt < 6 && !split; ++attempt) {
            const double fx = 0.5 + 0.0137 * attempt, fy = 0.5 - 0.0113 * attempt;
            const double x0 = b.center.real() - b.rx, x1 = b.center.real() + b.rx;
            const double y0 = b.center.imag() - b.ry, y1 = b.center.imag() + b.ry;
            const double xm = x0 + fx * (x1 - x0), ym = y0 + fy * (y1 - y0);
            const Contour kids[4] = {Contour::box(x0, xm, y0, ym), Contour::box(xm, x1, y0, ym),
                                     Contour::box(x0, xm, ym, y1), Contour::box(xm, x1, ym, y1)};
            try {
                int ws[4], sum = 0;
                Samples ss[4];
                for (int q = 0; q < 4; ++q) {
                    ws[q] = windingImpl(counted, kids[q], childPolicy, 1, &ss[q]).value;
                    sum += ws[q];
                }
                if (sum != task.winding) {
                    std::ostringstream os;
                    os << "locateRoots: child windings sum to " << sum << " instead of " << task.winding
                       << " near " << b.center << "; retrying with a shifted split";
                    out.notes.push_back(os.str());
                    continue;
                }
                for (int q = 0; q < 4; ++q)
                    if (ws[q] != 0) stack.push_back({kids[q], ws[q], std::move(ss[q])});
                split = true;
            } catch (const NumericError& e) {
                out.notes.push_back(e.what());
            }
        }
        if (!split) {
            out.partial = true;
            out.roots.push_back({b.center, task.winding, size, false});
        }
    }
    std::sort(out.roots.begin(), out.roots.end(), [](const Root& a, const Root& b) {
        if (a.lambda.real() != b.lambda.real()) return a.lambda.real() < b.lambda.real();
        return a.lambda.imag() < b.lambda.imag();
    });
    out.evaluations = evals.load();
    return out;
}

std::vector<Complex> trackRoot(const std::function<ScaledValue(Complex, double)>& f, Complex start,
                               const std::vector<double>& ts, double tol) {
    std::vector<Complex> out;
    Complex prev = start, prev2 = start;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const double t = ts[i];
        const Complex guess = i >= 2 ? prev + (prev - prev2) : prev;
        const double trust = 10.0 * std::abs(prev - prev2) + 0.05;
        const auto z = newtonRoot([&](Complex l) { return f(l, t); }, guess, tol, trust);
        if (!z) {
            std::ostringstream os;
            os << "trackRoot: lost the root at t = " << t << " (last " << prev << ")";
            throw NumericError(os.str());
        }
        prev2 = prev;
        prev = *z;
        out.push_back(*z);
    }
    return out;
}

// ----------------------------------------------------------------- lattice

std::vector<Complex> latticePoints(const DispersionArc& arc, double k, double period, double radius) {
    const double h = 1e-5;
    const double speed = std::abs(arc.paramToLambda(arc.kStar + h) - arc.paramToLambda(arc.kStar - h)) / (2 * h);
    if (!(speed > 0.0)) throw NumericError("latticePoints: degenerate arc (lambda_j'(k_*) = 0)");
    const double reach = 2.0 * radius / speed + kTwoPi / period;
    const double step = kTwoPi / period;
    const long jLo = static_cast<long>(std::ceil((arc.kStar - reach - k) / step));
    const long jHi = static_cast<long>(std::floor((arc.kStar + reach - k) / step));
    std::vector<std::pair<double, Complex>> pts;
    for (long j = jLo; j <= jHi; ++j) {
        const double kappa = k + j * step;
        const Complex l = arc.paramToLambda(kappa);
        if (std::abs(l - arc.lambdaStar) <= radius) pts.push_back({std::abs(kappa - arc.kStar), l});
    }
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Complex> out;
    for (const auto& p : pts) out.push_back(p.second);
    return out;
}

LatticeDistance latticeDistance(const std::vector<Complex>& roots, const DispersionArc& arc, double k, double period,
                                double C) {
    const auto pts = latticePoints(arc, k, period, 2.0 * C / period);
    if (pts.empty()) throw NumericError("latticeDistance: empty lattice window; increase C");
    LatticeDistance out;
    for (auto r : roots) {
        // Candidates are ordered by |kappa - k_*|, so the strict comparison keeps the nearer one on ties.
        double best = std::numeric_limits<double>::infinity();
        for (auto p : pts) best = std::min(best, std::abs(r - p));
        out.distances.push_back(best);
        out.sup = std::max(out.sup, best);
    }
    return out;
}

Complex arcCorrector(Complex d1, Complex d2, Complex muCprime, double period) {
    return std::log(d2 / d1) / (muCprime * period);
}

// -------------------------------------------------------------------- fits

namespace {

RateFit linearLogFit(const std::vector<double>& xs, const std::vector<double>& errs, bool logX, RateModel model) {
    RateFit fit;
    fit.model = model;
    const std::size_t n = xs.size();
    if (n < 2 || errs.size() != n) {
        fit.refused = true;
        fit.note = "fit needs matching, non-trivial data";
        return fit;
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = logX ? std::log(xs[i]) : xs[i];
        const double y = std::log(errs[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double icpt = (sy - slope * sx) / n;
    double ss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = logX ? std::log(xs[i]) : xs[i];
        const double r = std::log(errs[i]) - (icpt + slope * x);
        ss += r * r;
    }
    fit.exponent = -slope;
    fit.prefactor = std::exp(icpt);
    fit.residual = std::sqrt(ss / n);
    return fit;
}

}  // namespace

RateFit fitExponential(const std::vector<double>& xs, const std::vector<double>& errs) {
    return linearLogFit(xs, errs, false, RateModel::Exponential);
}

RateFit fitAlgebraic(const std::vector<double>& xs, const std::vector<double>& errs) {
    return linearLogFit(xs, errs, true, RateModel::Algebraic);
}

ConvergenceRecord fitRate(const std::vector<double>& xs, const std::vector<double>& errs, double noiseFloor) {
    ConvergenceRecord rec;
    rec.periods = xs;
    rec.errors = errs;
    std::string refusal;
    if (xs.size() < 4 || errs.size() != xs.size()) refusal = "fewer than 4 periods";
    for (std::size_t i = 0; i < errs.size() && refusal.empty(); ++i) {
        if (!(errs[i] > noiseFloor) || !std::isfinite(errs[i])) {
            std::ostringstream os;
            os << "error " << errs[i] << " at X = " << xs[i] << " is at the noise floor " << noiseFloor;
            refusal = os.str();
        }
    }
    if (!refusal.empty()) {
        rec.best.refused = rec.exponential.refused = rec.algebraic.refused = true;
        rec.best.note = rec.exponential.note = rec.algebraic.note = refusal;
        return rec;
    }
    rec.exponential = fitExponential(xs, errs);
    rec.algebraic = fitAlgebraic(xs, errs);
    rec.best = rec.exponential.residual <= rec.algebraic.residual ? rec.exponential : rec.algebraic;
    return rec;
}

const char* modelName(RateModel m) { return m == RateModel::Exponential ? "exponential" : "algebraic"; }

// -------------------------------------------------------- stability index

StabilityIndex stabilityIndex(const PeriodicEvansContext& ctx, double realCutoff, int maxDoublings) {
    StabilityIndex out;
    out.atZero = periodicEvans(ctx, 0.0, -1.0);
    const int s0 = signOf(out.atZero);
    const double floor = ctx.policy().noiseFactor * ctx.policy().relTol;
    // Scale for the zero test: E(0, -1) against E(0, +i), which has the same growth.
    const ScaledValue ref = periodicEvans(ctx, 0.0, Complex(0.0, 1.0));
    if (s0 == 0 || std::exp(out.atZero.logAbs() - ref.logAbs()) < floor)
        throw NumericError("stabilityIndex: E(0, -1) vanishes within the noise floor");
    double R = realCutoff;
    ScaledValue prevVal = periodicEvans(ctx, R, -1.0);
    int prevSign = signOf(prevVal);
    out.history.push_back({R, prevSign});
    for (int d = 0; d < maxDoublings; ++d) {
        R *= 2.0;
        const ScaledValue v = periodicEvans(ctx, R, -1.0);
        const int s = signOf(v);
        out.history.push_back({R, s});
        if (s == prevSign && s != 0 && v.logAbs() > prevVal.logAbs()) {
            out.sigma = s0 * s;
            out.atInfinity = v;
            out.cutoff = R;
            return out;
        }
        prevSign = s;
        prevVal = v;
    }
    throw NumericError("stabilityIndex: sign of E(R, -1) did not stabilize");
}

// ------------------------------------------------------- diffusive check

double curvatureFit(const std::vector<double>& ks, const std::vector<Complex>& lambdas) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        const double k2 = ks[i] * ks[i];
        num += lambdas[i].real() * k2;
        den += k2 * k2;
    }
    return -num / den;
}

DiffusiveReport diffusiveCheck(const PeriodicEvansContext& ctx, const DiffusiveOptions& opts) {
    DiffusiveReport rep;
    const auto& policy = ctx.policy();
    const double X = ctx.period();
    try {
        rep.originWinding = windingNumber([&](Complex l) { return periodicEvans(ctx, l, 1.0); },
                                          Contour::circle(0.0, opts.originRadius), policy)
                                .value;
        rep.d1 = rep.originWinding == opts.expectedOriginCount;
    } catch (const NumericError& e) {
        rep.inconclusive = true;
        rep.notes.push_back(std::string("(D1) ") + e.what());
    }

    rep.d2 = true;
    for (int g = 0; g < opts.gammaSamples; ++g) {
        const Complex gamma = std::polar(1.0, kTwoPi * g / opts.gammaSamples);
        for (const auto& box : opts.searchBoxes) {
            try {
                const auto found = locateRoots([&](Complex l) { return periodicEvans(ctx, l, gamma); }, box,
                                               opts.rootTol, policy);
                if (found.partial) rep.inconclusive = true;
                for (const auto& r : found.roots) {
                    if (r.lambda.real() >= -opts.rootTol && std::abs(r.lambda) > opts.originRadius) {
                        rep.unstableRoots.push_back({r.lambda, gamma});
                        rep.d2 = false;
                    }
                }
            } catch (const NumericError& e) {
                rep.inconclusive = true;
                rep.notes.push_back(std::string("(D2) ") + e.what());
            }
        }
    }
    for (const auto& [l, g] : rep.unstableRoots) {
        std::ostringstream os;
        os << "(D2) root lambda = " << l << " with Re >= 0 at gamma = " << g;
        rep.notes.push_back(os.str());
    }

    const double kMax = opts.kMax > 0 ? opts.kMax : 0.2 * kTwoPi / X;
    std::vector<double> ks;
    for (int i = 1; i <= opts.kSamples; ++i) ks.push_back(kMax * i / opts.kSamples);
    try {
        const auto loop = trackRoot(
            [&](Complex l, double k) { return periodicEvans(ctx, l, std::polar(1.0, k * X)); }, 0.0, ks,
            opts.rootTol);
        rep.etaHat = curvatureFit(ks, loop);
        rep.d3 = rep.etaHat > opts.etaTarget;
        for (std::size_t i = 0; i < ks.size(); ++i)
            if (loop[i].real() > -0.5 * rep.etaHat * ks[i] * ks[i]) rep.d3 = false;
    } catch (const NumericError& e) {
        rep.inconclusive = true;
        rep.notes.push_back(std::string("(D3) ") + e.what());
    }
    return rep;
}

}  // namespace evans
