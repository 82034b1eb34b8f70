#include "evans/evans_hom.hpp"

#include <cmath>
#include <sstream>

namespace evans {

double tailHalfPeriod(const SpectralSystem& sys, Complex lambda, double tol, double maxHalf) {
    const CMatrix ainf = sys.asympt(lambda);
    auto deviation = [&](double x) {
        return std::max((sys.coeff(x, lambda) - ainf).norm(), (sys.coeff(-x, lambda) - ainf).norm());
    };
    for (double L = 1.0; L <= maxHalf; L += 0.5) {
        bool ok = true;
        for (double x = L; x <= L + 10.0; x += 0.25) {
            if (deviation(x) >= tol) {
                ok = false;
                break;
            }
        }
        if (ok) return L;
    }
    std::ostringstream os;
    os << "tailHalfPeriod: |A - A_inf| not below " << tol << " within |x| <= " << maxHalf
       << " (decay hypothesis fails or tolerance too strict)";
    throw NumericError(os.str());
}

HomoclinicEvansContext::HomoclinicEvansContext(SpectralSystem system, NumericPolicy policy, double halfPeriod,
                                               std::optional<ReferenceFrame> frame)
    : system_(std::move(system)), policy_(policy), halfPeriod_(halfPeriod), frame_(std::move(frame)) {
    if (system_.periodic()) throw NumericError("HomoclinicEvansContext: system is periodic");
    if (halfPeriod_ <= 0.0) halfPeriod_ = tailHalfPeriod(system_, 0.0, policy_.tailTol);
}

HomoclinicEvansContext::HomoclinicEvansContext(const HomoclinicEvansContext& other)
    : system_(other.system_), policy_(other.policy_), halfPeriod_(other.halfPeriod_), frame_(other.frame_) {}

HyperbolicSplitting HomoclinicEvansContext::split(Complex lambda, SplitMode mode) const {
    const auto key = std::make_tuple(lambda.real(), lambda.imag(), static_cast<int>(mode));
    {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
    }
    SplitOptions opts = policy_.split;
    opts.mode = mode;
    auto s = splitting(system_.asympt(lambda), opts, frame_ ? &*frame_ : nullptr);
    std::lock_guard<std::mutex> lock(mutex_);
    if (cache_.size() > 4096) cache_.clear();
    cache_[key] = s;
    return s;
}

DecayingFrames decayingFrames(const HomoclinicEvansContext& ctx, Complex lambda, const CMatrix& basisMinus,
                              const CMatrix& basisPlus) {
    const auto& sys = ctx.system();
    const CMatrix ainf = sys.asympt(lambda);
    const auto coeff = sys.at(lambda);
    const Conjugator minus(coeff, ainf, Side::Minus, ctx.halfPeriod(), basisMinus, ctx.policy());
    const Conjugator plus(coeff, ainf, Side::Plus, ctx.halfPeriod(), basisPlus, ctx.policy());
    return {minus.columns(0.0), plus.columns(0.0), basisMinus, basisPlus};
}

namespace {

ScaledValue ratio(const DecayingFrames& f) {
    const auto n = f.minus.rows();
    CMatrix num(n, n), den(n, n);
    num << f.minus, f.plus;
    den << f.basisMinus, f.basisPlus;
    return scaledDet(num) / scaledDet(den);
}

HyperbolicSplitting twoWay(const HomoclinicEvansContext& ctx, Complex lambda) {
    try {
        return ctx.split(lambda, SplitMode::TwoWay);
    } catch (const NumericError& e) {
        std::ostringstream os;
        os << "homoclinicEvans: no hyperbolic splitting at lambda = " << lambda << " (" << e.what()
           << "); near an arc use the transitional variant";
        throw NumericError(os.str());
    }
}

}  // namespace

ScaledValue homoclinicEvans(const HomoclinicEvansContext& ctx, Complex lambda) {
    const auto s = twoWay(ctx, lambda);
    return ratio(decayingFrames(ctx, lambda, s.basisMinus, s.basisPlus));
}

ScaledValue jostEvans(const HomoclinicEvansContext& ctx, Complex lambda) {
    const auto s = twoWay(ctx, lambda);
    const auto f = decayingFrames(ctx, lambda, s.basisMinus, s.basisPlus);
    const CMatrix m = f.minus * s.dualMinus - f.plus * s.dualPlus;
    ScaledValue d = scaledDet(m);
    return (s.nStable % 2) ? -d : d;
}

ArcExtension arcExtension(const HomoclinicEvansContext& ctx, const DispersionArc& arc, Complex lambda) {
    const auto s = ctx.split(lambda, SplitMode::ThreeWay);
    const Complex muC = *s.centerEigenvalue;
    if (arc.muC) {
        const Complex expected = arc.muC(lambda);
        if (std::abs(expected - muC) > 1e-6 * std::max(1.0, std::abs(muC))) {
            std::ostringstream os;
            os << "arcExtension: center eigenvalue " << muC << " does not continue the arc root " << expected;
            throw NumericError(os.str());
        }
    }
    const auto n = s.dim();
    const auto nu = s.basisMinus.cols(), ns = s.basisPlus.cols();
    CMatrix minus1(n, nu + 1), plus2(n, ns + 1);
    minus1 << s.basisMinus, s.basisCenter;
    plus2 << s.basisCenter, s.basisPlus;
    // Column order (strong unstable, center, strong stable) in both extensions.
    const auto f1 = decayingFrames(ctx, lambda, minus1, s.basisPlus);
    const auto f2 = decayingFrames(ctx, lambda, s.basisMinus, plus2);
    ArcExtension out;
    out.d1 = ratio(f1);
    out.d2 = ratio(f2);
    out.muC = muC;
    out.nStrongStable = s.nStable;
    return out;
}

ScaledValue transitionalHomoclinic(const HomoclinicEvansContext& ctx, const DispersionArc& arc, Complex lambda,
                                   Complex gamma, double period) {
    const auto ext = arcExtension(ctx, arc, lambda);
    const ScaledValue a = ScaledValue::exp(0.5 * ext.muC * period) * ext.d1;
    const ScaledValue b = ScaledValue::exp(-0.5 * ext.muC * period) * ext.d2 * ScaledValue(gamma);
    return a - b;
}

}  // namespace evans
