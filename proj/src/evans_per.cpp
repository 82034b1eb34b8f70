#include "evans/evans_per.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace evans {

PeriodicEvansContext::PeriodicEvansContext(SpectralSystem member, NumericPolicy policy)
    : system_(std::move(member)), policy_(policy) {
    if (!system_.periodic()) throw NumericError("PeriodicEvansContext: system has no finite period");
}

PeriodicEvansContext::PeriodicEvansContext(const PeriodicEvansContext& other)
    : system_(other.system_), policy_(other.policy_) {}

FormSet propagateForms(const CoefficientMap& coeff, double x0, double x1, const CMatrix& basis,
                       const NumericPolicy& policy) {
    const int n = static_cast<int>(basis.cols());
    FormSet out;
    out.forms.resize(n + 1);
    out.forms[0] = {CMatrix::Ones(1, 1), {0.0}};
    for (int k = 1; k < n; ++k) {
        PropagateOptions po;
        po.initial = compoundMinors(basis, k);
        const CoefficientMap gen = k == 1 ? coeff : CoefficientMap([&coeff, k](double x) {
            return compoundGenerator(coeff(x), k);
        });
        const auto p = propagate(gen, x0, x1, policy, po);
        out.forms[k] = {p.columnMantissa, p.columnLog};
        if (k == 1) out.trace = p.trIntegral;
    }
    if (n == 1) {
        PropagateOptions po;
        po.initial = basis;
        const auto p = propagate(coeff, x0, x1, policy, po);
        out.trace = p.trIntegral;
    }
    // top degree by Abel: det(Phi R) = e^{int tr A} det R
    const ScaledValue top = ScaledValue::exp(out.trace) * scaledDet(basis);
    out.forms[n] = {CMatrix::Constant(1, 1, top.mantissa()), {top.logscale()}};
    return out;
}

FormSet basisForms(const CMatrix& basis) {
    const int n = static_cast<int>(basis.cols());
    FormSet out;
    out.forms.resize(n + 1);
    for (int k = 0; k <= n; ++k) {
        const CMatrix m = compoundMinors(basis, k);
        out.forms[k] = {m, std::vector<double>(m.cols(), 0.0)};
    }
    return out;
}

ScaledValue combineForms(const FormSet& a, const FormSet& b, Complex gamma, const CMatrix& basis) {
    const int n = static_cast<int>(basis.cols());
    ScaledValue total(0.0);
    const ScaledValue minusGamma(-gamma);
    ScaledValue gammaPow(1.0);  // (-gamma)^{n-k}, built from k = n downward
    std::vector<ScaledValue> byDegree(n + 1);
    for (int k = n; k >= 0; --k) {
        const auto setsK = subsets(n, k);
        const auto setsC = subsets(n, n - k);
        std::map<std::vector<int>, int> indexC;
        for (std::size_t i = 0; i < setsC.size(); ++i) indexC[setsC[i]] = static_cast<int>(i);
        auto complementIndex = [&](const std::vector<int>& s) {
            std::vector<int> c;
            for (int i = 0, p = 0; i < n; ++i) {
                if (p < static_cast<int>(s.size()) && s[p] == i) { ++p; continue; }
                c.push_back(i);
            }
            return indexC.at(c);
        };
        auto parity = [](const std::vector<int>& s) {
            int t = 0;
            for (int v : s) t += v;
            return t % 2 == 0 ? 1.0 : -1.0;
        };
        const auto& fa = a.forms[k];
        const auto& gb = b.forms[n - k];
        ScaledValue degree(0.0);
        for (std::size_t ai = 0; ai < setsK.size(); ++ai) {
            const int bi = complementIndex(setsK[ai]);
            Complex sum(0.0, 0.0);
            for (std::size_t ri = 0; ri < setsK.size(); ++ri) {
                const int rc = complementIndex(setsK[ri]);
                sum += parity(setsK[ri]) * fa.mantissa(ri, ai) * gb.mantissa(rc, bi);
            }
            degree = degree + ScaledValue(sum * parity(setsK[ai]), fa.logs[ai] + gb.logs[bi]);
        }
        total = total + degree * gammaPow;
        gammaPow = gammaPow * minusGamma;
    }
    return total / scaledDet(basis);
}

namespace {

ScaledValue intPow(Complex base, int p) {
    ScaledValue out(1.0);
    const ScaledValue b(base);
    for (int i = 0; i < std::abs(p); ++i) out = out * b;
    return p < 0 ? ScaledValue(1.0) / out : out;
}

}  // namespace

std::shared_ptr<const PeriodicPropagation> PeriodicEvansContext::at(Complex lambda, SplitMode preferred, bool allowAnyBasis) const {
    const auto key = std::make_tuple(lambda.real(), lambda.imag(), static_cast<int>(preferred) + (allowAnyBasis ? 2 : 0));
    {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
    }
    auto out = std::make_shared<PeriodicPropagation>();
    const CMatrix ainf = system_.asympt(lambda);
    const auto n = ainf.rows();
    SplitOptions opts = policy_.split;
    opts.mode = preferred;
    try {
        out->split = splitting(ainf, opts);
        out->threeWay = preferred == SplitMode::ThreeWay;
        out->basis.resize(n, n);
        out->basis << out->split.basisMinus, out->split.basisCenter, out->split.basisPlus;
    } catch (const NumericError&) {
        if (!allowAnyBasis) throw;
        // E and the balanced function accept any basis; eigenvectors suffice.
        Eigen::ComplexEigenSolver<CMatrix> es(ainf);
        out->basis = es.eigenvectors();
        if (!out->basis.allFinite() || std::abs(out->basis.determinant()) < 1e-10) out->basis = CMatrix::Identity(n, n);
        out->anyBasis = true;
    }

    const double half = 0.5 * system_.period;
    const auto coeff = system_.at(lambda);
    out->toZeroFromLeft = propagateForms(coeff, -half, 0.0, out->basis, policy_);
    out->toZeroFromRight = propagateForms(coeff, half, 0.0, out->basis, policy_);
    out->cell = propagateForms(coeff, -half, half, out->basis, policy_);
    out->identity = basisForms(out->basis);
    out->trRightHalf = -out->toZeroFromRight.trace;
    out->trCell = out->cell.trace;

    std::lock_guard<std::mutex> lock(mutex_);
    if (cache_.size() > 4096) cache_.clear();
    cache_[key] = out;
    return out;
}

ScaledValue periodicEvans(const PeriodicEvansContext& ctx, Complex lambda, Complex gamma) {
    const auto p = ctx.at(lambda, SplitMode::TwoWay, true);
    return combineForms(p->cell, p->identity, gamma, p->basis);
}

ScaledValue balancedEvans(const PeriodicEvansContext& ctx, Complex lambda, Complex gamma) {
    const auto p = ctx.at(lambda, SplitMode::TwoWay, true);
    return combineForms(p->toZeroFromLeft, p->toZeroFromRight, gamma, p->basis);
}

ScaledValue rescaledEvans(const PeriodicEvansContext& ctx, Complex lambda, Complex gamma) {
    std::shared_ptr<const PeriodicPropagation> p;
    try {
        p = ctx.at(lambda, SplitMode::TwoWay);
    } catch (const NumericError& e) {
        std::ostringstream os;
        os << "rescaledEvans: no hyperbolic splitting at lambda = " << lambda << " (" << e.what()
           << "); near an arc use transitionalPeriodic";
        throw NumericError(os.str());
    }
    const double half = 0.5 * ctx.period();
    const ScaledValue pre = ScaledValue::exp(half * (p->split.traceStable - p->split.traceUnstable));
    return pre * intPow(-gamma, -p->split.nStable) *
           combineForms(p->toZeroFromLeft, p->toZeroFromRight, gamma, p->basis);
}

ScaledValue transitionalPeriodic(const PeriodicEvansContext& ctx, const DispersionArc& arc, Complex lambda,
                                 Complex gamma) {
    const auto p = ctx.at(lambda, SplitMode::ThreeWay);
    if (arc.muC) {
        const Complex expected = arc.muC(lambda);
        const Complex muC = *p->split.centerEigenvalue;
        if (std::abs(expected - muC) > 1e-6 * std::max(1.0, std::abs(muC))) {
            std::ostringstream os;
            os << "transitionalPeriodic: center eigenvalue " << muC << " does not continue the arc root " << expected;
            throw NumericError(os.str());
        }
    }
    const double half = 0.5 * ctx.period();
    const ScaledValue pre = ScaledValue::exp(half * (p->split.traceStable - p->split.traceUnstable));
    return pre * intPow(-gamma, -p->split.nStable) *
           combineForms(p->toZeroFromLeft, p->toZeroFromRight, gamma, p->basis);
}

}  // namespace evans
