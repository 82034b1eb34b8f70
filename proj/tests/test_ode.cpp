#include <doctest.h>

#include <cmath>

#include "evans/models.hpp"
#include "evans/ode.hpp"
#include "evans/spectra.hpp"

using namespace evans;

namespace {

CMatrix constant2(Complex a, Complex b, Complex c, Complex d) {
    CMatrix m(2, 2);
    m << a, b, c, d;
    return m;
}

double relErr(const CMatrix& a, const CMatrix& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST_CASE("constant diagonal propagation") {
    NumericPolicy pol;
    const Complex a1(1.5, 0.3), a2(-2.0, 1.0);
    for (double X : {1.0, 10.0, 300.0}) {
        const auto p = propagate([&](double) { return constant2(a1, 0.0, 0.0, a2); }, 0.0, X, pol);
        // columns scale independently: compare each against its own exponential
        const ScaledValue e1 = ScaledValue::exp(a1 * X), e2 = ScaledValue::exp(a2 * X);
        CHECK(ScaledValue::relativeDistance(ScaledValue(p.columnMantissa(0, 0), p.columnLog[0]), e1) < 1e-10);
        CHECK(ScaledValue::relativeDistance(ScaledValue(p.columnMantissa(1, 1), p.columnLog[1]), e2) < 1e-10);
        CHECK(p.result.logscale == doctest::Approx(1.5 * X).epsilon(0.05));
        CHECK(ScaledValue::relativeDistance(p.determinant(), ScaledValue::exp((a1 + a2) * X)) < 1e-10);
    }
}

TEST_CASE("nilpotent propagation") {
    NumericPolicy pol;
    const double X = 7.0;
    const auto p = propagate([](double) { return constant2(0.0, 1.0, 0.0, 0.0); }, 0.0, X, pol);
    CHECK(relErr(p.result.value(), constant2(1.0, X, 0.0, 1.0)) < 1e-13);
}

TEST_CASE("pulse Abel identity over [-15, 15]") {
    NumericPolicy pol;
    const auto fam = pulseModel();
    const auto p = propagate(fam.homoclinic.at(0.0), -15.0, 15.0, pol);
    CHECK(std::abs(p.trIntegral) < 1e-12);
    CHECK(std::abs(p.determinant().value() - 1.0) < 1e-8);
}

TEST_CASE("Abel at every stored grid point") {
    NumericPolicy pol;
    // tr A = sin x, integral 1 - cos x from 0
    const CoefficientMap a = [](double x) {
        return constant2(std::sin(x), 1.0, Complex(x / (1 + x * x), 0.2), Complex(0.0, std::cos(3 * x)));
    };
    PropagateOptions o;
    o.storeGrid = true;
    const auto p = propagate(a, 0.0, 20.0, pol, o);
    REQUIRE(p.grid.size() > 10);
    double worst = 0.0;
    for (const auto& g : p.grid) {
        const Complex want = std::exp(Complex(1.0 - std::cos(g.x), std::sin(3 * g.x) / 3.0));
        worst = std::max(worst, std::abs(g.det.value() - want) / std::abs(want));
    }
    CHECK(worst <= 1e-8);
}

TEST_CASE("inverse consistency and group property") {
    NumericPolicy pol;
    const auto fam = pulseModel();
    const auto a = fam.homoclinic.at(Complex(0.7, 0.4));
    const CMatrix fwd = propagate(a, -6.0, 4.0, pol).result.value();
    const CMatrix back = propagate(a, 4.0, -6.0, pol).result.value();
    CHECK((fwd * back - CMatrix::Identity(2, 2)).norm() < 1e-8);
    const CMatrix first = propagate(a, -6.0, 1.0, pol).result.value();
    const CMatrix second = propagate(a, 1.0, 4.0, pol).result.value();
    CHECK(relErr(second * first, fwd) < 1e-8);
}

TEST_CASE("local-error guard on a coarse fixed grid") {
    NumericPolicy pol;
    pol.step = 2.0;
    const CoefficientMap a = [](double x) { return constant2(0.0, 1.0, -400.0 * std::cos(x), 0.0); };
    CHECK_THROWS_AS(propagate(a, 0.0, 30.0, pol), NumericError);
}

TEST_CASE("adaptive mode matches fixed grid") {
    NumericPolicy fixed, adaptive;
    adaptive.fixedGrid = false;
    const auto fam = pulseModel();
    const auto a = fam.homoclinic.at(Complex(0.3, -0.2));
    const CMatrix p1 = propagate(a, -10.0, 10.0, fixed).result.value();
    const CMatrix p2 = propagate(a, -10.0, 10.0, adaptive).result.value();
    CHECK(relErr(p2, p1) < 1e-8);
}

TEST_CASE("monodromy") {
    NumericPolicy pol;
    const double X = 12.0;
    const auto m = monodromy([](double) { return constant2(0.4, 0.0, 0.0, -0.9); }, X, pol).value();
    CHECK(std::abs(m(0, 0) - std::exp(0.4 * X)) < 1e-10 * std::exp(0.4 * X));
    CHECK(std::abs(m(1, 1) - std::exp(-0.9 * X)) < 1e-10);

    // periodized pulse at lambda = 1: multipliers near e^{+-sqrt2 X}
    const auto fam = pulseModel();
    double prev = 1e9;
    for (double period : {12.0, 20.0, 28.0}) {
        const auto sys = fam.member(period);
        const auto prop = propagate(sys.at(1.0), -period / 2, period / 2, pol);
        const ScaledMatrix& psi = prop.result;
        CHECK((monodromy(sys.at(1.0), period, pol).value() - psi.value()).norm() <= 1e-12 * psi.value().norm());
        const auto mult = eigenvalues(psi.mantissa);
        Complex big = std::abs(mult[0]) > std::abs(mult[1]) ? mult[0] : mult[1];
        const double logBig = std::log(std::abs(big)) + psi.logscale;
        // log multiplier = sqrt2 X + O(1): the offset settles as X grows
        const double offset = logBig - std::sqrt(2.0) * period;
        if (prev < 1e8) CHECK(std::abs(offset - prev) < 0.05);
        prev = offset;
        // Abel over the cell
        CHECK(ScaledValue::relativeDistance(prop.determinant(), ScaledValue::exp(prop.trIntegral)) < 1e-8);
    }
}

TEST_CASE("fixed grid is smooth in lambda") {
    NumericPolicy pol;
    const auto fam = pulseModel();
    const auto sys = fam.member(16.0);
    auto entry = [&](Complex l) {
        const auto p = propagate(sys.at(l), -8.0, 8.0, pol);
        return p.result.value()(0, 1);
    };
    const double h = 1e-3;
    double worst = 0.0;
    for (int j = 0; j < 12; ++j) {
        const Complex l = 1.0 + 0.3 * std::polar(1.0, 2 * M_PI * j / 12);
        const Complex d2 = (entry(l + h) - 2.0 * entry(l) + entry(l - h)) / (h * h);
        worst = std::max(worst, std::abs(d2) / std::abs(entry(l)));
    }
    CHECK(worst < 1e3);
}

namespace {

// P R^+ on the plus side, P R^- on the minus side: the columns integrated in
// their decaying direction.
Conjugator decayingBlock(const CoefficientMap& coeff, const CMatrix& ainf, Side side, double half,
                         const NumericPolicy& pol) {
    const auto s = splitting(ainf);
    return Conjugator(coeff, ainf, side, half, side == Side::Plus ? s.basisPlus : s.basisMinus, pol);
}

}  // namespace

TEST_CASE("conjugator of a constant system is the identity") {
    NumericPolicy pol;
    const CMatrix a = constant2(0.0, 1.0, 2.0, 0.0);
    const CoefficientMap coeff = [&](double) { return a; };
    const auto full = Conjugator::full(coeff, a, Side::Plus, 3.0, pol);
    for (double x : {0.0, 1.7, 3.0}) CHECK((full.matrix(x) - CMatrix::Identity(2, 2)).norm() < 1e-12);
    for (Side side : {Side::Plus, Side::Minus}) {
        const auto c = decayingBlock(coeff, a, side, 40.0, pol);
        const CMatrix r = splitting(a).basisPlus;
        const CMatrix basis = side == Side::Plus ? r : splitting(a).basisMinus;
        for (double x : {0.0, 13.3, 40.0})
            CHECK((c.columns(side == Side::Plus ? x : -x) - basis).norm() < 1e-12);
    }
}

TEST_CASE("pulse conjugator decays toward the identity") {
    NumericPolicy pol;
    const auto fam = pulseModel();
    const Complex l = 1.0;
    const auto coeff = fam.homoclinic.at(l);
    const CMatrix ainf = fam.homoclinic.asympt(l);
    for (Side side : {Side::Plus, Side::Minus}) {
        const double sgn = side == Side::Plus ? 1.0 : -1.0;
        const auto c = decayingBlock(coeff, ainf, side, 15.0, pol);
        const CMatrix r = c.columns(sgn * 20.0);  // beyond the half-period: R itself
        CHECK((c.columns(sgn * 15.0) - r).norm() < 1e-14);
        CHECK(c.sylvesterResidual() < 1e-7);
        std::vector<double> xs, ds;
        for (double x = 5.0; x <= 12.0; x += 0.5) {
            xs.push_back(x);
            ds.push_back((c.columns(sgn * x) - r).norm());
        }
        CHECK(fitExponential(xs, ds).exponent >= 0.9);
    }
    // full P over a short half-line, where the inward integration of the growing columns is harmless
    const auto full = Conjugator::full(coeff, ainf, Side::Plus, 6.0, pol);
    CHECK((full.matrix(6.0) - CMatrix::Identity(2, 2)).norm() < 1e-14);
    CHECK(full.sylvesterResidual() < 1e-7);
}

TEST_CASE("periodic and homoclinic conjugators converge at x = 0") {
    NumericPolicy pol;
    const auto fam = pulseModel();
    const Complex l = 1.0;
    const CMatrix ainf = fam.homoclinic.asympt(l);
    for (Side side : {Side::Plus, Side::Minus}) {
        const auto p0 = decayingBlock(fam.homoclinic.at(l), ainf, side, 30.0, pol).columns(0.0);
        std::vector<double> Xs{10, 15, 20, 25}, errs;
        for (double X : Xs) {
            const auto c = decayingBlock(fam.member(X).at(l), ainf, side, X / 2, pol);
            CHECK(c.sylvesterResidual() < 1e-7);
            errs.push_back((c.columns(0.0) - p0).norm());
        }
        const auto fit = fitExponential(Xs, errs);
        CHECK(fit.exponent > 0.0);
        CHECK(fit.residual < 0.5);
    }
}
