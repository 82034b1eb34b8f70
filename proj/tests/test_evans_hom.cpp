#include <doctest.h>

#include <cmath>
#include <random>

#include "evans/evans_hom.hpp"
#include "evans/spectra.hpp"

using namespace evans;

namespace {

const std::vector<Complex> kPulseEigs{-0.75, 0.0, 1.25};

// Synthetic system whose only coupling is c <- c with constant beta: D^0_1, D^0_2
// are then lambda-independent (e^{+-pi beta0 / 2}) and the transitional zeros
// sit exactly on the closed-form lattice.
SyntheticArcSystem centerOnly() {
    SyntheticArcParams p;
    p.couplingUS = p.couplingSU = p.couplingUC = p.couplingSC = 0.0;
    p.beta0 = Complex(0.3, 0.1);
    p.beta1 = 0.0;
    return syntheticArcSystem(p);
}

}  // namespace

TEST_CASE("constant coefficients give D = 1") {
    NumericPolicy pol;
    auto m = [](Complex l) {
        CMatrix a = CMatrix::Zero(3, 3);
        a(0, 0) = 1.0 + l;
        a(1, 1) = -2.0;
        a(2, 2) = Complex(-0.5, 3.0);
        a(0, 2) = 0.7;
        return a;
    };
    const HomoclinicEvansContext ctx(constantSystem("flat", m, 3, std::numeric_limits<double>::infinity()), pol, 10.0);
    for (Complex l : {Complex(0.2, 0.0), Complex(1.0, -2.0)}) {
        CHECK(std::abs(homoclinicEvans(ctx, l).value() - 1.0) < 1e-12);
        CHECK(std::abs(jostEvans(ctx, l).value() - 1.0) < 1e-12);
    }
}

TEST_CASE("pulse eigenvalues are the zeros of D") {
    NumericPolicy pol;
    const auto fam = pulseModel();
    const HomoclinicEvansContext ctx(fam.homoclinic, pol);
    CHECK(std::abs(jostEvans(ctx, 0.0).value()) < 1e-8);
    const EvansFn f = [&](Complex l) { return homoclinicEvans(ctx, l); };
    for (Complex e : kPulseEigs) {
        const auto rs = locateRoots(f, Contour::rectangle(e + Complex(0.013, 0.007), 0.1, 0.1), 1e-10, pol);
        REQUIRE(rs.roots.size() == 1);
        CHECK(std::abs(rs.roots[0].lambda - e) < 1e-6);
        CHECK(rs.roots[0].multiplicity == 1);
    }
    // lower bound away from the eigenvalues, on a grid in the hyperbolic region Re lambda > -1
    double lowest = 1e300;
    for (double re = -0.9; re <= 2.0; re += 0.1)
        for (double im = -1.0; im <= 1.0; im += 0.1) {
            const Complex l(re, im);
            bool far = true;
            for (auto e : kPulseEigs) far = far && std::abs(l - e) >= 0.1;
            if (far) lowest = std::min(lowest, std::abs(f(l).value()));
        }
    CHECK(lowest >= 1e-4);
}

TEST_CASE("winding count matches subdivision (analyticity)") {
    NumericPolicy pol;
    const HomoclinicEvansContext ctx(pulseModel().homoclinic, pol);
    const EvansFn f = [&](Complex l) { return homoclinicEvans(ctx, l); };
    const auto c = Contour::rectangle(Complex(0.6, 0.01), 0.9, 0.5);
    const auto w = windingNumber(f, c, pol);
    const auto rs = locateRoots(f, c, 1e-9, pol);
    int count = 0;
    for (const auto& r : rs.roots) count += r.multiplicity;
    CHECK(w.value == 2);
    CHECK(count == w.value);
}

TEST_CASE("Jost form agrees with the determinant ratio") {
    NumericPolicy pol;
    const HomoclinicEvansContext ctx(pulseModel().homoclinic, pol);
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> re(-0.8, 3.0), im(-2.0, 2.0);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
        const Complex l(re(rng), im(rng));
        worst = std::max(worst, ScaledValue::relativeDistance(jostEvans(ctx, l), homoclinicEvans(ctx, l)));
    }
    CHECK(worst <= 1e-9);
}

TEST_CASE("basis invariance") {
    NumericPolicy pol;
    const auto syn = syntheticArcSystem({});
    const HomoclinicEvansContext ctx(syn.homoclinic, pol);
    const Complex l = syn.arc.lambdaStar + 0.5;  // mu_c joins the unstable group: two columns
    const auto s = ctx.split(l, SplitMode::TwoWay);
    REQUIRE(s.basisMinus.cols() == 2);
    CMatrix S(2, 2);
    S << Complex(1.3, 0.2), 0.4, -0.7, Complex(0.1, 2.0);
    auto ratio = [&](const CMatrix& bm, const CMatrix& bp) {
        const auto f = decayingFrames(ctx, l, bm, bp);
        CMatrix num(3, 3), den(3, 3);
        num << f.minus, f.plus;
        den << f.basisMinus, f.basisPlus;
        return scaledDet(num) / scaledDet(den);
    };
    const ScaledValue ref = homoclinicEvans(ctx, l);
    CHECK(ScaledValue::relativeDistance(ratio(s.basisMinus * S, s.basisPlus), ref) <= 1e-12);
    CHECK(ScaledValue::relativeDistance(ratio(s.basisMinus, s.basisPlus * Complex(-3.0, 0.5)), ref) <= 1e-12);
    // another reference frame: same values
    ReferenceFrame frame{s.basisMinus * S, CMatrix(3, 0), s.basisPlus * 2.0};
    const HomoclinicEvansContext other(syn.homoclinic, pol, -1.0, frame);
    CHECK(ScaledValue::relativeDistance(homoclinicEvans(other, l), ref) <= 1e-12);
}

TEST_CASE("conjugate symmetry for a real system") {
    NumericPolicy pol;
    const HomoclinicEvansContext ctx(pulseModel().homoclinic, pol);
    for (Complex l : {Complex(0.4, 0.9), Complex(2.0, -1.5), Complex(-0.5, 0.3)}) {
        const Complex a = homoclinicEvans(ctx, std::conj(l)).value(), b = std::conj(homoclinicEvans(ctx, l).value());
        CHECK(std::abs(a - b) <= 1e-10 * std::abs(b));
    }
}

TEST_CASE("splitting failure points to the transitional variant") {
    NumericPolicy pol;
    const HomoclinicEvansContext ctx(pulseModel().homoclinic, pol);
    try {
        homoclinicEvans(ctx, -2.0);  // mu = +-i on the essential spectrum
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("transitional") != std::string::npos);
    }
}

TEST_CASE("arc extensions") {
    NumericPolicy pol;
    SyntheticArcParams flat;
    flat.couplingUS = flat.couplingSU = flat.couplingUC = flat.couplingSC = 0.0;
    flat.beta0 = flat.beta1 = 0.0;
    const auto s0 = syntheticArcSystem(flat);
    const HomoclinicEvansContext c0(s0.homoclinic, pol);
    const auto e0 = arcExtension(c0, s0.arc, s0.arc.lambdaStar);
    CHECK(std::abs(e0.d1.value() - 1.0) < 1e-12);
    CHECK(std::abs(e0.d2.value() - 1.0) < 1e-12);

    const auto syn = syntheticArcSystem({});
    const HomoclinicEvansContext ctx(syn.homoclinic, pol);
    const auto e = arcExtension(ctx, syn.arc, syn.arc.lambdaStar);
    CHECK(std::abs(e.d1.value()) > 1e-3);
    CHECK(std::abs(e.d2.value()) > 1e-3);
    CHECK(std::abs(e.d1.value() - e.d2.value()) > 1e-3);
    CHECK(std::abs(e.muC - Complex(0.0, syn.arc.kStar)) < 1e-12);

    // continuity: D_1 is D on the side where mu_c is unstable, D_2 on the other
    for (double delta : {0.05, 0.2}) {
        const Complex right = syn.arc.lambdaStar + delta, left = syn.arc.lambdaStar - delta;
        CHECK(ScaledValue::relativeDistance(arcExtension(ctx, syn.arc, right).d1, homoclinicEvans(ctx, right)) <= 1e-9);
        CHECK(ScaledValue::relativeDistance(arcExtension(ctx, syn.arc, left).d2, homoclinicEvans(ctx, left)) <= 1e-9);
    }

    // half-period independence once the tail criterion holds
    const HomoclinicEvansContext longer(syn.homoclinic, pol, 1.5 * ctx.halfPeriod());
    const auto el = arcExtension(longer, syn.arc, syn.arc.lambdaStar);
    CHECK(ScaledValue::relativeDistance(el.d1, e.d1) <= 1e-8);
    CHECK(ScaledValue::relativeDistance(el.d2, e.d2) <= 1e-8);

    // not simple: two imaginary eigenvalues at once
    auto twice = [](Complex l) {
        CMatrix a = CMatrix::Zero(3, 3);
        a(0, 0) = l;
        a(1, 1) = l + Complex(0.0, 1.0);
        a(2, 2) = -1.0;
        return a;
    };
    const HomoclinicEvansContext bad(constantSystem("double", twice, 3, std::numeric_limits<double>::infinity()), pol, 5.0);
    CHECK_THROWS_AS(arcExtension(bad, syn.arc, 0.0), NumericError);
}

TEST_CASE("transitional homoclinic zeros") {
    NumericPolicy pol;
    const auto syn = centerOnly();
    const HomoclinicEvansContext ctx(syn.homoclinic, pol);
    const double X = 40.0;
    const Complex ls = syn.arc.lambdaStar;
    const double ks = syn.arc.kStar;
    // equal constants at lambda_*: zero iff gamma = e^{i k_* X}
    SyntheticArcParams p0 = syn.params;
    p0.beta0 = 0.0;
    const auto flat = syntheticArcSystem(p0);
    const HomoclinicEvansContext c0(flat.homoclinic, pol);
    CHECK(std::abs(transitionalHomoclinic(c0, flat.arc, ls, std::polar(1.0, ks * X), X).value()) < 1e-12);
    CHECK(std::abs(transitionalHomoclinic(c0, flat.arc, ls, std::polar(1.0, ks * X + 0.3), X).value()) > 0.1);

    // closed-form lattice: mu_c'(lambda_*) z = ln(gamma e^{-i k_* X}) + ln(d2/d1) + 2 pi i m
    CHECK(std::abs(syn.d2 / syn.d1 - syn.ratioClosedForm(ls)) < 1e-10);
    const Complex gamma = std::polar(1.0, 0.9);
    const Complex slope = syn.arc.muCprime(ls);
    const Complex base = std::log(gamma * std::polar(1.0, -ks * X)) + std::log(syn.d2 / syn.d1);
    const double radius = 8.0 / X;
    NumericPolicy ap = pol;
    ap.split.centerWindow = 1.2 * std::sqrt(2.0) * radius * std::abs(slope);
    const HomoclinicEvansContext actx(syn.homoclinic, ap);
    const EvansFn f = [&](Complex l) { return transitionalHomoclinic(actx, syn.arc, l, gamma, X); };
    const auto rs = locateRoots(f, Contour::rectangle(ls + Complex(1.3e-3, 0.7e-3) * radius, radius, radius), 1e-12, ap);
    REQUIRE(rs.roots.size() >= 2);
    for (const auto& r : rs.roots) {
        const Complex z = (r.lambda - ls) * X;
        const Complex w = (slope * z - base) / Complex(0.0, 2.0 * M_PI);
        CHECK(std::abs(w - std::round(w.real())) * 2.0 * M_PI / std::abs(slope) < 1e-8);
    }
}
