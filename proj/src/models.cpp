#include "evans/models.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/ellint_rf.hpp>
#include <boost/numeric/odeint.hpp>

#include "evans/evans_hom.hpp"

namespace evans {

namespace {

constexpr double kPi = std::numbers::pi;

double wrapToCell(double x, double period) { return x - period * std::round(x / period); }

double sech(double x) { return 1.0 / std::cosh(x); }

}  // namespace

// -------------------------------------------------------------- HermiteTable

HermiteTable::HermiteTable(std::vector<double> xs, std::vector<std::vector<double>> values,
                           std::vector<std::vector<double>> slopes)
    : xs_(std::move(xs)), ys_(std::move(values)), ds_(std::move(slopes)) {
    if (xs_.size() < 2 || ys_.size() != xs_.size() || ds_.size() != xs_.size())
        throw NumericError("HermiteTable: inconsistent table");
}

std::vector<double> HermiteTable::operator()(double x) const {
    x = std::clamp(x, xs_.front(), xs_.back());
    auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
    std::size_t i = (it == xs_.begin()) ? 0 : static_cast<std::size_t>(it - xs_.begin()) - 1;
    if (i + 1 >= xs_.size()) i = xs_.size() - 2;
    const double h = xs_[i + 1] - xs_[i];
    const double t = (x - xs_[i]) / h;
    const double h00 = (1 + 2 * t) * (1 - t) * (1 - t), h10 = t * (1 - t) * (1 - t);
    const double h01 = t * t * (3 - 2 * t), h11 = t * t * (t - 1);
    std::vector<double> out(ys_[i].size());
    for (std::size_t c = 0; c < out.size(); ++c)
        out[c] = h00 * ys_[i][c] + h10 * h * ds_[i][c] + h01 * ys_[i + 1][c] + h11 * h * ds_[i + 1][c];
    return out;
}

// --------------------------------------------------------------- dispersion

std::vector<Complex> dispersionLambdas(const std::function<CMatrix(Complex)>& asympt, int dim, double k) {
    // p(lambda) = det(i k I - A_inf(lambda)) has degree <= dim; recover its
    // coefficients from samples at the roots of unity.
    const int m = dim + 1;
    std::vector<Complex> samples(m);
    std::vector<Complex> nodes(m);
    const CMatrix ik = Complex(0.0, k) * CMatrix::Identity(dim, dim);
    for (int j = 0; j < m; ++j) {
        nodes[j] = std::polar(1.0, 2.0 * kPi * j / m);
        samples[j] = (ik - asympt(nodes[j])).determinant();
    }
    std::vector<Complex> coeffs(m);
    for (int p = 0; p < m; ++p) {
        Complex acc = 0.0;
        for (int j = 0; j < m; ++j) acc += samples[j] * std::conj(std::pow(nodes[j], p));
        coeffs[p] = acc / static_cast<double>(m);
    }
    double scale = 0.0;
    for (auto c : coeffs) scale = std::max(scale, std::abs(c));
    int degree = dim;
    while (degree > 0 && std::abs(coeffs[degree]) <= 1e-12 * scale) --degree;
    if (degree == 0) return {};
    CMatrix companion = CMatrix::Zero(degree, degree);
    for (int i = 1; i < degree; ++i) companion(i, i - 1) = 1.0;
    for (int i = 0; i < degree; ++i) companion(i, degree - 1) = -coeffs[i] / coeffs[degree];
    return eigenvalues(companion);
}

DispersionArc arcFromAsymptotic(const std::function<CMatrix(Complex)>& asympt, int dim, double kStar) {
    // Pick the curve with the largest real part at kStar (the most unstable one).
    const auto roots = dispersionLambdas(asympt, dim, kStar);
    if (roots.empty()) throw NumericError("arcFromAsymptotic: no dispersion curve");
    Complex lambdaStar = roots.front();
    for (auto r : roots)
        if (r.real() > lambdaStar.real()) lambdaStar = r;

    DispersionArc arc;
    arc.kStar = kStar;
    arc.lambdaStar = lambdaStar;
    auto follow = [asympt, dim](double k, Complex guess) {
        const auto rs = dispersionLambdas(asympt, dim, k);
        Complex best = rs.front();
        for (auto r : rs)
            if (std::abs(r - guess) < std::abs(best - guess)) best = r;
        return best;
    };
    const double dk = 1e-4;
    const Complex slope = (follow(kStar + dk, lambdaStar) - follow(kStar - dk, lambdaStar)) / (2 * dk);
    arc.paramToLambda = [follow, kStar, lambdaStar, slope](double k) {
        // March from kStar so the branch stays continuous.
        const int steps = std::max(1, static_cast<int>(std::ceil(std::abs(k - kStar) / 0.05)));
        Complex current = lambdaStar;
        Complex prevSlope = slope;
        double kk = kStar;
        const double h = (k - kStar) / steps;
        for (int s = 0; s < steps; ++s) {
            const Complex next = follow(kk + h, current + prevSlope * h);
            prevSlope = (next - current) / h;
            current = next;
            kk += h;
        }
        return current;
    };
    arc.muC = [asympt, kStar, lambdaStar, slope](Complex lambda) {
        // Continuation of i k along the curve: eigenvalue nearest to the linear prediction.
        const Complex predicted = Complex(0.0, kStar) + Complex(0.0, 1.0) * (lambda - lambdaStar) / slope;
        const auto ev = eigenvalues(asympt(lambda));
        Complex best = ev.front();
        for (auto mu : ev)
            if (std::abs(mu - predicted) < std::abs(best - predicted)) best = mu;
        return best;
    };
    arc.muCprime = [mu = arc.muC](Complex lambda) {
        const double h = 1e-5;
        return (mu(lambda + h) - mu(lambda - h)) / (2 * h);
    };
    arc.lambdaToK = [p = arc.paramToLambda, kStar, slope](Complex lambda) {
        double k = kStar;
        for (int it = 0; it < 50; ++it) {
            const Complex l = p(k);
            const Complex d = (p(k + 1e-5) - p(k - 1e-5)) / 2e-5;
            const double step = std::real(std::conj(d) * (lambda - l)) / std::norm(d);
            k += step;
            if (std::abs(step) < 1e-13) break;
        }
        (void)slope;
        return k;
    };
    return arc;
}

// ------------------------------------------------------- planar Hamiltonian

PlanarHamiltonian::PlanarHamiltonian(double a, double b) : a_(a), b_(b) {
    if (!(a > 0.0) || !(b > 0.0)) throw NumericError("PlanarHamiltonian: coefficients must be positive");
}

std::vector<double> PlanarHamiltonian::homoclinic(double x) const {
    const double amp = 1.5 * a_ / b_;
    const double r = 0.5 * std::sqrt(a_);
    const double s = sech(r * x);
    const double u = amp * s * s;
    const double up = -2.0 * r * u * std::tanh(r * x);
    return {u, up};
}

std::array<double, 3> PlanarHamiltonian::turningPoints(double h) const {
    if (!(h > centerLevel() && h < 0.0)) {
        std::ostringstream os;
        os << "PlanarHamiltonian: level " << h << " outside (" << centerLevel() << ", 0)";
        throw NumericError(os.str());
    }
    // p(u) = a u^2 - (2b/3) u^3 + 2h
    auto p = [&](double u) { return a_ * u * u - (2.0 * b_ / 3.0) * u * u * u + 2.0 * h; };
    auto dp = [&](double u) { return 2.0 * a_ * u - 2.0 * b_ * u * u; };
    auto polish = [&](double u) {
        for (int it = 0; it < 100; ++it) {
            const double d = dp(u);
            if (d == 0.0) break;
            const double step = p(u) / d;
            u -= step;
            if (std::abs(step) <= 1e-16 * std::max(std::abs(u), 1e-300)) break;
        }
        return u;
    };
    std::array<double, 3> guess{};
    if (-h < 1e-3 * -centerLevel()) {
        const double s = std::sqrt(-2.0 * h / a_);
        guess = {-s, s, 1.5 * a_ / b_};
    } else {
        CMatrix companion = CMatrix::Zero(3, 3);
        // monic: u^3 - (3a/2b) u^2 - 3h/b
        companion(1, 0) = 1.0;
        companion(2, 1) = 1.0;
        companion(0, 2) = 3.0 * h / b_;
        companion(1, 2) = 0.0;
        companion(2, 2) = 1.5 * a_ / b_;
        auto ev = eigenvalues(companion);
        std::array<double, 3> re{ev[0].real(), ev[1].real(), ev[2].real()};
        std::sort(re.begin(), re.end());
        guess = re;
    }
    std::array<double, 3> out{polish(guess[0]), polish(guess[1]), polish(guess[2])};
    std::sort(out.begin(), out.end());
    if (!(out[0] < 0.0 && out[1] > 0.0 && out[1] < a_ / b_ && out[2] > a_ / b_))
        throw NumericError("PlanarHamiltonian: turning points not separated (quadrature non-convergence); "
                           "use a smaller step in h");
    return out;
}

double PlanarHamiltonian::period(double h) const {
    // 2 int du / sqrt(2(h + a u^2/2 - b u^3/3)) over [u1, u2], with
    // u = u1 + (u2 - u1) sin^2(phi): a complete elliptic integral in Carlson form.
    const auto [r0, u1, u2] = turningPoints(h);
    const double alpha = u1 - r0, beta = u2 - u1;
    const double c = std::sqrt(2.0 * b_ / 3.0);
    return 4.0 / c / std::sqrt(alpha + beta) * boost::math::ellint_rf(0.0, alpha / (alpha + beta), 1.0);
}

double PlanarHamiltonian::periodByQuadrature(double h) const {
    const auto [r0, u1, u2] = turningPoints(h);
    const double mid = 0.5 * (u1 + u2);
    boost::math::quadrature::tanh_sinh<double> ts;
    // 2(h - V) = (2b/3)(u - r0)(u - u1)(u2 - u); the endpoint distance from
    // the quadrature (u1 - u on the left half, u2 - u on the right) keeps the
    // 1/sqrt factors free of cancellation
    const auto f = [&](double u, double complement) {
        const double lo = u < mid ? -complement : u - u1;
        const double hi = u < mid ? u2 - u : complement;
        const double g = 2.0 * b_ / 3.0 * (u - r0) * lo * hi;
        return g > 0.0 ? 1.0 / std::sqrt(g) : 0.0;
    };
    return 2.0 * ts.integrate(f, u1, u2);
}

double PlanarHamiltonian::levelForPeriod(double target) const {
    const double harmonic = 2.0 * kPi / std::sqrt(a_);
    if (!(target > harmonic)) {
        std::ostringstream os;
        os << "PlanarHamiltonian: period " << target << " not above the harmonic limit " << harmonic;
        throw NumericError(os.str());
    }
    // Period is increasing in h; bisect in t = log(-h).
    double tHi = std::log(-centerLevel()) - 1e-12;  // near the center: short periods
    double tLo = -700.0;                             // near the separatrix: long periods
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (tLo + tHi);
        if (period(-std::exp(mid)) > target)
            tLo = mid;
        else
            tHi = mid;
        if (tHi - tLo < 1e-15 * std::max(1.0, std::abs(mid))) break;
    }
    return -std::exp(0.5 * (tLo + tHi));
}

Profile PlanarHamiltonian::homoclinicProfile() const {
    return Profile({"u", "u_x"}, [self = *this](double x) { return self.homoclinic(x); },
                   std::numeric_limits<double>::infinity(), 0.0);
}

Profile PlanarHamiltonian::periodicProfile(double h) const {
    const auto [r0, u1, u2] = turningPoints(h);
    const double alpha = u1 - r0, beta = u2 - u1;
    const double c = std::sqrt(2.0 * b_ / 3.0);
    // Time from the trough (phi = 0) to phase phi, incomplete elliptic integral:
    //   x(phi) = (2/c) sin(phi) R_F(alpha cos^2, alpha + beta sin^2, alpha)
    auto timeOf = [=](double phi) {
        const double s = std::sin(phi), co = std::cos(phi);
        if (s == 0.0) return 0.0;
        return 2.0 / c * s * boost::math::ellint_rf(alpha * co * co, alpha + beta * s * s, alpha);
    };
    auto rate = [=](double phi) {
        const double s = std::sin(phi);
        return 2.0 / (c * std::sqrt(alpha + beta * s * s));
    };
    const double half = 0.5 * period(h);

    const double ds = 0.005;
    const int count = std::max(8, static_cast<int>(std::ceil(half / ds)));
    std::vector<double> xs(count + 1);
    std::vector<std::vector<double>> ys(count + 1), dys(count + 1);
    double phiPrev = 0.5 * kPi;
    for (int i = 0; i <= count; ++i) {
        const double sPos = half * i / count;  // distance from the crest
        const double target = half - sPos;     // time from the trough
        double lo = 0.0, hi = phiPrev, phi = phiPrev;
        for (int it = 0; it < 200; ++it) {
            const double f = timeOf(phi) - target;
            if (f > 0) hi = phi;
            else lo = phi;
            double next = phi - f / rate(phi);
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            if (std::abs(next - phi) < 1e-16 || hi - lo < 1e-16) {
                phi = next;
                break;
            }
            phi = next;
        }
        phiPrev = std::min(0.5 * kPi, phi + 1e-12);
        const double sn = std::sin(phi), cs = std::cos(phi);
        const double u = u1 + beta * sn * sn;
        const double du = -beta * sn * cs * c * std::sqrt(alpha + beta * sn * sn);  // d/ds, s = distance from crest
        xs[i] = sPos;
        ys[i] = {u, du};
        dys[i] = {du, a_ * u - b_ * u * u};
    }
    HermiteTable table(std::move(xs), std::move(ys), std::move(dys));
    const double X = 2.0 * half;
    return Profile({"u", "u_x"},
                   [table, X](double x) {
                       const double w = wrapToCell(x, X);
                       auto v = table(std::abs(w));
                       if (w < 0) v[1] = -v[1];
                       return v;
                   },
                   X, h);
}

// ----------------------------------------------------------------- models

namespace {

SpectralSystem secondOrderSystem(std::string name, double a, double b, std::function<std::vector<double>(double)> prof,
                                 double period) {
    SpectralSystem sys;
    sys.name = std::move(name);
    sys.dim = 2;
    sys.period = period;
    sys.coeff = [a, b, prof](double x, Complex lambda) {
        const double u = prof(x)[0];
        CMatrix m(2, 2);
        m << 0.0, 1.0, lambda + a - 2.0 * b * u, 0.0;
        return m;
    };
    sys.asympt = [a](Complex lambda) {
        CMatrix m(2, 2);
        m << 0.0, 1.0, lambda + a, 0.0;
        return m;
    };
    sys.nu = std::sqrt(a);
    sys.thetaBar = std::sqrt(a);
    return sys;
}

}  // namespace

ModelFamily pulseModel() {
    PlanarHamiltonian ham(1.0, 1.0);
    ModelFamily fam{
        secondOrderSystem("pulse", 1.0, 1.0, [ham](double x) { return ham.homoclinic(x); },
                          std::numeric_limits<double>::infinity()),
        {},
        {},
        ham.homoclinicProfile(),
        std::nullopt};
    fam.profile = [ham](double X) { return ham.periodicProfile(ham.levelForPeriod(X)); };
    fam.member = [ham](double X) {
        const double h = ham.levelForPeriod(X);
        auto prof = std::make_shared<Profile>(ham.periodicProfile(h));
        auto sys = secondOrderSystem("pulse", 1.0, 1.0, [prof](double x) { return (*prof)(x); }, prof->period());
        sys.metadata["level"] = h;
        return sys;
    };
    return fam;
}

SpectralSystem periodizedSystem(const SpectralSystem& base, double period) {
    SpectralSystem sys = base;
    sys.period = period;
    sys.coeff = [f = base.coeff, period](double x, Complex lambda) { return f(wrapToCell(x, period), lambda); };
    sys.thetaBar = base.nu;
    sys.metadata["periodized"] = 1.0;
    return sys;
}

// --------------------------------------------------------- synthetic arc

Complex SyntheticArcSystem::ratioClosedForm(Complex lambda) const {
    const Complex beta = params.beta0 + params.beta1 * (lambda - params.lambdaStar);
    return std::exp(-kPi * beta);
}

namespace {

SpectralSystem syntheticSystem(const SyntheticArcParams& p) {
    SpectralSystem sys;
    sys.name = "synthetic-arc";
    sys.dim = 3;
    auto ainf = [p](Complex lambda) {
        const Complex dl = lambda - p.lambdaStar;
        CMatrix m = CMatrix::Zero(3, 3);
        m(0, 0) = p.muU + p.slopeU * dl;
        m(1, 1) = Complex(0.0, p.kStar) + dl / p.v;
        m(2, 2) = p.muS + p.slopeS * dl;
        return m;
    };
    sys.asympt = ainf;
    sys.coeff = [p, ainf](double x, Complex lambda) {
        CMatrix m = ainf(lambda);
        const double s1 = sech(x), s2 = sech(2.0 * x);
        m(0, 1) += p.couplingUC * s2;
        m(0, 2) += p.couplingUS * s1;
        m(1, 1) += (p.beta0 + p.beta1 * (lambda - p.lambdaStar)) * s1;
        m(2, 0) += p.couplingSU * s1;
        m(2, 1) += p.couplingSC * s2;
        return m;
    };
    sys.nu = 1.0;
    sys.thetaBar = 1.0;
    return sys;
}

}  // namespace

SyntheticArcSystem syntheticArcSystem(const SyntheticArcParams& params) {
    if (std::abs(params.v) == 0.0) throw NumericError("syntheticArcSystem: arc speed v must be nonzero");
    SyntheticArcSystem out;
    out.params = params;
    out.homoclinic = syntheticSystem(params);
    auto& arc = out.arc;
    arc.kStar = params.kStar;
    arc.lambdaStar = params.lambdaStar;
    arc.paramToLambda = [p = params](double k) { return p.lambdaStar + Complex(0.0, 1.0) * p.v * (k - p.kStar); };
    arc.lambdaToK = [p = params](Complex lambda) {
        return p.kStar + std::real((lambda - p.lambdaStar) / (Complex(0.0, 1.0) * p.v));
    };
    arc.muC = [p = params](Complex lambda) { return Complex(0.0, p.kStar) + (lambda - p.lambdaStar) / p.v; };
    arc.muCprime = [p = params](Complex) { return 1.0 / p.v; };

    NumericPolicy policy;
    policy.step = 0.02;
    HomoclinicEvansContext ctx(out.homoclinic, policy);
    const auto ext = arcExtension(ctx, arc, params.lambdaStar);
    out.d1 = ext.d1.value();
    out.d2 = ext.d2.value();
    return out;
}

SyntheticArcSystem embeddedArcSystem(SyntheticArcParams params, const NumericPolicy& policy, Complex initialGuess) {
    auto d1At = [&](Complex s) {
        SyntheticArcParams p = params;
        p.couplingUS = s;
        const auto sys = syntheticSystem(p);
        HomoclinicEvansContext ctx(sys, policy);
        SyntheticArcSystem tmp;
        tmp.params = p;
        DispersionArc arc;
        arc.kStar = p.kStar;
        arc.lambdaStar = p.lambdaStar;
        arc.muC = [p](Complex lambda) { return Complex(0.0, p.kStar) + (lambda - p.lambdaStar) / p.v; };
        arc.muCprime = [p](Complex) { return 1.0 / p.v; };
        return arcExtension(ctx, arc, p.lambdaStar).d1.value();
    };
    Complex s0 = initialGuess, s1 = initialGuess * 1.05 + 0.01;
    Complex f0 = d1At(s0), f1 = d1At(s1);
    for (int it = 0; it < 60; ++it) {
        if (f1 == f0) break;
        const Complex s2 = s1 - f1 * (s1 - s0) / (f1 - f0);
        s0 = s1;
        f0 = f1;
        s1 = s2;
        f1 = d1At(s1);
        if (std::abs(s1 - s0) < 1e-12 * std::max(1.0, std::abs(s1))) {
            params.couplingUS = s1;
            return syntheticArcSystem(params);
        }
        if (!std::isfinite(std::abs(s1)) || std::abs(s1) > 1e3) break;
    }
    throw NumericError("embeddedArcSystem: coupling tuning failed to converge; try a wider coupling range or "
                       "another initial guess");
}

// --------------------------------------------------------------------- KdV

ModelFamily kdvCnoidalModel(double c) {
    if (!(c > 0.0)) throw NumericError("kdvCnoidalModel: wave speed must be positive");
    PlanarHamiltonian ham(c, 0.5);
    auto make = [c](std::function<std::vector<double>(double)> prof, double period) {
        SpectralSystem sys;
        sys.name = "kdv";
        sys.dim = 3;
        sys.period = period;
        sys.coeff = [c, prof](double x, Complex lambda) {
            const auto st = prof(x);
            CMatrix m = CMatrix::Zero(3, 3);
            m(0, 1) = 1.0;
            m(1, 2) = 1.0;
            m(2, 0) = -lambda - st[1];
            m(2, 1) = c - st[0];
            return m;
        };
        sys.asympt = [c](Complex lambda) {
            CMatrix m = CMatrix::Zero(3, 3);
            m(0, 1) = 1.0;
            m(1, 2) = 1.0;
            m(2, 0) = -lambda;
            m(2, 1) = c;
            return m;
        };
        sys.nu = std::sqrt(c);
        sys.thetaBar = std::sqrt(c);
        sys.metadata["c"] = c;
        return sys;
    };
    ModelFamily fam{make([ham](double x) { return ham.homoclinic(x); }, std::numeric_limits<double>::infinity()),
                    {},
                    {},
                    ham.homoclinicProfile(),
                    std::nullopt};
    fam.profile = [ham](double X) { return ham.periodicProfile(ham.levelForPeriod(X)); };
    fam.member = [ham, make](double X) {
        const double h = ham.levelForPeriod(X);
        auto prof = std::make_shared<Profile>(ham.periodicProfile(h));
        auto sys = make([prof](double x) { return (*prof)(x); }, prof->period());
        sys.metadata["level"] = h;
        return sys;
    };
    // lambda_j(k) = i (k^3 + c k); mu_c is the root of mu^3 - c mu + lambda near i k.
    DispersionArc arc;
    arc.kStar = 0.0;
    arc.lambdaStar = 0.0;
    arc.paramToLambda = [c](double k) { return Complex(0.0, k * k * k + c * k); };
    arc.lambdaToK = [c](Complex lambda) {
        // unique real root of k^3 + c k = Im lambda
        double k = lambda.imag() / c;
        for (int it = 0; it < 100; ++it) {
            const double step = (k * k * k + c * k - lambda.imag()) / (3 * k * k + c);
            k -= step;
            if (std::abs(step) < 1e-15) break;
        }
        return k;
    };
    arc.muC = [c](Complex lambda) {
        Complex mu = lambda / c;  // small-lambda guess
        for (int it = 0; it < 100; ++it) {
            const Complex step = (mu * mu * mu - c * mu + lambda) / (3.0 * mu * mu - c);
            mu -= step;
            if (std::abs(step) < 1e-15) break;
        }
        return mu;
    };
    arc.muCprime = [mu = arc.muC, c](Complex lambda) {
        const Complex m = mu(lambda);
        return -1.0 / (3.0 * m * m - c);
    };
    fam.arc = arc;
    return fam;
}

// ------------------------------------------------------------ Saint Venant

namespace {

struct SvOde {
    double F, nu, c, q;
    void operator()(const std::array<double, 2>& y, std::array<double, 2>& dy, double) const {
        const double H = y[0], P = y[1];
        const double U = c + q / H;
        const double Hp = -P * H / (nu * q);
        dy[0] = Hp;
        dy[1] = Hp * (-q * q / (H * H) + H / (F * F)) - H + U * std::abs(U);
    }
};

Eigen::Matrix2d svJacobian(const SvOde& ode) {
    Eigen::Matrix2d j;
    const double e = 1e-7;
    std::array<double, 2> base{1.0, 0.0}, f0{}, f1{};
    ode(base, f0, 0.0);
    for (int k = 0; k < 2; ++k) {
        auto y = base;
        y[k] += e;
        ode(y, f1, 0.0);
        auto y2 = base;
        y2[k] -= e;
        std::array<double, 2> f2{};
        ode(y2, f2, 0.0);
        for (int r = 0; r < 2; ++r) j(r, k) = (f1[r] - f2[r]) / (2 * e);
    }
    return j;
}

struct SaddleData {
    double unstable, stable;
    Eigen::Vector2d vu, vs;
};

SaddleData saddle(const SvOde& ode) {
    Eigen::EigenSolver<Eigen::Matrix2d> es(svJacobian(ode));
    SaddleData d{};
    const auto ev = es.eigenvalues();
    if (std::abs(ev(0).imag()) > 0 || std::abs(ev(1).imag()) > 0 || ev(0).real() * ev(1).real() >= 0)
        throw NumericError("saintVenantProfile: flat state is not a saddle of the profile equation at this speed");
    const int iu = ev(0).real() > 0 ? 0 : 1;
    d.unstable = ev(iu).real();
    d.stable = ev(1 - iu).real();
    d.vu = es.eigenvectors().col(iu).real();
    d.vs = es.eigenvectors().col(1 - iu).real();
    if (d.vu(0) < 0) d.vu = -d.vu;
    if (d.vs(0) < 0) d.vs = -d.vs;
    return d;
}

using namespace boost::numeric::odeint;
using SvState = std::array<double, 2>;

// +1: unstable manifold turns back inside (H min > 1), -1 otherwise.
int classify(const SvOde& ode, double offset) {
    const auto sd = saddle(ode);
    SvState y{1.0 + offset * sd.vu(0), offset * sd.vu(1)};
    auto stepper = make_dense_output(1e-12, 1e-12, runge_kutta_dopri5<SvState>());
    stepper.initialize(y, 0.0, 1e-3);
    bool passedMax = false;
    while (stepper.current_time() < 400.0) {
        stepper.do_step(ode);
        const auto& s = stepper.current_state();
        if (!std::isfinite(s[0]) || s[0] > 1e3 || s[0] < 0.99) return -1;
        if (!passedMax && s[1] < 0.0) passedMax = true;
        if (passedMax && s[1] > 0.0) return +1;
    }
    return -1;
}

// Integrate from the saddle along `dir` (time sign `sign`) until P changes
// sign; returns samples on a uniform grid of spacing dx measured from the
// turning point (P = 0).
struct Branch {
    std::vector<double> t;
    std::vector<SvState> y;
    double turnTime = 0.0;
};

Branch branchToTurn(const SvOde& ode, const Eigen::Vector2d& dir, double offset, double sign, double dx) {
    auto rhs = [&](const SvState& y, SvState& dy, double t) {
        ode(y, dy, t);
        dy[0] *= sign;
        dy[1] *= sign;
    };
    const SvState y0{1.0 + offset * dir(0), offset * dir(1)};
    const double p0sign = y0[1] >= 0 ? 1.0 : -1.0;
    // Two identical dense-output passes: the first finds the turning time,
    // the second samples on a grid ending exactly there.
    auto run = [&](double tTurn, Branch* out) {
        auto stepper = make_dense_output(1e-13, 1e-13, runge_kutta_dopri5<SvState>());
        stepper.initialize(y0, 0.0, 1e-3);
        double nextSample = 0.0;
        if (out) {
            const int n = static_cast<int>(std::floor(tTurn / dx));
            nextSample = tTurn - n * dx;
        }
        SvState tmp{};
        while (stepper.current_time() < 500.0) {
            stepper.do_step(rhs);
            const double t1 = stepper.current_time();
            if (out) {
                while (nextSample <= std::min(t1, tTurn) + 1e-12) {
                    stepper.calc_state(nextSample, tmp);
                    out->t.push_back(nextSample);
                    out->y.push_back(tmp);
                    if (nextSample >= tTurn - 1e-12) return tTurn;
                    nextSample = std::min(nextSample + dx, tTurn);
                    if (tTurn - nextSample < 1e-9) nextSample = tTurn;
                }
                continue;
            }
            if (stepper.current_state()[1] * p0sign < 0.0) {
                double lo = stepper.previous_time(), hi = t1;
                for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    stepper.calc_state(mid, tmp);
                    if (tmp[1] * p0sign < 0.0) hi = mid;
                    else lo = mid;
                }
                return 0.5 * (lo + hi);
            }
        }
        return -1.0;
    };
    const double tTurn = run(0.0, nullptr);
    if (tTurn < 0) throw NumericError("saintVenantProfile: manifold branch did not reach a turning point");
    Branch b;
    b.turnTime = tTurn;
    run(tTurn, &b);
    if (b.t.empty() || std::abs(b.t.back() - tTurn) > 1e-9)
        throw NumericError("saintVenantProfile: resampling of the manifold branch failed");
    return b;
}

}  // namespace

SaintVenantProfile saintVenantProfile(double F, double nu) {
    if (!(F > 2.0)) throw NumericError("saintVenantModel: roll waves require Froude number F > 2");
    if (!(nu > 0.0)) throw NumericError("saintVenantModel: viscosity must be positive");
    auto odeFor = [&](double c) { return SvOde{F, nu, c, 1.0 - c}; };
    // Bracket: scan speeds above the transcritical point c = 1.5 for a sign change.
    const double offset = 1e-9;
    double lo = -1, hi = -1;
    int prev = 0;
    double prevC = 0;
    for (double c = 1.55; c < 6.0; c += 0.01) {
        int cls = 0;
        try {
            cls = classify(odeFor(c), offset);
        } catch (const NumericError&) {
            continue;
        }
        if (prev == +1 && cls == -1) {
            lo = prevC;
            hi = c;
            break;
        }
        prev = cls;
        prevC = c;
    }
    if (lo < 0) {
        std::ostringstream os;
        os << "saintVenantProfile: no saddle connection bracketed for F = " << F << ", nu = " << nu
           << " (scanned c in [1.55, 6))";
        throw NumericError(os.str());
    }
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (classify(odeFor(mid), offset) == +1) lo = mid;
        else hi = mid;
    }
    const double c = 0.5 * (lo + hi);
    const auto ode = odeFor(c);
    const auto sd = saddle(ode);

    // Left half from the unstable manifold, right half from the stable one
    // (backward in x); both end at the crest P = 0.
    const double dx = 0.0025;
    const double tailOffset = 1e-10;
    const Branch left = branchToTurn(ode, sd.vu, tailOffset, +1.0, dx);
    const Branch right = branchToTurn(ode, sd.vs, tailOffset, -1.0, dx);

    std::vector<double> xs;
    std::vector<std::vector<double>> ys, ds;
    auto push = [&](double x, const SvState& s) {
        SvState d{};
        ode(s, d, 0.0);
        xs.push_back(x);
        ys.push_back({s[0], s[1]});
        ds.push_back({d[0], d[1]});
    };
    for (std::size_t i = 0; i < left.t.size(); ++i) push(left.t[i] - left.turnTime, left.y[i]);
    for (std::size_t i = right.t.size(); i-- > 0;) {
        const double x = right.turnTime - right.t[i];
        if (x <= xs.back() + 1e-12) continue;
        push(x, right.y[i]);
    }
    SaintVenantProfile out;
    out.F = F;
    out.nu = nu;
    out.speed = c;
    out.flux = 1.0 - c;
    out.decayRate = sd.unstable;
    out.growthRate = -sd.stable;
    out.crestMismatch = std::hypot(left.y.back()[0] - right.y.back()[0], left.y.back()[1] - right.y.back()[1]);
    out.table = HermiteTable(xs, ys, ds);
    return out;
}

ModelFamily saintVenantModel(double F, double nu) {
    const auto prof = std::make_shared<SaintVenantProfile>(saintVenantProfile(F, nu));
    const double c = prof->speed, q = prof->flux;
    const double xl = prof->table.front(), xr = prof->table.back();
    const SvOde ode{F, nu, c, q};
    const auto sd = saddle(ode);
    // State (H, P) with exponential tails beyond the table.
    auto state = [prof, xl, xr, sd](double x) -> std::array<double, 2> {
        if (x < xl) {
            const auto s = prof->table(xl);
            const double f = std::exp(sd.unstable * (x - xl));
            return {1.0 + (s[0] - 1.0) * f, s[1] * f};
        }
        if (x > xr) {
            const auto s = prof->table(xr);
            const double f = std::exp(sd.stable * (x - xr));
            return {1.0 + (s[0] - 1.0) * f, s[1] * f};
        }
        const auto s = prof->table(x);
        return {s[0], s[1]};
    };
    auto linearized = [F, nu, c, q](double H, double Hp, Complex lambda) {
        const double U = c + q / H;
        const double fh = -U * U + H / (F * F);
        const double fm = 2.0 * U;
        const double sh = 1.0 + 2.0 * U * U / H;
        const double sm = -2.0 * U / H;
        const double denom = nu * (c - U);
        const double g = Hp / H;
        CMatrix m = CMatrix::Zero(3, 3);
        // row 1: h' from the momentum flux definition, with m = y + c h
        m(0, 0) = (-c * c + fh + fm * c + nu * lambda + nu * (c - U) * g) / denom;
        m(0, 1) = (-c + fm + nu * g) / denom;
        m(0, 2) = -1.0 / denom;
        // row 2: (m - c h)' = -lambda h
        m(1, 0) = -lambda;
        // row 3: flux' = s_h h + (s_m - lambda) m
        m(2, 0) = sh + c * (sm - lambda);
        m(2, 1) = sm - lambda;
        return m;
    };
    SpectralSystem sys;
    sys.name = "saint-venant";
    sys.dim = 3;
    sys.coeff = [state, linearized, nu, q](double x, Complex lambda) {
        const auto s = state(x);
        const double Hp = -s[1] * s[0] / (nu * q);
        return linearized(s[0], Hp, lambda);
    };
    sys.asympt = [linearized](Complex lambda) { return linearized(1.0, 0.0, lambda); };
    sys.nu = std::min(sd.unstable, -sd.stable);
    sys.thetaBar = sys.nu;
    sys.metadata["F"] = F;
    sys.metadata["viscosity"] = nu;
    sys.metadata["speed"] = c;
    sys.metadata["flux"] = q;

    ModelFamily fam{sys, {}, {}, Profile({"h", "P"},
                                         [state](double x) {
                                             const auto s = state(x);
                                             return std::vector<double>{s[0], s[1]};
                                         },
                                         std::numeric_limits<double>::infinity()),
                    std::nullopt};
    fam.member = [sys](double X) { return periodizedSystem(sys, X); };
    return fam;
}

// ---------------------------------------------------------- test systems

SpectralSystem constantSystem(std::string name, std::function<CMatrix(Complex)> m, int dim, double period) {
    SpectralSystem sys;
    sys.name = std::move(name);
    sys.dim = dim;
    sys.period = period;
    sys.asympt = m;
    sys.coeff = [m](double, Complex lambda) { return m(lambda); };
    sys.nu = std::numeric_limits<double>::infinity();
    sys.thetaBar = sys.nu;
    return sys;
}

SpectralSystem flipFamily(double a, double b, double period) {
    SpectralSystem sys;
    sys.name = "hill";
    sys.dim = 2;
    sys.period = period;
    const double w = 2.0 * kPi / period;
    sys.coeff = [a, b, w](double x, Complex lambda) {
        CMatrix m(2, 2);
        m << 0.0, 1.0, lambda - a - b * std::cos(w * x), 0.0;
        return m;
    };
    sys.asympt = [a](Complex lambda) {
        CMatrix m(2, 2);
        m << 0.0, 1.0, lambda - a, 0.0;
        return m;
    };
    sys.metadata["a"] = a;
    sys.metadata["b"] = b;
    return sys;
}

// ------------------------------------------------------------ diagnostics

double tailDecaySlope(const SpectralSystem& sys, Complex lambda, double x0, double x1, int samples) {
    const CMatrix ainf = sys.asympt(lambda);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (int i = 0; i < samples; ++i) {
        const double x = x0 + (x1 - x0) * i / (samples - 1);
        const double dev = std::max((sys.coeff(x, lambda) - ainf).norm(), (sys.coeff(-x, lambda) - ainf).norm());
        if (dev <= 1e-300) continue;
        const double y = std::log(dev);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    if (n < 2) return -std::numeric_limits<double>::infinity();
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

double periodicDeviation(const SpectralSystem& member, const SpectralSystem& homoclinic, Complex lambda, int samples) {
    double worst = 0.0;
    for (int i = 0; i <= samples; ++i) {
        const double x = -0.5 * member.period + member.period * i / samples;
        worst = std::max(worst, (member.coeff(x, lambda) - homoclinic.coeff(x, lambda)).norm());
    }
    return worst;
}

}  // namespace evans
