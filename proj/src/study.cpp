#include "evans/study.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

namespace evans {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Complex complexFrom(const nlohmann::json& j, const std::string& key) {
    if (j.is_number()) return {j.get<double>(), 0.0};
    if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
        return {j[0].get<double>(), j[1].get<double>()};
    throw ConfigError(key + ": expected a number or [re, im]");
}

double numberFrom(const nlohmann::json& j, const std::string& key) {
    if (!j.is_number()) throw ConfigError(key + ": expected a number");
    return j.get<double>();
}

int intFrom(const nlohmann::json& j, const std::string& key) {
    if (!j.is_number_integer()) throw ConfigError(key + ": expected an integer");
    return j.get<int>();
}

void mergeInto(nlohmann::json& base, const nlohmann::json& user, const std::string& path) {
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string key = path.empty() ? it.key() : path + "." + it.key();
        if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
        if (base[it.key()].is_object() && it.value().is_object() && it.key() != "params")
            mergeInto(base[it.key()], it.value(), key);
        else
            base[it.key()] = it.value();
    }
}

}  // namespace

std::string formatNumber(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

nlohmann::json defaultConfig() {
    const NumericPolicy p;
    return {
        {"schema", kSchemaVersion},
        {"model", "pulse"},
        {"params", nlohmann::json::object()},
        {"periods", {12.0, 16.0, 20.0, 24.0, 28.0}},
        {"levels", nlohmann::json::array()},
        {"lambda", {1.0, 0.0}},
        {"gammas", {1.0, {0.0, 1.0}, -1.0}},
        {"box", nlohmann::json::array()},
        {"gammaCount", 8},
        {"arcC", 8.0},
        {"rootTol", 1e-10},
        {"realCutoff", 1.0},
        {"policy",
         {{"step", p.step},
          {"fixedGrid", p.fixedGrid},
          {"absTol", p.absTol},
          {"relTol", p.relTol},
          {"minStep", p.minStep},
          {"fixedGridErrorLimit", p.fixedGridErrorLimit},
          {"conditionLimit", p.conditionLimit},
          {"tailTol", p.tailTol},
          {"centerWindow", p.split.centerWindow},
          {"contourNodes", p.contourNodes},
          {"maxRefinements", p.maxRefinements},
          {"noiseFactor", p.noiseFactor}}},
        {"out", "out"},
        {"threads", 0},
    };
}

void applyOverride(nlohmann::json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not KEY=VALUE");
    const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
    nlohmann::json value;
    try {
        value = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error&) {
        value = text;
    }
    nlohmann::json* node = &j;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->is_object()) throw ConfigError("override '" + key + "': not an object path");
        node = &(*node)[parts[i]];
    }
    (*node)[parts.back()] = value;
}

StudyConfig parseConfig(const nlohmann::json& user) {
    nlohmann::json j = defaultConfig();
    if (!user.is_object()) throw ConfigError("config must be a JSON object");
    mergeInto(j, user, "");
    if (j["schema"] != kSchemaVersion)
        throw ConfigError("schema '" + j["schema"].dump() + "' is not " + kSchemaVersion);
    // the roll wave needs a finer grid near its crest
    if (j["model"] == "saint-venant" && !(user.contains("policy") && user["policy"].contains("step")))
        j["policy"]["step"] = 0.004;

    StudyConfig c;
    c.raw = j;
    c.model = j["model"].get<std::string>();
    static const std::vector<std::string> models{"pulse", "kdv", "saint-venant", "synthetic", "embedded", "hill"};
    if (std::find(models.begin(), models.end(), c.model) == models.end())
        throw ConfigError("unknown model '" + c.model + "'");
    c.params = j["params"];
    if (!c.params.is_object()) throw ConfigError("params: expected an object");
    for (const auto& x : j["periods"]) c.periods.push_back(numberFrom(x, "periods"));
    for (std::size_t i = 0; i < c.periods.size(); ++i) {
        if (!(c.periods[i] > 0.0)) throw ConfigError("periods: must be positive");
        if (i > 0 && !(c.periods[i] > c.periods[i - 1])) throw ConfigError("periods: must be strictly increasing");
    }
    for (const auto& x : j["levels"]) c.levels.push_back(numberFrom(x, "levels"));
    c.lambda = complexFrom(j["lambda"], "lambda");
    for (const auto& g : j["gammas"]) c.gammas.push_back(complexFrom(g, "gammas"));
    if (!j["box"].empty()) {
        if (j["box"].size() != 4) throw ConfigError("box: expected [re0, re1, im0, im1]");
        for (int i = 0; i < 4; ++i) c.box[i] = numberFrom(j["box"][i], "box");
        if (!c.hasBox()) throw ConfigError("box: empty rectangle");
    }
    c.gammaCount = intFrom(j["gammaCount"], "gammaCount");
    if (c.gammaCount < 1) throw ConfigError("gammaCount: must be positive");
    c.arcC = numberFrom(j["arcC"], "arcC");
    c.rootTol = numberFrom(j["rootTol"], "rootTol");
    c.realCutoff = numberFrom(j["realCutoff"], "realCutoff");
    c.outDir = j["out"].get<std::string>();
    c.threads = intFrom(j["threads"], "threads");

    const auto& p = j["policy"];
    NumericPolicy& pol = c.policy;
    pol.step = numberFrom(p["step"], "policy.step");
    pol.fixedGrid = p["fixedGrid"].get<bool>();
    pol.absTol = numberFrom(p["absTol"], "policy.absTol");
    pol.relTol = numberFrom(p["relTol"], "policy.relTol");
    pol.minStep = numberFrom(p["minStep"], "policy.minStep");
    pol.fixedGridErrorLimit = numberFrom(p["fixedGridErrorLimit"], "policy.fixedGridErrorLimit");
    pol.conditionLimit = numberFrom(p["conditionLimit"], "policy.conditionLimit");
    pol.tailTol = numberFrom(p["tailTol"], "policy.tailTol");
    pol.split.centerWindow = numberFrom(p["centerWindow"], "policy.centerWindow");
    pol.contourNodes = intFrom(p["contourNodes"], "policy.contourNodes");
    pol.maxRefinements = intFrom(p["maxRefinements"], "policy.maxRefinements");
    pol.noiseFactor = numberFrom(p["noiseFactor"], "policy.noiseFactor");
    for (double t : {pol.step, pol.absTol, pol.relTol, pol.minStep, pol.fixedGridErrorLimit, pol.tailTol, c.rootTol,
                     c.arcC, pol.noiseFactor})
        if (!(t > 0.0)) throw ConfigError("tolerances, steps and arcC must be positive");
    if (pol.contourNodes < 8) throw ConfigError("policy.contourNodes: need at least 8");
    return c;
}

// ---------------------------------------------------------------- models

ModelSetup buildModel(const StudyConfig& cfg) {
    const auto& p = cfg.params;
    auto num = [&](const char* key, double def) { return p.contains(key) ? numberFrom(p[key], key) : def; };
    auto cpx = [&](const char* key, Complex def) { return p.contains(key) ? complexFrom(p[key], key) : def; };
    ModelSetup out;
    if (cfg.model == "pulse") {
        out.family = pulseModel();
    } else if (cfg.model == "kdv") {
        out.family = kdvCnoidalModel(num("c", 1.0));
    } else if (cfg.model == "saint-venant") {
        out.family = saintVenantModel(num("F", 6.0), num("nu", 0.1));
        out.family.arc = arcFromAsymptotic(out.family.homoclinic.asympt, 3, num("kStar", 2.88));
    } else if (cfg.model == "hill") {
        const double a = num("a", 1.0), b = num("b", 2.0);
        out.family.homoclinic = constantSystem("hill-mean",
                                               [a](Complex l) {
                                                   CMatrix m(2, 2);
                                                   m << 0.0, 1.0, l - a, 0.0;
                                                   return m;
                                               },
                                               2, std::numeric_limits<double>::infinity());
        out.family.member = [a, b](double X) { return flipFamily(a, b, X); };
    } else {
        SyntheticArcParams sp;
        sp.lambdaStar = cpx("lambdaStar", sp.lambdaStar);
        sp.kStar = num("kStar", sp.kStar);
        sp.v = cpx("v", sp.v);
        sp.muU = num("muU", sp.muU);
        sp.muS = num("muS", sp.muS);
        sp.slopeU = cpx("slopeU", sp.slopeU);
        sp.slopeS = cpx("slopeS", sp.slopeS);
        sp.couplingUS = cpx("couplingUS", sp.couplingUS);
        sp.couplingSU = cpx("couplingSU", sp.couplingSU);
        sp.couplingUC = cpx("couplingUC", sp.couplingUC);
        sp.couplingSC = cpx("couplingSC", sp.couplingSC);
        sp.beta0 = cpx("beta0", sp.beta0);
        sp.beta1 = cpx("beta1", sp.beta1);
        SyntheticArcSystem syn =
            cfg.model == "embedded" ? embeddedArcSystem(sp, cfg.policy) : syntheticArcSystem(sp);
        out.family.homoclinic = syn.homoclinic;
        out.family.member = [hom = syn.homoclinic](double X) { return periodizedSystem(hom, X); };
        out.family.arc = syn.arc;
        out.synthetic = syn;
    }
    if (!out.family.member) {
        out.family.member = [hom = out.family.homoclinic](double X) { return periodizedSystem(hom, X); };
    }
    return out;
}

// --------------------------------------------------------------- studies

PointStudy pointConvergence(const ModelFamily& family, Complex lambda, const std::vector<Complex>& gammas,
                            const std::vector<double>& periods, const NumericPolicy& policy) {
    PointStudy out;
    out.lambda = lambda;
    out.gammas = gammas;
    out.periods = periods;
    const HomoclinicEvansContext hctx(family.homoclinic, policy);
    out.reference = homoclinicEvans(hctx, lambda);
    out.errors.assign(gammas.size(), std::vector<double>(periods.size(), 0.0));
    for (std::size_t i = 0; i < periods.size(); ++i) {
        const PeriodicEvansContext ctx(family.member(periods[i]), policy);
        for (std::size_t g = 0; g < gammas.size(); ++g) {
            const ScaledValue d = rescaledEvans(ctx, lambda, gammas[g]) - out.reference;
            out.errors[g][i] = std::exp(d.logAbs());
        }
    }
    const double floor = policy.noiseFactor * policy.relTol * std::exp(out.reference.logAbs());
    for (std::size_t g = 0; g < gammas.size(); ++g) out.fits.push_back(fitRate(periods, out.errors[g], floor));
    return out;
}

namespace {

// Three-way splittings must hold on the whole search box around lambda_*.
NumericPolicy arcPolicy(const NumericPolicy& policy, const DispersionArc& arc, double radius) {
    NumericPolicy p = policy;
    if (p.split.centerWindow < 0.0 && arc.muCprime)
        p.split.centerWindow = 1.2 * std::sqrt(2.0) * radius * std::abs(arc.muCprime(arc.lambdaStar));
    return p;
}

// Roots of the transitional function in B(lambda_*, r) for gamma = e^{ikX}.
RootSearch ballRoots(const PeriodicEvansContext& ctx, const DispersionArc& arc, double k, double radius,
                     double rootTol, const NumericPolicy& policy, std::vector<Complex>& inside) {
    const double X = ctx.period();
    const Complex gamma = std::polar(1.0, k * X);
    const EvansFn f = [&](Complex l) { return transitionalPeriodic(ctx, arc, l, gamma); };
    // slightly off-center so that no lattice point sits on a box edge
    const Complex c = arc.lambdaStar + Complex(1.3e-3, 0.7e-3) * radius;
    auto rs = locateRoots(f, Contour::rectangle(c, 1.02 * radius, 1.02 * radius), rootTol, policy);
    inside.clear();
    for (const auto& r : rs.roots)
        if (std::abs(r.lambda - arc.lambdaStar) <= radius)
            for (int m = 0; m < r.multiplicity; ++m) inside.push_back(r.lambda);
    return rs;
}

}  // namespace

ArcConstants arcConstants(const HomoclinicEvansContext& ctx, const DispersionArc& arc, double radius,
                          double relTol) {
    const auto at = arcExtension(ctx, arc, arc.lambdaStar);
    constexpr int N = 16, M = 4;
    std::array<Complex, M> c1{}, c2{};
    for (int j = 0; j < N; ++j) {
        const Complex w = std::polar(1.0, kTwoPi * j / N);
        const auto e = arcExtension(ctx, arc, arc.lambdaStar + radius * w);
        for (int m = 0; m < M; ++m) {
            const Complex wm = std::pow(std::conj(w), m) / double(N);
            c1[m] += e.d1.value() * wm;
            c2[m] += e.d2.value() * wm;
        }
    }
    // c[m] holds coefficient * radius^m; compare on that scale
    double scale = 0.0;
    for (int m = 0; m < M; ++m) scale = std::max({scale, std::abs(c1[m]), std::abs(c2[m])});
    auto order = [&](const std::array<Complex, M>& c) {
        for (int m = 0; m < M; ++m)
            if (std::abs(c[m]) > relTol * scale) return m;
        return M;
    };
    const int o1 = order(c1), o2 = order(c2);
    if (o1 != o2 || o1 == M) {
        std::ostringstream os;
        os << "arcConstants: D_1 and D_2 vanish to different orders (" << o1 << ", " << o2 << ") at lambda_* = "
           << arc.lambdaStar;
        throw NumericError(os.str());
    }
    ArcConstants out;
    out.order = o1;
    if (o1 == 0) {
        out.d1 = at.d1.value();
        out.d2 = at.d2.value();
    } else {
        const double r = std::pow(radius, o1);
        out.d1 = c1[o1] / r;
        out.d2 = c2[o1] / r;
    }
    return out;
}

ArcStudy arcConvergence(const std::function<SpectralSystem(double)>& member, const DispersionArc& arc, Complex d1,
                        Complex d2, const std::vector<double>& periods, int gammaCount, double C,
                        const NumericPolicy& policy, double rootTol) {
    ArcStudy out;
    out.corrector = std::log(d2 / d1) / arc.muCprime(arc.lambdaStar);
    std::vector<double> sups, csups;
    for (double X : periods) {
        const double radius = C / X;
        const NumericPolicy pol = arcPolicy(policy, arc, radius);
        const PeriodicEvansContext ctx(member(X), pol);
        ArcRow row;
        row.period = X;
        for (int q = 0; q < gammaCount; ++q) {
            const double k = arc.kStar + (q + 0.5) / gammaCount * kTwoPi / X;
            std::vector<Complex> in;
            const auto rs = ballRoots(ctx, arc, k, radius, rootTol, pol, in);
            row.evaluations += rs.evaluations;
            row.partial = row.partial || rs.partial;
            const auto ld = latticeDistance(in, arc, k, X, C);
            const auto pts = latticePoints(arc, k, X, 2.0 * radius);
            std::vector<double> corr;
            for (auto z : in) {
                double best = std::numeric_limits<double>::infinity();
                for (auto pt : pts) best = std::min(best, std::abs(z - pt - out.corrector / X));
                corr.push_back(best);
                row.supCorrected = std::max(row.supCorrected, best);
            }
            row.sup = std::max(row.sup, ld.sup);
            row.ks.push_back(k);
            row.roots.push_back(in);
            row.raw.push_back(ld.distances);
            row.corrected.push_back(corr);
        }
        sups.push_back(row.sup);
        csups.push_back(row.supCorrected);
        out.rows.push_back(std::move(row));
    }
    out.raw = fitAlgebraic(periods, sups);
    out.corrected = fitAlgebraic(periods, csups);
    return out;
}

EmbeddedStudy embeddedConvergence(const std::function<SpectralSystem(double)>& member, const DispersionArc& arc,
                                  const std::vector<double>& periods, int gammaCount, double C,
                                  const NumericPolicy& policy, double rootTol) {
    EmbeddedStudy out;
    out.periods = periods;
    for (double X : periods) {
        const double radius = C / X;
        const NumericPolicy pol = arcPolicy(policy, arc, radius);
        const PeriodicEvansContext ctx(member(X), pol);
        double emb = 0.0, lat = 0.0;
        int count = 0;
        for (int q = 0; q < gammaCount; ++q) {
            const double k = arc.kStar + (q + 0.5) / gammaCount * kTwoPi / X;
            std::vector<Complex> in;
            ballRoots(ctx, arc, k, radius, rootTol, pol, in);
            if (in.empty()) throw NumericError("embeddedConvergence: no root in the ball");
            std::sort(in.begin(), in.end(), [&](Complex a, Complex b) {
                return std::abs(a - arc.lambdaStar) < std::abs(b - arc.lambdaStar);
            });
            emb = std::max(emb, std::abs(in.front() - arc.lambdaStar));
            const std::vector<Complex> rest(in.begin() + 1, in.end());
            if (!rest.empty()) lat = std::max(lat, latticeDistance(rest, arc, k, X, C).sup);
            count += static_cast<int>(in.size());
        }
        out.embedded.push_back(emb);
        out.lattice.push_back(lat);
        out.rootCounts.push_back(count);
    }
    out.embeddedFit = fitRate(periods, out.embedded, 0.0);
    out.latticeFit = fitAlgebraic(periods, out.lattice);
    return out;
}

// -------------------------------------------------------------- commands

namespace {

nlohmann::json complexJson(Complex z) { return {z.real(), z.imag()}; }

nlohmann::json scaledJson(const ScaledValue& v) {
    return {{"mantissa", complexJson(v.mantissa())}, {"logscale", v.logscale()}};
}

nlohmann::json fitJson(const RateFit& f) {
    return {{"model", modelName(f.model)}, {"exponent", f.exponent}, {"prefactor", f.prefactor},
            {"residual", f.residual},      {"refused", f.refused},   {"note", f.note}};
}

nlohmann::json recordJson(const ConvergenceRecord& r) {
    return {{"periods", r.periods},
            {"errors", r.errors},
            {"exponential", fitJson(r.exponential)},
            {"algebraic", fitJson(r.algebraic)},
            {"best", fitJson(r.best)}};
}

// Header shared by every report: schema, model, tolerances of the run.
nlohmann::json reportHeader(const StudyConfig& cfg, const std::string& command) {
    return {{"schema", kSchemaVersion}, {"command", command}, {"config", cfg.raw}};
}

std::filesystem::path prepareOut(const StudyConfig& cfg) {
    std::filesystem::path dir(cfg.outDir);
    std::filesystem::create_directories(dir);
    return dir;
}

void writeJson(const std::filesystem::path& file, const nlohmann::json& j) {
    std::ofstream os(file);
    os << j.dump(2) << '\n';
    if (!os) throw std::runtime_error("cannot write " + file.string());
}

class Csv {
public:
    Csv(const std::filesystem::path& file, const std::vector<std::string>& header) : os_(file) {
        os_ << "# " << kSchemaVersion << '\n';
        for (std::size_t i = 0; i < header.size(); ++i) os_ << (i ? "," : "") << header[i];
        os_ << '\n';
    }
    void row(const std::vector<double>& v) {
        for (std::size_t i = 0; i < v.size(); ++i) os_ << (i ? "," : "") << formatNumber(v[i]);
        os_ << '\n';
    }

private:
    std::ofstream os_;
};

double maxAbs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

// Second-order residual of a planar profile: u'' from differences of u'.
double planarResidual(const Profile& prof, double a, double b, double x0, double x1, int n) {
    double worst = 0.0;
    const double h = 1e-4;
    for (int i = 1; i < n; ++i) {
        const double x = x0 + (x1 - x0) * i / n;
        const double upp = (prof(x + h)[1] - prof(x - h)[1]) / (2 * h);
        const double u = prof(x)[0];
        worst = std::max(worst, std::abs(upp - (a * u - b * u * u)));
    }
    return worst;
}

}  // namespace

int cmdProfile(const StudyConfig& cfg, std::ostream& log) {
    const auto setup = buildModel(cfg);
    const auto& fam = setup.family;
    const auto dir = prepareOut(cfg);
    auto report = reportHeader(cfg, "profile");
    const auto& hom = fam.homoclinic;
    const Profile& hp = fam.homoclinicProfile;
    if (hp.names().empty()) {
        log << "profile: model '" << cfg.model << "' has no wave profile (coefficients are given directly)\n";
        return kConfigError;
    }

    // homoclinic samples and measured rates
    const double L = 30.0;
    const int n = 2400;
    {
        std::vector<std::string> head{"x"};
        for (const auto& s : hp.names()) head.push_back(s);
        Csv csv(dir / "profile_homoclinic.csv", head);
        for (int i = 0; i <= n; ++i) {
            const double x = -L + 2 * L * i / n;
            std::vector<double> row{x};
            for (double v : hp(x)) row.push_back(v);
            csv.row(row);
        }
    }
    const double slopeR = tailDecaySlope(hom, 0.0, 10.0, 25.0);
    const double slopeL = tailDecaySlope(hom, 0.0, -25.0, -10.0);
    std::vector<double> tail = hp(L), rest = hp(1e6);
    for (std::size_t i = 0; i < tail.size(); ++i) tail[i] -= rest[i];
    report["homoclinic"] = {{"nuDeclared", hom.nu},
                            {"decaySlopeRight", slopeR},
                            {"decaySlopeLeft", slopeL},
                            {"tailState", maxAbs(tail)},
                            {"tailAt", L}};
    for (const auto& [k, v] : hom.metadata) report["homoclinic"]["metadata"][k] = v;
    log << "homoclinic: measured tail slopes " << slopeL << " / " << slopeR << ", |state - rest| at x = " << L
        << ": " << maxAbs(tail) << '\n';

    // periodic members
    std::vector<double> Xs = cfg.periods;
    const bool planar = cfg.model == "pulse" || cfg.model == "kdv";
    const double a = planar ? (cfg.model == "pulse" ? 1.0 : (cfg.params.contains("c") ? cfg.params["c"].get<double>() : 1.0)) : 0.0;
    const double b = cfg.model == "pulse" ? 1.0 : 0.5;
    std::vector<Profile> members;
    if (planar) {
        const PlanarHamiltonian ham(a, b);
        for (double h : cfg.levels) members.push_back(ham.periodicProfile(h));
        for (double X : Xs) members.push_back(fam.profile(X));
    } else if (!cfg.levels.empty()) {
        log << "profile: levels apply to the planar models only\n";
        return kConfigError;
    }
    nlohmann::json list = nlohmann::json::array();
    std::vector<double> devs;
    for (std::size_t m = 0; m < members.size(); ++m) {
        const Profile& prof = members[m];
        const double X = prof.period();
        const PlanarHamiltonian ham(a, b);
        char name[64];
        std::snprintf(name, sizeof name, "profile_member_%02zu.csv", m);
        {
            std::vector<std::string> head{"x"};
            for (const auto& s : prof.names()) head.push_back(s);
            head.push_back("period");
            Csv csv(dir / name, head);
            const int cells = 2000;
            for (int i = 0; i <= cells; ++i) {
                const double x = -0.5 * X + X * i / cells;
                std::vector<double> row{x};
                for (double v : prof(x)) row.push_back(v);
                row.push_back(X);
                csv.row(row);
            }
        }
        const double res = planarResidual(prof, a, b, -0.5 * X, 0.5 * X, 400);
        const double quad = ham.periodByQuadrature(prof.level());
        const SpectralSystem sys = fam.member(X);
        const double dev = periodicDeviation(sys, hom, 0.0);
        devs.push_back(dev);
        list.push_back({{"file", name},
                        {"level", prof.level()},
                        {"period", X},
                        {"periodQuadrature", quad},
                        {"residual", res},
                        {"deviationFromHomoclinic", dev}});
        log << "member " << m << ": level " << prof.level() << " period " << X << " (quadrature " << quad
            << ") residual " << res << " |A^eps - A^0| " << dev << '\n';
    }
    report["members"] = list;
    if (devs.size() >= 4 && cfg.levels.empty()) {
        const auto rec = fitRate(Xs, devs, 0.0);
        report["thetaBarFit"] = recordJson(rec);
        log << "deviation rate (theta bar estimate): " << rec.exponential.exponent << " per unit X\n";
    }
    report["tolerances"] = cfg.raw["policy"];
    writeJson(dir / "profile.json", report);
    return kOk;
}

int cmdSpectrum(const StudyConfig& cfg, std::ostream& log) {
    const auto setup = buildModel(cfg);
    const auto& fam = setup.family;
    const auto dir = prepareOut(cfg);
    auto report = reportHeader(cfg, "spectrum");
    const Contour box = cfg.hasBox() ? Contour::box(cfg.box[0], cfg.box[1], cfg.box[2], cfg.box[3])
                                     : Contour::rectangle(cfg.lambda, 0.5, 0.5);

    // essential spectrum of the homoclinic: rightmost point of the dispersion curves
    double bestRe = -std::numeric_limits<double>::infinity(), bestK = 0.0;
    Complex bestL;
    {
        Csv csv(dir / "dispersion.csv", {"k", "lambda_re", "lambda_im"});
        for (int i = -800; i <= 800; ++i) {
            const double k = 0.01 * i;
            for (auto l : dispersionLambdas(fam.homoclinic.asympt, fam.homoclinic.dim, k)) {
                csv.row({k, l.real(), l.imag()});
                if (l.real() > bestRe) {
                    bestRe = l.real();
                    bestK = k;
                    bestL = l;
                }
            }
        }
    }
    report["essential"] = {{"maxRe", bestRe}, {"k", bestK}, {"lambda", complexJson(bestL)}};
    log << "essential spectrum: max Re lambda = " << bestRe << " at k = " << bestK << '\n';

    nlohmann::json members = nlohmann::json::array();
    Csv roots(dir / "roots.csv", {"period", "q", "gamma_re", "gamma_im", "lambda_re", "lambda_im", "multiplicity",
                                  "polished"});
    Csv loops(dir / "loops.csv", {"period", "root", "q", "k", "lambda_re", "lambda_im"});
    int failures = 0;
    for (double X : cfg.periods) {
        const PeriodicEvansContext ctx(fam.member(X), cfg.policy);
        nlohmann::json m{{"period", X}};
        nlohmann::json perGamma = nlohmann::json::array();
        std::vector<std::vector<Complex>> byQ;
        for (int q = 0; q < cfg.gammaCount; ++q) {
            const Complex gamma = std::polar(1.0, kTwoPi * q / cfg.gammaCount);
            const EvansFn f = [&](Complex l) { return periodicEvans(ctx, l, gamma); };
            nlohmann::json g{{"q", q}, {"gamma", complexJson(gamma)}};
            try {
                const auto rs = locateRoots(f, box, cfg.rootTol, cfg.policy);
                nlohmann::json rl = nlohmann::json::array();
                std::vector<Complex> zs;
                for (const auto& r : rs.roots) {
                    rl.push_back({{"lambda", complexJson(r.lambda)},
                                  {"multiplicity", r.multiplicity},
                                  {"polished", r.polished},
                                  {"boxSize", r.boxSize}});
                    roots.row({X, double(q), gamma.real(), gamma.imag(), r.lambda.real(), r.lambda.imag(),
                               double(r.multiplicity), r.polished ? 1.0 : 0.0});
                    zs.push_back(r.lambda);
                }
                g["roots"] = rl;
                g["evaluations"] = rs.evaluations;
                g["partial"] = rs.partial;
                g["notes"] = rs.notes;
                byQ.push_back(zs);
            } catch (const NumericError& e) {
                g["error"] = e.what();
                log << "X = " << X << ", q = " << q << ": " << e.what() << '\n';
                ++failures;
                byQ.push_back({});
            }
            perGamma.push_back(g);
        }
        // loop traces: follow each q = 0 root to the nearest root at the next q,
        // closing the loop at q = gammaCount (same gamma as q = 0)
        if (!byQ.empty())
            for (std::size_t r = 0; r < byQ[0].size(); ++r) {
                Complex z = byQ[0][r];
                for (int q = 0; q <= cfg.gammaCount; ++q) {
                    const auto& cand = byQ[q % cfg.gammaCount];
                    if (cand.empty()) break;
                    Complex best = cand[0];
                    for (auto c : cand)
                        if (std::abs(c - z) < std::abs(best - z)) best = c;
                    z = best;
                    loops.row({X, double(r), double(q), kTwoPi * q / cfg.gammaCount / X, z.real(), z.imag()});
                }
            }
        int unstable = 0;
        for (const auto& zs : byQ)
            for (auto z : zs) unstable += z.real() > 0.0;
        m["gammas"] = perGamma;
        m["rootsWithPositiveRealPart"] = unstable;
        log << "X = " << X << ": " << unstable << " roots with Re lambda > 0 over " << cfg.gammaCount
            << " gamma values\n";
        members.push_back(m);
    }
    report["box"] = {box.center.real() - box.rx, box.center.real() + box.rx, box.center.imag() - box.ry,
                     box.center.imag() + box.ry};
    report["members"] = members;
    writeJson(dir / "spectrum.json", report);
    return failures ? kNumericFailure : kOk;
}

int cmdConverge(const StudyConfig& cfg, const std::string& mode, std::ostream& log) {
    const auto setup = buildModel(cfg);
    const auto& fam = setup.family;
    const auto dir = prepareOut(cfg);
    auto report = reportHeader(cfg, "converge");
    report["mode"] = mode;
    int code = kOk;
    auto verdict = [&](const std::string& what, bool ok, const std::string& detail) {
        log << (ok ? "bound satisfied: " : "bound violated: ") << what << " (" << detail << ")\n";
        report["verdicts"].push_back({{"prediction", what}, {"satisfied", ok}, {"detail", detail}});
        if (!ok && code == kOk) code = kBoundViolation;
    };
    std::ostringstream d;
    if (mode == "point") {
        const auto st = pointConvergence(fam, cfg.lambda, cfg.gammas, cfg.periods, cfg.policy);
        report["reference"] = scaledJson(st.reference);
        Csv csv(dir / "converge_point.csv", {"period", "gamma_re", "gamma_im", "error"});
        for (std::size_t g = 0; g < st.gammas.size(); ++g) {
            for (std::size_t i = 0; i < st.periods.size(); ++i)
                csv.row({st.periods[i], st.gammas[g].real(), st.gammas[g].imag(), st.errors[g][i]});
            const auto& fit = st.fits[g];
            report["fits"].push_back(recordJson(fit));
            d.str("");
            d << "gamma = " << st.gammas[g];
            if (fit.best.refused) {
                log << "fit refused for " << d.str() << ": " << fit.best.note << '\n';
                code = kNumericFailure;
                continue;
            }
            d << ", best model " << modelName(fit.best.model) << ", rate " << fit.exponential.exponent
              << ", residual " << fit.exponential.residual;
            verdict("exponential convergence to D^0", fit.best.model == RateModel::Exponential &&
                                                          fit.exponential.exponent > 0.0,
                    d.str());
        }
    } else if (mode == "arc" || mode == "embedded") {
        if (!fam.arc) {
            log << "converge " << mode << ": model '" << cfg.model << "' has no dispersion arc\n";
            return kConfigError;
        }
        const DispersionArc& arc = *fam.arc;
        if (mode == "arc") {
            Complex d1, d2;
            if (setup.synthetic) {
                d1 = setup.synthetic->d1;
                d2 = setup.synthetic->d2;
            } else {
                const HomoclinicEvansContext hctx(fam.homoclinic, cfg.policy);
                const auto ac = arcConstants(hctx, arc);
                d1 = ac.d1;
                d2 = ac.d2;
                report["dOrder"] = ac.order;
            }
            const auto st = arcConvergence(fam.member, arc, d1, d2, cfg.periods, cfg.gammaCount, cfg.arcC,
                                           cfg.policy, cfg.rootTol);
            report["d1"] = complexJson(d1);
            report["d2"] = complexJson(d2);
            report["corrector"] = complexJson(st.corrector);
            Csv csv(dir / "converge_arc.csv",
                    {"period", "k", "lambda_re", "lambda_im", "lattice_distance", "corrected_distance"});
            nlohmann::json rows = nlohmann::json::array();
            for (const auto& r : st.rows) {
                for (std::size_t q = 0; q < r.ks.size(); ++q)
                    for (std::size_t i = 0; i < r.roots[q].size(); ++i)
                        csv.row({r.period, r.ks[q], r.roots[q][i].real(), r.roots[q][i].imag(), r.raw[q][i],
                                 r.corrected[q][i]});
                rows.push_back({{"period", r.period},
                                {"sup", r.sup},
                                {"supTimesPeriod", r.sup * r.period},
                                {"supCorrected", r.supCorrected},
                                {"evaluations", r.evaluations},
                                {"partial", r.partial}});
                log << "X = " << r.period << ": sup distance " << r.sup << " (x X = " << r.sup * r.period
                    << "), corrected " << r.supCorrected << '\n';
            }
            report["rows"] = rows;
            report["raw"] = fitJson(st.raw);
            report["corrected"] = fitJson(st.corrected);
            d << "p = " << st.raw.exponent;
            verdict("raw lattice distance O(1/X)", st.raw.exponent >= 0.8, d.str());
            d.str("");
            d << "p = " << st.corrected.exponent;
            verdict("corrected lattice distance O(1/X^2)", st.corrected.exponent >= 1.8, d.str());
        } else {
            const auto st = embeddedConvergence(fam.member, arc, cfg.periods, cfg.gammaCount, cfg.arcC,
                                                cfg.policy, std::min(cfg.rootTol, 1e-12));
            Csv csv(dir / "converge_embedded.csv", {"period", "embedded_distance", "lattice_sup", "roots"});
            for (std::size_t i = 0; i < st.periods.size(); ++i)
                csv.row({st.periods[i], st.embedded[i], st.lattice[i], double(st.rootCounts[i])});
            report["clusters"] = {{"embedded", {{"periods", st.periods}, {"distance", st.embedded},
                                                {"fit", recordJson(st.embeddedFit)}}},
                                  {"lattice", {{"periods", st.periods}, {"sup", st.lattice},
                                               {"fit", fitJson(st.latticeFit)}}}};
            const auto& ef = st.embeddedFit;
            d << "best " << modelName(ef.best.model) << ", rate " << ef.exponential.exponent << ", residual "
              << ef.exponential.residual;
            verdict("one root converging exponentially to lambda_*",
                    !ef.best.refused && ef.best.model == RateModel::Exponential && ef.exponential.residual < 0.15,
                    d.str());
            d.str("");
            d << "p = " << st.latticeFit.exponent;
            verdict("remaining roots O(1/X) from the lattice",
                    st.latticeFit.exponent >= 0.8 && st.latticeFit.exponent <= 1.2, d.str());
        }
    } else {
        log << "converge: unknown mode '" << mode << "' (point, arc, embedded)\n";
        return kConfigError;
    }
    writeJson(dir / ("converge_" + mode + ".json"), report);
    return code;
}

int cmdIndex(const StudyConfig& cfg, std::ostream& log) {
    const auto setup = buildModel(cfg);
    const auto dir = prepareOut(cfg);
    auto report = reportHeader(cfg, "index");
    int code = kOk;
    for (double X : cfg.periods) {
        const PeriodicEvansContext ctx(setup.family.member(X), cfg.policy);
        nlohmann::json m{{"period", X}};
        try {
            const auto s = stabilityIndex(ctx, cfg.realCutoff);
            m["sigma"] = s.sigma;
            m["E0"] = scaledJson(s.atZero);
            m["ER"] = scaledJson(s.atInfinity);
            m["R"] = s.cutoff;
            nlohmann::json h = nlohmann::json::array();
            for (const auto& [r, sg] : s.history) h.push_back({r, sg});
            m["history"] = h;
            log << "X = " << X << ": sigma = " << s.sigma << " (E(0,-1) = " << s.atZero.value()
                << ", R = " << s.cutoff << ")\n";
        } catch (const NumericError& e) {
            m["error"] = e.what();
            log << "X = " << X << ": " << e.what() << '\n';
            code = kNumericFailure;
        }
        report["members"].push_back(m);
    }
    writeJson(dir / "index.json", report);
    return code;
}

}  // namespace evans
