#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "evans/evans_hom.hpp"
#include "evans/evans_per.hpp"
#include "evans/models.hpp"
#include "evans/numeric_policy.hpp"
#include "evans/spectra.hpp"

namespace evans {

inline constexpr const char* kSchemaVersion = "evans-study/1";

/// Raised for invalid configurations (exit code 2 in the CLI).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parsed study configuration. Everything has a default; see defaultConfig().
struct StudyConfig {
    std::string model = "pulse";
    nlohmann::json params = nlohmann::json::object();  // model parameters
    std::vector<double> periods;                        // strictly increasing
    std::vector<double> levels;                         // Hamiltonian levels (profile only)
    Complex lambda{1.0, 0.0};                           // point studies
    std::vector<Complex> gammas;                        // point studies
    std::array<double, 4> box{0.0, 0.0, 0.0, 0.0};      // re0, re1, im0, im1; empty when re1 <= re0
    int gammaCount = 8;                                 // unit-circle grid for spectrum/arc runs
    double arcC = 8.0;                                  // ball B(lambda_*, C/X)
    double rootTol = 1e-10;
    double realCutoff = 1.0;
    NumericPolicy policy;
    std::string outDir = "out";
    int threads = 0;
    nlohmann::json raw;  // merged JSON the run used

    bool hasBox() const { return box[1] > box[0] && box[3] > box[2]; }
};

nlohmann::json defaultConfig();
/// Merge overrides into the defaults and validate.
StudyConfig parseConfig(const nlohmann::json& user);
/// KEY=VALUE with KEY a dotted path ("policy.step", "periods"); VALUE parsed
/// as JSON when possible, else taken as a string.
void applyOverride(nlohmann::json& j, const std::string& assignment);

/// Model by name: pulse, kdv, saint-venant, synthetic, embedded.
struct ModelSetup {
    ModelFamily family;
    std::optional<SyntheticArcSystem> synthetic;
};
ModelSetup buildModel(const StudyConfig& cfg);

// ------------------------------------------------------------- studies

/// |D^eps_r(lambda, gamma) - D^0_r(lambda)| over the periods, per gamma.
struct PointStudy {
    Complex lambda;
    ScaledValue reference;
    std::vector<Complex> gammas;
    std::vector<double> periods;
    std::vector<std::vector<double>> errors;  // [gamma][period]
    std::vector<ConvergenceRecord> fits;      // per gamma
};
PointStudy pointConvergence(const ModelFamily& family, Complex lambda, const std::vector<Complex>& gammas,
                            const std::vector<double>& periods, const NumericPolicy& policy);

/// Leading Taylor coefficients of D^0_1, D^0_2 at lambda_*: d itself when it
/// is nonzero, else the first non-negligible order (KdV: both vanish to
/// second order at the translation eigenvalue). Coefficients from a Cauchy
/// integral on a circle of the given radius.
struct ArcConstants {
    Complex d1{0.0, 0.0}, d2{0.0, 0.0};
    int order = 0;
};
ArcConstants arcConstants(const HomoclinicEvansContext& ctx, const DispersionArc& arc, double radius = 0.05,
                          double relTol = 1e-6);

struct ArcRow {
    double period = 0.0;
    std::vector<double> ks;                      // gamma = e^{i k X}
    std::vector<std::vector<Complex>> roots;     // per k, inside B(lambda_*, C/X)
    std::vector<std::vector<double>> raw, corrected;
    double sup = 0.0, supCorrected = 0.0;
    int evaluations = 0;
    bool partial = false;
};

struct ArcStudy {
    Complex corrector;  // ln(d2/d1) / mu_c'(lambda_*); divide by X for the shift
    std::vector<ArcRow> rows;
    RateFit raw, corrected;
};

/// Roots of the transitional periodic function near an arc point against the
/// lattice of the arc, raw and with the corrector removed. `member` gives the
/// periodic system for a period.
ArcStudy arcConvergence(const std::function<SpectralSystem(double)>& member, const DispersionArc& arc, Complex d1,
                        Complex d2, const std::vector<double>& periods, int gammaCount, double C,
                        const NumericPolicy& policy, double rootTol = 1e-10);

struct EmbeddedStudy {
    std::vector<double> periods;
    std::vector<double> embedded;  // sup over gamma of |root - lambda_*| for the nearest root
    std::vector<double> lattice;   // sup lattice distance of the remaining roots
    std::vector<int> rootCounts;
    ConvergenceRecord embeddedFit;
    RateFit latticeFit;
};

/// Cor. 5.5 split with m = 1: the nearest root per gamma is the embedded one.
EmbeddedStudy embeddedConvergence(const std::function<SpectralSystem(double)>& member, const DispersionArc& arc,
                                  const std::vector<double>& periods, int gammaCount, double C,
                                  const NumericPolicy& policy, double rootTol = 1e-12);

// -------------------------------------------------------------- commands

enum ExitCode { kOk = 0, kConfigError = 2, kNumericFailure = 3, kBoundViolation = 4 };

/// Each command writes into cfg.outDir and returns an exit code. Reports
/// go to `log` (one line per item).
int cmdProfile(const StudyConfig& cfg, std::ostream& log);
int cmdSpectrum(const StudyConfig& cfg, std::ostream& log);
int cmdConverge(const StudyConfig& cfg, const std::string& mode, std::ostream& log);
int cmdIndex(const StudyConfig& cfg, std::ostream& log);

/// 17 significant digits.
std::string formatNumber(double v);

}  // namespace evans
