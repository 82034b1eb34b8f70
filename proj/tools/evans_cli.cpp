// evans_cli: profile / spectrum / converge / index studies from a JSON config.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "evans/parallel.hpp"
#include "evans/study.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Evans-function studies of periodic waves and their large-period limit"};
    app.require_subcommand(1);

    std::string configPath, outDir, model, mode = "point";
    int threads = -1;
    std::vector<std::string> overrides;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", configPath, "JSON config file (defaults apply to missing keys)");
        sub->add_option("--out", outDir, "output directory");
        sub->add_option("--threads", threads, "worker threads (0: OpenMP default)");
        sub->add_option("--model", model, "pulse | kdv | saint-venant | synthetic | embedded | hill");
        sub->add_option("--override", overrides, "KEY=VALUE, dotted keys, VALUE as JSON");
    };
    auto* profile = app.add_subcommand("profile", "wave profiles and measured decay rates");
    auto* spectrum = app.add_subcommand("spectrum", "roots of E(., gamma) on a box, gamma loops");
    auto* converge = app.add_subcommand("converge", "large-period convergence studies");
    auto* index = app.add_subcommand("index", "stability index per family member");
    for (auto* s : {profile, spectrum, converge, index}) common(s);
    converge->add_option("--mode", mode, "point | arc | embedded")
        ->check(CLI::IsMember({"point", "arc", "embedded"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : evans::kConfigError;
    }

    evans::StudyConfig cfg;
    try {
        nlohmann::json user = nlohmann::json::object();
        if (!configPath.empty()) {
            std::ifstream is(configPath);
            if (!is) throw evans::ConfigError("cannot open config '" + configPath + "'");
            try {
                user = nlohmann::json::parse(is);
            } catch (const nlohmann::json::parse_error& e) {
                throw evans::ConfigError(std::string("config is not valid JSON: ") + e.what());
            }
        }
        if (!model.empty()) user["model"] = model;
        if (!outDir.empty()) user["out"] = outDir;
        if (threads >= 0) user["threads"] = threads;
        for (const auto& o : overrides) evans::applyOverride(user, o);
        cfg = evans::parseConfig(user);
    } catch (const evans::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return evans::kConfigError;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return evans::kConfigError;
    }
    if (cfg.threads > 0) evans::setThreadCount(cfg.threads);

    try {
        if (profile->parsed()) return evans::cmdProfile(cfg, std::cout);
        if (spectrum->parsed()) return evans::cmdSpectrum(cfg, std::cout);
        if (converge->parsed()) return evans::cmdConverge(cfg, mode, std::cout);
        if (index->parsed()) return evans::cmdIndex(cfg, std::cout);
    } catch (const evans::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return evans::kConfigError;
    } catch (const evans::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return evans::kNumericFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return evans::kNumericFailure;
    }
    return evans::kConfigError;
}
