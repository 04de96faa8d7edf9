#include "lcinf/app.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

struct Flags {
    double alpha = 0.05;
    int k_max = 0;
    int B = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> methods;
    std::string data, locations, dissimilarity, params, out;
    int threads = 1;
    std::size_t orbit_draws = 0;
    std::uint64_t randomized_crs = 0;
    int restarts = 1;
    std::string design, coords;
    int units = 205, reps = 200;
    double radius = 0.0;
    std::string config;
};

struct Options {
    std::map<std::string, CLI::Option*> by_name;
    bool given(const std::string& name) const {
        auto it = by_name.find(name);
        return it != by_name.end() && it->second->count() > 0;
    }
};

Options add_common(CLI::App* cmd, Flags& f, lcinf::Command command) {
    Options o;
    auto& m = o.by_name;
    m["config"] = cmd->add_option("--config", f.config, "JSON file with any of the options below; flags override it");
    m["seed"] = cmd->add_option("--seed", f.seed, "Master seed (required)");
    m["alpha"] = cmd->add_option("--alpha", f.alpha, "Nominal level");
    m["kmax"] = cmd->add_option("--kmax", f.k_max, "Largest candidate cluster count");
    m["B"] = cmd->add_option("--B", f.B, "Simulation draws per theta");
    m["method"] = cmd->add_option("--method", f.methods, "unit, cce, im, crs or all (repeatable)");
    m["threads"] = cmd->add_option("--threads", f.threads, "Worker threads");
    m["out"] = cmd->add_option("--out", f.out, "Output directory");
    if (command == lcinf::Command::simulate) {
        m["design"] = cmd->add_option("--design", f.design, "ols-baseline, ols-sar, iv-baseline or iv-sar");
        m["units"] = cmd->add_option("--units", f.units, "205 or 820");
        m["reps"] = cmd->add_option("--reps", f.reps, "Monte Carlo replications");
        m["coords"] = cmd->add_option("--coords", f.coords, "unit_id,lat,lon coordinates of the base units");
        return o;
    }
    m["data"] = cmd->add_option("--data", f.data, "Panel CSV");
    m["locations"] = cmd->add_option("--locations", f.locations, "Locations CSV");
    m["dissimilarity"] = cmd->add_option("--dissimilarity", f.dissimilarity, "Headerless n x n dissimilarity CSV");
    m["params"] = cmd->add_option("--params", f.params, "Covariance parameters JSON (skips QMLE)");
    m["restarts"] = cmd->add_option("--restarts", f.restarts, "k-medoids restarts");
    m["orbit-draws"] = cmd->add_option("--orbit-draws", f.orbit_draws, "Sampled sign patterns for CRS when 2^k is large");
    m["randomized-crs"] = cmd->add_option("--randomized-crs", f.randomized_crs, "Seed for the randomized CRS tie rule");
    if (command == lcinf::Command::diagnose) m["radius"] = cmd->add_option("--radius", f.radius, "Boundary radius");
    return o;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw lcinf::Error(lcinf::ErrorKind::invalid_input, "cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

lcinf::RunConfig build_config(lcinf::Command command, const Flags& f, const Options& o) {
    lcinf::RunConfig c;
    c.command = command;
    if (o.given("config")) lcinf::apply_config_json(c, read_file(f.config));
    c.command = command;
    if (o.given("seed")) c.seed = f.seed;
    if (o.given("alpha")) c.alpha = f.alpha;
    if (o.given("kmax")) c.k_max = f.k_max;
    if (o.given("B")) c.B = f.B;
    if (o.given("method")) {
        c.methods.clear();
        for (const auto& s : f.methods) {
            if (s == "all") c.methods = {lcinf::Method::unit, lcinf::Method::cce, lcinf::Method::im, lcinf::Method::crs};
            else c.methods.push_back(lcinf::method_from_string(s));
        }
    }
    if (o.given("threads")) c.threads = f.threads;
    if (o.given("out")) c.out_dir = f.out;
    if (o.given("design")) c.design = f.design;
    if (o.given("units")) c.units = f.units;
    if (o.given("reps")) c.reps = f.reps;
    if (o.given("coords")) c.coords_path = f.coords;
    if (o.given("data")) c.data_path = f.data;
    if (o.given("locations")) c.locations_path = f.locations;
    if (o.given("dissimilarity")) c.dissimilarity_path = f.dissimilarity;
    if (o.given("params")) c.params_path = f.params;
    if (o.given("restarts")) c.restarts = f.restarts;
    if (o.given("orbit-draws")) c.orbit_draws = f.orbit_draws;
    if (o.given("randomized-crs")) c.randomized_crs = f.randomized_crs;
    if (o.given("radius")) c.radius = f.radius;
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Inference with a small number of large clusters"};
    app.set_version_flag("--version", lcinf::software_version());
    app.require_subcommand(1);
    bool verbose = false, quiet = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");
    app.add_flag("-q,--quiet", quiet, "Warnings and errors only");

    const std::vector<std::pair<lcinf::Command, std::string>> commands{
        {lcinf::Command::analyze, "Calibrate every method and report estimates, intervals and Moran tests"},
        {lcinf::Command::calibrate, "Calibrate k and the level only"},
        {lcinf::Command::simulate, "Run the Monte Carlo study on a named design"},
        {lcinf::Command::diagnose, "Dissimilarity checks, partition quality, Moran tests and covariance fit"}};
    std::vector<Flags> flags(commands.size());
    std::vector<Options> options(commands.size());
    std::vector<CLI::App*> subs;
    for (std::size_t i = 0; i < commands.size(); ++i) {
        subs.push_back(app.add_subcommand(lcinf::to_string(commands[i].first), commands[i].second));
        options[i] = add_common(subs.back(), flags[i], commands[i].first);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);
    spdlog::set_pattern("[%l] %v");

    for (std::size_t i = 0; i < commands.size(); ++i) {
        if (!subs[i]->parsed()) continue;
        try {
            const lcinf::RunConfig config = build_config(commands[i].first, flags[i], options[i]);
            for (const auto& path : lcinf::run(config)) std::cout << path << "\n";
            return 0;
        } catch (const lcinf::Error& e) {
            spdlog::error("{}", e.what());
            return lcinf::exit_code(e.kind());
        } catch (const std::exception& e) {
            spdlog::error("{}", e.what());
            return 3;
        }
    }
    return 2;
}
