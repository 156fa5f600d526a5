// Command-line front end: estimation, sensitivity batteries, confidence sets,
// selection, two-stage and non-validity pipelines, and the simulation profiles.
#include <CLI11.hpp>

#include "stiv/cli.hpp"

namespace {

stiv::Json load_config(const std::string& path)
{
    std::ifstream is(path);
    if (!is) stiv::fail(stiv::ErrorCode::IoError, "cannot open config " + path);
    stiv::Json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        stiv::fail(stiv::ErrorCode::ParseError, std::string("config: ") + e.what());
    }
    return j;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"self-tuning instrumental-variables estimation toolkit"};
    app.require_subcommand(1);

    std::string config_path, data, out_dir, profile, cone_set, normalization, sigma_weight;
    std::uint64_t seed = 0;
    bool have_seed = false;
    int threads = -1, scenario = 0, s = 0;
    long reps = -1, k_end = -1;
    double c = -1.0, alpha = -1.0, r = -1.0;
    bool dump_program = false;

    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON configuration file");
        cmd->add_option("--data", data, "input CSV (header row)");
        cmd->add_option("--out", out_dir, "output directory (or STIV_OUTPUT_DIR)");
        cmd->add_option("--seed", seed, "random seed")->each([&](const std::string&) { have_seed = true; });
        cmd->add_option("--threads", threads, "worker threads (0 = hardware)");
        cmd->add_option("--c", c, "cone constant in (0,1)");
        cmd->add_option("--s", s, "sparsity certificate");
        cmd->add_option("--r", r, "override the quantile r");
        cmd->add_option("--scenario", scenario, "quantile scenario 1..5");
        cmd->add_option("--alpha", alpha, "confidence level complement");
        cmd->add_option("--cone-set", cone_set, "constant | all | comma-separated indices");
        cmd->add_option("--normalization", normalization, "rms | maxabs");
        cmd->add_option("--sigma-weight", sigma_weight, "number or 'auto' (sqrt(n)/0.3)");
        cmd->add_flag("--dump-program", dump_program, "write the standard-form program dump");
    };

    for (const auto& name : stiv::cli::kCommands) {
        CLI::App* cmd = app.add_subcommand(name);
        add_common(cmd);
        if (name == "simulate") {
            cmd->add_option("--profile", profile, "table1 | table3 | table5 | table7");
            cmd->add_option("--reps", reps, "replication count");
        }
        if (name == "twostage") cmd->add_option("--kend", k_end, "endogenous regressor index");
    }

    CLI11_PARSE(app, argc, argv);

    try {
        stiv::Json cfg = config_path.empty() ? stiv::Json::object() : load_config(config_path);
        cfg["command"] = app.get_subcommands().front()->get_name();
        if (!data.empty()) cfg["data"] = data;
        if (!out_dir.empty()) cfg["out_dir"] = out_dir;
        if (have_seed) cfg["seed"] = seed;
        if (threads >= 0) cfg["threads"] = threads;
        if (c >= 0.0) cfg["c"] = c;
        if (s > 0) cfg["s"] = s;
        if (r >= 0.0) cfg["r"] = r;
        if (alpha >= 0.0 || scenario > 0) {
            stiv::Json sc = cfg.value("scenario", stiv::Json::object());
            if (scenario > 0) sc["id"] = scenario;
            if (alpha >= 0.0) sc["alpha"] = alpha;
            cfg["scenario"] = sc;
        }
        if (!cone_set.empty()) cfg["cone_set"] = cone_set;
        if (!normalization.empty()) cfg["normalization"] = normalization;
        if (!sigma_weight.empty()) {
            if (sigma_weight == "auto")
                cfg["sigma_weight"] = "auto";
            else
                cfg["sigma_weight"] = std::stod(sigma_weight);
        }
        if (dump_program) cfg["dump_program"] = true;
        if (!profile.empty()) cfg["profile"] = profile;
        if (reps >= 0) cfg["reps"] = reps;
        if (k_end >= 0) cfg["k_end"] = k_end;
        return stiv::cli::run(cfg);
    } catch (const stiv::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == stiv::ErrorCode::SolverFailure ? 2 : 1;
    }
}
