#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "stiv/cli.hpp"
#include "stiv/rng.hpp"

using namespace stiv;

namespace {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name)
    {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

/// Small IV dataset written as CSV: outcome y, regressors x1 (endogenous) and
/// x2, instruments q1 q2 plus a ones column, and two maybe-invalid columns.
std::string write_fixture(const TempDir& dir, Eigen::Index n = 120, double invalid = 0.0)
{
    Rng rng(2027);
    CsvTable t;
    t.header = {"y", "x1", "x2", "one", "q1", "q2", "w1", "w2"};
    t.values.resize(n, 8);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double q1 = rng.normal(), q2 = rng.normal(), u = 0.25 * rng.normal();
        const double x1 = 0.9 * q1 + 0.5 * u + 0.2 * rng.normal();
        const double x2 = q2;
        t.values(i, 0) = 1.0 * x1 - 0.5 * x2 + u;
        t.values(i, 1) = x1;
        t.values(i, 2) = x2;
        t.values(i, 3) = 1.0;
        t.values(i, 4) = q1;
        t.values(i, 5) = q2;
        t.values(i, 6) = rng.normal();
        t.values(i, 7) = rng.normal() + invalid * u / 0.25;
    }
    const std::string path = dir.file("data.csv");
    write_csv_file(path, t);
    return path;
}

Json base_config(const std::string& data, const std::string& out)
{
    return Json{{"command", "fit"},
                {"data", data},
                {"out_dir", out},
                {"roles", Json{{"outcome", "y"},
                               {"regressors", Json::array({"x1", "x2"})},
                               {"instruments", Json::array({"one", "q1", "q2"})},
                               {"constant", "one"},
                               {"exogenous", Json::array({"x2"})}}},
                {"sigma_weight", "auto"},
                {"s", 2}};
}

} // namespace

TEST_CASE("fit command fills defaults and writes the echo")
{
    TempDir dir("stiv_cli_fit");
    Json cfg = base_config(write_fixture(dir), dir.file("out"));
    CHECK(cli::run(cfg) == 0);
    std::ifstream is(dir.file("out") + "/fit.json");
    REQUIRE(is.good());
    Json report;
    is >> report;
    // defaults recorded: c = 0.1, scenario 4, alpha 0.05 unless overridden
    CHECK(report["config"]["data"] == cfg["data"]);
    CHECK(report["tuning"]["c"] == doctest::Approx(0.1));
    CHECK(report.contains("r"));
    CHECK(report["beta"].size() == 2);
}

TEST_CASE("role conflicts and bad commands are user errors")
{
    TempDir dir("stiv_cli_err");
    const std::string data = write_fixture(dir);
    Json cfg = base_config(data, dir.file("out"));
    cfg["roles"]["regressors"] = Json::array({"x1", "q1"}); // q1 doubles as instrument
    CHECK(cli::run(cfg) == 1);

    Json bad = base_config(data, dir.file("out"));
    bad["command"] = "frobnicate";
    CHECK(cli::run(bad) == 1);

    Json missing = base_config(dir.file("absent.csv"), dir.file("out"));
    CHECK(cli::run(missing) == 1);
}

TEST_CASE("ci succeeds when intervals are infinite and flags them")
{
    TempDir dir("stiv_cli_ci");
    Json cfg = base_config(write_fixture(dir, 40), dir.file("out"));
    cfg["command"] = "ci";
    cfg["r"] = 0.9; // far beyond any kappa at n = 40
    CHECK(cli::run(cfg) == 0);
    std::ifstream is(dir.file("out") + "/ci.json");
    Json report;
    is >> report;
    CHECK(report["reports"][0]["any_infinite"] == true);
}

TEST_CASE("select, twostage and nv pipelines run end to end")
{
    TempDir dir("stiv_cli_pipe");
    const std::string data = write_fixture(dir, 400, 2.0);
    Json cfg = base_config(data, dir.file("out"));
    cfg["s"] = 2;

    cfg["command"] = "select";
    CHECK(cli::run(cfg) == 0);
    CHECK(std::filesystem::exists(dir.file("out") + "/select.json"));

    cfg["command"] = "twostage";
    cfg["k_end"] = 0;
    cfg["r"] = 0.06;
    CHECK(cli::run(cfg) == 0);
    CHECK(std::filesystem::exists(dir.file("out") + "/twostage.json"));
    cfg.erase("r");

    cfg["command"] = "nv";
    cfg["roles"]["zbar"] = Json::array({"w1", "w2"});
    cfg["cone_set"] = "all"; // tighter scaled rows keep the pilot l1 bound finite
    cfg["s"] = 1;
    REQUIRE(cli::run(cfg) == 0);
    std::ifstream is(dir.file("out") + "/nv.json");
    Json report;
    is >> report;
    // the planted w2 should dominate the indicator vector
    const double t1 = report["nv"]["theta"][0].is_number() ? std::abs(report["nv"]["theta"][0].get<double>()) : 0.0;
    const double t2 = report["nv"]["theta"][1].is_number() ? std::abs(report["nv"]["theta"][1].get<double>()) : 0.0;
    CHECK(t2 > t1);
}

TEST_CASE("simulate profile writes table files")
{
    TempDir dir("stiv_cli_sim");
    Json cfg{{"command", "simulate"}, {"profile", "table3"}, {"reps", 3}, {"seed", 21},
             {"out_dir", dir.file("out")}, {"threads", 2}};
    CHECK(cli::run(cfg) == 0);
    CHECK(std::filesystem::exists(dir.file("out") + "/table3.txt"));
    CHECK(std::filesystem::exists(dir.file("out") + "/table3.json"));

    Json none{{"command", "simulate"}, {"out_dir", dir.file("out")}};
    CHECK(cli::run(none) == 1); // empty profile is a usage error
}

TEST_CASE("sens command emits the battery report")
{
    TempDir dir("stiv_cli_sens");
    Json cfg = base_config(write_fixture(dir, 80), dir.file("out"));
    cfg["command"] = "sens";
    cfg["s"] = 1;
    CHECK(cli::run(cfg) == 0);
    std::ifstream is(dir.file("out") + "/sens.json");
    Json report;
    is >> report;
    CHECK(report["kappa_coord"].size() == 2);
    CHECK(report["kappa1"].is_number());
}

TEST_CASE("scenario-1 quantile is usable through the config")
{
    TempDir dir("stiv_cli_mc");
    Json cfg = base_config(write_fixture(dir, 60), dir.file("out"));
    cfg["scenario"] = Json{{"id", 1}, {"alpha", 0.05}, {"draws", 2000}, {"seed", 5}};
    CHECK(cli::run(cfg) == 0);
}
