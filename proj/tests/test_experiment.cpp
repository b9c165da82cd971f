#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "thermalize/experiment.hpp"

using namespace thermalize;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("thermalize_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json base_dos_config() {
  return nlohmann::json::parse(R"({
    "kind": "dos",
    "seed": 1,
    "params": {
      "matter": {"einstein": {"n_modes": 6, "omega": 1.0}},
      "e_max": 20.0,
      "bin": 1.0
    }
  })");
}

nlohmann::json base_gas_config() {
  return nlohmann::json::parse(R"({
    "kind": "gas",
    "seed": 9,
    "params": {
      "n_particles": 10,
      "mass": 1.0,
      "temperature": 0.12,
      "kappa": 400.0,
      "contact_radius": 0.05,
      "box_length": 50.0,
      "t_end": 900.0,
      "sample_stride": 50
    }
  })");
}

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::string& args) {
  const char* bin = std::getenv("THERMALIZE_BIN");
  REQUIRE(bin != nullptr);
  const fs::path tmp = fs::temp_directory_path();
  const fs::path out_file = tmp / "thermalize_cli_out.txt";
  const fs::path err_file = tmp / "thermalize_cli_err.txt";
  const std::string cmd = std::string(bin) + " " + args + " > " + out_file.string() +
                          " 2> " + err_file.string();
  const int raw = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  return r;
}

}  // namespace

TEST_CASE("run_experiment writes the documented artifacts", "[experiment]") {
  const fs::path dir = fresh_dir("dos");
  RunOptions opts;
  opts.out_dir = dir;
  const RunResult r = run_experiment(base_dos_config(), opts);

  CHECK(fs::exists(dir / "dos.csv"));
  CHECK(fs::exists(dir / "dos.svg"));
  REQUIRE(fs::exists(dir / "manifest.json"));
  CHECK(r.manifest_path == dir / "manifest.json");

  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest["kind"] == "dos");
  CHECK(manifest["seed"] == 1);
  CHECK(manifest["version"] == std::string(kVersion));
  CHECK(manifest.contains("config_hash"));
  CHECK(manifest.contains("wall_time_s"));
  CHECK(manifest["config"]["params"]["bin"] == 1.0);

  const std::string csv = slurp(dir / "dos.csv");
  CHECK(csv.rfind("E_bin_left,count\n", 0) == 0);
  CHECK(csv.find("\n0,1\n") != std::string::npos);
}

TEST_CASE("identical config and seed give byte-identical data outputs", "[experiment]") {
  for (const nlohmann::json& config : {base_dos_config(), base_gas_config()}) {
    const fs::path d1 = fresh_dir("rerun_a");
    const fs::path d2 = fresh_dir("rerun_b");
    RunOptions o1, o2;
    o1.out_dir = d1;
    o2.out_dir = d2;
    const RunResult r1 = run_experiment(config, o1);
    const RunResult r2 = run_experiment(config, o2);
    for (const auto& name : r1.manifest["outputs"]) {
      const std::string n = name.get<std::string>();
      INFO("artifact " << n);
      REQUIRE(slurp(d1 / n) == slurp(d2 / n));
    }
  }
}

TEST_CASE("seed override changes stochastic outputs", "[experiment]") {
  const fs::path d1 = fresh_dir("seed_a");
  const fs::path d2 = fresh_dir("seed_b");
  RunOptions o1, o2;
  o1.out_dir = d1;
  o2.out_dir = d2;
  o2.seed_override = 777;
  run_experiment(base_gas_config(), o1);
  run_experiment(base_gas_config(), o2);
  CHECK(slurp(d1 / "gas_trajectory.csv") != slurp(d2 / "gas_trajectory.csv"));
}

TEST_CASE("config validation rejects malformed blocks up front", "[experiment]") {
  SECTION("unknown kind") {
    nlohmann::json c = base_dos_config();
    c["kind"] = "unknown";
    CHECK_THROWS_AS(run_experiment(c), config_error);
  }
  SECTION("negative mass in a chain block") {
    nlohmann::json c = nlohmann::json::parse(R"({
      "kind": "modes",
      "params": {"chain": {"n_atoms": 4, "mass": -1.0, "stiffness": 1.0}}
    })");
    try {
      run_experiment(c);
      FAIL("expected config_error");
    } catch (const config_error& e) {
      CHECK(std::string(e.what()).find("mass") != std::string::npos);
    }
  }
  SECTION("missing required field names the path") {
    nlohmann::json c = base_dos_config();
    c["params"].erase("bin");
    try {
      run_experiment(c);
      FAIL("expected config_error");
    } catch (const config_error& e) {
      CHECK(e.field() == "params.bin");
    }
  }
  SECTION("validate-only stops before any output") {
    const fs::path dir = fresh_dir("validate");
    RunOptions opts;
    opts.out_dir = dir;
    opts.validate_only = true;
    const RunResult r = run_experiment(base_dos_config(), opts);
    CHECK(r.validated_only);
    CHECK(fs::is_empty(dir));
  }
}

TEST_CASE("experiment kinds emit their documented file sets", "[experiment]") {
  SECTION("modes") {
    const fs::path dir = fresh_dir("modes");
    RunOptions opts;
    opts.out_dir = dir;
    const auto config = nlohmann::json::parse(R"({
      "kind": "modes",
      "params": {"merge": {"a": {"n_atoms": 3, "mass": 1.0, "stiffness": 1.0},
                            "b": {"n_atoms": 3, "mass": 1.0, "stiffness": 1.0},
                            "joint_stiffness": 1.0}}
    })");
    run_experiment(config, opts);
    CHECK(fs::exists(dir / "modes.csv"));
    CHECK(fs::exists(dir / "lattice.json"));
    const std::string csv = slurp(dir / "modes.csv");
    CHECK(csv.rfind("mode,omega\n", 0) == 0);
  }
  SECTION("collide") {
    const fs::path dir = fresh_dir("collide");
    RunOptions opts;
    opts.out_dir = dir;
    const auto config = nlohmann::json::parse(R"({
      "kind": "collide",
      "params": {
        "block_a": {"n_atoms": 4, "mass": 1.0, "stiffness": 1.0},
        "block_b": {"n_atoms": 4, "mass": 1.0, "stiffness": 1.0},
        "joint_stiffness": 1.0,
        "velocity_a": 0.3, "velocity_b": -0.3,
        "zero_mode_width": 1.0,
        "t_end": 50.0, "samples": 40
      }
    })");
    const RunResult r = run_experiment(config, opts);
    CHECK(slurp(dir / "widths.csv").rfind("t,atom_index,width\n", 0) == 0);
    CHECK(slurp(dir / "energies.csv").rfind("t,mode_index,energy\n", 0) == 0);
    const double injected = r.manifest["summary"]["internal_energy"].get<double>();
    const double expected = r.manifest["summary"]["expected_internal_energy"].get<double>();
    CHECK(injected == Catch::Approx(expected).epsilon(1e-9));
  }
  SECTION("recurrence") {
    const fs::path dir = fresh_dir("recurrence");
    RunOptions opts;
    opts.out_dir = dir;
    const auto config = nlohmann::json::parse(R"({
      "kind": "recurrence",
      "params": {
        "chain": {"n_atoms": 2, "mass": 1.0, "stiffness": 1.0},
        "zero_mode_width": 1.0,
        "t_max": 30.0
      }
    })");
    run_experiment(config, opts);
    const auto rec = nlohmann::json::parse(slurp(dir / "recurrence.json"));
    CHECK(rec.contains("t_vib"));
    CHECK(rec.contains("t_loc"));
    CHECK(rec.contains("t_class"));
    CHECK(rec["epsilon"] == 0.05);
  }
  SECTION("planck") {
    const fs::path dir = fresh_dir("planck");
    RunOptions opts;
    opts.out_dir = dir;
    const auto config = nlohmann::json::parse(R"({
      "kind": "planck",
      "params": {
        "matter": {"einstein": {"n_modes": 12, "omega": 1.0}},
        "e_total": 36.0,
        "bin": 1.0
      }
    })");
    run_experiment(config, opts);
    const std::string csv = slurp(dir / "planck.csv");
    CHECK(csv.rfind("mode,omega,n_microcanonical,n_bose_einstein,rel_diff\n", 0) == 0);
  }
  SECTION("tower") {
    const fs::path dir = fresh_dir("tower");
    RunOptions opts;
    opts.out_dir = dir;
    const auto config = nlohmann::json::parse(R"({
      "kind": "tower",
      "seed": 5,
      "params": {
        "matter": {"einstein": {"n_modes": 10, "omega": 1.0}},
        "photon_modes": [1.0],
        "bin": 1.0,
        "e_total": 40.0,
        "steps": 4000
      }
    })");
    const RunResult r = run_experiment(config, opts);
    CHECK(slurp(dir / "tower_trajectory.csv").rfind("step,mode,occupancy\n", 0) == 0);
    CHECK(slurp(dir / "tower_comparison.csv")
              .rfind("mode,omega,n_stationary,n_planck,rel_diff\n", 0) == 0);
    CHECK(r.manifest["summary"].contains("truncation"));
    CHECK(r.manifest["seed"] == 5);
  }
  SECTION("gas summary carries the pinned keys") {
    const fs::path dir = fresh_dir("gas");
    RunOptions opts;
    opts.out_dir = dir;
    run_experiment(base_gas_config(), opts);
    const auto summary = nlohmann::json::parse(slurp(dir / "gas_summary.json"));
    CHECK(summary.contains("tau_r"));
    CHECK(summary.contains("tau_coll"));
    CHECK(summary.contains("A_fit"));
    CHECK(summary.contains("gamma_fit"));
    CHECK(summary.contains("ks_stat"));
    CHECK(slurp(dir / "gas_trajectory.csv").rfind("t,particle,x,v,ke,pe\n", 0) == 0);
    CHECK(slurp(dir / "gas_histograms.csv").rfind("E,h_ke,h_pe\n", 0) == 0);
  }
}

TEST_CASE("doubles render in shortest round-trip form", "[experiment]") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(-2.5e-7) == "-2.5e-07");
  CHECK(format_double(1.0 / 3.0) == "0.3333333333333333");
}

TEST_CASE("CLI runs, validates, and fails with machine-parsable errors", "[experiment]") {
  const fs::path dir = fresh_dir("cli");
  const fs::path cfg = dir / "dos.json";
  {
    std::ofstream out(cfg);
    out << base_dos_config().dump(2);
  }

  SECTION("successful run prints only the manifest path") {
    const CliResult r =
        run_cli("dos --config " + cfg.string() + " --out " + (dir / "run").string());
    CAPTURE(r.err);
    REQUIRE(r.exit_code == 0);
    CHECK(r.out == (dir / "run" / "manifest.json").string() + "\n");
    CHECK(fs::exists(dir / "run" / "dos.csv"));
  }
  SECTION("validate-only runs clean and writes nothing") {
    const CliResult r = run_cli("dos --config " + cfg.string() + " --out " +
                                (dir / "vo").string() + " --validate-only");
    REQUIRE(r.exit_code == 0);
    CHECK_FALSE(fs::exists(dir / "vo" / "dos.csv"));
  }
  SECTION("malformed config exits 2 with one error line and no outputs") {
    const fs::path bad = dir / "bad.json";
    {
      auto c = base_dos_config();
      c["params"]["matter"]["einstein"]["n_modes"] = -4;
      std::ofstream out(bad);
      out << c.dump(2);
    }
    const CliResult r =
        run_cli("dos --config " + bad.string() + " --out " + (dir / "badrun").string());
    REQUIRE(r.exit_code == 2);
    CHECK(r.err.rfind("error kind=validation", 0) == 0);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
    CHECK_FALSE(fs::exists(dir / "badrun" / "dos.csv"));
  }
  SECTION("kind mismatch between subcommand and config exits 2") {
    const CliResult r = run_cli("gas --config " + cfg.string());
    REQUIRE(r.exit_code == 2);
    CHECK(r.err.find("kind") != std::string::npos);
  }
}
