// thermalize: experiment runner for the harmonic-chain thermalization lab.
//
// Usage:
//   thermalize <kind> --config <path> [--out <dir>] [--seed <u64>] [--validate-only]
//
// Kinds: modes, collide, recurrence, dos, planck, tower, gas.
// On success the only line on standard output is the manifest path.
// Validation failures exit with code 2 and one machine-parsable line on
// standard error; runtime failures exit with code 1.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "thermalize/experiment.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  bool validate_only = false;
};

int run_kind(const std::string& kind, const CommonArgs& args) {
  nlohmann::json config;
  {
    std::ifstream in(args.config_path);
    if (!in) {
      std::cerr << "error kind=validation field=config message=\"cannot open "
                << args.config_path << "\"\n";
      return 2;
    }
    try {
      in >> config;
    } catch (const nlohmann::json::exception& e) {
      std::cerr << "error kind=validation field=config message=\"invalid JSON: " << e.what()
                << "\"\n";
      return 2;
    }
  }
  if (!config.is_object()) {
    std::cerr << "error kind=validation field=config message=\"config must be an object\"\n";
    return 2;
  }
  if (config.contains("kind")) {
    if (!config.at("kind").is_string() || config.at("kind").get<std::string>() != kind) {
      std::cerr << "error kind=validation field=kind message=\"config kind does not match "
                   "subcommand '"
                << kind << "'\"\n";
      return 2;
    }
  } else {
    config["kind"] = kind;
  }

  thermalize::RunOptions opts;
  opts.out_dir = args.out_dir;
  opts.seed_override = args.seed;
  opts.validate_only = args.validate_only;

  try {
    const thermalize::RunResult result = thermalize::run_experiment(config, opts);
    if (!result.validated_only) std::cout << result.manifest_path.string() << "\n";
    return 0;
  } catch (const thermalize::config_error& e) {
    std::cerr << "error kind=validation field=" << (e.field().empty() ? "-" : e.field())
              << " message=\"" << e.what() << "\"\n";
    return 2;
  } catch (const thermalize::error& e) {
    std::cerr << "error kind=runtime message=\"" << e.what() << "\"\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error kind=internal message=\"" << e.what() << "\"\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical laboratory for harmonic-chain thermalization"};
  app.require_subcommand(1);

  const char* kinds[] = {"modes", "collide", "recurrence", "dos", "planck", "tower", "gas"};
  const char* blurbs[] = {
      "normal-mode spectrum of a chain",
      "fuse two blocks and track widths and mode energies",
      "vibrational, localization, and classicality time scales",
      "exact level counting on an energy grid",
      "microcanonical occupancy vs the Bose-Einstein curve",
      "detailed-balance photon dynamics over a Fock tower",
      "packet-gas molecular dynamics and energy partition"};

  CommonArgs args[std::size(kinds)];
  for (std::size_t k = 0; k < std::size(kinds); ++k) {
    CLI::App* sub = app.add_subcommand(kinds[k], blurbs[k]);
    sub->add_option("--config", args[k].config_path, "JSON experiment configuration")
        ->required();
    sub->add_option("--out", args[k].out_dir, "output directory (default: current)");
    sub->add_option("--seed", args[k].seed, "seed override");
    sub->add_flag("--validate-only", args[k].validate_only,
                  "validate the configuration and exit");
  }

  CLI11_PARSE(app, argc, argv);

  for (std::size_t k = 0; k < std::size(kinds); ++k)
    if (app.got_subcommand(kinds[k])) return run_kind(kinds[k], args[k]);
  return 2;
}
