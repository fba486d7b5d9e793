#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "sbs_cli/sweep.hpp"

namespace {

struct Options {
  std::string config;
  std::string out = ".";
  int workers = 1;
  std::optional<std::uint64_t> seed;
};

bool setup_logging() {
  auto logger = spdlog::stderr_color_mt("sbs");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("%^[%l]%$ %v");
  const char* env = std::getenv("SBS_LOG_LEVEL");
  const std::string level = env ? env : "info";
  if (level == "error") spdlog::set_level(spdlog::level::err);
  else if (level == "warn") spdlog::set_level(spdlog::level::warn);
  else if (level == "info") spdlog::set_level(spdlog::level::info);
  else if (level == "debug") spdlog::set_level(spdlog::level::debug);
  else {
    spdlog::error("SBS_LOG_LEVEL: expected error, warn, info or debug, got '{}'", level);
    return false;
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace sbs::cli;
  if (!setup_logging()) return kValidation;

  CLI::App app{"Spectrum broadcast structure laboratory"};
  app.require_subcommand(1);
  Options opt;
  for (const char* name : {"decoherence", "overlap", "plateau", "bounds", "pfcast", "sweep"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", opt.config, "JSON configuration file")->required();
    sub->add_option("--out", opt.out, "Output directory")->capture_default_str();
    sub->add_option("--workers", opt.workers, "Concurrent sweep cells")->check(CLI::PositiveNumber);
    sub->add_option("--seed", opt.seed, "Overrides the configuration seed");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    const RunConfig cfg = load_config(opt.config, opt.seed);
    const std::filesystem::path out(opt.out);
    if (command == "sweep") {
      const int code = run_sweep(cfg, out, {opt.workers, std::nullopt});
      spdlog::info("sweep: wrote {}", (out / "manifest.json").string());
      return code;
    }
    const Result r = run_command(command, cfg);
    write_result(out, command, r);
    spdlog::info("{}: wrote {} rows to {}", command, r.table.rows.size(), (out / (command + ".csv")).string());
    return r.exit_code;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return exit_code_of(e);
  }
}
