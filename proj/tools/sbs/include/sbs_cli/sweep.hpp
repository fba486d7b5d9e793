#pragma once

// Cartesian parameter sweeps over a base configuration.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <optional>
#include <random>
#include <thread>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "sbs_cli/commands.hpp"

namespace sbs::cli {

struct SweepOptions {
  int workers = 1;
  /// Runs the cells in a seeded random order; outputs do not change.
  std::optional<std::uint64_t> shuffle_seed;
};

struct SweepCell {
  std::size_t index = 0;
  json overrides = json::object();
  json config;
  std::string status = "pending";
  int exit_code = kOk;
  std::string error;
  std::vector<std::string> files;
};

/// Cells in row-major order over the axes (axes sorted by path).
inline std::vector<SweepCell> sweep_cells(const RunConfig& c) {
  if (!c.sweep) throw ConfigError("sweep: missing required block");
  const auto& axes = c.sweep->axes;
  json base = c.raw;
  base.erase("sweep");
  std::size_t total = 1;
  for (const auto& a : axes) total *= a.values.size();
  std::vector<SweepCell> cells(total);
  for (std::size_t i = 0; i < total; ++i) {
    auto& cell = cells[i];
    cell.index = i;
    cell.config = base;
    std::size_t rem = i;
    for (std::size_t a = axes.size(); a-- > 0;) {
      const auto& axis = axes[a];
      const json& v = axis.values[rem % axis.values.size()];
      rem /= axis.values.size();
      cell.overrides[axis.path] = v;
      std::string pointer = "/" + axis.path;
      std::replace(pointer.begin(), pointer.end(), '.', '/');
      try {
        cell.config[json::json_pointer(pointer)] = v;
      } catch (const json::exception& e) {
        throw ConfigError("sweep.grid." + axis.path + ": " + e.what());
      }
    }
  }
  return cells;
}

inline std::string cell_stem(std::size_t index) { return fmt::format("cell_{:04d}", index); }

inline void write_result(const std::filesystem::path& dir, const std::string& stem, const Result& r,
                         std::vector<std::string>* files = nullptr) {
  write_atomic(dir / (stem + ".csv"), r.table.csv());
  if (files) files->push_back(stem + ".csv");
  if (r.summary) {
    write_atomic(dir / (stem + ".json"), r.summary->dump(2) + "\n");
    if (files) files->push_back(stem + ".json");
  }
}

/// Runs every cell, writes one result per cell plus manifest.json, and
/// returns the largest cell exit code. Failing cells are recorded, not fatal.
inline int run_sweep(const RunConfig& c, const std::filesystem::path& out, const SweepOptions& opt = {}) {
  if (!c.sweep) throw ConfigError("sweep: missing required block");
  if (!is_command(c.sweep->command)) throw ConfigError("sweep.command: unknown subcommand '" + c.sweep->command + "'");
  if (opt.workers < 1) throw ConfigError("--workers: must be >= 1");
  auto cells = sweep_cells(c);
  std::vector<std::size_t> order(cells.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (opt.shuffle_seed) {
    std::mt19937_64 g(*opt.shuffle_seed);
    std::shuffle(order.begin(), order.end(), g);
  }
  std::filesystem::create_directories(out);

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next.fetch_add(1); k < order.size(); k = next.fetch_add(1)) {
      auto& cell = cells[order[k]];
      const std::string stem = cell_stem(cell.index);
      try {
        const RunConfig cfg = parse_config(cell.config, c.base_dir);
        const Result r = run_command(c.sweep->command, cfg);
        write_result(out, stem, r, &cell.files);
        cell.exit_code = r.exit_code;
        cell.status = r.exit_code == kOk ? "ok" : "violation";
      } catch (const std::exception& e) {
        cell.status = "failed";
        cell.exit_code = exit_code_of(e);
        cell.error = e.what();
        spdlog::error("sweep cell {}: {}", cell.index, e.what());
      }
      spdlog::debug("sweep cell {} {}", cell.index, cell.status);
    }
  };
  const int n = std::min<int>(opt.workers, static_cast<int>(std::max<std::size_t>(cells.size(), 1)));
  std::vector<std::thread> pool;
  for (int i = 1; i < n; ++i) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  json manifest{{"command", c.sweep->command}, {"cells", json::array()}};
  json axes = json::object();
  for (const auto& a : c.sweep->axes) axes[a.path] = a.values;
  manifest["grid"] = axes;
  int code = kOk;
  for (const auto& cell : cells) {
    json entry{{"index", cell.index},   {"overrides", cell.overrides}, {"config", cell.config},
               {"status", cell.status}, {"exit_code", cell.exit_code}, {"files", cell.files}};
    if (!cell.error.empty()) entry["error"] = cell.error;
    manifest["cells"].push_back(entry);
    code = std::max(code, cell.exit_code);
  }
  write_atomic(out / "manifest.json", manifest.dump(2) + "\n");
  return code;
}

}  // namespace sbs::cli
