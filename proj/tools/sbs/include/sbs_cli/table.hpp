#pragma once

// CSV tables with round-trip doubles and atomic file output.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <variant>
#include <vector>

#include <fmt/format.h>
#include <unistd.h>

#include "sbs/errors.hpp"

namespace sbs::cli {

using Cell = std::variant<double, std::int64_t, std::string>;

/// 17 significant digits, '.' separator; inf and nan spelled out.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return fmt::format("{:.17g}", x);
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row) {
    if (row.size() != header.size()) throw ShapeError("Table: row width does not match the header");
    rows.push_back(std::move(row));
  }

  std::string csv() const {
    std::string out;
    for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
    out += '\n';
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out += ',';
        if (const auto* d = std::get_if<double>(&row[i])) out += format_double(*d);
        else if (const auto* n = std::get_if<std::int64_t>(&row[i])) out += std::to_string(*n);
        else out += std::get<std::string>(row[i]);
      }
      out += '\n';
    }
    return out;
  }
};

/// Writes to a sibling temporary and renames it over `path`.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  static std::atomic<std::uint64_t> counter{0};
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += fmt::format(".tmp.{}.{}", static_cast<long>(::getpid()), counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

}  // namespace sbs::cli
