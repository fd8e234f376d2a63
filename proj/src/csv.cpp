#include "pb/csv.hpp"

#include <cstdio>
#include <stdexcept>

#include <json.hpp>

#include "pb/parallel.hpp"

namespace pb {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::string& file,
                     const std::vector<std::string>& header)
    : file_(file), out_(file), width_(header.size()) {
  if (!out_) throw std::runtime_error("CsvWriter: cannot open " + file);
  for (std::size_t i = 0; i < header.size(); ++i)
    out_ << (i ? "," : "") << header[i];
  out_ << "\n";
}

void CsvWriter::row(const std::vector<double>& values) {
  if (values.size() != width_)
    throw std::logic_error("CsvWriter: row width mismatch in " + file_);
  for (std::size_t i = 0; i < values.size(); ++i)
    out_ << (i ? "," : "") << format_double(values[i]);
  out_ << "\n";
}

void CsvWriter::row_mixed(const std::vector<std::string>& cells) {
  if (cells.size() != width_)
    throw std::logic_error("CsvWriter: row width mismatch in " + file_);
  for (std::size_t i = 0; i < cells.size(); ++i)
    out_ << (i ? "," : "") << cells[i];
  out_ << "\n";
}

void write_manifest(const std::string& dir, const std::string& subcommand,
                    const Config& cfg, unsigned long long seed,
                    const std::string& input_hash, double wall_seconds,
                    const std::vector<std::string>& outputs) {
  nlohmann::json j;
  j["subcommand"] = subcommand;
  j["seed"] = seed;
  j["input_hash"] = input_hash;
  j["wall_seconds"] = wall_seconds;
  j["threads"] = max_threads();
  j["outputs"] = outputs;
  nlohmann::json kv = nlohmann::json::object();
  for (const auto& [k, v] : cfg.entries()) kv[k] = v;
  j["config"] = kv;
  std::ofstream out(dir + "/manifest.json");
  if (!out) throw std::runtime_error("write_manifest: cannot open " + dir);
  out << j.dump(2) << "\n";
}

}  // namespace pb
