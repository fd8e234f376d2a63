#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "pb/config.hpp"

namespace pb {

// deterministic CSV writer (%.17g for reals) so reruns are byte-identical
class CsvWriter {
 public:
  CsvWriter(const std::string& file, const std::vector<std::string>& header);
  void row(const std::vector<double>& values);
  void row_mixed(const std::vector<std::string>& cells);
  const std::string& file() const { return file_; }

 private:
  std::string file_;
  std::ofstream out_;
  std::size_t width_ = 0;
};

std::string format_double(double v);

// JSON run manifest: config echo, seed, content hash of the inputs, wall
// time, thread count, produced artifacts
void write_manifest(const std::string& dir, const std::string& subcommand,
                    const Config& cfg, unsigned long long seed,
                    const std::string& input_hash, double wall_seconds,
                    const std::vector<std::string>& outputs);

}  // namespace pb
