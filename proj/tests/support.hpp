#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "daso/daso.hpp"

namespace daso::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("daso-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Small fast experiment; callers override what they need.
inline std::string small_config(int nodes, int gpus, int epochs, const std::string& extra = "") {
  return "[cluster]\nnum_nodes = " + std::to_string(nodes) + "\ngpus_per_node = " +
         std::to_string(gpus) +
         "\n[task]\nkind = linreg\nn = 256\nd = 4\nnoise_sd = 0.1\n"
         "[daso]\nwarmup_epochs = 1\ncooldown_epochs = 1\n"
         "[schedule]\nwarmup_epochs = 1\n"
         "[run]\ntotal_epochs = " +
         std::to_string(epochs) + "\nbatch_size_per_rank = 4\nseed = 7\n" + extra;
}

inline TrainerConfig trainer_for(const ClusterSpec& cluster, int epochs, std::uint64_t seed = 1) {
  TrainerConfig t;
  t.cluster = cluster;
  t.total_epochs = epochs;
  t.batch_size_per_rank = 4;
  t.seed = seed;
  t.schedule.warmup_epochs = 1;
  return t;
}

}  // namespace daso::test
