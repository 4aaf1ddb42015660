#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "rdist/core/rng.hpp"
#include "rdist/core/types.hpp"

namespace rdist::testing {

inline Tensor random_tensor(Shape s, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
  Rng rng = make_rng(seed, "test_tensor");
  Tensor t(s);
  for (float& v : t.values()) v = lo + (hi - lo) * static_cast<float>(rng.uniform());
  return t;
}

inline Tensor randn_tensor(Shape s, std::uint64_t seed, float scale = 1.0f) {
  Rng rng = make_rng(seed, "test_randn");
  Tensor t(s);
  for (float& v : t.values()) v = scale * rng.normal();
  return t;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("rdist_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace rdist::testing
