#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace rdist {

/// One named float array inside an archive.
struct NamedArray {
  std::string name;
  std::vector<int> dims;
  std::vector<float> values;
};

/// Named-tensor archive used for checkpoints and model weights.
///
/// Layout on disk:
///   8 bytes   magic "RDISTARC"
///   u32 LE    container version
///   u64 LE    header length in bytes
///   header    UTF-8 JSON; carries "version" plus a "tensors" index
///   payload   float32 LE values, concatenated in index order
struct Archive {
  static constexpr unsigned kContainerVersion = 1;

  nlohmann::json header = nlohmann::json::object();
  std::vector<NamedArray> arrays;

  const NamedArray& get(const std::string& name) const;
  const NamedArray* find(const std::string& name) const;
  void put(std::string name, std::vector<int> dims, std::vector<float> values);
};

/// Writes to a temp file in the same directory, then renames over `path`.
void write_archive(const std::filesystem::path& path, const Archive& archive);
Archive read_archive(const std::filesystem::path& path);

void write_text_atomic(const std::filesystem::path& path, const std::string& text);
/// Appends one line (newline added) and flushes.
void append_line(const std::filesystem::path& path, const std::string& line);
std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace rdist
