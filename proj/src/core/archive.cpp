#include "rdist/core/archive.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <fmt/format.h>

namespace rdist {
namespace {

static_assert(std::endian::native == std::endian::little, "archive payload assumes a little-endian host");

constexpr char kMagic[8] = {'R', 'D', 'I', 'S', 'T', 'A', 'R', 'C'};

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("archive truncated");
  return v;
}

std::filesystem::path temp_sibling(const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  return tmp;
}

}  // namespace

const NamedArray* Archive::find(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

const NamedArray& Archive::get(const std::string& name) const {
  if (const auto* a = find(name)) return *a;
  throw std::runtime_error("archive has no tensor named '" + name + "'");
}

void Archive::put(std::string name, std::vector<int> dims, std::vector<float> values) {
  std::size_t expected = 1;
  for (int d : dims) expected *= static_cast<std::size_t>(d);
  if (expected != values.size()) {
    throw std::invalid_argument(fmt::format("tensor '{}' dims hold {} values, got {}", name, expected, values.size()));
  }
  arrays.push_back(NamedArray{std::move(name), std::move(dims), std::move(values)});
}

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  if (!archive.header.contains("version")) throw std::invalid_argument("archive header requires a version field");
  nlohmann::json header = archive.header;
  nlohmann::json index = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& a : archive.arrays) {
    index.push_back({{"name", a.name}, {"dims", a.dims}, {"offset", offset}, {"count", a.values.size()}});
    offset += a.values.size();
  }
  header["tensors"] = std::move(index);
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = temp_sibling(path);
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp.string());
    os.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(os, Archive::kContainerVersion);
    write_pod<std::uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& a : archive.arrays) {
      os.write(reinterpret_cast<const char*>(a.values.data()),
               static_cast<std::streamsize>(a.values.size() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open archive " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error(path.string() + " is not an rdist archive");
  }
  const auto container = read_pod<std::uint32_t>(is);
  if (container != Archive::kContainerVersion) {
    throw std::runtime_error(fmt::format("unsupported archive container version {}", container));
  }
  const auto header_len = read_pod<std::uint64_t>(is);
  std::string text(header_len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!is) throw std::runtime_error("archive header truncated");

  Archive out;
  out.header = nlohmann::json::parse(text);
  if (!out.header.contains("version")) throw std::runtime_error("archive header lacks a version field");
  const nlohmann::json index = out.header.at("tensors");
  out.header.erase("tensors");
  for (const auto& entry : index) {
    NamedArray a;
    a.name = entry.at("name").get<std::string>();
    a.dims = entry.at("dims").get<std::vector<int>>();
    a.values.resize(entry.at("count").get<std::size_t>());
    is.read(reinterpret_cast<char*>(a.values.data()), static_cast<std::streamsize>(a.values.size() * sizeof(float)));
    if (!is) throw std::runtime_error("archive payload truncated at '" + a.name + "'");
    out.arrays.push_back(std::move(a));
  }
  return out;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = temp_sibling(path);
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp.string());
    os << text;
    if (!os) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void append_line(const std::filesystem::path& path, const std::string& line) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::app);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  os << line << '\n';
  os.flush();
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::vector<std::string> lines;
  std::ifstream is(path);
  if (!is) return lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace rdist
