#include "rdist/core/rng.hpp"

#include <atomic>

namespace rdist {
namespace {

std::atomic<std::uint64_t> g_seed{0};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

std::uint64_t Rng::below(std::uint64_t bound) {
  std::uniform_int_distribution<std::uint64_t> dist(0, bound - 1);
  return dist(engine_);
}

void seed_all(std::uint64_t seed) { g_seed.store(seed); }

std::uint64_t global_seed() { return g_seed.load(); }

Rng make_rng(std::uint64_t seed, std::string_view stream, std::uint64_t index) {
  return Rng(splitmix64(splitmix64(seed) ^ fnv1a(stream)) ^ splitmix64(index + 0x51ED27ull));
}

Rng make_rng(std::string_view stream, std::uint64_t index) { return make_rng(global_seed(), stream, index); }

}  // namespace rdist
