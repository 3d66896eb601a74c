#pragma once

#include <cstdint>
#include <stdexcept>

namespace mixbank {

// splitmix64 finalizer; a bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

enum class SeedStream : std::uint8_t {
  signs = 1,
  signal = 2,
  noise = 3,
  subset = 4,
};

// Seeds for distinct (stream, cell, index) keys are distinct for a fixed master,
// since the key packing is injective and every later step is a bijection.
constexpr std::uint64_t derive_seed(std::uint64_t master, SeedStream stream, std::uint32_t cell,
                                    std::uint32_t index) {
  if (cell >= (1u << 24)) throw std::out_of_range("derive_seed: cell index too large");
  const std::uint64_t key = (static_cast<std::uint64_t>(stream) << 56) |
                            (static_cast<std::uint64_t>(cell) << 32) | index;
  return mix64(key ^ mix64(master));
}

}  // namespace mixbank
