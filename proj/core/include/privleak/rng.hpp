#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace privleak {

using Rng = std::mt19937_64;

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes);

/// One round of the splitmix64 finalizer.
std::uint64_t splitmix64(std::uint64_t x);

/// Derives an independent stream seed from the master seed and a task path
/// such as "unlearn/minority/scrub". Serial and parallel executions that use
/// the same path obtain the same stream.
std::uint64_t derive_seed(std::uint64_t master, std::string_view path);

inline Rng make_rng(std::uint64_t master, std::string_view path) {
  return Rng(derive_seed(master, path));
}

}  // namespace privleak
