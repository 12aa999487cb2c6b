#pragma once

#include <filesystem>

#include "bimf/factorization.hpp"

namespace bimf {

// Single binary file: magic "BIMF", format version, model kind, k, N, M,
// little-endian f64 arrays for U, V and each encoder weight tensor (stack
// blocks in order, weights then bias, then the head), followed by a
// length-prefixed JSON trailer with hyperparameters and the layer specs.
// save(load(f)) is byte-identical to f.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace bimf
