#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace bimf {

/// Bad or inconsistent input (files, configs, indices). CLI maps this to exit 2.
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure (divergence, non-finite values). CLI maps this to exit 3.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Inclusive rating bounds, e.g. 1..5 stars.
struct RatingScale {
    double min = 1.0;
    double max = 5.0;

    bool contains(double r) const { return r >= min && r <= max; }
    double clamp(double r) const { return r < min ? min : (r > max ? max : r); }
    double mid() const { return 0.5 * (min + max); }
};

// FNV-1a over raw bytes; used for bit-exact reproducibility checks.
inline std::uint64_t hash_bytes(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace bimf
