#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace abmcal {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexVector = Eigen::VectorXi;

enum class ErrorKind {
    dimension_mismatch,
    out_of_range,
    invalid_argument,
    numerical,
    io,
};

// Every failure in the library surfaces as this type so callers can branch on kind().
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

inline void require(bool ok, ErrorKind kind, std::string_view what) {
    if (!ok) fail(kind, std::string(what));
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seed for the r-th child stream of a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t r) {
    return master ^ splitmix64(r);
}

/// Closed interval used for parameter ranges.
struct Range {
    double min = 0.0;
    double max = 1.0;

    double width() const { return max - min; }
    bool contains(double v) const { return v >= min && v <= max; }
    double normalize(double v) const { return (v - min) / (max - min); }
    double denormalize(double u) const { return min + u * (max - min); }
};

}  // namespace abmcal
