#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "pbtd/tensor.hpp"

namespace pbtd {

/// Deterministic random stream. Gaussian draws use an explicit Box-Muller
/// transform on top of mt19937_64 so sequences do not depend on the
/// standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// Derives an independent stream seed for sub-task k (splitmix64 finalizer),
/// so parallel cells get order-independent randomness.
[[nodiscard]] inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t k) {
    std::uint64_t z = base + (k + 1) * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Orthonormal basis for the columns of g via QR, with the R-diagonal sign
/// fixed positive so the result is a deterministic function of g.
[[nodiscard]] inline Matrix orthonormal_basis(const Matrix& g) {
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(g.rows(), g.cols());
    Matrix r = qr.matrixQR().topRows(g.cols()).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < g.cols(); ++j)
        if (r(j, j) < 0) q.col(j) = -q.col(j);
    return q;
}

/// QR of a Gaussian draw with the R-diagonal sign fixed positive; columns
/// are orthonormal and the draw is deterministic in the stream state.
[[nodiscard]] inline Matrix random_orthonormal(Rng& rng, int rows, int cols) {
    Matrix g(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) g(i, j) = rng.normal();
    return orthonormal_basis(g);
}

}  // namespace pbtd
