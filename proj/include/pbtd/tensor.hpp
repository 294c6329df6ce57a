#pragma once

#include <Eigen/Dense>
#include <vector>

namespace pbtd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Dense N-way array. Values are linearized with the mode-0 index varying
/// fastest (column-major vec convention), matching Matrix storage.
struct DenseTensor {
    std::vector<int> dims;
    Vector values;

    DenseTensor() = default;
    DenseTensor(std::vector<int> d, Vector v);
    explicit DenseTensor(std::vector<int> d);  // zero-filled

    [[nodiscard]] int order() const { return static_cast<int>(dims.size()); }
    [[nodiscard]] Eigen::Index size() const { return values.size(); }
    [[nodiscard]] double norm() const { return values.norm(); }
};

[[nodiscard]] Eigen::Index dim_product(const std::vector<int>& dims);

/// Mode-n unfolding X_(n), shape I_n x (J/I_n). Column order linearizes the
/// remaining modes with the lowest mode varying fastest.
[[nodiscard]] Matrix matricize(const DenseTensor& x, int mode);

/// Exact inverse of matricize for the same (mode, dims).
[[nodiscard]] DenseTensor fold(const Matrix& m, int mode, const std::vector<int>& dims);

/// X x_n M: contracts mode n of x with the columns of m.
[[nodiscard]] DenseTensor mode_n_product(const DenseTensor& x, const Matrix& m, int mode);

[[nodiscard]] Matrix kronecker(const Matrix& a, const Matrix& b);

/// G x_1 A^(1) x_2 ... x_N A^(N); factors[n] has cols == core.dims[n].
[[nodiscard]] DenseTensor multilinear_reconstruct(const DenseTensor& core,
                                                  const std::vector<Matrix>& factors);

/// Stacks cores along the hyper-diagonal: block t occupies its own index
/// range in every mode, zeros elsewhere.
[[nodiscard]] DenseTensor blkdiag_core(const std::vector<DenseTensor>& cores);

}  // namespace pbtd
