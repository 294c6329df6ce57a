#pragma once

#include <random>

#include "pbtd/tensor.hpp"

namespace test_support {

inline pbtd::Matrix random_matrix(int rows, int cols, unsigned seed) {
    std::mt19937 eng(seed);
    std::normal_distribution<double> normal;
    pbtd::Matrix m(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) m(i, j) = normal(eng);
    return m;
}

inline pbtd::DenseTensor random_tensor(const std::vector<int>& dims, unsigned seed) {
    std::mt19937 eng(seed);
    std::normal_distribution<double> normal;
    pbtd::DenseTensor x(dims);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.values[i] = normal(eng);
    return x;
}

/// Random matrix with orthonormal columns (QR of a Gaussian draw).
inline pbtd::Matrix random_orthonormal(int rows, int cols, unsigned seed) {
    pbtd::Matrix g = random_matrix(rows, cols, seed);
    Eigen::HouseholderQR<pbtd::Matrix> qr(g);
    pbtd::Matrix q = qr.householderQ() * pbtd::Matrix::Identity(rows, cols);
    pbtd::Matrix r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
    for (int j = 0; j < cols; ++j)
        if (r(j, j) < 0) q.col(j) = -q.col(j);
    return q;
}

}  // namespace test_support
