#include "pbtd/tensor.hpp"

#include <stdexcept>
#include <utility>

namespace pbtd {

Eigen::Index dim_product(const std::vector<int>& dims) {
    Eigen::Index p = 1;
    for (int d : dims) p *= d;
    return p;
}

DenseTensor::DenseTensor(std::vector<int> d, Vector v)
    : dims(std::move(d)), values(std::move(v)) {
    if (dims.empty()) throw std::invalid_argument("tensor needs at least one mode");
    for (int di : dims)
        if (di < 1) throw std::invalid_argument("tensor dimensions must be positive");
    if (values.size() != dim_product(dims))
        throw std::invalid_argument("value count does not match dimensions");
}

DenseTensor::DenseTensor(std::vector<int> d) : dims(std::move(d)) {
    if (dims.empty()) throw std::invalid_argument("tensor needs at least one mode");
    for (int di : dims)
        if (di < 1) throw std::invalid_argument("tensor dimensions must be positive");
    values = Vector::Zero(dim_product(dims));
}

namespace {

void check_mode(const std::vector<int>& dims, int mode) {
    if (mode < 0 || mode >= static_cast<int>(dims.size()))
        throw std::out_of_range("mode index out of range");
}

// Split the linear index around a mode: flat = l + L*m + L*M*r with
// l in [0,L) over the lower modes, m the mode index, r over the upper modes.
struct ModeSplit {
    Eigen::Index lower, mid, upper;
};

ModeSplit split_dims(const std::vector<int>& dims, int mode) {
    ModeSplit s{1, dims[mode], 1};
    for (int k = 0; k < mode; ++k) s.lower *= dims[k];
    for (int k = mode + 1; k < static_cast<int>(dims.size()); ++k) s.upper *= dims[k];
    return s;
}

}  // namespace

Matrix matricize(const DenseTensor& x, int mode) {
    check_mode(x.dims, mode);
    const auto [L, M, R] = split_dims(x.dims, mode);
    Matrix out(M, L * R);
    for (Eigen::Index r = 0; r < R; ++r)
        for (Eigen::Index m = 0; m < M; ++m)
            for (Eigen::Index l = 0; l < L; ++l)
                out(m, l + L * r) = x.values[l + L * m + L * M * r];
    return out;
}

DenseTensor fold(const Matrix& m, int mode, const std::vector<int>& dims) {
    check_mode(dims, mode);
    const auto [L, M, R] = split_dims(dims, mode);
    if (m.rows() != M || m.cols() != L * R)
        throw std::invalid_argument("matrix shape does not match fold dimensions");
    DenseTensor out(dims);
    for (Eigen::Index r = 0; r < R; ++r)
        for (Eigen::Index mm = 0; mm < M; ++mm)
            for (Eigen::Index l = 0; l < L; ++l)
                out.values[l + L * mm + L * M * r] = m(mm, l + L * r);
    return out;
}

DenseTensor mode_n_product(const DenseTensor& x, const Matrix& m, int mode) {
    check_mode(x.dims, mode);
    if (m.cols() != x.dims[mode])
        throw std::invalid_argument("matrix columns must match the contracted mode");
    std::vector<int> out_dims = x.dims;
    out_dims[mode] = static_cast<int>(m.rows());
    return fold(m * matricize(x, mode), mode, out_dims);
}

Matrix kronecker(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

DenseTensor multilinear_reconstruct(const DenseTensor& core,
                                    const std::vector<Matrix>& factors) {
    if (static_cast<int>(factors.size()) != core.order())
        throw std::invalid_argument("need one factor per mode");
    DenseTensor out = core;
    for (int n = 0; n < core.order(); ++n) {
        if (factors[n].cols() != core.dims[n])
            throw std::invalid_argument("factor columns must match core dimension");
        out = mode_n_product(out, factors[n], n);
    }
    return out;
}

DenseTensor blkdiag_core(const std::vector<DenseTensor>& cores) {
    if (cores.empty()) throw std::invalid_argument("need at least one core");
    const int N = cores.front().order();
    for (const auto& c : cores)
        if (c.order() != N) throw std::invalid_argument("cores must share tensor order");

    std::vector<int> out_dims(N, 0);
    for (const auto& c : cores)
        for (int n = 0; n < N; ++n) out_dims[n] += c.dims[n];

    DenseTensor out(out_dims);
    std::vector<int> offset(N, 0);
    for (const auto& c : cores) {
        std::vector<int> idx(N, 0);
        for (Eigen::Index flat = 0; flat < c.size(); ++flat) {
            Eigen::Index dest = 0, stride = 1;
            for (int n = 0; n < N; ++n) {
                dest += (offset[n] + idx[n]) * stride;
                stride *= out_dims[n];
            }
            out.values[dest] = c.values[flat];
            for (int n = 0; n < N; ++n) {
                if (++idx[n] < c.dims[n]) break;
                idx[n] = 0;
            }
        }
        for (int n = 0; n < N; ++n) offset[n] += c.dims[n];
    }
    return out;
}

}  // namespace pbtd
