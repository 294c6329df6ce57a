#include "pbtd/vmf.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

// The normalizer of the matrix vMF is the hypergeometric function
// 0F1(I/2; F'F/4), a function of the squared singular values theta_i of F.
// It is evaluated here as a ratio of two saddlepoint density approximations
// of the noncentral Wishart W = X'X at the identity (X an I x D Gaussian
// matrix with mean F), which makes the value exact at F = 0 and cancels all
// coordinate conventions. The saddle is diagonal, u_i = 2/(I + sqrt(I^2 +
// 4 theta_i)), and the Hessian is diagonal in the orthonormal symmetric
// matrix basis, so everything reduces to closed-form scalar work plus a
// second-order cumulant correction.

namespace pbtd {
namespace {

// Scalar with one forward-mode derivative; enough chain rule for the
// normalizer so the moment comes out as its exact gradient.
struct Dual {
    double v = 0.0;
    double d = 0.0;
    Dual() = default;
    Dual(double value) : v(value) {}
    Dual(double value, double deriv) : v(value), d(deriv) {}
};

inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.v * b.d + a.d * b.v}; }
inline Dual operator/(Dual a, Dual b) {
    double q = a.v / b.v;
    return {q, (a.d - q * b.d) / b.v};
}
inline Dual operator-(Dual a) { return {-a.v, -a.d}; }

inline double value(double x) { return x; }
inline double value(Dual x) { return x.v; }

inline double sqrt_s(double x) { return std::sqrt(x); }
inline Dual sqrt_s(Dual x) {
    double s = std::sqrt(x.v);
    return {s, s > 0.0 ? x.d / (2.0 * s) : 0.0};
}
inline double log_s(double x) { return std::log(x); }
inline Dual log_s(Dual x) { return {std::log(x.v), x.d / x.v}; }

// Cumulants of the Wishart CGF at the saddle, contracted against the
// inverse Hessian. Index arguments follow the nonzero sparsity patterns:
// third order couples (i,i,i), (i | ij), and triangles (ij,jk,ik); fourth
// order couples squared pairs sharing at least one index.
template <class T>
T k3_diag(T u, T th, double I) {
    return 8.0 * u * u * u * (I + 3.0 * th * u);
}
template <class T>
T k3_diag_off(T ui, T thi, T uj, T thj, double I) {
    return 4.0 * ui * ui * uj * (I + 2.0 * thi * ui + thj * uj);
}
template <class T>
T k3_triangle(T ui, T thi, T uj, T thj, T uk, T thk, double I) {
    return 2.0 * std::sqrt(2.0) * ui * uj * uk * (I + thi * ui + thj * uj + thk * uk);
}
template <class T>
T k4_diag(T u, T th, double I) {
    return 48.0 * u * u * u * u * (I + 4.0 * th * u);
}
template <class T>
T k4_diag_off(T ui, T thi, T uj, T thj, double I) {
    return 16.0 * I * ui * ui * ui * uj + 48.0 * thi * ui * ui * ui * ui * uj
         + 16.0 * thj * uj * uj * ui * ui * ui;
}
template <class T>
T k4_off_off(T ui, T thi, T uj, T thj, double I) {
    return 24.0 * ui * ui * uj * uj * (I + 2.0 * thi * ui + 2.0 * thj * uj);
}
template <class T>
T k4_shared(T uc, T thc, T uo1, T tho1, T uo2, T tho2, double I) {
    return 8.0 * uc * uc * uo1 * uo2 * (I + 2.0 * thc * uc)
         + 8.0 * uc * uc * (tho1 * uo1 * uo1 * uo2 + tho2 * uo2 * uo2 * uo1);
}

template <class T>
T second_order_term(const std::vector<T>& th, const std::vector<T>& u, double I) {
    const int D = static_cast<int>(th.size());
    std::vector<T> lam_d(D);
    for (int i = 0; i < D; ++i)
        lam_d[i] = T(1.0) / (2.0 * u[i] * u[i] * (I + 2.0 * th[i] * u[i]));
    std::vector<std::vector<T>> lam_o(D, std::vector<T>(D));
    for (int i = 0; i < D; ++i)
        for (int j = i + 1; j < D; ++j)
            lam_o[i][j] = T(1.0) / (2.0 * u[i] * u[j] * (I + th[i] * u[i] + th[j] * u[j]));

    T rho4(0.0);
    for (int i = 0; i < D; ++i)
        rho4 = rho4 + lam_d[i] * lam_d[i] * k4_diag(u[i], th[i], I);
    for (int i = 0; i < D; ++i)
        for (int j = i + 1; j < D; ++j) {
            const T lo = lam_o[i][j];
            rho4 = rho4 + lo * lo * k4_off_off(u[i], th[i], u[j], th[j], I);
            rho4 = rho4 + 2.0 * lam_d[i] * lo * k4_diag_off(u[i], th[i], u[j], th[j], I);
            rho4 = rho4 + 2.0 * lam_d[j] * lo * k4_diag_off(u[j], th[j], u[i], th[i], I);
        }
    // pairs of off-diagonal coordinates sharing exactly one index
    for (int c = 0; c < D; ++c)
        for (int a = 0; a < D; ++a) {
            if (a == c) continue;
            for (int b = a + 1; b < D; ++b) {
                if (b == c) continue;
                const T l1 = lam_o[std::min(a, c)][std::max(a, c)];
                const T l2 = lam_o[std::min(b, c)][std::max(b, c)];
                rho4 = rho4 + 2.0 * l1 * l2
                       * k4_shared(u[c], th[c], u[a], th[a], u[b], th[b], I);
            }
        }

    T rho13(0.0);
    for (int i = 0; i < D; ++i) {
        T g = lam_d[i] * k3_diag(u[i], th[i], I);
        for (int j = 0; j < D; ++j) {
            if (j == i) continue;
            const T lo = lam_o[std::min(i, j)][std::max(i, j)];
            g = g + lo * k3_diag_off(u[i], th[i], u[j], th[j], I);
        }
        rho13 = rho13 + lam_d[i] * g * g;
    }

    T rho23(0.0);
    for (int i = 0; i < D; ++i) {
        const T k = k3_diag(u[i], th[i], I);
        rho23 = rho23 + lam_d[i] * lam_d[i] * lam_d[i] * k * k;
    }
    for (int i = 0; i < D; ++i)
        for (int j = i + 1; j < D; ++j) {
            const T lo = lam_o[i][j];
            const T kij = k3_diag_off(u[i], th[i], u[j], th[j], I);
            const T kji = k3_diag_off(u[j], th[j], u[i], th[i], I);
            rho23 = rho23 + 3.0 * lam_d[i] * lo * lo * kij * kij;
            rho23 = rho23 + 3.0 * lam_d[j] * lo * lo * kji * kji;
        }
    for (int i = 0; i < D; ++i)
        for (int j = i + 1; j < D; ++j)
            for (int k = j + 1; k < D; ++k) {
                const T kt = k3_triangle(u[i], th[i], u[j], th[j], u[k], th[k], I);
                rho23 = rho23 + 6.0 * lam_o[i][j] * lam_o[j][k] * lam_o[i][k] * kt * kt;
            }

    return rho4 / 8.0 - (3.0 * rho13 + 2.0 * rho23) / 24.0;
}

// log C(F) + const: exponent, saddle bracket, half log det Hessian, and the
// second-order ratio correction. Subtracting the value at theta = 0 yields
// the normalizer itself. The correction enters in exponential form exp(T)
// rather than (1 + T): same asymptotic order, but it stays finite for square
// and near-square shapes where T drops below -1, and the shape-dependent bulk
// of T cancels in the theta-vs-zero difference.
template <class T>
T saddle_value(const std::vector<T>& th, double I) {
    const int D = static_cast<int>(th.size());
    std::vector<T> u(D);
    for (int i = 0; i < D; ++i)
        u[i] = T(2.0) / (I + sqrt_s(I * I + 4.0 * th[i]));

    T val(0.0);
    for (int i = 0; i < D; ++i)
        val = val + (I / 2.0) * log_s(u[i]) + 0.5 * th[i] * u[i]
                  - 0.5 * (T(1.0) - T(1.0) / u[i]);
    for (int i = 0; i < D; ++i)
        val = val - 0.5 * log_s(2.0 * u[i] * u[i] * (I + 2.0 * th[i] * u[i]));
    for (int i = 0; i < D; ++i)
        for (int j = i + 1; j < D; ++j)
            val = val - 0.5 * log_s(2.0 * u[i] * u[j] * (I + th[i] * u[i] + th[j] * u[j]));
    val = val + second_order_term(th, u, I);
    return val;
}

double log_normalizer_sv(const std::vector<double>& sigma, double I) {
    const int D = static_cast<int>(sigma.size());
    std::vector<double> th(D), zero(D, 0.0);
    for (int i = 0; i < D; ++i) th[i] = sigma[i] * sigma[i];
    return saddle_value(th, I) - saddle_value(zero, I);
}

// d logC / d sigma_k via one dual pass; theta_k carries d theta/d sigma = 2 sigma.
double moment_sv(const std::vector<double>& sigma, double I, int k) {
    const int D = static_cast<int>(sigma.size());
    std::vector<Dual> th(D);
    for (int i = 0; i < D; ++i)
        th[i] = Dual(sigma[i] * sigma[i], i == k ? 2.0 * sigma[i] : 0.0);
    return saddle_value(th, I).d;
}

struct ThinSvd {
    Matrix left;
    Matrix right;
    Vector sigma;
};

// Thin SVD with a fixed sign convention: the largest-magnitude entry of
// each left singular vector is positive.
ThinSvd signed_svd(const Matrix& f) {
    Eigen::JacobiSVD<Matrix> svd(f, Eigen::ComputeThinU | Eigen::ComputeThinV);
    ThinSvd out{svd.matrixU(), svd.matrixV(), svd.singularValues()};
    for (Eigen::Index j = 0; j < out.left.cols(); ++j) {
        Eigen::Index imax = 0;
        out.left.col(j).cwiseAbs().maxCoeff(&imax);
        if (out.left(imax, j) < 0.0) {
            out.left.col(j) = -out.left.col(j);
            out.right.col(j) = -out.right.col(j);
        }
    }
    return out;
}

void check_shape(const VmfMatrix& f) {
    if (f.concentration.rows() < f.concentration.cols())
        throw std::invalid_argument("vMF concentration must be tall or square");
    if (f.concentration.size() == 0)
        throw std::invalid_argument("vMF concentration must be nonempty");
}

constexpr double kSigmaFloor = 1e-12;

}  // namespace

Matrix vmf_mode(const VmfMatrix& f) {
    check_shape(f);
    if (f.concentration.norm() == 0.0)
        throw std::domain_error("mode of the uniform distribution is undefined");
    ThinSvd svd = signed_svd(f.concentration);
    return svd.left * svd.right.transpose();
}

Matrix vmf_expectation(const VmfMatrix& f) {
    check_shape(f);
    const double I = static_cast<double>(f.concentration.rows());
    const int D = static_cast<int>(f.concentration.cols());
    if (f.concentration.norm() == 0.0)
        return Matrix::Zero(f.concentration.rows(), D);

    ThinSvd svd = signed_svd(f.concentration);
    std::vector<double> sigma(D);
    for (int i = 0; i < D; ++i)
        sigma[i] = svd.sigma[i] < kSigmaFloor ? 0.0 : svd.sigma[i];

    Vector rho = Vector::Zero(D);
    for (int i = 0; i < D; ++i) {
        if (sigma[i] == 0.0) continue;
        double r = moment_sv(sigma, I, i);
        rho[i] = std::min(std::max(r, 0.0), 1.0 - 1e-12);
    }
    return svd.left * rho.asDiagonal() * svd.right.transpose();
}

double vmf_log_normalizer(const VmfMatrix& f) {
    check_shape(f);
    const double I = static_cast<double>(f.concentration.rows());
    const int D = static_cast<int>(f.concentration.cols());
    if (f.concentration.norm() == 0.0) return 0.0;

    ThinSvd svd = signed_svd(f.concentration);
    std::vector<double> sigma(D);
    for (int i = 0; i < D; ++i)
        sigma[i] = svd.sigma[i] < kSigmaFloor ? 0.0 : svd.sigma[i];
    return log_normalizer_sv(sigma, I);
}

}  // namespace pbtd
