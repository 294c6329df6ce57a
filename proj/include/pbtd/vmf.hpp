#pragma once

#include "pbtd/tensor.hpp"

namespace pbtd {

/// Matrix von Mises-Fisher distribution on the Stiefel manifold,
/// density proportional to exp(tr(F' U)) against the uniform measure.
/// F must be tall or square (rows >= cols).
struct VmfMatrix {
    Matrix concentration;
};

/// Polar factor of F (the distribution's mode). Throws on zero F.
[[nodiscard]] Matrix vmf_mode(const VmfMatrix& f);

/// Approximate posterior mean E[U]: thin SVD F = L diag(s) R', result
/// L diag(rho) R' with rho the saddlepoint moment in each singular direction.
/// All singular values of the result lie in [0, 1).
[[nodiscard]] Matrix vmf_expectation(const VmfMatrix& f);

/// Approximate log of the normalizing integral relative to the uniform
/// measure (0 at F = 0). Its gradient in F is vmf_expectation to
/// finite-difference accuracy.
[[nodiscard]] double vmf_log_normalizer(const VmfMatrix& f);

}  // namespace pbtd
