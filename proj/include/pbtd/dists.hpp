#pragma once

#include "pbtd/tensor.hpp"

namespace pbtd {

/// Shape-rate Gamma distribution, mean = shape/rate.
struct GammaDist {
    double shape = 1.0;
    double rate = 1.0;
};

struct GammaStats {
    double mean;
    double mean_log;
    double entropy;
};

[[nodiscard]] GammaStats gamma_stats(const GammaDist& g);

/// Gaussian with independent coordinates (diagonal covariance).
struct DiagGaussian {
    Vector mean;
    Vector variance;
};

/// Elementwise E[x^2] = mean^2 + variance.
[[nodiscard]] Vector diag_gaussian_second_moment(const DiagGaussian& d);

[[nodiscard]] double digamma(double x);

}  // namespace pbtd
