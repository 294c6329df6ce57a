#include "pbtd/dists.hpp"

#include <cmath>
#include <stdexcept>

namespace pbtd {

double digamma(double x) {
    if (!(x > 0.0)) throw std::domain_error("digamma requires x > 0");
    double acc = 0.0;
    while (x < 9.0) {
        acc -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x, inv2 = inv * inv;
    double tail = std::log(x) - 0.5 * inv
                - inv2 * (1.0 / 12
                          - inv2 * (1.0 / 120
                                    - inv2 * (1.0 / 252
                                              - inv2 * (1.0 / 240
                                                        - inv2 * (1.0 / 132
                                                                  - inv2 * 691.0 / 32760)))));
    return acc + tail;
}

GammaStats gamma_stats(const GammaDist& g) {
    if (!(g.shape > 0.0) || !(g.rate > 0.0))
        throw std::domain_error("gamma parameters must be positive");
    const double a = g.shape, b = g.rate;
    GammaStats s{};
    s.mean = a / b;
    s.mean_log = digamma(a) - std::log(b);
    s.entropy = a - std::log(b) + std::lgamma(a) + (1.0 - a) * digamma(a);
    return s;
}

Vector diag_gaussian_second_moment(const DiagGaussian& d) {
    if (d.mean.size() != d.variance.size())
        throw std::invalid_argument("mean and variance must have equal length");
    return d.mean.array().square() + d.variance.array();
}

}  // namespace pbtd
