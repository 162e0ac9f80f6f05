#pragma once

// Independent oracles shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tearth/rng.hpp"
#include "tearth/tensor.hpp"

namespace oracle {

// Central finite differences of a scalar function with respect to `x`.
inline std::vector<double> central_difference(const std::function<double()>& f, std::span<double> x, double h = 1e-6) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double up = f();
        x[i] = saved - h;
        const double down = f();
        x[i] = saved;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

// |a - n| / max(|a|, |n|, floor). The floor keeps near-zero components,
// where FD round-off (~1e-10 absolute) dominates, from reading as large
// relative errors.
inline double relative_error(double analytic, double numeric, double floor = 1e-5) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline double max_relative_error(std::span<const double> a, const std::vector<double>& n, double floor = 1e-5) {
    double worst = 0.0;
    for (std::size_t i = 0; i < n.size(); ++i) worst = std::max(worst, relative_error(a[i], n[i], floor));
    return worst;
}

inline std::vector<double> uniform_values(std::size_t n, tearth::Rng& rng, double lo = -2.0, double hi = 2.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

// Naive triple-loop product, row-major.
inline std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                        std::size_t k, std::size_t n) {
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t t = 0; t < k; ++t) c[i * n + j] += a[i * k + t] * b[t * n + j];
    return c;
}

// Angular loss written out directly from its definition with a
// floored modulo, independent of the library's wrapped_difference.
inline double direct_angular_term(double pred, double truth, double period) {
    const double x = pred - truth + period / 2.0;
    const double m = x - period * std::floor(x / period);
    const double w = (m - period / 2.0) / (period / 2.0);
    return w * w;
}

// Wilson-Hilferty approximation of the chi-square upper tail.
inline double chi_square_upper_tail(double stat, double dof) {
    const double z = (std::cbrt(stat / dof) - (1.0 - 2.0 / (9.0 * dof))) / std::sqrt(2.0 / (9.0 * dof));
    return 0.5 * std::erfc(z / std::sqrt(2.0));
}

}  // namespace oracle
