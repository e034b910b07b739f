#pragma once

#include <cmath>

#include "corrugate/field.hpp"

namespace corrugate {

inline double sup_norm(const FieldBase& f, Region r = Region::all) {
    const Grid& g = *f.grid;
    double m = 0.0;
    for (int c = 0; c < f.comps; ++c) {
        const double* p = f.plane(c);
        double mc = parallel_max(g.size(), [&](std::size_t i) {
            return g.in_region(i, r) ? std::fabs(p[i]) : 0.0;
        });
        m = std::max(m, mc);
    }
    return m;
}

// [f]_k = sup over region of the k-th derivative tensor (max component).
inline double deriv_sup(const FieldBase& f, int order, Region r = Region::all) {
    const Grid& g = *f.grid;
    if (order == 0) return sup_norm(f, r);
    double m = 0.0;
    for (int c = 0; c < f.comps; ++c) {
        const double* p = f.plane(c);
        if (order == 1) {
            for (int d = 0; d < g.n; ++d) {
                double mc = parallel_max(g.size(), [&](std::size_t i) {
                    if (!g.in_region(i, r)) return 0.0;
                    auto cc = g.coords(i);
                    return std::fabs(detail::deriv1(g, p, cc, i, d));
                });
                m = std::max(m, mc);
            }
        } else if (order == 2) {
            for (int d = 0; d < g.n; ++d)
                for (int e = d; e < g.n; ++e) {
                    double mc = parallel_max(g.size(), [&](std::size_t i) {
                        if (!g.in_region(i, r)) return 0.0;
                        auto cc = g.coords(i);
                        double v = (d == e) ? detail::deriv2(g, p, cc, i, d)
                                            : detail::deriv_mixed(g, p, cc, i, d, e);
                        return std::fabs(v);
                    });
                    m = std::max(m, mc);
                }
        } else {
            throw ConfigError("deriv_sup supports orders 0..2");
        }
    }
    return m;
}

// Hölder norm ||f||_k = sum of derivative sups up to order k.
inline double holder_norm(const FieldBase& f, int k, Region r = Region::all) {
    double s = 0.0;
    for (int j = 0; j <= k; ++j) s += deriv_sup(f, j, r);
    return s;
}

// Seminorm [∇^k f]_{0,beta} estimated over axis and diagonal point pairs at
// dyadic separations 2^j h.
inline double holder_seminorm(const FieldBase& f, int k, double beta, Region r = Region::all) {
    if (k < 0 || k > 1) throw ConfigError("holder_seminorm supports k in {0,1}");
    if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("holder exponent must be in (0,1]");
    const Grid& g = *f.grid;

    // materialize the order-k derivative components
    std::vector<std::vector<double>> planes;
    for (int c = 0; c < f.comps; ++c) {
        if (k == 0) {
            planes.emplace_back(f.plane(c), f.plane(c) + g.size());
        } else {
            for (int d = 0; d < g.n; ++d) {
                std::vector<double> pl(g.size());
                const double* p = f.plane(c);
                parallel_for(g.size(), [&](std::size_t i) {
                    auto cc = g.coords(i);
                    pl[i] = detail::deriv1(g, p, cc, i, d);
                });
                planes.push_back(std::move(pl));
            }
        }
    }

    // displacement directions: axes plus 2-axis diagonals
    std::vector<std::array<int, 3>> dirs;
    for (int d = 0; d < g.n; ++d) {
        std::array<int, 3> v{0, 0, 0};
        v[d] = 1;
        dirs.push_back(v);
    }
    for (int d = 0; d < g.n; ++d)
        for (int e = d + 1; e < g.n; ++e) {
            std::array<int, 3> v{0, 0, 0};
            v[d] = 1;
            v[e] = 1;
            dirs.push_back(v);
        }

    int min_shape = g.shape[0];
    for (int d = 1; d < g.n; ++d) min_shape = std::min(min_shape, g.shape[d]);

    double best = 0.0;
    for (const auto& dir : dirs) {
        double dir_len = 0.0;
        for (int d = 0; d < g.n; ++d) dir_len += static_cast<double>(dir[d]) * dir[d];
        dir_len = std::sqrt(dir_len) * g.h;
        for (int step = 1; step <= min_shape / 2; step *= 2) {
            double sep = dir_len * step;
            std::ptrdiff_t delta = 0;
            for (int d = 0; d < g.n; ++d)
                delta += static_cast<std::ptrdiff_t>(dir[d]) * step *
                         static_cast<std::ptrdiff_t>(g.stride(d));
            double denom = std::pow(sep, beta);
            for (const auto& pl : planes) {
                const double* p = pl.data();
                double m = parallel_max(g.size(), [&](std::size_t i) {
                    auto cc = g.coords(i);
                    for (int d = 0; d < g.n; ++d)
                        if (cc[d] + dir[d] * step >= g.shape[d]) return 0.0;
                    std::size_t j = i + static_cast<std::size_t>(delta);
                    if (!g.in_region(i, r) || !g.in_region(j, r)) return 0.0;
                    return std::fabs(p[j] - p[i]);
                });
                best = std::max(best, m / denom);
            }
        }
    }
    return best;
}

} // namespace corrugate
