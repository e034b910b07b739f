#pragma once

#include <cmath>
#include <vector>

#include "corrugate/field.hpp"

namespace corrugate {

// Radial bump c_n * exp(-1/(1-|x|^2)) on the unit ball, unit total mass.
// The normalization constant comes from radial quadrature.
inline double bump_unnormalized(double r2) {
    if (r2 >= 1.0) return 0.0;
    return std::exp(-1.0 / (1.0 - r2));
}

inline double bump_normalization(int n) {
    static double cache[4] = {0, 0, 0, 0};
    if (n >= 1 && n <= 3 && cache[n] != 0.0) return cache[n];
    // integral over R^n = surf(S^{n-1}) * int_0^1 r^{n-1} e^{-1/(1-r^2)} dr
    const int m = 400000;
    double dr = 1.0 / m;
    double acc = 0.0;
    for (int i = 0; i < m; ++i) {
        double r = (i + 0.5) * dr;
        acc += std::pow(r, n - 1) * bump_unnormalized(r * r) * dr;
    }
    double surf = (n == 1) ? 2.0 : (n == 2) ? two_pi : 2.0 * two_pi;
    double c = 1.0 / (surf * acc);
    if (n >= 1 && n <= 3) cache[n] = c;
    return c;
}

// Discrete mollification kernel at length l on spacing h. Offsets cover the
// support |x| < l; weights are samples of phi_l renormalized to exact unit
// discrete mass, so constants mollify to themselves exactly.
struct Mollifier {
    int n;
    int radius; // offsets per axis in [-radius, radius]
    std::vector<double> weights;          // nonzero weights only
    std::vector<std::array<int, 3>> offs; // axis offsets per weight

    Mollifier(int dim, double l, double h) : n(dim) {
        if (l <= 0.0) throw ConfigError("mollification length must be positive");
        radius = static_cast<int>(std::floor(l / h));
        if (radius * h >= l) radius = std::max(0, radius - 1);
        double cn = bump_normalization(n);
        double total = 0.0;
        std::array<int, 3> o{0, 0, 0};
        int lo = -radius, hi = radius;
        for (int i0 = lo; i0 <= hi; ++i0) {
            o[0] = i0;
            for (int i1 = lo; i1 <= hi; ++i1) {
                o[1] = i1;
                if (n == 3) {
                    for (int i2 = lo; i2 <= hi; ++i2) {
                        o[2] = i2;
                        push(o, l, h, cn, total);
                    }
                } else {
                    push(o, l, h, cn, total);
                }
            }
        }
        if (weights.empty() || total <= 0.0) {
            weights.assign(1, 1.0);
            offs.assign(1, {0, 0, 0});
            total = 1.0;
        }
        for (double& w : weights) w /= total;
    }

    double mass() const {
        double s = 0.0;
        for (double w : weights) s += w;
        return s;
    }

  private:
    void push(const std::array<int, 3>& o, double l, double h, double cn, double& total) {
        double r2 = 0.0;
        for (int d = 0; d < n; ++d) {
            double x = o[d] * h / l;
            r2 += x * x;
        }
        double w = cn * bump_unnormalized(r2);
        if (w > 0.0) {
            weights.push_back(w);
            offs.push_back(o);
            total += w;
        }
    }
};

namespace detail {

template <class FieldT>
FieldT mollify_impl(const FieldT& f, double l) {
    const Grid& g = *f.grid;
    if (l > g.pad) throw StageError("mollification length exceeds grid pad");
    Mollifier ker(g.n, l, g.h);
    FieldT out = f;
    if (ker.radius == 0) return out;
    std::size_t nk = ker.weights.size();
    std::vector<std::ptrdiff_t> deltas(nk);
    for (std::size_t k = 0; k < nk; ++k) {
        std::ptrdiff_t d = 0;
        for (int dd = 0; dd < g.n; ++dd)
            d += static_cast<std::ptrdiff_t>(ker.offs[k][dd]) *
                 static_cast<std::ptrdiff_t>(g.stride(dd));
        deltas[k] = d;
    }
    for (int c = 0; c < f.comps; ++c) {
        const double* src = f.plane(c);
        double* dst = out.plane(c);
        parallel_for(g.size(), [&](std::size_t i) {
            auto cc = g.coords(i);
            bool inside = true;
            for (int d = 0; d < g.n; ++d)
                if (cc[d] < ker.radius || cc[d] >= g.shape[d] - ker.radius) { inside = false; break; }
            double acc = 0.0;
            if (inside) {
                const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(i);
                for (std::size_t k = 0; k < nk; ++k)
                    acc += ker.weights[k] * src[base + deltas[k]];
            } else {
                // clipped kernel near the pad edge, renormalized to unit mass
                double mass = 0.0;
                for (std::size_t k = 0; k < nk; ++k) {
                    bool ok = true;
                    for (int d = 0; d < g.n; ++d) {
                        int pos = cc[d] + ker.offs[k][d];
                        if (pos < 0 || pos >= g.shape[d]) { ok = false; break; }
                    }
                    if (!ok) continue;
                    acc += ker.weights[k] * src[static_cast<std::ptrdiff_t>(i) + deltas[k]];
                    mass += ker.weights[k];
                }
                acc /= mass;
            }
            dst[i] = acc;
        });
    }
    return out;
}

} // namespace detail

inline ScalarField mollify(const ScalarField& f, double l) { return detail::mollify_impl(f, l); }
inline VectorField mollify(const VectorField& f, double l) { return detail::mollify_impl(f, l); }
inline SymMatrixField mollify(const SymMatrixField& f, double l) { return detail::mollify_impl(f, l); }

} // namespace corrugate
