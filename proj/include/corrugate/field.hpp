#pragma once

#include <cstring>
#include <utility>
#include <vector>

#include "corrugate/grid.hpp"
#include "corrugate/parallel.hpp"

namespace corrugate {

// Symmetric matrices are stored as upper-triangle component planes:
// n=2: (00,11,01); n=3: (00,11,22,01,02,12).
inline int sym_components(int n) { return n * (n + 1) / 2; }

inline int sym_index(int n, int i, int j) {
    if (i > j) std::swap(i, j);
    if (i == j) return i;
    if (n == 2) return 2;
    // n == 3: (0,1)->3 (0,2)->4 (1,2)->5
    return 2 + i + j;
}

// Component-major storage (SoA): comp plane c occupies [c*npts, (c+1)*npts).
struct FieldBase {
    const Grid* grid = nullptr;
    int comps = 1;
    std::vector<double> data;

    FieldBase() = default;
    FieldBase(const Grid& g, int c) : grid(&g), comps(c), data(g.size() * c, 0.0) {}

    std::size_t points() const { return grid ? grid->size() : 0; }
    double* plane(int c) { return data.data() + static_cast<std::size_t>(c) * points(); }
    const double* plane(int c) const { return data.data() + static_cast<std::size_t>(c) * points(); }
    double& at(int c, std::size_t i) { return data[static_cast<std::size_t>(c) * points() + i]; }
    double at(int c, std::size_t i) const { return data[static_cast<std::size_t>(c) * points() + i]; }
};

struct ScalarField : FieldBase {
    ScalarField() = default;
    explicit ScalarField(const Grid& g) : FieldBase(g, 1) {}
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }
};

struct VectorField : FieldBase {
    VectorField() = default;
    explicit VectorField(const Grid& g) : FieldBase(g, g.n) {}
};

struct SymMatrixField : FieldBase {
    SymMatrixField() = default;
    explicit SymMatrixField(const Grid& g) : FieldBase(g, sym_components(g.n)) {}
    double entry(std::size_t i, int r, int c) const { return at(sym_index(grid->n, r, c), i); }
};

// ---------------------------------------------------------------------------
// finite-difference stencils (second order, one-sided at the pad edge)

struct Stencil3 {
    int off[3];
    double w[3];
};

inline Stencil3 d1_stencil(int c, int len, double h) {
    if (c == 0) return {{0, 1, 2}, {-1.5 / h, 2.0 / h, -0.5 / h}};
    if (c == len - 1) return {{0, -1, -2}, {1.5 / h, -2.0 / h, 0.5 / h}};
    return {{-1, 0, 1}, {-0.5 / h, 0.0, 0.5 / h}};
}

struct Stencil4 {
    int off[4];
    double w[4];
    int count;
};

inline Stencil4 d2_stencil(int c, int len, double h) {
    double h2 = h * h;
    if (c == 0) return {{0, 1, 2, 3}, {2.0 / h2, -5.0 / h2, 4.0 / h2, -1.0 / h2}, 4};
    if (c == len - 1) return {{0, -1, -2, -3}, {2.0 / h2, -5.0 / h2, 4.0 / h2, -1.0 / h2}, 4};
    return {{-1, 0, 1, 0}, {1.0 / h2, -2.0 / h2, 1.0 / h2, 0.0}, 3};
}

namespace detail {

inline double deriv1(const Grid& g, const double* f, const std::array<int, 3>& c,
                     std::size_t idx, int d) {
    Stencil3 s = d1_stencil(c[d], g.shape[d], g.h);
    std::size_t str = g.stride(d);
    double v = 0.0;
    for (int k = 0; k < 3; ++k)
        if (s.w[k] != 0.0)
            v += s.w[k] * f[idx + static_cast<std::ptrdiff_t>(s.off[k]) * static_cast<std::ptrdiff_t>(str)];
    return v;
}

inline double deriv2(const Grid& g, const double* f, const std::array<int, 3>& c,
                     std::size_t idx, int d) {
    Stencil4 s = d2_stencil(c[d], g.shape[d], g.h);
    std::size_t str = g.stride(d);
    double v = 0.0;
    for (int k = 0; k < s.count; ++k)
        v += s.w[k] * f[idx + static_cast<std::ptrdiff_t>(s.off[k]) * static_cast<std::ptrdiff_t>(str)];
    return v;
}

inline double deriv_mixed(const Grid& g, const double* f, const std::array<int, 3>& c,
                          std::size_t idx, int d, int e) {
    Stencil3 sd = d1_stencil(c[d], g.shape[d], g.h);
    Stencil3 se = d1_stencil(c[e], g.shape[e], g.h);
    std::ptrdiff_t strd = static_cast<std::ptrdiff_t>(g.stride(d));
    std::ptrdiff_t stre = static_cast<std::ptrdiff_t>(g.stride(e));
    double v = 0.0;
    for (int a = 0; a < 3; ++a) {
        if (sd.w[a] == 0.0) continue;
        for (int b = 0; b < 3; ++b) {
            if (se.w[b] == 0.0) continue;
            v += sd.w[a] * se.w[b] * f[idx + sd.off[a] * strd + se.off[b] * stre];
        }
    }
    return v;
}

} // namespace detail

inline VectorField gradient(const ScalarField& f) {
    const Grid& g = *f.grid;
    VectorField out(g);
    parallel_for(g.size(), [&](std::size_t i) {
        auto c = g.coords(i);
        for (int d = 0; d < g.n; ++d)
            out.at(d, i) = detail::deriv1(g, f.plane(0), c, i, d);
    });
    return out;
}

inline SymMatrixField hessian(const ScalarField& f) {
    const Grid& g = *f.grid;
    SymMatrixField out(g);
    parallel_for(g.size(), [&](std::size_t i) {
        auto c = g.coords(i);
        for (int d = 0; d < g.n; ++d)
            out.at(sym_index(g.n, d, d), i) = detail::deriv2(g, f.plane(0), c, i, d);
        for (int d = 0; d < g.n; ++d)
            for (int e = d + 1; e < g.n; ++e)
                out.at(sym_index(g.n, d, e), i) = detail::deriv_mixed(g, f.plane(0), c, i, d, e);
    });
    return out;
}

inline SymMatrixField sym_grad(const VectorField& w) {
    const Grid& g = *w.grid;
    SymMatrixField out(g);
    parallel_for(g.size(), [&](std::size_t i) {
        auto c = g.coords(i);
        for (int d = 0; d < g.n; ++d)
            for (int e = d; e < g.n; ++e) {
                double de = detail::deriv1(g, w.plane(e), c, i, d);
                double ed = detail::deriv1(g, w.plane(d), c, i, e);
                out.at(sym_index(g.n, d, e), i) = 0.5 * (de + ed);
            }
    });
    return out;
}

inline ScalarField laplacian(const ScalarField& f) {
    const Grid& g = *f.grid;
    ScalarField out(g);
    parallel_for(g.size(), [&](std::size_t i) {
        auto c = g.coords(i);
        double v = 0.0;
        for (int d = 0; d < g.n; ++d) v += detail::deriv2(g, f.plane(0), c, i, d);
        out[i] = v;
    });
    return out;
}

// ½ v ⊗ v from a vector field (pointwise outer product, symmetric).
inline SymMatrixField half_outer(const VectorField& v) {
    const Grid& g = *v.grid;
    SymMatrixField out(g);
    parallel_for(g.size(), [&](std::size_t i) {
        for (int d = 0; d < g.n; ++d)
            for (int e = d; e < g.n; ++e)
                out.at(sym_index(g.n, d, e), i) = 0.5 * v.at(d, i) * v.at(e, i);
    });
    return out;
}

// sym(u ⊗ v) pointwise.
inline SymMatrixField sym_outer(const VectorField& u, const VectorField& v) {
    const Grid& g = *u.grid;
    SymMatrixField out(g);
    parallel_for(g.size(), [&](std::size_t i) {
        for (int d = 0; d < g.n; ++d)
            for (int e = d; e < g.n; ++e)
                out.at(sym_index(g.n, d, e), i) =
                    0.5 * (u.at(d, i) * v.at(e, i) + u.at(e, i) * v.at(d, i));
    });
    return out;
}

template <class FieldT>
FieldT axpy(double alpha, const FieldT& x, const FieldT& y) { // alpha*x + y
    FieldT out = y;
    parallel_for(out.data.size(), [&](std::size_t i) { out.data[i] += alpha * x.data[i]; });
    return out;
}

template <class FieldT>
void scale_inplace(FieldT& x, double alpha) {
    parallel_for(x.data.size(), [&](std::size_t i) { x.data[i] *= alpha; });
}

// Adds s*Id to a symmetric matrix field (s constant or per-point scalar field).
inline void add_identity_inplace(SymMatrixField& m, double s) {
    const Grid& g = *m.grid;
    for (int d = 0; d < g.n; ++d) {
        double* p = m.plane(sym_index(g.n, d, d));
        parallel_for(g.size(), [&](std::size_t i) { p[i] += s; });
    }
}

inline void add_identity_inplace(SymMatrixField& m, const ScalarField& s) {
    const Grid& g = *m.grid;
    for (int d = 0; d < g.n; ++d) {
        double* p = m.plane(sym_index(g.n, d, d));
        const double* q = s.plane(0);
        parallel_for(g.size(), [&](std::size_t i) { p[i] += q[i]; });
    }
}

} // namespace corrugate
