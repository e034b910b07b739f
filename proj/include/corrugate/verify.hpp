#pragma once

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "corrugate/decomp.hpp"
#include "corrugate/field.hpp"
#include "corrugate/norms.hpp"

namespace corrugate {

// Compactly supported bump phi(x) = exp(-1/(1 - |(x-x0)/r|^2)) with analytic
// first, second and third derivatives; support must stay strictly inside
// Omega. Writing u = 1/(1-s), s = |(x-x0)/r|^2:
//   g(s)   = e^{-u}
//   g'(s)  = -g u^2
//   g''(s) =  g u^3 (u - 2)
//   g'''(s)=  g u^4 (-u^2 + 6u - 6)
struct TestFunction {
    Vec center{0.5, 0.5, 0.0};
    double radius = 0.2;

    double s_of(const Vec& x, int n) const {
        double s = 0.0;
        for (int d = 0; d < n; ++d) {
            double y = (x[d] - center[d]) / radius;
            s += y * y;
        }
        return s;
    }

    double value(const Vec& x, int n) const {
        double s = s_of(x, n);
        if (s >= 1.0) return 0.0;
        return std::exp(-1.0 / (1.0 - s));
    }

    void derivs(double s, double& g, double& g1, double& g2, double& g3) const {
        if (s >= 1.0) { g = g1 = g2 = g3 = 0.0; return; }
        double u = 1.0 / (1.0 - s);
        g = std::exp(-u);
        g1 = -g * u * u;
        g2 = g * u * u * u * (u - 2.0);
        g3 = g * u * u * u * u * (-u * u + 6.0 * u - 6.0);
    }

    Vec grad(const Vec& x, int n) const {
        double s = s_of(x, n), g, g1, g2, g3;
        derivs(s, g, g1, g2, g3);
        Vec out{0, 0, 0};
        for (int d = 0; d < n; ++d)
            out[d] = g1 * 2.0 * (x[d] - center[d]) / (radius * radius);
        return out;
    }

    SmallSym hess(const Vec& x, int n) const {
        double s = s_of(x, n), g, g1, g2, g3;
        derivs(s, g, g1, g2, g3);
        SmallSym m;
        m.n = n;
        double r2 = radius * radius;
        for (int d = 0; d < n; ++d)
            for (int e = d; e < n; ++e) {
                double yd = (x[d] - center[d]), ye = (x[e] - center[e]);
                double v = g2 * 4.0 * yd * ye / (r2 * r2);
                if (d == e) v += g1 * 2.0 / r2;
                m.set(d, e, v);
            }
        return m;
    }

    // third partial d_k d_i d_j phi (used by the divergence-free row check)
    double third(const Vec& x, int n, int k, int i, int j) const {
        double s = s_of(x, n), g, g1, g2, g3;
        derivs(s, g, g1, g2, g3);
        double r2 = radius * radius;
        double yk = (x[k] - center[k]), yi = (x[i] - center[i]), yj = (x[j] - center[j]);
        double v = g3 * 8.0 * yi * yj * yk / (r2 * r2 * r2);
        if (i == j) v += g2 * 4.0 * yk / (r2 * r2);
        if (i == k) v += g2 * 4.0 * yj / (r2 * r2);
        if (j == k) v += g2 * 4.0 * yi / (r2 * r2);
        return v;
    }
};

// sigma2^{ij}(Hess phi) = (Lap phi) delta_ij - d_ij phi, exact.
inline SmallSym sigma2_cofactor(const TestFunction& phi, const Vec& x, int n) {
    SmallSym h = phi.hess(x, n);
    double lap = 0.0;
    for (int d = 0; d < n; ++d) lap += h.get(d, d);
    SmallSym out;
    out.n = n;
    for (int d = 0; d < n; ++d)
        for (int e = d; e < n; ++e)
            out.set(d, e, (d == e ? lap : 0.0) - h.get(d, e));
    return out;
}

// Pointwise sigma2 of the discrete Hessian: (tr H)^2 - |H|_F^2 (the paper's
// convention, twice the standard elementary symmetric function).
inline ScalarField sigma2_classical(const ScalarField& v) {
    const Grid& g = *v.grid;
    SymMatrixField H = hessian(v);
    ScalarField out(g);
    parallel_for(g.size(), [&](std::size_t i) {
        double tr = 0.0, fro2 = 0.0;
        for (int d = 0; d < g.n; ++d) tr += H.at(sym_index(g.n, d, d), i);
        for (int d = 0; d < g.n; ++d)
            for (int e = 0; e < g.n; ++e) {
                double x = H.at(sym_index(g.n, d, e), i);
                fro2 += x * x;
            }
        out[i] = tr * tr - fro2;
    });
    return out;
}

// L(A) = sum_ij d_ii A_jj + d_jj A_ii - 2 d_ij A_ij = 2 Lap(tr A) - 2 divdiv A.
inline ScalarField L_operator(const SymMatrixField& A) {
    const Grid& g = *A.grid;
    ScalarField out(g);
    parallel_for(g.size(), [&](std::size_t i) {
        auto c = g.coords(i);
        double lap_tr = 0.0;
        for (int d = 0; d < g.n; ++d)
            for (int e = 0; e < g.n; ++e)
                lap_tr += detail::deriv2(g, A.plane(sym_index(g.n, e, e)), c, i, d);
        double divdiv = 0.0;
        for (int d = 0; d < g.n; ++d)
            for (int e = 0; e < g.n; ++e) {
                const double* p = A.plane(sym_index(g.n, d, e));
                divdiv += (d == e) ? detail::deriv2(g, p, c, i, d)
                                   : detail::deriv_mixed(g, p, c, i, d, e);
            }
        out[i] = 2.0 * lap_tr - 2.0 * divdiv;
    });
    return out;
}

struct ResidualEntry {
    Vec center;
    double radius;
    double lhs, rhs, abs_err, rel_err;
};

struct ResidualReport {
    std::vector<ResidualEntry> entries;
    double max_rel = 0.0, mean_rel = 0.0, max_abs = 0.0;

    void finalize() {
        max_rel = mean_rel = max_abs = 0.0;
        for (const auto& e : entries) {
            max_rel = std::max(max_rel, e.rel_err);
            max_abs = std::max(max_abs, e.abs_err);
            mean_rel += e.rel_err;
        }
        if (!entries.empty()) mean_rel /= entries.size();
    }
};

// Very weak residual of Def. 1.1:
//   -sum_ij int sigma2^{ij}(Hess phi) d_i v d_j v  vs  int f phi,
// by grid-aligned trapezoid quadrature (phi analytic, grad v discrete).
inline ResidualReport weak_residual(const ScalarField& v, const ScalarField& f,
                                    const std::vector<TestFunction>& phis) {
    const Grid& g = *v.grid;
    for (const auto& phi : phis) {
        double sd = g.signed_dist(phi.center);
        if (sd + phi.radius > -2.0 * g.h)
            throw ConfigError("test-function support touches the boundary");
    }
    VectorField gv = gradient(v);
    double hn = std::pow(g.h, g.n);
    double fscale = sup_norm(f, Region::omega);

    ResidualReport rep;
    for (const auto& phi : phis) {
        double lhs = -deterministic_sum(g.size(), [&](std::size_t i) {
            Vec x = g.point(i);
            if (phi.s_of(x, g.n) >= 1.0) return 0.0;
            SmallSym s2 = sigma2_cofactor(phi, x, g.n);
            double acc = 0.0;
            for (int d = 0; d < g.n; ++d)
                for (int e = 0; e < g.n; ++e)
                    acc += s2.get(d, e) * gv.at(d, i) * gv.at(e, i);
            return acc;
        }) * hn;
        double rhs = deterministic_sum(g.size(), [&](std::size_t i) {
            Vec x = g.point(i);
            double p = phi.value(x, g.n);
            return p > 0.0 ? f[i] * p : 0.0;
        }) * hn;
        double mass = deterministic_sum(g.size(), [&](std::size_t i) {
            return phi.value(g.point(i), g.n);
        }) * hn;
        double denom = std::max(std::fabs(rhs), std::max(fscale, 1.0) * mass);
        denom = std::max(denom, 1e-14);
        ResidualEntry e{phi.center, phi.radius, lhs, rhs, std::fabs(lhs - rhs),
                        std::fabs(lhs - rhs) / denom};
        rep.entries.push_back(e);
    }
    rep.finalize();
    return rep;
}

// Seeded bump placement: centers and radii inside Omega with margin.
inline std::vector<TestFunction> random_test_functions(const Grid& g, int count,
                                                       std::uint64_t seed) {
    std::mt19937_64 eng(seed ^ 0xdf900294d8f554a5ull);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<TestFunction> out;
    int guard = 0;
    while (static_cast<int>(out.size()) < count && guard++ < 100000) {
        TestFunction t;
        t.radius = 0.08 + 0.12 * uni(eng);
        for (int d = 0; d < g.n; ++d) {
            if (g.domain == Domain::disc)
                t.center[d] = -1.0 + 2.0 * uni(eng);
            else
                t.center[d] = uni(eng);
        }
        double sd = g.signed_dist(t.center);
        if (sd + t.radius > -4.0 * g.h - 0.02) continue;
        if (t.radius < 8.0 * g.h) continue;
        out.push_back(t);
    }
    if (static_cast<int>(out.size()) < count)
        throw ConfigError("could not place test functions inside Omega");
    return out;
}

// Deficit field A - 1/2 grad V (x) grad V - sym grad W - shift*Id and its sup.
inline std::pair<SymMatrixField, double> deficit(const SymMatrixField& A, const ScalarField& V,
                                                 const VectorField& W, double shift,
                                                 Region region = Region::omega) {
    const Grid& g = *A.grid;
    VectorField gv = gradient(V);
    SymMatrixField sw = sym_grad(W);
    SymMatrixField D = A;
    parallel_for(g.size(), [&](std::size_t i) {
        for (int d = 0; d < g.n; ++d)
            for (int e = d; e < g.n; ++e) {
                int k = sym_index(g.n, d, e);
                double val = D.at(k, i) - 0.5 * gv.at(d, i) * gv.at(e, i) - sw.at(k, i);
                if (d == e) val -= shift;
                D.at(k, i) = val;
            }
    });
    return {std::move(D), sup_norm(D, region)};
}

inline std::pair<SymMatrixField, double> deficit(const SymMatrixField& A, const ScalarField& V,
                                                 const VectorField& W, const ScalarField& shift,
                                                 Region region = Region::omega) {
    const Grid& g = *A.grid;
    VectorField gv = gradient(V);
    SymMatrixField sw = sym_grad(W);
    SymMatrixField D = A;
    parallel_for(g.size(), [&](std::size_t i) {
        for (int d = 0; d < g.n; ++d)
            for (int e = d; e < g.n; ++e) {
                int k = sym_index(g.n, d, e);
                double val = D.at(k, i) - 0.5 * gv.at(d, i) * gv.at(e, i) - sw.at(k, i);
                if (d == e) val -= shift[i];
                D.at(k, i) = val;
            }
    });
    return {std::move(D), sup_norm(D, region)};
}

} // namespace corrugate
