#pragma once

#include <array>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "corrugate/field.hpp"

namespace corrugate {

// Small dense symmetric-matrix helpers for dimensions up to 4 (N* up to 10).
inline constexpr int kMaxDim = 4;

struct SmallSym {
    int n = 2;
    std::array<double, 10> v{}; // upper triangle, diagonal first then off-diag

    static int comp_count(int n) { return n * (n + 1) / 2; }

    static int comp_index(int n, int i, int j) {
        if (i > j) std::swap(i, j);
        if (i == j) return i;
        // off-diagonals in lexicographic order after the n diagonal slots
        int k = n;
        for (int a = 0; a < n; ++a)
            for (int b = a + 1; b < n; ++b) {
                if (a == i && b == j) return k;
                ++k;
            }
        return -1;
    }

    double get(int i, int j) const { return v[comp_index(n, i, j)]; }
    void set(int i, int j, double x) { v[comp_index(n, i, j)] = x; }

    static SmallSym identity(int n) {
        SmallSym m;
        m.n = n;
        for (int i = 0; i < n; ++i) m.set(i, i, 1.0);
        return m;
    }

    double sup() const { // entrywise sup norm over the full matrix
        double m = 0.0;
        for (int k = 0; k < comp_count(n); ++k) m = std::max(m, std::fabs(v[k]));
        return m;
    }
};

// Dense LU solve with partial pivoting for the N* x N* coefficient map.
struct SmallLU {
    int m = 0;
    std::vector<double> lu;
    std::vector<int> piv;
    bool singular = false;

    explicit SmallLU(std::vector<double> a, int dim) : m(dim), lu(std::move(a)), piv(dim) {
        for (int i = 0; i < m; ++i) piv[i] = i;
        for (int k = 0; k < m; ++k) {
            int p = k;
            double best = std::fabs(lu[k * m + k]);
            for (int i = k + 1; i < m; ++i) {
                double v = std::fabs(lu[i * m + k]);
                if (v > best) { best = v; p = i; }
            }
            if (best < 1e-14) { singular = true; return; }
            if (p != k) {
                for (int j = 0; j < m; ++j) std::swap(lu[k * m + j], lu[p * m + j]);
                std::swap(piv[k], piv[p]);
            }
            for (int i = k + 1; i < m; ++i) {
                lu[i * m + k] /= lu[k * m + k];
                double f = lu[i * m + k];
                for (int j = k + 1; j < m; ++j) lu[i * m + j] -= f * lu[k * m + j];
            }
        }
    }

    void solve(const double* b, double* x) const {
        std::vector<double> y(m);
        for (int i = 0; i < m; ++i) y[i] = b[piv[i]];
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < i; ++j) y[i] -= lu[i * m + j] * y[j];
        for (int i = m - 1; i >= 0; --i) {
            for (int j = i + 1; j < m; ++j) y[i] -= lu[i * m + j] * y[j];
            y[i] /= lu[i * m + i];
        }
        for (int i = 0; i < m; ++i) x[i] = y[i];
    }
};

// Frame of N* = n(n+1)/2 unit directions whose rank-one outer products span
// the symmetric matrices, with the inverse coefficient map and certified
// positivity constants: any D with ||D - Id||_0 <= sigma_star decomposes as
// sum d_i^2 xi_i (x) xi_i with d_i in [c_star, C_star].
struct Frame {
    int n = 2;
    int N_star = 3;
    std::vector<std::array<double, kMaxDim>> xis;
    std::vector<double> T;      // map matrix: column i = components of xi_i (x) xi_i
    std::vector<double> T_inv;  // explicit inverse (row-major N* x N*)
    std::vector<double> c_id;   // coefficients of the identity
    double sigma_star = 0.0;
    double c_star = 0.0;
    double C_star = 0.0;
    double cond = 0.0;          // infinity-norm condition estimate
    double T_inv_norm = 0.0;    // operator norm wrt entrywise sup
    std::uint64_t seed = 0;

    std::string to_text() const {
        std::ostringstream os;
        os.precision(12);
        os << "frame n=" << n << " N*=" << N_star << " seed=" << seed << "\n";
        for (int i = 0; i < N_star; ++i) {
            os << "  xi_" << i << " = (";
            for (int d = 0; d < n; ++d) os << (d ? ", " : "") << xis[i][d];
            os << ")  c_id=" << c_id[i] << "\n";
        }
        os << "  sigma*=" << sigma_star << " c*=" << c_star << " C*=" << C_star
           << " cond=" << cond << "\n";
        return os.str();
    }
};

namespace detail {

inline std::vector<double> frame_map_matrix(const std::vector<std::array<double, kMaxDim>>& xis, int n) {
    int m = SmallSym::comp_count(n);
    std::vector<double> T(static_cast<std::size_t>(m) * m, 0.0);
    for (int i = 0; i < m; ++i) {
        SmallSym outer;
        outer.n = n;
        for (int a = 0; a < n; ++a)
            for (int b = a; b < n; ++b) outer.set(a, b, xis[i][a] * xis[i][b]);
        for (int r = 0; r < m; ++r) T[static_cast<std::size_t>(r) * m + i] = outer.v[r];
    }
    return T;
}

inline double inf_norm(const std::vector<double>& a, int m) {
    double best = 0.0;
    for (int r = 0; r < m; ++r) {
        double s = 0.0;
        for (int c = 0; c < m; ++c) s += std::fabs(a[static_cast<std::size_t>(r) * m + c]);
        best = std::max(best, s);
    }
    return best;
}

inline bool try_build(Frame& f) {
    int m = f.N_star;
    f.T = frame_map_matrix(f.xis, f.n);
    SmallLU lu(f.T, m);
    if (lu.singular) return false;
    // explicit inverse, column by column
    f.T_inv.assign(static_cast<std::size_t>(m) * m, 0.0);
    std::vector<double> e(m, 0.0), x(m, 0.0);
    for (int c = 0; c < m; ++c) {
        std::fill(e.begin(), e.end(), 0.0);
        e[c] = 1.0;
        lu.solve(e.data(), x.data());
        for (int r = 0; r < m; ++r) f.T_inv[static_cast<std::size_t>(r) * m + c] = x[r];
    }
    f.cond = inf_norm(f.T, m) * inf_norm(f.T_inv, m);
    if (!(f.cond <= 1e3)) return false;

    SmallSym id = SmallSym::identity(f.n);
    f.c_id.assign(m, 0.0);
    lu.solve(id.v.data(), f.c_id.data());
    double cmin = 1e300, cmax = -1e300;
    for (double ci : f.c_id) {
        cmin = std::min(cmin, ci);
        cmax = std::max(cmax, ci);
    }
    if (!(cmin > 1e-6)) return false;

    // ||T_inv|| as operator norm from (Sym, entrywise sup) to (R^{N*}, sup):
    // max row abs sum over the upper-triangle component coordinates.
    double opn = 0.0;
    for (int r = 0; r < m; ++r) {
        double s = 0.0;
        for (int c = 0; c < m; ++c)
            s += std::fabs(f.T_inv[static_cast<std::size_t>(r) * m + c]);
        opn = std::max(opn, s);
    }
    f.T_inv_norm = opn;
    f.sigma_star = std::min(cmin / (2.0 * opn), 0.4999);
    f.c_star = std::sqrt(cmin / 2.0);
    f.C_star = std::sqrt(cmax + f.sigma_star * opn);
    return true;
}

} // namespace detail

// Equiangular 2-D frame at angles {0, 60, 120} degrees, optionally rotated by
// a seed-derived angle (rotations preserve every frame constant).
inline Frame build_frame(int n, std::uint64_t seed = 0) {
    if (n < 2 || n > kMaxDim) throw ConfigError("frame dimension must be in [2,4]");
    Frame f;
    f.n = n;
    f.N_star = n * (n + 1) / 2;
    f.seed = seed;
    if (n == 2) {
        double rot = 0.0;
        if (seed != 0) {
            std::mt19937_64 eng(seed);
            std::uniform_real_distribution<double> uni(0.0, pi / 3.0);
            rot = uni(eng);
        }
        for (int i = 0; i < 3; ++i) {
            double ang = rot + i * pi / 3.0;
            f.xis.push_back({std::cos(ang), std::sin(ang), 0.0, 0.0});
        }
        if (!detail::try_build(f)) throw StageError("equiangular frame construction failed");
        return f;
    }
    std::mt19937_64 eng(seed ^ 0x9e3779b97f4a7c15ull);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int max_retries = 20000;
    double best_cond = 1e300;
    for (int attempt = 0; attempt < max_retries; ++attempt) {
        f.xis.assign(f.N_star, {0, 0, 0, 0});
        for (int i = 0; i < f.N_star; ++i) {
            double norm = 0.0;
            do {
                norm = 0.0;
                for (int d = 0; d < n; ++d) {
                    f.xis[i][d] = gauss(eng);
                    norm += f.xis[i][d] * f.xis[i][d];
                }
                norm = std::sqrt(norm);
            } while (norm < 1e-8);
            for (int d = 0; d < n; ++d) f.xis[i][d] /= norm;
        }
        if (detail::try_build(f)) return f;
        best_cond = std::min(best_cond, f.cond);
    }
    std::ostringstream os;
    os << "no admissible frame after " << max_retries
       << " retries (best condition number " << best_cond << ")";
    throw StageError(os.str());
}

// Coefficients of Lemma 3.2: c = c_id + T_inv (D - Id). Requires
// ||D - Id||_0 <= sigma_star; then c_i in [c_star^2, C_star^2].
inline std::vector<double> decompose_coeffs(const Frame& f, const SmallSym& d) {
    SmallSym dev = d;
    for (int i = 0; i < f.n; ++i) dev.set(i, i, dev.get(i, i) - 1.0);
    if (dev.sup() > f.sigma_star * (1.0 + 1e-12))
        throw StageError("decompose: matrix outside sigma_star ball");
    int m = f.N_star;
    std::vector<double> c(f.c_id);
    for (int r = 0; r < m; ++r) {
        double acc = 0.0;
        for (int col = 0; col < m; ++col)
            acc += f.T_inv[static_cast<std::size_t>(r) * m + col] * dev.v[col];
        c[r] += acc;
    }
    return c;
}

inline std::vector<double> decompose(const Frame& f, const SmallSym& d) {
    std::vector<double> c = decompose_coeffs(f, d);
    for (double& ci : c) {
        if (!(ci > 0.0)) throw StageError("decompose: nonpositive coefficient");
        ci = std::sqrt(ci);
    }
    return c;
}

// Reassemble sum d_i^2 xi_i (x) xi_i (test oracle support).
inline SmallSym reassemble(const Frame& f, const std::vector<double>& d) {
    SmallSym m;
    m.n = f.n;
    for (int i = 0; i < f.N_star; ++i)
        for (int a = 0; a < f.n; ++a)
            for (int b = a; b < f.n; ++b)
                m.set(a, b, m.get(a, b) + d[i] * d[i] * f.xis[i][a] * f.xis[i][b]);
    return m;
}

// Pointwise field decomposition of M = D / scale against the frame; writes
// amplitude fields a_i = sqrt(scale * c_i). `scale` may vary per point; points
// where scale <= 0 get zero amplitudes (outside the active set). The ball
// check applies on `check` region points with scale > 0.
inline std::vector<ScalarField> decompose_field(const Frame& f, const SymMatrixField& D,
                                                const ScalarField& scale, Region check) {
    const Grid& g = *D.grid;
    if (g.n != f.n) throw ConfigError("frame/grid dimension mismatch");
    int m = f.N_star;
    std::vector<ScalarField> amps(m, ScalarField(g));
    std::vector<double*> ap(m);
    for (int i = 0; i < m; ++i) ap[i] = amps[i].plane(0);

    double worst = parallel_max(g.size(), [&](std::size_t p) {
        double s = scale[p];
        if (!(s > 0.0)) {
            for (int i = 0; i < m; ++i) ap[i][p] = 0.0;
            return 0.0;
        }
        // deviation components of D/s - Id in SmallSym order
        double dev[10];
        for (int d = 0; d < g.n; ++d) dev[d] = D.at(sym_index(g.n, d, d), p) / s - 1.0;
        int k = g.n;
        for (int a = 0; a < g.n; ++a)
            for (int b = a + 1; b < g.n; ++b) dev[k++] = D.at(sym_index(g.n, a, b), p) / s;
        double nm = 0.0;
        for (int c = 0; c < m; ++c) nm = std::max(nm, std::fabs(dev[c]));
        for (int i = 0; i < m; ++i) {
            double ci = f.c_id[i];
            for (int c = 0; c < m; ++c)
                ci += f.T_inv[static_cast<std::size_t>(i) * m + c] * dev[c];
            ap[i][p] = (ci > 0.0) ? std::sqrt(s * ci) : 0.0;
        }
        return g.in_region(p, check) ? nm : 0.0;
    });
    if (worst > f.sigma_star * (1.0 + 1e-12)) {
        std::ostringstream os;
        os.precision(6);
        os << "decompose: field outside sigma_star ball (worst deviation " << worst
           << " > sigma* " << f.sigma_star << ")";
        throw StageError(os.str());
    }
    return amps;
}

} // namespace corrugate
