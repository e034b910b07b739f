#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

#include "corrugate/decomp.hpp"
#include "corrugate/field.hpp"
#include "corrugate/mollify.hpp"
#include "corrugate/norms.hpp"

namespace corrugate {

using BoundaryFn = std::function<double(const Vec&)>;

namespace detail {

// Discrete Dirichlet Laplacian on the Omega interior points of the grid.
// Square domains use the standard 5/7-point stencil (boundary on grid lines);
// the disc uses Shortley-Weller unequal arms against the circle |x| = 1.
struct PoissonSystem {
    const Grid* grid;
    std::vector<std::size_t> unknowns;      // grid index per unknown
    std::vector<std::ptrdiff_t> slot;       // grid index -> unknown id (-1 none)
    // per unknown and axis: arm fractions theta_minus/theta_plus in (0,1],
    // and neighbor unknown ids (-1 when the arm hits the boundary)
    struct Row {
        double theta[3][2];
        std::ptrdiff_t nb[3][2];
        double diag;
    };
    std::vector<Row> rows;
    std::vector<double> bc_term; // contribution of boundary values to rhs (for -Lap)

    PoissonSystem(const Grid& g, const BoundaryFn& bc) : grid(&g) {
        const Grid& gr = g;
        slot.assign(gr.size(), -1);
        for (std::size_t i = 0; i < gr.size(); ++i)
            if (gr.classify(i) == PointClass::interior) {
                slot[i] = static_cast<std::ptrdiff_t>(unknowns.size());
                unknowns.push_back(i);
            }
        rows.resize(unknowns.size());
        bc_term.assign(unknowns.size(), 0.0);
        double h = gr.h;
        for (std::size_t u = 0; u < unknowns.size(); ++u) {
            std::size_t i = unknowns[u];
            auto c = gr.coords(i);
            Vec x = gr.point(i);
            Row& row = rows[u];
            row.diag = 0.0;
            for (int d = 0; d < gr.n; ++d) {
                for (int s = 0; s < 2; ++s) {
                    int dir = s == 0 ? -1 : 1;
                    auto cn = c;
                    cn[d] += dir;
                    double theta = 1.0;
                    std::ptrdiff_t nb = -1;
                    bool neighbor_inside = cn[d] >= 0 && cn[d] < gr.shape[d] &&
                                           gr.classify(gr.index(cn)) == PointClass::interior;
                    if (neighbor_inside) {
                        nb = slot[gr.index(cn)];
                    } else {
                        // arm hits the boundary: find the cut fraction
                        if (gr.domain == Domain::square) {
                            double target = dir < 0 ? 0.0 : 1.0;
                            theta = std::fabs(target - x[d]) / h;
                        } else if (gr.domain == Domain::disc) {
                            // |x + t*dir*e_d| = 1, smallest t>0
                            double b = x[d] * dir;
                            double r2 = 0.0;
                            for (int dd = 0; dd < gr.n; ++dd) r2 += x[dd] * x[dd];
                            double disc = b * b + (1.0 - r2);
                            double t = -b + std::sqrt(std::max(disc, 0.0));
                            theta = t / h;
                        } else {
                            theta = 1.0; // Domain::none: treat grid edge as boundary
                        }
                        theta = std::min(1.0, std::max(theta, 1e-6));
                    }
                    row.theta[d][s] = theta;
                    row.nb[d][s] = nb;
                }
                double tm = row.theta[d][0], tp = row.theta[d][1];
                row.diag += 2.0 / (tm * tp * h * h);
            }
            // boundary contributions for rhs of (-Lap u = r): coefficient of
            // the boundary value on arm (d,s) is 2/(theta(theta_m+theta_p) h^2)
            for (int d = 0; d < gr.n; ++d)
                for (int s = 0; s < 2; ++s) {
                    if (row.nb[d][s] >= 0) continue;
                    double t = row.theta[d][s];
                    double tsum = row.theta[d][0] + row.theta[d][1];
                    double coef = 2.0 / (t * tsum * h * h);
                    int dir = s == 0 ? -1 : 1;
                    Vec xb = x;
                    xb[d] += dir * t * h;
                    bc_term[u] += coef * (bc ? bc(xb) : 0.0);
                }
        }
    }

    // y = A x  with A = -Lap (Shortley-Weller), SPD-like positive operator.
    void apply(const std::vector<double>& x, std::vector<double>& y) const {
        double h = grid->h;
        parallel_for(unknowns.size(), [&](std::size_t u) {
            const Row& row = rows[u];
            double acc = row.diag * x[u];
            for (int d = 0; d < grid->n; ++d) {
                double tm = row.theta[d][0], tp = row.theta[d][1];
                double tsum = tm + tp;
                for (int s = 0; s < 2; ++s) {
                    if (row.nb[d][s] < 0) continue;
                    double t = row.theta[d][s];
                    acc -= 2.0 / (t * tsum * h * h) * x[static_cast<std::size_t>(row.nb[d][s])];
                }
            }
            y[u] = acc;
        });
    }

    bool symmetric() const { return grid->domain == Domain::square || grid->domain == Domain::none; }
};

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    return deterministic_sum(a.size(), [&](std::size_t i) { return a[i] * b[i]; });
}

} // namespace detail

struct PoissonResult {
    ScalarField u;
    double residual = 0.0;   // final |A u - b|_inf relative to |b|_inf
    int iterations = 0;
};

// Solves coeff * Lap(u) = -rhs on Omega with Dirichlet data bc, i.e. the
// positive form (-Lap u) = rhs/coeff, to 1e-10 relative max-norm residual.
// Square domains: Jacobi-preconditioned conjugate gradients (the 5/7-point
// Laplacian is SPD there). Disc: the Shortley-Weller rows are asymmetric, so
// CG does not apply; red-black SOR on the irreducibly diagonally dominant
// M-matrix takes its place. Both paths are deterministic and matrix-free.
inline PoissonResult solve_poisson_dirichlet(const Grid& g, const ScalarField& rhs,
                                             const BoundaryFn& bc, double coeff,
                                             double tol = 1e-10, int max_iter = 0) {
    if (coeff == 0.0) throw ConfigError("poisson: coeff must be nonzero");
    detail::PoissonSystem sys(g, bc);
    std::size_t m = sys.unknowns.size();
    if (m == 0) throw ConfigError("poisson: no interior unknowns");

    std::vector<double> b(m), x(m, 0.0);
    for (std::size_t u = 0; u < m; ++u)
        b[u] = rhs[sys.unknowns[u]] / coeff + sys.bc_term[u];
    double bnorm = 0.0;
    for (double v : b) bnorm = std::max(bnorm, std::fabs(v));
    if (bnorm == 0.0) bnorm = 1.0;

    std::vector<double> Ap(m);
    auto true_residual = [&]() {
        sys.apply(x, Ap);
        double rm = 0.0;
        for (std::size_t u = 0; u < m; ++u) rm = std::max(rm, std::fabs(Ap[u] - b[u]));
        return rm / bnorm;
    };

    int it = 0;
    if (sys.symmetric()) {
        if (max_iter <= 0) max_iter = static_cast<int>(60 * std::sqrt(static_cast<double>(m)) + 2000);
        std::vector<double> r(m), p(m), z(m), diag(m);
        for (std::size_t u = 0; u < m; ++u) diag[u] = sys.rows[u].diag;
        sys.apply(x, Ap);
        for (std::size_t u = 0; u < m; ++u) r[u] = b[u] - Ap[u];
        for (std::size_t u = 0; u < m; ++u) z[u] = r[u] / diag[u];
        p = z;
        double rz = detail::dot(r, z);
        for (; it < max_iter; ++it) {
            sys.apply(p, Ap);
            double pAp = detail::dot(p, Ap);
            if (pAp <= 0.0) break;
            double alpha = rz / pAp;
            parallel_for(m, [&](std::size_t u) {
                x[u] += alpha * p[u];
                r[u] -= alpha * Ap[u];
            });
            double rmax = parallel_max(m, [&](std::size_t u) { return std::fabs(r[u]); });
            if (rmax / bnorm <= tol) { ++it; break; }
            parallel_for(m, [&](std::size_t u) { z[u] = r[u] / diag[u]; });
            double rz_new = detail::dot(r, z);
            double beta = rz_new / rz;
            rz = rz_new;
            parallel_for(m, [&](std::size_t u) { p[u] = z[u] + beta * p[u]; });
        }
    } else {
        // red-black SOR sweeps; omega from the Jacobi radius of the model problem
        int inner = static_cast<int>(std::lround(2.0 / g.h)); // disc diameter in cells
        double rho_j = std::cos(pi / std::max(8, inner));
        double omega = 2.0 / (1.0 + std::sqrt(1.0 - rho_j * rho_j));
        if (max_iter <= 0) max_iter = 40 * inner + 4000;
        std::vector<std::vector<std::size_t>> color(2);
        for (std::size_t u = 0; u < m; ++u) {
            auto c = g.coords(sys.unknowns[u]);
            int par = 0;
            for (int d = 0; d < g.n; ++d) par += c[d];
            color[par & 1].push_back(u);
        }
        double h = g.h;
        auto sweep = [&](const std::vector<std::size_t>& ids) {
            parallel_for(ids.size(), [&](std::size_t k) {
                std::size_t u = ids[k];
                const auto& row = sys.rows[u];
                double acc = b[u];
                for (int d = 0; d < g.n; ++d) {
                    double tsum = row.theta[d][0] + row.theta[d][1];
                    for (int s = 0; s < 2; ++s) {
                        if (row.nb[d][s] < 0) continue;
                        double t = row.theta[d][s];
                        acc += 2.0 / (t * tsum * h * h) * x[static_cast<std::size_t>(row.nb[d][s])];
                    }
                }
                x[u] += omega * (acc / row.diag - x[u]);
            });
        };
        for (; it < max_iter; ++it) {
            sweep(color[0]);
            sweep(color[1]);
            if (it % 32 == 31 && true_residual() <= tol) { ++it; break; }
        }
    }

    PoissonResult out{ScalarField(g), 0.0, it};
    out.residual = true_residual();
    if (out.residual > std::max(tol * 50.0, 1e-8)) {
        std::ostringstream os;
        os.precision(6);
        os << "poisson solve did not converge: relative residual " << out.residual
           << " after " << it << " iterations";
        throw StageError(os.str());
    }
    for (std::size_t u = 0; u < m; ++u) out.u[sys.unknowns[u]] = x[u];
    return out;
}

// Smooth collar cut-off: 1 on Omega (plus pad/4), 0 past 3/4 pad, quintic
// smoothstep across. Used to extend Omega data over the padded grid.
inline ScalarField collar_cutoff(const Grid& g) {
    ScalarField chi(g);
    double lo = 0.25 * g.pad, hi = 0.75 * g.pad;
    parallel_for(g.size(), [&](std::size_t i) {
        double sd = g.signed_dist(g.point(i));
        if (sd <= lo) { chi[i] = 1.0; return; }
        if (sd >= hi) { chi[i] = 0.0; return; }
        double t = (sd - lo) / (hi - lo);
        chi[i] = 1.0 - t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
    });
    return chi;
}

// Background data for the construction pipelines.
struct Background {
    ScalarField vb;     // v^b extended over the padded grid
    VectorField wb;     // w^b (zero)
    SymMatrixField A;   // solves -L(A) = f
    ScalarField psi;    // boundary mode only
    bool has_psi = false;
    double tau = 0.0;   // interior mode only
    BoundaryFn g;       // boundary data
    ScalarField u;      // interior mode Poisson solution
    ScalarField f_ext;  // f extended by the collar cutoff
    double solver_residual = 0.0;
};

// Interior pipeline: A = (u + tau) Id with -(2n-2) Lap u = f, u = 0 on the
// boundary, and tau from the scaling-trick formula
//   tau = (K + 1/sigma) (|u|_0 + |v^b|_2^2 + 100).
inline Background build_background_interior(const Grid& g, const ScalarField& f,
                                            const ScalarField& vb_init, double K, double sigma,
                                            double vb_mollify_l = 0.0) {
    Background bg;
    double coeff = 2.0 * g.n - 2.0;
    PoissonResult pr = solve_poisson_dirichlet(g, f, nullptr, coeff);
    bg.solver_residual = pr.residual;
    ScalarField chi = collar_cutoff(g);
    bg.u = ScalarField(g);
    parallel_for(g.size(), [&](std::size_t i) { bg.u[i] = pr.u[i] * chi[i]; });
    bg.vb = ScalarField(g);
    parallel_for(g.size(), [&](std::size_t i) { bg.vb[i] = vb_init[i] * chi[i]; });
    if (vb_mollify_l > 0.0) bg.vb = mollify(bg.vb, vb_mollify_l);
    bg.f_ext = ScalarField(g);
    parallel_for(g.size(), [&](std::size_t i) { bg.f_ext[i] = f[i] * chi[i]; });

    double u0 = sup_norm(bg.u, Region::core);
    double vb2 = holder_norm(bg.vb, 2, Region::core);
    bg.tau = (K + 1.0 / sigma) * (u0 + vb2 * vb2 + 100.0);

    bg.A = SymMatrixField(g);
    add_identity_inplace(bg.A, bg.u);
    add_identity_inplace(bg.A, bg.tau);
    bg.wb = VectorField(g);
    return bg;
}

// sigma2 of a constant Hessian (oracle-grade small-matrix evaluation).
inline double sigma2_matrix(const SmallSym& hess) {
    double tr = 0.0, fro2 = 0.0;
    for (int i = 0; i < hess.n; ++i) tr += hess.get(i, i);
    for (int i = 0; i < hess.n; ++i)
        for (int j = 0; j < hess.n; ++j) fro2 += hess.get(i, j) * hess.get(i, j);
    return tr * tr - fro2;
}

// Picks v^b = C (x1^2 - x2^2) with the smallest power-of-two C >= 1 such that
// f - sigma2(Hess v^b) >= margin everywhere on Omega.
struct SelectedBackground {
    ScalarField vb;
    double C = 1.0;
};

inline SelectedBackground select_background(const Grid& g, const ScalarField& f,
                                            double margin = -1.0) {
    double f0 = sup_norm(f, Region::omega);
    if (margin < 0.0) margin = 0.1 * f0 + 0.1;
    double fmin = parallel_max(g.size(), [&](std::size_t i) {
        return g.in_region(i, Region::omega) ? std::max(0.0, -f[i] + f0 + 1.0) : 0.0;
    });
    fmin = f0 + 1.0 - fmin; // min over Omega
    double C = 1.0;
    for (;;) {
        SmallSym hess;
        hess.n = g.n;
        hess.set(0, 0, 2.0 * C);
        hess.set(1, 1, -2.0 * C);
        double s2 = sigma2_matrix(hess);
        if (!(s2 < 0.0)) throw StageError("select_background: sigma2 not negative");
        if (fmin - s2 >= margin) break;
        C *= 2.0;
        if (C > 1e12) throw StageError("select_background: no admissible C");
    }
    SelectedBackground out{ScalarField(g), C};
    parallel_for(g.size(), [&](std::size_t i) {
        Vec x = g.point(i);
        out.vb[i] = C * (x[0] * x[0] - x[1] * x[1]);
    });
    return out;
}

// Dirichlet pipeline: harmonic v^b with trace g, psi solving
// -(2n-2) Lap psi = f - sigma2(Hess v^b), psi > 0 inside, and
// A = psi Id + 1/2 grad v^b (x) grad v^b.
inline Background build_background_boundary(const Grid& g, const ScalarField& f,
                                            const BoundaryFn& gbc, const ScalarField* vb_choice,
                                            double vb_mollify_l = 0.0) {
    Background bg;
    bg.g = gbc;
    double coeff = 2.0 * g.n - 2.0;
    ScalarField chi = collar_cutoff(g);

    if (vb_choice) {
        bg.vb = *vb_choice;
    } else {
        ScalarField zero_rhs(g);
        PoissonResult pr = solve_poisson_dirichlet(g, zero_rhs, gbc, 1.0);
        bg.solver_residual = pr.residual;
        bg.vb = pr.u;
        // keep the harmonic extension inside, taper only across the collar
        parallel_for(g.size(), [&](std::size_t i) { bg.vb[i] *= chi[i]; });
    }
    if (vb_mollify_l > 0.0) {
        // blend a mollified copy inside Omega, keeping boundary values intact
        ScalarField smooth = mollify(bg.vb, vb_mollify_l);
        parallel_for(g.size(), [&](std::size_t i) {
            double sd = g.signed_dist(g.point(i));
            double t = std::min(1.0, std::max(0.0, (-sd - 2.0 * vb_mollify_l) / vb_mollify_l));
            double blend = t * t * (3.0 - 2.0 * t);
            bg.vb[i] = bg.vb[i] + blend * (smooth[i] - bg.vb[i]);
        });
    }

    // rhs = f - sigma2(Hess v^b), required positive on Omega
    SymMatrixField hvb = hessian(bg.vb);
    ScalarField rhs(g);
    parallel_for(g.size(), [&](std::size_t i) {
        double tr = 0.0, fro2 = 0.0;
        for (int d = 0; d < g.n; ++d) tr += hvb.at(sym_index(g.n, d, d), i);
        for (int d = 0; d < g.n; ++d)
            for (int e = 0; e < g.n; ++e) {
                double v = hvb.at(sym_index(g.n, d, e), i);
                fro2 += v * v;
            }
        rhs[i] = f[i] - (tr * tr - fro2);
    });
    double worst = parallel_max(g.size(), [&](std::size_t i) {
        return g.in_region(i, Region::omega) ? std::max(0.0, -rhs[i] + 1e-12) : 0.0;
    });
    if (worst > 0.0)
        throw StageError("build_background_boundary: f - sigma2(Hess v^b) not positive on Omega");

    PoissonResult pp = solve_poisson_dirichlet(g, rhs, nullptr, coeff);
    bg.solver_residual = std::max(bg.solver_residual, pp.residual);
    bg.psi = ScalarField(g);
    parallel_for(g.size(), [&](std::size_t i) {
        bg.psi[i] = std::max(pp.u[i], 0.0) * (g.classify(i) == PointClass::interior ? 1.0 : 0.0);
    });
    bg.has_psi = true;
    double psi_min = 1e300;
    for (std::size_t i = 0; i < g.size(); ++i) {
        Vec x = g.point(i);
        if (g.signed_dist(x) < -8.0 * g.h) psi_min = std::min(psi_min, bg.psi[i]);
    }
    if (!(psi_min > 0.0))
        throw StageError("build_background_boundary: psi not strictly positive inside Omega");

    VectorField gvb = gradient(bg.vb);
    bg.A = half_outer(gvb);
    add_identity_inplace(bg.A, bg.psi);
    bg.wb = VectorField(g);
    bg.f_ext = ScalarField(g);
    parallel_for(g.size(), [&](std::size_t i) { bg.f_ext[i] = f[i] * chi[i]; });
    return bg;
}

} // namespace corrugate
