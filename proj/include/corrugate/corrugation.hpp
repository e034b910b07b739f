#pragma once

#include <cmath>
#include <sstream>

#include "corrugate/field.hpp"

namespace corrugate {

// Corrugation pair
//   Gamma1(s,t) = (s/pi) sin(2 pi t),   Gamma2(s,t) = -(s^2/4pi) sin(4 pi t)
// with the defining relation  dt Gamma2 + 1/2 |dt Gamma1|^2 = s^2.
// All partial derivatives are closed forms; nothing here differentiates
// numerically.
inline double gamma1(double s, double t, int ds = 0, int dt = 0) {
    if (ds < 0 || ds > 1 || dt < 0 || dt > 3)
        throw ConfigError("gamma1: unsupported derivative order");
    double sfac = (ds == 0) ? s / pi : 1.0 / pi;
    double phase = two_pi * t + dt * (pi / 2.0);
    return sfac * std::pow(two_pi, dt) * std::sin(phase);
}

inline double gamma2(double s, double t, int ds = 0, int dt = 0) {
    if (ds < 0 || ds > 2 || dt < 0 || dt > 3)
        throw ConfigError("gamma2: unsupported derivative order");
    double sfac = (ds == 0) ? -s * s / (4.0 * pi) : (ds == 1) ? -s / (2.0 * pi) : -1.0 / (2.0 * pi);
    double phase = 2.0 * two_pi * t + dt * (pi / 2.0);
    return sfac * std::pow(2.0 * two_pi, dt) * std::sin(phase);
}

struct CorrugationParams {
    const ScalarField* a = nullptr; // amplitude field, >= 0
    std::array<double, 3> xi{1, 0, 0};
    double mu = 1.0;
    double phase = 0.0;             // extra phase in the oscillation argument
    int points_per_period = 16;
};

inline void check_resolution(const Grid& g, double mu, int ppp) {
    if (g.h * mu * ppp > 1.0 + 1e-12) {
        std::ostringstream os;
        os.precision(6);
        os << "frequency exceeds grid: mu=" << mu << " h=" << g.h
           << " needs " << ppp << " points per period";
        throw StageError(os.str());
    }
}

// One corrugation step:
//   v' = v + (1/mu) Gamma1(a, mu x.xi)
//   w' = w - (1/mu) Gamma1(a, mu x.xi) grad v + (1/mu) Gamma2(a, mu x.xi) xi
// Where a == 0 the update adds exact zeros, leaving bits untouched.
inline std::pair<ScalarField, VectorField> step(const ScalarField& v, const VectorField& w,
                                                const CorrugationParams& p) {
    const Grid& g = *v.grid;
    check_resolution(g, p.mu, p.points_per_period);
    VectorField gv = gradient(v);
    ScalarField v1 = v;
    VectorField w1 = w;
    const double* a = p.a->plane(0);
    double inv_mu = 1.0 / p.mu;
    parallel_for(g.size(), [&](std::size_t i) {
        Vec x = g.point(i);
        double t = p.phase;
        for (int d = 0; d < g.n; ++d) t += p.mu * x[d] * p.xi[d];
        double g1 = gamma1(a[i], t);
        double g2 = gamma2(a[i], t);
        v1[i] += inv_mu * g1;
        for (int d = 0; d < g.n; ++d)
            w1.at(d, i) += -inv_mu * g1 * gv.at(d, i) + inv_mu * g2 * p.xi[d];
    });
    return {std::move(v1), std::move(w1)};
}

// Analytic per-step error matrix of the one stage induction proof:
//   E = (1/mu) Gamma1 Hess(v)
//     - (1/mu) [ds Gamma2 + ds Gamma1 dt Gamma1] sym(grad a (x) xi)
//     - (1/(2 mu^2)) |ds Gamma1|^2 grad a (x) grad a,
// evaluated on the pre-step fields.
inline SymMatrixField step_error(const ScalarField& v, const CorrugationParams& p) {
    const Grid& g = *v.grid;
    SymMatrixField hv = hessian(v);
    VectorField ga = gradient(*p.a);
    SymMatrixField err(g);
    const double* a = p.a->plane(0);
    double inv_mu = 1.0 / p.mu;
    parallel_for(g.size(), [&](std::size_t i) {
        Vec x = g.point(i);
        double t = p.phase;
        for (int d = 0; d < g.n; ++d) t += p.mu * x[d] * p.xi[d];
        double s = a[i];
        double g1 = gamma1(s, t);
        double g1s = gamma1(s, t, 1, 0);
        double g1t = gamma1(s, t, 0, 1);
        double g2s = gamma2(s, t, 1, 0);
        double coef = g2s + g1s * g1t;
        for (int d = 0; d < g.n; ++d)
            for (int e = d; e < g.n; ++e) {
                double sym_ax = 0.5 * (ga.at(d, i) * p.xi[e] + ga.at(e, i) * p.xi[d]);
                double val = inv_mu * g1 * hv.at(sym_index(g.n, d, e), i)
                           - inv_mu * coef * sym_ax
                           - 0.5 * inv_mu * inv_mu * g1s * g1s * ga.at(d, i) * ga.at(e, i);
                err.at(sym_index(g.n, d, e), i) = val;
            }
    });
    return err;
}

} // namespace corrugate
