#pragma once

#include <chrono>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "corrugate/corrugation.hpp"
#include "corrugate/decomp.hpp"
#include "corrugate/elliptic.hpp"
#include "corrugate/io.hpp"
#include "corrugate/scheduler.hpp"
#include "corrugate/verify.hpp"

namespace corrugate {

enum class Mode : int { interior = 0, dirichlet = 1 };

struct StageSettings {
    int points_per_period = 16;
    double C_h = 10.0;          // discretization allowance constant
    std::uint64_t seed = 0;
    bool allow_desk_ladder = true; // realized-mu0 fallback when (3.19) exceeds the grid
    bool dump_stages = false;
    std::string dump_dir;
};

struct DeficitReport {
    int q = 0;                  // stage produced state q
    double norm1 = 0, norm2 = 0, delta_norm1 = 0;
    double bound1 = 0, bound2 = 0;
    double deficit_sup = 0, deficit_bound = 0;
    double eps_h = 0;
    double ball_radius = 0;     // worst ||D~/scale - Id|| seen by the decomposition
    double moll_length = 0;
    double mu_start = 0, mu_top = 0;
    bool ladder_fallback = false;
    bool pass1 = false, pass2 = false, passD = false;
    double seconds = 0;
    std::string note;

    std::string json_line() const {
        std::ostringstream os;
        os.precision(10);
        os << "{\"q\":" << q << ",\"norm1\":" << norm1 << ",\"norm2\":" << norm2
           << ",\"delta_norm1\":" << delta_norm1 << ",\"bound1\":" << bound1
           << ",\"bound2\":" << bound2 << ",\"deficit\":" << deficit_sup
           << ",\"bound\":" << deficit_bound << ",\"eps_h\":" << eps_h
           << ",\"margin\":" << (deficit_bound + eps_h - deficit_sup)
           << ",\"ball\":" << ball_radius << ",\"l\":" << moll_length
           << ",\"mu_start\":" << mu_start << ",\"mu_top\":" << mu_top
           << ",\"ladder_fallback\":" << (ladder_fallback ? "true" : "false")
           << ",\"pass\":[" << pass1 << "," << pass2 << "," << passD << "]"
           << ",\"seconds\":" << seconds;
        if (!note.empty()) os << ",\"note\":\"" << note << "\"";
        os << "}";
        return os.str();
    }
};

// Per-stage cut-off data of the Dirichlet pipeline.
struct CutoffData {
    ScalarField eta;      // stage cut-off: 1 on {psi >= 5/4 d_{q+1}}, 0 on {psi <= d_{q+1}}
    ScalarField eta_q2;   // subordinate to Omega_{q+2} in Omega~_{q+2}
    ScalarField psi_next; // psi_{q+2} truncation
    double grad_eta_sup = 0.0;
};

struct State {
    Mode mode = Mode::interior;
    int q = 0;
    ScalarField V;
    VectorField W;
    SymMatrixField A;      // deficit reference (rescaled A-bar in interior mode)
    ScalarField shift;     // current shift field: delta_{q+1} constant or psi_{q+1}
    Background bg;
    Frame frame;
    Schedule sched;
    StageSettings set;
    ScalarField chi;       // collar cut-off of the grid
    double rescale_v = 1.0, rescale_w = 1.0;
    double psi_norm1 = 0.0;
    std::vector<DeficitReport> reports;

    const Grid& grid() const { return *V.grid; }
};

namespace detail {

inline double stage_phase(std::uint64_t seed, int q, int i) {
    std::uint64_t x = seed * 0x9e3779b97f4a7c15ull + 0xbf58476d1ce4e5b9ull * (q + 1) + i;
    x ^= x >> 31;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 29;
    return static_cast<double>(x % 1000000007ull) / 1000000007.0;
}

// Mollified indicator of {psi > level}; 1 where the whole kernel ball lies in
// the set, 0 where it misses it entirely.
inline ScalarField level_cutoff(const ScalarField& psi, double level, double width) {
    const Grid& g = *psi.grid;
    if (width < 2.0 * g.h)
        throw StageError("cutoff under-resolved: level-set band narrower than two cells");
    ScalarField ind(g);
    parallel_for(g.size(), [&](std::size_t i) { ind[i] = psi[i] > level ? 1.0 : 0.0; });
    return mollify(ind, width);
}

inline void verify_cutoff(const ScalarField& eta, const ScalarField& psi, double one_level,
                          double zero_level, const char* name) {
    const Grid& g = *psi.grid;
    double bad = parallel_max(g.size(), [&](std::size_t i) {
        if (psi[i] >= one_level) return std::fabs(eta[i] - 1.0);
        if (psi[i] <= zero_level) return std::fabs(eta[i]);
        return 0.0;
    });
    if (bad > 1e-12) {
        std::ostringstream os;
        os << "cutoff " << name << " violates its plateau levels (err " << bad << ")";
        throw StageError(os.str());
    }
}

inline double measure_pair_norm(const ScalarField& v, const VectorField& w, int k, Region r) {
    return holder_norm(v, k, r) + holder_norm(w, k, r);
}

struct Ladder {
    std::vector<double> mu; // mu_1..mu_{N*}
    double mu_start = 0.0;
    double l = 0.0;
    bool fallback = false;
};

// Frequency ladder of one stage. The paper's (3.19) start
// mu_0 = K delta_{q+1}^{-1/2} delta_q^{1/2} lambda_q is used verbatim whenever
// the grid resolves it; on coarse grids the start falls back to the realized
// counterpart max(1, |(V,W)|_2 / delta_{q+1}^{1/2}) that (3.19) is designed to
// dominate, keeping mu_0 <= ... <= mu_{N*} = lambda_{q+1} monotone.
inline Ladder build_ladder(const State& st, int q, double lambda_q1, double sup2_meas) {
    const Schedule& s = st.sched;
    Ladder lad;
    double ln_mu0 = s.ln_mu0(q);
    double ln_top = std::log(lambda_q1);
    if (ln_mu0 <= ln_top) {
        lad.mu_start = std::exp(ln_mu0);
    } else {
        if (!st.set.allow_desk_ladder)
            throw StageError("mu_0 of (3.19) exceeds lambda_{q+1}; desk ladder disabled");
        double delta_q1 = s.delta(q + 1);
        if (!(delta_q1 > 0.0)) throw StageError("schedule exceeds float range (cap q_max)");
        lad.mu_start = std::max(1.0, sup2_meas / std::sqrt(delta_q1));
        lad.fallback = true;
        if (lad.mu_start > 0.5 * lambda_q1)
            throw StageError("stage under-resolved: realized |(V,W)|_2 needs mu_0 > lambda_{q+1}/2");
    }
    for (int i = 1; i <= s.N_star; ++i) {
        double f = static_cast<double>(i) / s.N_star;
        lad.mu.push_back(std::pow(lad.mu_start, 1.0 - f) * std::pow(lambda_q1, f));
    }
    const Grid& g = st.grid();
    lad.l = s.sigma / (s.C_universal * lad.mu_start);
    lad.l = std::max(lad.l, 2.0 * g.h);
    lad.l = std::min(lad.l, 0.25 * g.pad);
    return lad;
}

inline SymMatrixField assemble_deficit(const SymMatrixField& A, const ScalarField& V,
                                       const VectorField& W, const ScalarField& shift) {
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
    return D;
}

inline ScalarField constant_field(const Grid& g, double v) {
    ScalarField f(g);
    parallel_for(g.size(), [&](std::size_t i) { f[i] = v; });
    return f;
}

} // namespace detail

// Remark 3.2 initialization of the interior pipeline: rescale A and start from
// the (scaled) background, so the stage assumptions hold at q = 0 by the
// choice of tau.
inline State init_interior(const Grid& g, const Background& bg, const Frame& frame,
                           const Schedule& sched, const StageSettings& set) {
    State st;
    st.mode = Mode::interior;
    st.q = 0;
    st.bg = bg;
    st.frame = frame;
    st.sched = sched;
    st.set = set;
    st.chi = collar_cutoff(g);

    double delta1 = sched.delta(1);
    if (!(delta1 > 0.0))
        throw StageError("schedule exceeds float range: delta_1 underflows (reduce a)");
    double tau = bg.tau;
    double s_v = std::sqrt(delta1 / tau);
    st.rescale_v = 1.0 / s_v;
    st.rescale_w = tau / delta1;

    st.A = bg.A;
    scale_inplace(st.A, delta1 / tau);
    st.V = bg.vb;
    scale_inplace(st.V, s_v);
    st.W = VectorField(g);
    st.shift = detail::constant_field(g, delta1);

    auto t0 = std::chrono::steady_clock::now();
    DeficitReport rep;
    rep.q = 0;
    rep.note = "init_interior";
    SymMatrixField D0 = detail::assemble_deficit(st.A, st.V, st.W, st.shift);
    rep.deficit_sup = sup_norm(D0, Region::core);
    rep.deficit_bound = sched.sigma * delta1;
    rep.norm1 = detail::measure_pair_norm(st.V, st.W, 1, Region::core);
    rep.norm2 = detail::measure_pair_norm(st.V, st.W, 2, Region::core);
    rep.bound1 = std::sqrt(sched.K);
    rep.bound2 = sched.K * std::exp(0.5 * sched.ln_delta(0) + std::min(700.0, sched.ln_lambda(0)));
    rep.eps_h = set.C_h * g.h * g.h * (1.0 + rep.norm2);
    rep.pass1 = rep.norm1 <= rep.bound1 + rep.eps_h;
    rep.pass2 = rep.norm2 <= rep.bound2 + rep.eps_h;
    rep.passD = rep.deficit_sup <= rep.deficit_bound + rep.eps_h;
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    st.reports.push_back(rep);
    if (!(rep.pass1 && rep.pass2 && rep.passD)) {
        std::ostringstream os;
        os.precision(6);
        os << "init_interior: measured assumption violated: |(V0,W0)|_1=" << rep.norm1
           << " (<= " << rep.bound1 << "), |(V0,W0)|_2=" << rep.norm2 << " (<= " << rep.bound2
           << "), |D0|=" << rep.deficit_sup << " (<= " << rep.deficit_bound << " + eps "
           << rep.eps_h << ")";
        throw StageError(os.str());
    }
    return st;
}

// One interior stage (V_q, W_q) -> (V_{q+1}, W_{q+1}) following the one stage
// induction: mollify at l, decompose D~/delta_{q+1}, run N* corrugation steps
// at the mu ladder, measure the new norms and deficit.
inline void interior_stage(State& st) {
    const Grid& g = st.grid();
    const Schedule& s = st.sched;
    int q = st.q;
    auto t0 = std::chrono::steady_clock::now();

    double delta_q1 = s.delta(q + 1);
    double delta_q2 = s.delta(q + 2);
    double lambda_q1 = s.lambda(q + 1);
    check_resolution(g, lambda_q1, st.set.points_per_period);

    double sup2 = detail::measure_pair_norm(st.V, st.W, 2, Region::core);
    detail::Ladder lad = detail::build_ladder(st, q, lambda_q1, sup2);

    SymMatrixField At = mollify(st.A, lad.l);
    ScalarField vt = mollify(st.V, lad.l);
    VectorField wt = mollify(st.W, lad.l);

    ScalarField shift2 = detail::constant_field(g, delta_q2);
    SymMatrixField Dt = detail::assemble_deficit(At, vt, wt, shift2);

    ScalarField scale = detail::constant_field(g, delta_q1);
    double ball = 0.0;
    {
        // ball radius for the report (decompose_field re-checks and throws)
        ball = parallel_max(g.size(), [&](std::size_t i) {
            if (!g.in_region(i, Region::core)) return 0.0;
            double worst = 0.0;
            for (int d = 0; d < g.n; ++d)
                for (int e = d; e < g.n; ++e) {
                    double v = Dt.at(sym_index(g.n, d, e), i) / delta_q1 - (d == e ? 1.0 : 0.0);
                    worst = std::max(worst, std::fabs(v));
                }
            return worst;
        });
    }
    std::vector<ScalarField> amps = decompose_field(st.frame, Dt, scale, Region::core);
    for (auto& a : amps) {
        double* p = a.plane(0);
        const double* c = st.chi.plane(0);
        parallel_for(g.size(), [&](std::size_t i) { p[i] *= c[i]; });
    }

    ScalarField v = std::move(vt);
    VectorField w = std::move(wt);
    for (int i = 0; i < s.N_star; ++i) {
        CorrugationParams p;
        p.a = &amps[i];
        for (int d = 0; d < g.n; ++d) p.xi[d] = st.frame.xis[i][d];
        p.mu = lad.mu[i];
        p.phase = detail::stage_phase(st.set.seed, q, i);
        p.points_per_period = st.set.points_per_period;
        auto [v1, w1] = step(v, w, p);
        v = std::move(v1);
        w = std::move(w1);
    }

    DeficitReport rep;
    rep.q = q + 1;
    rep.moll_length = lad.l;
    rep.mu_start = lad.mu_start;
    rep.mu_top = lad.mu.back();
    rep.ladder_fallback = lad.fallback;
    rep.ball_radius = ball;

    rep.delta_norm1 = holder_norm(axpy(-1.0, st.V, v), 1, Region::core) +
                      holder_norm(axpy(-1.0, st.W, w), 1, Region::core);
    rep.norm1 = detail::measure_pair_norm(v, w, 1, Region::core);
    rep.norm2 = detail::measure_pair_norm(v, w, 2, Region::core);
    rep.bound1 = s.K * std::sqrt(delta_q1);
    rep.bound2 = s.K * std::sqrt(delta_q1) * lambda_q1;

    ScalarField shift_new = detail::constant_field(g, delta_q2);
    SymMatrixField Dnew = detail::assemble_deficit(st.A, v, w, shift_new);
    rep.deficit_sup = sup_norm(Dnew, Region::core);
    rep.deficit_bound = s.sigma * delta_q2;
    rep.eps_h = st.set.C_h * g.h * g.h * (1.0 + rep.mu_top * rep.norm2);
    rep.pass1 = rep.delta_norm1 <= rep.bound1 + rep.eps_h;
    rep.pass2 = rep.norm2 <= rep.bound2 + rep.eps_h;
    rep.passD = rep.deficit_sup <= rep.deficit_bound + rep.eps_h;
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    st.V = std::move(v);
    st.W = std::move(w);
    st.shift = std::move(shift_new);
    st.q = q + 1;
    st.reports.push_back(rep);

    if (!(rep.pass1 && rep.pass2 && rep.passD)) {
        std::ostringstream os;
        os.precision(6);
        os << "interior_stage q=" << q << ": post-assertion failed beyond eps_h: "
           << rep.json_line();
        throw StageError(os.str());
    }
}

// Dirichlet-mode initialization (0th approximation): hat-corrugations with
// amplitudes eta_1 (psi - delta_1)^{1/2} d_i against the constant frame
// coefficients, leaving (V_0, W_0) = (v^b, w^b) outside Omega~_1 bit-exactly.
inline State init_boundary(const Grid& g, const Background& bg, const Frame& frame,
                           const Schedule& sched, const StageSettings& set) {
    if (!bg.has_psi) throw ConfigError("init_boundary requires a boundary-mode background");
    State st;
    st.mode = Mode::dirichlet;
    st.q = 0;
    st.bg = bg;
    st.frame = frame;
    st.sched = sched;
    st.set = set;
    st.chi = collar_cutoff(g);
    st.A = bg.A;
    st.psi_norm1 = holder_norm(bg.psi, 1, Region::omega);

    auto t0 = std::chrono::steady_clock::now();
    double delta0 = sched.delta(0);
    double delta1 = sched.delta(1);
    if (!(delta1 > 0.0)) throw StageError("schedule exceeds float range: delta_1 underflows");
    double psi_sup = sup_norm(bg.psi, Region::omega);
    if (psi_sup <= 2.0 * delta1)
        throw StageError("init_boundary: delta_1 too large, Omega_1 = {psi > 2 delta_1} is empty");

    double grad_psi = deriv_sup(bg.psi, 1, Region::omega);
    double w1 = delta1 / (5.0 * (grad_psi + 1.0));
    ScalarField eta1 = detail::level_cutoff(bg.psi, 1.75 * delta1, w1);
    detail::verify_cutoff(eta1, bg.psi, 2.0 * delta1, 1.5 * delta1, "eta_1");

    // hat ladder: (C/(sigma delta_1))^i, capped to the grid when needed
    double cap = 1.0 / (g.h * set.points_per_period);
    double ratio = sched.C_universal / (sched.sigma * delta1);
    bool fallback = false;
    if (std::pow(ratio, sched.N_star) > cap) {
        if (!set.allow_desk_ladder)
            throw StageError("hat frequencies exceed the grid; desk ladder disabled");
        ratio = std::pow(cap, 1.0 / sched.N_star);
        fallback = true;
        if (ratio <= 1.5)
            throw StageError("init_boundary under-resolved: hat ladder has no headroom");
    }

    // amplitudes: eta_1 sqrt(psi - delta_1) d_i^*
    std::vector<double> dstar(frame.N_star);
    for (int i = 0; i < frame.N_star; ++i) dstar[i] = std::sqrt(frame.c_id[i]);

    st.V = bg.vb;
    st.W = bg.wb;
    double mu_top = 0.0;
    for (int i = 0; i < frame.N_star; ++i) {
        ScalarField a(g);
        const double* e1 = eta1.plane(0);
        const double* ps = bg.psi.plane(0);
        double* ap = a.plane(0);
        double di = dstar[i];
        parallel_for(g.size(), [&](std::size_t p) {
            double e = e1[p];
            ap[p] = e > 0.0 ? e * std::sqrt(std::max(ps[p] - delta1, 0.0)) * di : 0.0;
        });
        CorrugationParams cp;
        cp.a = &a;
        for (int d = 0; d < g.n; ++d) cp.xi[d] = frame.xis[i][d];
        cp.mu = std::pow(ratio, i + 1);
        mu_top = cp.mu;
        cp.phase = detail::stage_phase(set.seed, -1, i);
        cp.points_per_period = set.points_per_period;
        auto [v1, w1f] = step(st.V, st.W, cp);
        st.V = std::move(v1);
        st.W = std::move(w1f);
    }

    // psi_1 = eta_1^2 delta_1 + (1 - eta_1^2) psi
    st.shift = ScalarField(g);
    parallel_for(g.size(), [&](std::size_t p) {
        double e2 = eta1[p] * eta1[p];
        st.shift[p] = e2 * delta1 + (1.0 - e2) * bg.psi[p];
    });

    DeficitReport rep;
    rep.q = 0;
    rep.note = "init_boundary";
    rep.ladder_fallback = fallback;
    rep.mu_start = ratio;
    rep.mu_top = mu_top;
    SymMatrixField D0 = detail::assemble_deficit(st.A, st.V, st.W, st.shift);
    rep.deficit_sup = sup_norm(D0, Region::omega);
    rep.deficit_bound = sched.sigma * delta1;
    rep.norm1 = detail::measure_pair_norm(st.V, st.W, 1, Region::omega);
    rep.norm2 = detail::measure_pair_norm(st.V, st.W, 2, Region::omega);
    rep.bound1 = std::sqrt(sched.K);
    rep.bound2 = sched.K * std::exp(0.5 * sched.ln_delta(0) + std::min(700.0, sched.ln_lambda(0)));
    rep.eps_h = set.C_h * g.h * g.h * (1.0 + rep.mu_top * rep.norm2);
    rep.pass1 = rep.norm1 <= rep.bound1 + rep.eps_h;
    rep.pass2 = rep.norm2 <= rep.bound2 + rep.eps_h;
    rep.passD = rep.deficit_sup <= rep.deficit_bound + rep.eps_h;
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    st.reports.push_back(rep);

    // untouched outside Omega~_1 = {psi > 3/2 delta_1}: bit-exact
    double touched = parallel_max(g.size(), [&](std::size_t p) {
        if (bg.psi[p] > 1.5 * delta1) return 0.0;
        double d = std::fabs(st.V[p] - bg.vb[p]);
        for (int dd = 0; dd < g.n; ++dd) d = std::max(d, std::fabs(st.W.at(dd, p)));
        return d;
    });
    if (touched != 0.0)
        throw StageError("init_boundary: fields modified outside Omega~_1");

    if (!(rep.pass1 && rep.pass2 && rep.passD)) {
        std::ostringstream os;
        os << "init_boundary: measured assumption violated: " << rep.json_line();
        throw StageError(os.str());
    }
    return st;
}

// One Dirichlet-mode stage per the glued construction: the deficit is glued
// from the Lemma 3.2 route where psi >= delta_{q+1} and the constant-frame
// route below, then N* corrugations run with amplitudes supported in
// Omega~_{q+2}, leaving the boundary data untouched.
inline void boundary_stage(State& st) {
    const Grid& g = st.grid();
    const Schedule& s = st.sched;
    const ScalarField& psi = st.bg.psi;
    int q = st.q;
    auto t0 = std::chrono::steady_clock::now();

    double delta_q1 = s.delta(q + 1);
    double delta_q2 = s.delta(q + 2);
    double lambda_q1 = s.lambda(q + 1);
    check_resolution(g, lambda_q1, st.set.points_per_period);
    if (!(delta_q2 > 0.0)) throw StageError("schedule exceeds float range (cap q_max)");

    double sup2 = detail::measure_pair_norm(st.V, st.W, 2, Region::omega);
    detail::Ladder lad = detail::build_ladder(st, q, lambda_q1, sup2);

    // (4.23): l <= delta_{q+2} / (4 |psi|_1 + 1); guarantees the mollification
    // stays inside Omega and eta = 1 on the l-neighborhood of Omega~_{q+1}
    double l_cap = delta_q2 / (4.0 * st.psi_norm1 + 1.0);
    if (lad.l > l_cap) {
        std::ostringstream os;
        os.precision(6);
        os << "boundary_stage q=" << q << ": l=" << lad.l << " violates (4.23) cap " << l_cap
           << " (grid cannot localize the cut-off)";
        throw StageError(os.str());
    }

    double grad_psi = deriv_sup(psi, 1, Region::omega);
    CutoffData cut;
    double w_eta = delta_q1 / (10.0 * (grad_psi + 1.0));
    cut.eta = detail::level_cutoff(psi, 1.125 * delta_q1, w_eta);
    detail::verify_cutoff(cut.eta, psi, 1.25 * delta_q1, delta_q1, "eta");
    double w_q2 = delta_q2 / (5.0 * (grad_psi + 1.0));
    cut.eta_q2 = detail::level_cutoff(psi, 1.75 * delta_q2, w_q2);
    detail::verify_cutoff(cut.eta_q2, psi, 2.0 * delta_q2, 1.5 * delta_q2, "eta_{q+2}");
    cut.grad_eta_sup = deriv_sup(cut.eta, 1, Region::omega);

    SymMatrixField At = mollify(st.A, lad.l);
    ScalarField vt = mollify(st.V, lad.l);
    VectorField wt = mollify(st.W, lad.l);
    ScalarField psit = mollify(st.shift, lad.l); // psi~_{q+1}

    // beta = eta_{q+2}^2 (psi~_{q+1} - delta_{q+2}); the decomposition scale
    ScalarField beta(g);
    parallel_for(g.size(), [&](std::size_t i) {
        double e2 = cut.eta_q2[i] * cut.eta_q2[i];
        beta[i] = e2 > 0.0 ? e2 * (psit[i] - delta_q2) : 0.0;
    });
    double beta_bad = parallel_max(g.size(), [&](std::size_t i) {
        if (!(cut.eta_q2[i] > 0.0)) return 0.0;
        return std::max(0.0, delta_q2 * 0.25 - (psit[i] - delta_q2));
    });
    if (beta_bad > 0.0)
        throw StageError("boundary_stage: psi~_{q+1} - delta_{q+2} fell below delta_{q+2}/4 "
                         "on supp eta_{q+2}");

    // glued deficit
    ScalarField shift2 = detail::constant_field(g, delta_q2);
    SymMatrixField Dt = detail::assemble_deficit(At, vt, wt, shift2);
    parallel_for(g.size(), [&](std::size_t i) {
        double e2 = cut.eta[i] * cut.eta[i];
        for (int d = 0; d < g.n; ++d)
            for (int e = d; e < g.n; ++e) {
                int k = sym_index(g.n, d, e);
                double glued = e2 * Dt.at(k, i) + (d == e ? (1.0 - e2) * beta[i] : 0.0);
                Dt.at(k, i) = glued;
            }
    });

    double ball = parallel_max(g.size(), [&](std::size_t i) {
        if (!(beta[i] > 0.0) || !g.in_region(i, Region::omega)) return 0.0;
        double worst = 0.0;
        for (int d = 0; d < g.n; ++d)
            for (int e = d; e < g.n; ++e) {
                double v = Dt.at(sym_index(g.n, d, e), i) / beta[i] - (d == e ? 1.0 : 0.0);
                worst = std::max(worst, std::fabs(v));
            }
        return worst;
    });
    std::vector<ScalarField> amps = decompose_field(st.frame, Dt, beta, Region::omega);

    // blended start (v_0, w_0) = (V_q, W_q) + eta^2 ((v~, w~) - (V_q, W_q))
    ScalarField v = st.V;
    VectorField w = st.W;
    parallel_for(g.size(), [&](std::size_t i) {
        double e2 = cut.eta[i] * cut.eta[i];
        v[i] += e2 * (vt[i] - st.V[i]);
        for (int d = 0; d < g.n; ++d) w.at(d, i) += e2 * (wt.at(d, i) - st.W.at(d, i));
    });

    for (int i = 0; i < s.N_star; ++i) {
        CorrugationParams p;
        p.a = &amps[i];
        for (int d = 0; d < g.n; ++d) p.xi[d] = st.frame.xis[i][d];
        p.mu = lad.mu[i];
        p.phase = detail::stage_phase(st.set.seed, q, i);
        p.points_per_period = st.set.points_per_period;
        auto [v1, w1] = step(v, w, p);
        v = std::move(v1);
        w = std::move(w1);
    }

    // psi_{q+2} and the new deficit
    cut.psi_next = ScalarField(g);
    parallel_for(g.size(), [&](std::size_t i) {
        double e2 = cut.eta_q2[i] * cut.eta_q2[i];
        cut.psi_next[i] = e2 * delta_q2 + (1.0 - e2) * psi[i];
    });

    DeficitReport rep;
    rep.q = q + 1;
    rep.moll_length = lad.l;
    rep.mu_start = lad.mu_start;
    rep.mu_top = lad.mu.back();
    rep.ladder_fallback = lad.fallback;
    rep.ball_radius = ball;
    rep.delta_norm1 = holder_norm(axpy(-1.0, st.V, v), 1, Region::omega) +
                      holder_norm(axpy(-1.0, st.W, w), 1, Region::omega);
    rep.norm1 = detail::measure_pair_norm(v, w, 1, Region::omega);
    rep.norm2 = detail::measure_pair_norm(v, w, 2, Region::omega);
    rep.bound1 = s.K * std::sqrt(delta_q1);
    rep.bound2 = s.K * std::sqrt(delta_q1) * lambda_q1;
    SymMatrixField Dnew = detail::assemble_deficit(st.A, v, w, cut.psi_next);
    rep.deficit_sup = sup_norm(Dnew, Region::omega);
    rep.deficit_bound = s.sigma * delta_q2;
    rep.eps_h = st.set.C_h * g.h * g.h * (1.0 + rep.mu_top * rep.norm2);
    rep.pass1 = rep.delta_norm1 <= rep.bound1 + rep.eps_h;
    rep.pass2 = rep.norm2 <= rep.bound2 + rep.eps_h;
    rep.passD = rep.deficit_sup <= rep.deficit_bound + rep.eps_h;
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    // (4.32): untouched outside Omega~_{q+2} = {psi > 3/2 delta_{q+2}}
    double touched = parallel_max(g.size(), [&](std::size_t p) {
        if (psi[p] > 1.5 * delta_q2) return 0.0;
        double d = std::fabs(v[p] - st.V[p]);
        for (int dd = 0; dd < g.n; ++dd)
            d = std::max(d, std::fabs(w.at(dd, p) - st.W.at(dd, p)));
        return d;
    });

    st.V = std::move(v);
    st.W = std::move(w);
    st.shift = std::move(cut.psi_next);
    st.q = q + 1;
    st.reports.push_back(rep);

    if (touched != 0.0)
        throw StageError("boundary_stage: fields modified outside Omega~_{q+2}");
    if (!(rep.pass1 && rep.pass2 && rep.passD)) {
        std::ostringstream os;
        os << "boundary_stage q=" << q << ": post-assertion failed beyond eps_h: "
           << rep.json_line();
        throw StageError(os.str());
    }
}

struct RunResult {
    State state;
    ScalarField v; // solution-scale fields (interior mode: rescaled back)
    VectorField w;
    bool completed = false;
    int q_reached = -1;
    std::string failure;
};

// Multi-stage driver: init, then q_max stages, then the final rescale.
// On a stage failure the partial state is preserved in the result.
inline RunResult run_stages(const Grid& g, const Background& bg, const Frame& frame,
                            const Schedule& sched, Mode mode, const StageSettings& set,
                            int q_max) {
    RunResult out;
    try {
        out.state = (mode == Mode::interior) ? init_interior(g, bg, frame, sched, set)
                                             : init_boundary(g, bg, frame, sched, set);
        out.q_reached = 0;
        for (int q = 0; q < q_max; ++q) {
            if (mode == Mode::interior)
                interior_stage(out.state);
            else
                boundary_stage(out.state);
            out.q_reached = out.state.q;
        }
        out.completed = true;
    } catch (const Error& err) {
        out.failure = err.what();
    }
    if (out.q_reached >= 0) {
        out.v = out.state.V;
        out.w = out.state.W;
        if (mode == Mode::interior) {
            scale_inplace(out.v, out.state.rescale_v);
            scale_inplace(out.w, out.state.rescale_w);
        }
    }
    return out;
}

} // namespace corrugate
