#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "corrugate/common.hpp"

namespace corrugate {

// Double-exponential parameter family
//   delta_q = a^{-b^q}   (amplitudes, decreasing)
//   lambda_q = a^{c b^q} (frequencies, increasing)
// All ledger arithmetic runs in the log domain; values are materialized only
// when they fit in doubles.
struct Schedule {
    double lna = std::log(8.0); // ln(a); a itself can exceed double range
    double b = 1.5;
    double c = 4.0;
    double alpha = 0.05;
    double sigma = 0.06;
    double K = 24.0;
    double C_universal = 1e3;
    int q_max = 3;
    int n = 2;
    int N_star = 3;
    double sigma_star = 0.18; // from the frame; sigma must stay <= sigma_star/3

    void set_a(double a) {
        if (!(a > 1.0)) throw ConfigError("schedule: a must exceed 1");
        lna = std::log(a);
    }
    double a() const { return std::exp(std::min(lna, 709.0)); }
    double ln_a() const { return lna; }
    double ln_delta(int q) const { return -std::pow(b, q) * ln_a(); }
    double ln_lambda(int q) const { return c * std::pow(b, q) * ln_a(); }

    double delta(int q) const { return std::exp(ln_delta(q)); } // underflow -> 0 is fine
    double lambda(int q) const {
        double l = ln_lambda(q);
        if (l > 700.0) throw StageError("schedule exceeds float range (cap q_max)");
        return std::exp(l);
    }

    // mu_0 = K delta_{q+1}^{-1/2} delta_q^{1/2} lambda_q
    double ln_mu0(int q) const {
        return std::log(K) + 0.5 * (ln_delta(q) - ln_delta(q + 1)) + ln_lambda(q);
    }
    // l = sigma / (C mu_0)
    double ln_moll_length(int q) const {
        return std::log(sigma) - std::log(C_universal) - ln_mu0(q);
    }
    // mu_i = mu_0^{1-i/N*} mu_{N*}^{i/N*},  mu_{N*} = lambda_{q+1}
    double ln_mu(int q, int i) const {
        double f = static_cast<double>(i) / N_star;
        return (1.0 - f) * ln_mu0(q) + f * ln_lambda(q + 1);
    }
};

struct SequenceValues {
    double delta_q, delta_q1, lambda_q, lambda_q1, mu0, l;
    std::vector<double> mu; // mu_1 .. mu_{N*}
};

// Materialized per-stage values; throws "schedule exceeds float range" when
// any frequency overflows doubles.
inline SequenceValues sequences(const Schedule& s, int q) {
    SequenceValues v;
    v.delta_q = s.delta(q);
    v.delta_q1 = s.delta(q + 1);
    v.lambda_q = s.lambda(q);
    v.lambda_q1 = s.lambda(q + 1);
    double lm0 = s.ln_mu0(q);
    if (lm0 > 700.0) throw StageError("schedule exceeds float range (cap q_max)");
    v.mu0 = std::exp(lm0);
    v.l = std::exp(s.ln_moll_length(q));
    for (int i = 1; i <= s.N_star; ++i) {
        double lm = s.ln_mu(q, i);
        if (lm > 700.0) throw StageError("schedule exceeds float range (cap q_max)");
        v.mu.push_back(std::exp(lm));
    }
    for (std::size_t i = 1; i < v.mu.size(); ++i)
        if (v.mu[i] < v.mu[i - 1] * (1.0 - 1e-12))
            throw StageError("schedule mu-ladder not monotone (mu_0 exceeds lambda_{q+1})");
    return v;
}

struct LedgerEntry {
    std::string name;
    int q_lo = 0, q_hi = 0; // checked q-range (0,0 for q-independent rows)
    int worst_q = 0;
    double margin = 0.0;    // >= 0 passes; log-domain for delta/lambda rows
    bool pass = false;
    std::string note;
};

struct LedgerReport {
    std::vector<LedgerEntry> entries;

    bool all_pass() const {
        for (const auto& e : entries)
            if (!e.pass) return false;
        return true;
    }

    const LedgerEntry* find(const std::string& name) const {
        for (const auto& e : entries)
            if (e.name == name) return &e;
        return nullptr;
    }

    std::string to_text() const {
        std::ostringstream os;
        os << "parameter ledger\n";
        for (const auto& e : entries) {
            os << "  " << (e.pass ? "[pass]" : "[FAIL]") << " ";
            os.width(24);
            os << std::left << e.name;
            os << " q=" << e.q_lo << ".." << e.q_hi << " worst_q=" << e.worst_q;
            os.precision(4);
            os << " margin=" << e.margin;
            if (!e.note.empty()) os << "  (" << e.note << ")";
            os << "\n";
        }
        os << (all_pass() ? "ledger: PASS" : "ledger: FAIL") << "\n";
        return os.str();
    }
};

// Evaluates every inequality the staged construction requires, at each
// q in [0, q_max]. The q-dependent log terms peak at q = 0 since the
// correction decays with b^q.
inline LedgerReport check_ledger(const Schedule& s, double psi_norm1 = 0.0) {
    LedgerReport rep;
    double lnA = s.ln_a();
    auto add = [&](LedgerEntry e) { rep.entries.push_back(std::move(e)); };

    {
        LedgerEntry e{"alpha-exponent", 0, 0, 0, 0, false,
                      "alpha < 1/(1+n+n^2)"};
        double thr = 1.0 / (1.0 + 2.0 * s.N_star);
        e.margin = thr - s.alpha;
        e.pass = e.margin > 0.0;
        add(e);
    }
    {
        LedgerEntry e{"sigma-range", 0, 0, 0, 0, false, "sigma in (0, sigma*/3]"};
        e.margin = s.sigma_star / 3.0 - s.sigma;
        e.pass = s.sigma > 0.0 && e.margin >= -1e-15;
        add(e);
    }
    {
        LedgerEntry e{"a-b-range", 0, 0, 0, 0, false, "a>1, 1<b<2, c>0"};
        bool ok = s.lna > 0.0 && s.b > 1.0 && s.b < 2.0 && s.c > 0.0;
        e.margin = ok ? std::min({s.lna, s.b - 1.0, 2.0 - s.b, s.c}) : -1.0;
        e.pass = ok;
        add(e);
    }
    {
        // (3.29): c >= N* b + 1/2 + log_a(C K / sigma^{N*}) / ((b-1) b^q)
        LedgerEntry e{"c-lower(3.29)", 0, s.q_max, 0, 1e300, false,
                      "init budget, l and mu-ratio combined"};
        double lognum = std::log(s.C_universal * s.K) - s.N_star * std::log(s.sigma);
        for (int q = 0; q <= s.q_max; ++q) {
            double rhs = s.N_star * s.b + 0.5 +
                         lognum / ((s.b - 1.0) * std::pow(s.b, q) * lnA);
            double m = s.c - rhs;
            if (m < e.margin) { e.margin = m; e.worst_q = q; }
        }
        e.pass = e.margin >= 0.0;
        add(e);
    }
    {
        LedgerEntry e{"c-alpha(3.31)", 0, 0, 0, 0, false, "C^{1,alpha} series"};
        e.margin = 0.5 - s.c * s.alpha;
        e.pass = e.margin > 0.0;
        add(e);
    }
    {
        // (3.30) first: delta_1 <= sigma  [log margin]
        LedgerEntry e{"delta1(3.30a)", 0, 0, 0, 0, false, "delta_1 <= sigma"};
        e.margin = std::log(s.sigma) - s.ln_delta(1);
        e.pass = e.margin >= 0.0;
        add(e);
    }
    {
        // (3.30) second: delta_{q+2} <= sigma delta_{q+1}  [log margin]
        LedgerEntry e{"delta-ratio(3.30b)", 0, s.q_max, 0, 1e300, false,
                      "delta_{q+2} <= sigma delta_{q+1}"};
        for (int q = 0; q <= s.q_max; ++q) {
            double m = std::log(s.sigma) + s.ln_delta(q + 1) - s.ln_delta(q + 2);
            if (m < e.margin) { e.margin = m; e.worst_q = q; }
        }
        e.pass = e.margin >= 0.0;
        add(e);
    }
    {
        // (ineq*): delta_1^{-N*} <= delta_0^{1/2} lambda_0  [log margin]
        LedgerEntry e{"init-budget(ineq*)", 0, 0, 0, 0, false,
                      "hat-frequency budget of the 0th approximation"};
        e.margin = 0.5 * s.ln_delta(0) + s.ln_lambda(0) + s.N_star * s.ln_delta(1);
        e.pass = e.margin >= 0.0;
        add(e);
    }
    {
        // (ineq**) first: l <= sigma delta_{q+2} / C  [log margin]
        LedgerEntry e{"l-bound(3.23a)", 0, s.q_max, 0, 1e300, false,
                      "mollification length vs next amplitude"};
        for (int q = 0; q <= s.q_max; ++q) {
            double m = std::log(s.sigma) + s.ln_delta(q + 2) - std::log(s.C_universal) -
                       s.ln_moll_length(q);
            if (m < e.margin) { e.margin = m; e.worst_q = q; }
        }
        e.pass = e.margin >= 0.0;
        add(e);
    }
    {
        // (ineq**) second: mu_0/lambda_{q+1} <= (sigma delta_{q+2}/(C delta_{q+1}))^{N*}
        LedgerEntry e{"mu-ratio(3.23b)", 0, s.q_max, 0, 1e300, false,
                      "telescoping frequency ratio"};
        for (int q = 0; q <= s.q_max; ++q) {
            double m = s.ln_lambda(q + 1) - s.ln_mu0(q) +
                       s.N_star * (std::log(s.sigma / s.C_universal) + s.ln_delta(q + 2) -
                                   s.ln_delta(q + 1));
            if (m < e.margin) { e.margin = m; e.worst_q = q; }
        }
        e.pass = e.margin >= 0.0;
        add(e);
    }
    {
        // mu-ladder order: mu_0 <= lambda_{q+1} (implied by mu-ratio; reported)
        LedgerEntry e{"mu-monotone", 0, s.q_max, 0, 1e300, false,
                      "mu_0 <= ... <= lambda_{q+1}"};
        for (int q = 0; q <= s.q_max; ++q) {
            double m = s.ln_lambda(q + 1) - s.ln_mu0(q);
            if (m < e.margin) { e.margin = m; e.worst_q = q; }
        }
        e.pass = e.margin >= 0.0;
        add(e);
    }
    {
        // boundary Step-4 family (3.33): 1/2 - c <= -b^2 + log_a(C(sigma,K)) / b^q
        LedgerEntry e{"boundary-exp(3.33)", 0, s.q_max, 0, 1e300, false,
                      "cut-off stage exponent"};
        double logC = std::log(s.C_universal * (1.0 + std::sqrt(s.K)) / s.sigma);
        for (int q = 0; q <= s.q_max; ++q) {
            double rhs = -s.b * s.b + logC / (std::pow(s.b, q) * lnA);
            double m = rhs - (0.5 - s.c);
            if (m < e.margin) { e.margin = m; e.worst_q = q; }
        }
        // the log term decays; also require the q -> infinity limit
        e.margin = std::min(e.margin, -s.b * s.b - (0.5 - s.c));
        e.pass = e.margin >= 0.0;
        add(e);
    }
    if (psi_norm1 > 0.0) {
        // (4.23): l <= delta_{q+2} / (4 |psi|_1 + 1)  [log margin]
        LedgerEntry e{"l-vs-psi(4.23)", 0, s.q_max, 0, 1e300, false,
                      "cut-off locality of the mollification"};
        for (int q = 0; q <= s.q_max; ++q) {
            double m = s.ln_delta(q + 2) - std::log(4.0 * psi_norm1 + 1.0) -
                       s.ln_moll_length(q);
            if (m < e.margin) { e.margin = m; e.worst_q = q; }
        }
        e.pass = e.margin >= 0.0;
        add(e);
    }
    {
        // C^0 budget series sum K delta_{q+1}^{1/2}: always geometric-dominated
        LedgerEntry e{"c0-series", 0, s.q_max, 0, 0, false, "sum K delta_{q+1}^{1/2}"};
        double sum = 0.0;
        bool ok = true;
        double prev = 0.0;
        for (int q = 0; q <= s.q_max + 60; ++q) {
            double t = std::exp(0.5 * s.ln_delta(q + 1));
            sum += s.K * t;
            if (q > 0 && prev > 0.0 && t / prev >= 1.0) ok = false;
            prev = t;
            if (t < 1e-300) break;
        }
        e.margin = ok ? sum : -1.0;
        e.note = "partial sum " + std::to_string(sum);
        e.pass = ok;
        add(e);
    }
    {
        // C^{1,alpha} series sum delta_{q+1}^{1/2} lambda_{q+1}^{alpha}
        LedgerEntry e{"c1alpha-series(3.32)", 0, s.q_max, 0, 0, false,
                      "sum delta^{1/2} lambda^{alpha}"};
        double sum = 0.0;
        bool ok = true;
        double prev = -1.0;
        for (int q = 0; q <= s.q_max + 60; ++q) {
            double lt = 0.5 * s.ln_delta(q + 1) + s.alpha * s.ln_lambda(q + 1);
            double t = lt < 700.0 ? std::exp(lt) : 1e300;
            if (prev >= 0.0 && t >= prev) ok = false;
            sum += t;
            prev = t;
            if (t < 1e-300 || t >= 1e300) break;
        }
        if (prev >= 1e300) ok = false;
        e.margin = ok ? sum : -1.0;
        e.note = "partial sum " + std::to_string(ok ? sum : -1.0);
        e.pass = ok;
        add(e);
    }
    return rep;
}

struct FeasibleResult {
    bool feasible = false;
    Schedule schedule;
    LedgerReport ledger;
    std::string violated; // when infeasible: the blocking pair
};

// Searches b down toward 1 and c down toward N*+1/2 (honoring c alpha < 1/2),
// then doubles a until the ledger passes. Returns the first passing schedule.
inline FeasibleResult find_feasible(int n, double alpha, double sigma, double K,
                                    double C_universal, double psi_norm1 = 0.0,
                                    double sigma_star = 0.0, int q_max = 3) {
    FeasibleResult out;
    int N_star = n * (n + 1) / 2;
    if (sigma_star <= 0.0) sigma_star = 3.0 * sigma; // caller certifies sigma
    double thr = 1.0 / (1.0 + 2.0 * N_star);
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must be in (0,1)");
    if (!(alpha < thr)) {
        out.feasible = false;
        std::ostringstream os;
        os << "alpha=" << alpha << " >= 1/(1+n+n^2)=" << thr
           << ": c-lower(3.29) requires c > N*+1/2 while c-alpha(3.31) requires c < 1/(2 alpha)";
        out.violated = os.str();
        return out;
    }
    double c_cap = 0.5 / alpha;
    for (int jb = 1; jb <= 20; ++jb) {
        double b = 1.0 + std::pow(0.5, jb) * 0.9; // 1.45, 1.225, ...
        double c_floor = N_star * b + 0.5;
        if (c_floor >= c_cap) continue;
        for (int jc = 1; jc <= 6; ++jc) {
            double c = c_floor + (c_cap - c_floor) * std::pow(0.5, jc);
            Schedule s;
            s.n = n;
            s.N_star = N_star;
            s.alpha = alpha;
            s.sigma = sigma;
            s.K = K;
            s.C_universal = C_universal;
            s.q_max = q_max;
            s.sigma_star = sigma_star;
            s.b = b;
            s.c = c;
            for (double lna = std::log(4.0); lna < 2.0e7; lna *= 2.0) {
                s.lna = lna;
                LedgerReport rep = check_ledger(s, psi_norm1);
                if (rep.all_pass()) {
                    out.feasible = true;
                    out.schedule = s;
                    out.ledger = std::move(rep);
                    return out;
                }
            }
        }
    }
    out.feasible = false;
    out.violated = "no (a,b,c) satisfied the ledger within the search budget";
    return out;
}

} // namespace corrugate
