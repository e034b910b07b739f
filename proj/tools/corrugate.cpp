// Command-line front end: feasibility checks, construction runs, very-weak
// verification and CIGRID inspection.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "corrugate/config.hpp"
#include "corrugate/io.hpp"
#include "corrugate/stages.hpp"
#include "corrugate/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace corrugate;

namespace {

Config load_config(const std::string& path, const std::vector<std::string>& sets) {
    Config c = path.empty() ? Config{} : Config::from_file(path);
    for (const auto& kv : sets) c.add_line(kv, 0, "--set");
    return c;
}

json ledger_json(const LedgerReport& rep) {
    json out = json::array();
    for (const auto& e : rep.entries)
        out.push_back({{"name", e.name},
                       {"q_lo", e.q_lo},
                       {"q_hi", e.q_hi},
                       {"worst_q", e.worst_q},
                       {"margin", e.margin},
                       {"pass", e.pass},
                       {"note", e.note}});
    return out;
}

json residual_json(const ResidualReport& rep) {
    json entries = json::array();
    for (const auto& e : rep.entries)
        entries.push_back({{"center", {e.center[0], e.center[1], e.center[2]}},
                           {"radius", e.radius},
                           {"lhs", e.lhs},
                           {"rhs", e.rhs},
                           {"abs_err", e.abs_err},
                           {"rel_err", e.rel_err}});
    return json{{"entries", entries},
                {"max_rel", rep.max_rel},
                {"mean_rel", rep.mean_rel},
                {"max_abs", rep.max_abs}};
}

struct Pipeline {
    RunConfig rc;
    Grid grid;
    Frame frame;
    Schedule sched;
    LedgerReport ledger;
    Background bg;
    ScalarField f;
    BoundaryFn gfn;
};

Schedule make_schedule(const RunConfig& rc, const Frame& frame, double sigma, double psi_norm1,
                       LedgerReport& ledger_out, bool& ledger_ok) {
    Schedule s;
    s.n = rc.n;
    s.N_star = frame.N_star;
    s.alpha = rc.alpha;
    s.sigma = sigma;
    s.K = rc.K;
    s.C_universal = rc.C_universal;
    s.q_max = rc.q_max;
    s.sigma_star = frame.sigma_star;
    if (rc.explicit_abc) {
        s.set_a(rc.a);
        s.b = rc.b;
        s.c = rc.c;
        ledger_out = check_ledger(s, psi_norm1);
        ledger_ok = ledger_out.all_pass();
        return s;
    }
    FeasibleResult fr = find_feasible(rc.n, rc.alpha, sigma, rc.K, rc.C_universal, psi_norm1,
                                      frame.sigma_star, rc.q_max);
    if (!fr.feasible)
        throw InfeasibleError("no feasible schedule: " + fr.violated);
    ledger_out = fr.ledger;
    ledger_ok = true;
    return fr.schedule;
}

Pipeline build_pipeline(const Config& c, bool quiet) {
    Pipeline p;
    p.rc = RunConfig::parse(c);
    p.grid = make_grid(p.rc.n, p.rc.domain, p.rc.resolution, p.rc.pad);
    p.frame = build_frame(p.rc.n, p.rc.seed);
    double sigma = p.rc.sigma > 0.0 ? p.rc.sigma : p.frame.sigma_star / 3.0;

    p.f = p.rc.f.sample(p.grid);
    double psi_norm1 = 0.0;
    if (p.rc.mode == Mode::interior) {
        ScalarField vb = p.rc.vb.sample(p.grid);
        p.bg = build_background_interior(p.grid, p.f, vb, p.rc.K, sigma, p.rc.vb_mollify);
    } else {
        if (p.rc.select_vb) {
            SelectedBackground sel = select_background(p.grid, p.f);
            double C = sel.C;
            p.gfn = [C](const Vec& x) { return C * (x[0] * x[0] - x[1] * x[1]); };
            p.bg = build_background_boundary(p.grid, p.f, p.gfn, &sel.vb, p.rc.vb_mollify);
        } else {
            Preset gp = p.rc.g;
            int n = p.rc.n;
            p.gfn = [gp, n](const Vec& x) { return gp.eval(x, n); };
            p.bg = build_background_boundary(p.grid, p.f, p.gfn, nullptr, p.rc.vb_mollify);
        }
        psi_norm1 = holder_norm(p.bg.psi, 1, Region::omega);
    }

    bool ledger_ok = false;
    p.sched = make_schedule(p.rc, p.frame, sigma, psi_norm1, p.ledger, ledger_ok);
    if (!quiet && !ledger_ok)
        std::cerr << "warning: explicit schedule does not satisfy the full ledger "
                     "(coarse desk schedule); stage assertions still apply\n"
                  << p.ledger.to_text();
    return p;
}

int cmd_feasible(const std::string& config_path, const std::vector<std::string>& sets,
                 const std::string& json_path) {
    Config c = load_config(config_path, sets);
    RunConfig rc = RunConfig::parse(c);
    Frame frame = build_frame(rc.n, rc.seed);
    double sigma = rc.sigma > 0.0 ? rc.sigma : frame.sigma_star / 3.0;
    double psi_norm1 = c.num("problem.psi_norm1", 0.0);

    LedgerReport rep;
    bool feasible = false;
    Schedule sched;
    std::string violated;
    if (rc.explicit_abc) {
        bool ok = false;
        sched = make_schedule(rc, frame, sigma, psi_norm1, rep, ok);
        feasible = ok;
        if (!ok) violated = "explicit (a,b,c) fails the ledger";
    } else {
        FeasibleResult fr = find_feasible(rc.n, rc.alpha, sigma, rc.K, rc.C_universal,
                                          psi_norm1, frame.sigma_star, rc.q_max);
        feasible = fr.feasible;
        rep = fr.ledger;
        sched = fr.schedule;
        violated = fr.violated;
    }

    std::cout << rep.to_text();
    json out{{"feasible", feasible},
             {"alpha", rc.alpha},
             {"n", rc.n},
             {"N_star", frame.N_star},
             {"sigma", sigma},
             {"ledger", ledger_json(rep)}};
    if (feasible)
        out["schedule"] = {{"ln_a", sched.lna}, {"b", sched.b}, {"c", sched.c},
                           {"K", sched.K}, {"C_universal", sched.C_universal}};
    else
        out["violated"] = violated;
    if (!json_path.empty()) {
        std::ofstream jf(json_path);
        jf << out.dump(2) << "\n";
    } else {
        std::cout << out.dump(2) << "\n";
    }
    return feasible ? 0 : 2;
}

void write_plot_data(const fs::path& dir, const RunResult& res) {
    const Grid& g = res.state.grid();
    std::ofstream tr(dir / "transect_v.csv");
    tr.precision(17);
    tr << "x,v,V\n";
    std::array<int, 3> c{0, 0, 0};
    for (int d = 1; d < g.n; ++d) c[d] = g.shape[d] / 2;
    for (int i = 0; i < g.shape[0]; ++i) {
        c[0] = i;
        std::size_t idx = g.index(c);
        tr << g.point(idx)[0] << "," << res.v[idx] << "," << res.state.V[idx] << "\n";
    }
    std::ofstream nt(dir / "norms.csv");
    nt.precision(12);
    nt << "q,norm1,norm2,deficit,bound,eps_h\n";
    for (const auto& r : res.state.reports)
        nt << r.q << "," << r.norm1 << "," << r.norm2 << "," << r.deficit_sup << ","
           << r.deficit_bound << "," << r.eps_h << "\n";
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& sets,
            bool dump_stages, bool emit_plot) {
    Config c = load_config(config_path, sets);
    Pipeline p = build_pipeline(c, false);
    if (dump_stages) p.rc.dump_stages = true;
    if (emit_plot) p.rc.emit_plot_data = true;

    StageSettings set;
    set.points_per_period = p.rc.points_per_period;
    set.C_h = p.rc.C_h;
    set.seed = p.rc.seed;
    set.allow_desk_ladder = p.rc.allow_desk_ladder;
    set.dump_stages = p.rc.dump_stages;
    set.dump_dir = p.rc.out_dir;

    fs::create_directories(p.rc.out_dir);
    fs::path dir(p.rc.out_dir);

    json prov{{"n", p.rc.n},
              {"mode", p.rc.mode == Mode::interior ? "interior" : "dirichlet"},
              {"domain", p.rc.domain == Domain::disc ? "disc" : "square"},
              {"resolution", p.rc.resolution},
              {"h", p.grid.h},
              {"pad", p.grid.pad},
              {"seed", p.rc.seed},
              {"frame", p.frame.to_text()},
              {"schedule", {{"ln_a", p.sched.lna}, {"b", p.sched.b}, {"c", p.sched.c},
                            {"alpha", p.sched.alpha}, {"sigma", p.sched.sigma},
                            {"K", p.sched.K}, {"C_universal", p.sched.C_universal},
                            {"q_max", p.rc.q_max}}},
              {"ledger", ledger_json(p.ledger)},
              {"tau", p.bg.tau}};

    RunResult res = run_stages(p.grid, p.bg, p.frame, p.sched, p.rc.mode, set, p.rc.q_max);

    json stage_reports = json::array();
    for (const auto& r : res.state.reports) {
        std::cout << r.json_line() << "\n";
        stage_reports.push_back(json::parse(r.json_line()));
    }
    prov["stages"] = stage_reports;
    prov["completed"] = res.completed;
    if (!res.completed) prov["failure"] = res.failure;

    int rc_code = 0;
    if (res.q_reached >= 0) {
        write_cigrid((dir / "v.grid").string(), res.v);
        write_cigrid((dir / "w.grid").string(), res.w);
        if (p.rc.dump_stages)
            write_cigrid((dir / ("V_q" + std::to_string(res.q_reached) + ".grid")).string(),
                         res.state.V);
        std::vector<TestFunction> phis = random_test_functions(p.grid, 16, p.rc.seed);
        ResidualReport rr = weak_residual(res.v, p.f, phis);
        prov["residual"] = residual_json(rr);
        std::ofstream rf(dir / "residual.json");
        rf << residual_json(rr).dump(2) << "\n";
        if (p.rc.emit_plot_data) write_plot_data(dir, res);
    }
    if (!res.completed) {
        std::cerr << "run failed: " << res.failure << "\n";
        if (res.q_reached >= 0)
            std::cerr << "partial results (q=" << res.q_reached << ") dumped to " << dir << "\n";
        rc_code = 3;
    }
    {
        std::ofstream pf(dir / "provenance.json");
        pf << prov.dump(2) << "\n";
        std::ofstream lf(dir / "run_log.jsonl");
        for (const auto& r : res.state.reports) lf << r.json_line() << "\n";
    }
    return rc_code;
}

int cmd_verify(const std::string& vpath, const std::string& fpath, const std::string& config_path,
               const std::vector<std::string>& sets, const std::string& json_path) {
    Config c = load_config(config_path, sets);
    RunConfig rc = RunConfig::parse(c);
    CigridFile vf = read_cigrid(vpath);
    rebind_domain(*vf.grid, rc.domain, rc.pad);
    ScalarField v = vf.as_scalar();
    ScalarField f;
    if (!fpath.empty()) {
        CigridFile ff = read_cigrid(fpath);
        if (!same_layout(*ff.grid, *vf.grid))
            throw IoError("verify: v and f grids do not match");
        f = ff.as_scalar();
        f.grid = vf.grid.get();
    } else {
        f = rc.f.sample(*vf.grid);
    }
    int count = static_cast<int>(c.integer("verify.test_functions", 16));
    std::vector<TestFunction> phis = random_test_functions(*vf.grid, count, rc.seed);
    ResidualReport rep = weak_residual(v, f, phis);
    json out = residual_json(rep);
    if (!json_path.empty()) {
        std::ofstream jf(json_path);
        jf << out.dump(2) << "\n";
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_dump(const std::string& path, bool header_only) {
    CigridFile f = read_cigrid(path);
    std::cout << cigrid_header(*f.grid, f.kind) << "\n";
    if (header_only) return 0;
    std::size_t npts = f.grid->size();
    for (int comp = 0; comp < f.comps; ++comp) {
        const double* p = f.data.data() + static_cast<std::size_t>(comp) * npts;
        double mn = p[0], mx = p[0], mean = 0.0;
        for (std::size_t i = 0; i < npts; ++i) {
            mn = std::min(mn, p[i]);
            mx = std::max(mx, p[i]);
            mean += p[i];
        }
        mean /= static_cast<double>(npts);
        std::cout << "comp " << comp << ": min=" << mn << " max=" << mx << " mean=" << mean
                  << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"corrugate: staged corrugation construction of very weak 2-Hessian solutions"};
    app.require_subcommand(1);

    std::string config_path, vpath, fpath, json_path;
    std::vector<std::string> sets;
    bool dump_stages = false, emit_plot = false;

    auto* feasible = app.add_subcommand("feasible", "check or search the parameter ledger");
    feasible->add_option("--config", config_path, "run configuration file");
    feasible->add_option("--set", sets, "override key=value")->take_all();
    feasible->add_option("--json", json_path, "write the report as JSON to this path");

    auto* run = app.add_subcommand("run", "execute the staged construction");
    run->add_option("--config", config_path, "run configuration file")->required();
    run->add_option("--set", sets, "override key=value")->take_all();
    run->add_flag("--dump-stages", dump_stages, "dump per-stage field snapshots");
    run->add_flag("--emit-plot-data", emit_plot, "write CSV transects and norm tables");

    auto* verify = app.add_subcommand("verify", "very-weak residual of a CIGRID field");
    verify->add_option("--v", vpath, "solution field (CIGRID)")->required();
    verify->add_option("--f", fpath, "right-hand side field (CIGRID)");
    verify->add_option("--config", config_path, "configuration (domain, presets, seed)");
    verify->add_option("--set", sets, "override key=value")->take_all();
    verify->add_option("--json", json_path, "write the report as JSON to this path");

    auto* dump = app.add_subcommand("dump", "print CIGRID header and per-component stats");
    dump->add_option("file", vpath, "CIGRID file")->required();

    auto* info = app.add_subcommand("info", "print the CIGRID header");
    info->add_option("file", vpath, "CIGRID file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (feasible->parsed()) return cmd_feasible(config_path, sets, json_path);
        if (run->parsed()) return cmd_run(config_path, sets, dump_stages, emit_plot);
        if (verify->parsed()) return cmd_verify(vpath, fpath, config_path, sets, json_path);
        if (dump->parsed()) return cmd_dump(vpath, false);
        if (info->parsed()) return cmd_dump(vpath, true);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.code);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
