#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "corrugate/elliptic.hpp"
#include "corrugate/scheduler.hpp"
#include "corrugate/stages.hpp"

namespace corrugate {

// Flat key=value configuration with dotted sections, '#' comments.
struct Config {
    std::map<std::string, std::string> kv;
    std::map<std::string, int> line_of;

    static Config from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config: " + path);
        Config c;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            c.add_line(line, lineno, path);
        }
        return c;
    }

    void add_line(const std::string& raw, int lineno, const std::string& where) {
        std::string line = raw;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto notspace = [](unsigned char ch) { return !std::isspace(ch); };
        auto b = std::find_if(line.begin(), line.end(), notspace);
        auto e = std::find_if(line.rbegin(), line.rend(), notspace).base();
        if (b >= e) return;
        line = std::string(b, e);
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            std::ostringstream os;
            os << where << ":" << lineno << ": expected key = value, got '" << line << "'";
            throw ConfigError(os.str());
        }
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        auto trim = [&](std::string s) {
            auto bb = std::find_if(s.begin(), s.end(), notspace);
            auto ee = std::find_if(s.rbegin(), s.rend(), notspace).base();
            return (bb < ee) ? std::string(bb, ee) : std::string();
        };
        key = trim(key);
        val = trim(val);
        if (key.empty()) {
            std::ostringstream os;
            os << where << ":" << lineno << ": empty key";
            throw ConfigError(os.str());
        }
        kv[key] = val;
        line_of[key] = lineno;
    }

    void set(const std::string& key, const std::string& val) { kv[key] = val; }
    bool has(const std::string& key) const { return kv.count(key) != 0; }

    std::string str(const std::string& key, const std::string& def = "") const {
        auto it = kv.find(key);
        return it == kv.end() ? def : it->second;
    }
    std::string require(const std::string& key) const {
        auto it = kv.find(key);
        if (it == kv.end()) throw ConfigError("config: missing key '" + key + "'");
        return it->second;
    }
    double num(const std::string& key, double def) const {
        auto it = kv.find(key);
        if (it == kv.end()) return def;
        try {
            std::size_t pos = 0;
            double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (...) {
            throw ConfigError("config: key '" + key + "' is not a number: '" + it->second + "'");
        }
    }
    long integer(const std::string& key, long def) const {
        double v = num(key, static_cast<double>(def));
        long r = static_cast<long>(std::llround(v));
        if (std::fabs(v - r) > 1e-9)
            throw ConfigError("config: key '" + key + "' must be an integer");
        return r;
    }
    bool flag(const std::string& key, bool def) const {
        auto it = kv.find(key);
        if (it == kv.end()) return def;
        const std::string& v = it->second;
        if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
        if (v == "0" || v == "false" || v == "no" || v == "off") return false;
        throw ConfigError("config: key '" + key + "' is not a boolean: '" + v + "'");
    }
};

// Analytic presets for f, g and v^b. kinds: constant, gaussian, quadratic,
// trig, saddle, zero.
struct Preset {
    std::string kind = "zero";
    double value = 0.0;   // constant
    double amp = 1.0;
    double cx = 0.0, cy = 0.0, cz = 0.0;
    double width = 0.3;
    double kx = 1.0, ky = 1.0, kz = 0.0;
    double coef = 1.0;    // quadratic / saddle coefficient

    static Preset from_config(const Config& c, const std::string& prefix, const std::string& def_kind) {
        Preset p;
        p.kind = c.str(prefix + ".kind", def_kind);
        p.value = c.num(prefix + ".value", 1.0);
        p.amp = c.num(prefix + ".amp", 1.0);
        p.cx = c.num(prefix + ".cx", 0.0);
        p.cy = c.num(prefix + ".cy", 0.0);
        p.cz = c.num(prefix + ".cz", 0.0);
        p.width = c.num(prefix + ".width", 0.3);
        p.kx = c.num(prefix + ".kx", 1.0);
        p.ky = c.num(prefix + ".ky", 1.0);
        p.kz = c.num(prefix + ".kz", 0.0);
        p.coef = c.num(prefix + ".coef", 1.0);
        return p;
    }

    double eval(const Vec& x, int n) const {
        if (kind == "zero") return 0.0;
        if (kind == "constant") return value;
        if (kind == "gaussian") {
            double r2 = 0.0;
            const double cs[3] = {cx, cy, cz};
            for (int d = 0; d < n; ++d) {
                double y = x[d] - cs[d];
                r2 += y * y;
            }
            return amp * std::exp(-r2 / (width * width));
        }
        if (kind == "trig") {
            double v = amp;
            const double ks[3] = {kx, ky, kz};
            for (int d = 0; d < n; ++d)
                if (ks[d] != 0.0) v *= std::sin(two_pi * ks[d] * x[d]);
            return v;
        }
        if (kind == "quadratic") {
            double v = 0.0;
            for (int d = 0; d < n; ++d) v += x[d] * x[d];
            return coef * v;
        }
        if (kind == "saddle") return coef * (x[0] * x[0] - x[1] * x[1]);
        throw ConfigError("unknown preset kind: " + kind);
    }

    ScalarField sample(const Grid& g) const {
        ScalarField f(g);
        parallel_for(g.size(), [&](std::size_t i) { f[i] = eval(g.point(i), g.n); });
        return f;
    }
};

struct RunConfig {
    int n = 2;
    Mode mode = Mode::interior;
    Domain domain = Domain::square;
    int resolution = 257;
    double pad = 0.125;
    int points_per_period = 16;
    // schedule: explicit a,b,c or derived via find_feasible from alpha
    bool explicit_abc = false;
    double a = 0.0, b = 0.0, c = 0.0;
    double alpha = 0.05;
    double sigma = 0.0; // 0: use sigma*/3 of the frame
    double K = 16.0;
    double C_universal = 1e3;
    int q_max = 3;
    double C_h = 10.0;
    Preset f, g, vb;
    bool select_vb = false; // boundary mode: pick v^b via select_background
    double epsilon = 0.5;
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    bool dump_stages = false;
    bool emit_plot_data = false;
    bool allow_desk_ladder = true;
    double vb_mollify = 0.0;

    static RunConfig parse(const Config& c) {
        RunConfig r;
        r.n = static_cast<int>(c.integer("n", 2));
        std::string mode = c.str("mode", "interior");
        if (mode == "interior") r.mode = Mode::interior;
        else if (mode == "dirichlet") r.mode = Mode::dirichlet;
        else throw ConfigError("config: mode must be interior or dirichlet");
        std::string dom = c.str("domain", r.mode == Mode::dirichlet ? "disc" : "square");
        if (dom == "square") r.domain = Domain::square;
        else if (dom == "disc") r.domain = Domain::disc;
        else throw ConfigError("config: domain must be square or disc");
        if (r.mode == Mode::dirichlet && r.domain != Domain::disc)
            throw ConfigError("config: mode=dirichlet requires domain=disc");
        r.resolution = static_cast<int>(c.integer("grid.resolution", 257));
        r.pad = c.num("grid.pad", r.domain == Domain::disc ? 0.25 : 0.125);
        r.points_per_period = static_cast<int>(c.integer("grid.points_per_period", 16));
        r.explicit_abc = c.has("schedule.a") || c.has("schedule.b") || c.has("schedule.c");
        if (r.explicit_abc) {
            r.a = c.num("schedule.a", 0.0);
            r.b = c.num("schedule.b", 0.0);
            r.c = c.num("schedule.c", 0.0);
            if (!(r.a > 1.0 && r.b > 1.0 && r.b < 2.0 && r.c > 0.0))
                throw ConfigError("config: explicit schedule needs a>1, 1<b<2, c>0");
        }
        r.alpha = c.num("schedule.alpha", 0.05);
        r.sigma = c.num("schedule.sigma", 0.0);
        r.K = c.num("schedule.K", 16.0);
        r.C_universal = c.num("schedule.C_universal", 1e3);
        r.q_max = static_cast<int>(c.integer("schedule.q_max", 3));
        r.C_h = c.num("schedule.C_h", 10.0);
        r.f = Preset::from_config(c, "problem.f", "constant");
        r.g = Preset::from_config(c, "problem.g", "zero");
        r.vb = Preset::from_config(c, "problem.vb", "zero");
        r.select_vb = c.flag("problem.select_vb", false);
        r.epsilon = c.num("problem.epsilon", 0.5);
        r.seed = static_cast<std::uint64_t>(c.integer("seed", 1));
        r.out_dir = c.str("output.dir", "out");
        r.dump_stages = c.flag("output.dump_stages", false);
        r.emit_plot_data = c.flag("output.emit_plot_data", false);
        r.allow_desk_ladder = c.flag("schedule.desk_ladder", true);
        r.vb_mollify = c.num("problem.vb_mollify", 0.0);
        return r;
    }
};

} // namespace corrugate
