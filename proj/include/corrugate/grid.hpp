#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "corrugate/common.hpp"

namespace corrugate {

using Vec = std::array<double, 3>; // padded to 3; only first n entries used

enum class Domain : int { square = 0, disc = 1, none = 2 };

enum class PointClass : std::uint8_t { interior = 0, collar = 1, exterior = 2 };

enum class Region : int { omega = 0, core = 1, all = 2 };

// Uniform grid over the padded bounding box of the domain. Axis lengths are
// equal, spacing is isotropic, the collar of width `pad` surrounds Omega.
struct Grid {
    int n = 2;
    Domain domain = Domain::square;
    std::array<int, 3> shape{1, 1, 1};
    double h = 0.0;
    Vec origin{0, 0, 0};
    double pad = 0.0;
    std::vector<std::uint8_t> mask; // PointClass per grid point

    std::size_t size() const {
        std::size_t s = 1;
        for (int d = 0; d < n; ++d) s *= static_cast<std::size_t>(shape[d]);
        return s;
    }

    std::size_t index(const std::array<int, 3>& c) const {
        std::size_t idx = 0;
        for (int d = 0; d < n; ++d) idx = idx * shape[d] + c[d];
        return idx;
    }

    std::array<int, 3> coords(std::size_t idx) const {
        std::array<int, 3> c{0, 0, 0};
        for (int d = n - 1; d >= 0; --d) {
            c[d] = static_cast<int>(idx % shape[d]);
            idx /= shape[d];
        }
        return c;
    }

    Vec point(const std::array<int, 3>& c) const {
        Vec x{0, 0, 0};
        for (int d = 0; d < n; ++d) x[d] = origin[d] + h * c[d];
        return x;
    }

    Vec point(std::size_t idx) const { return point(coords(idx)); }

    // Signed sup-norm distance to Omega: <= 0 inside, > 0 outside.
    double signed_dist(const Vec& x) const {
        if (domain == Domain::square) {
            double d = -1e300;
            for (int dd = 0; dd < n; ++dd)
                d = std::max(d, std::max(-x[dd], x[dd] - 1.0));
            return d;
        }
        if (domain == Domain::disc) {
            double r2 = 0.0;
            for (int dd = 0; dd < n; ++dd) r2 += x[dd] * x[dd];
            return std::sqrt(r2) - 1.0;
        }
        return -1.0; // Domain::none: everything counts as inside
    }

    PointClass classify(std::size_t idx) const {
        return static_cast<PointClass>(mask[idx]);
    }

    bool in_region(std::size_t idx, Region r) const {
        if (r == Region::all) return true;
        PointClass c = classify(idx);
        if (r == Region::omega) return c == PointClass::interior;
        return c != PointClass::exterior; // core = interior + collar
    }

    // Stride of axis d in the flat index.
    std::size_t stride(int d) const {
        std::size_t s = 1;
        for (int dd = n - 1; dd > d; --dd) s *= static_cast<std::size_t>(shape[dd]);
        return s;
    }
};

// Build a grid with `resolution` points per axis over Omega padded by ~pad_req.
// For the square the pad snaps to a whole number of cells so that the Omega
// boundary lands exactly on grid lines.
inline Grid make_grid(int n, Domain domain, int resolution, double pad_req) {
    if (n < 2 || n > 3) throw ConfigError("grid dimension must be 2 or 3");
    if (resolution < 9) throw ConfigError("grid resolution too small");
    if (pad_req <= 0.0) throw ConfigError("grid pad must be positive");
    Grid g;
    g.n = n;
    g.domain = domain;
    double inner = (domain == Domain::disc) ? 2.0 : 1.0;
    if (domain == Domain::disc && n != 2) throw ConfigError("disc domain is 2-D");
    double width = inner + 2.0 * pad_req;
    double h0 = width / (resolution - 1);
    int m = std::max(3, static_cast<int>(std::lround(pad_req / h0)));
    if (resolution - 1 - 2 * m < 4) throw ConfigError("pad leaves too few interior cells");
    g.h = inner / (resolution - 1 - 2 * m);
    g.pad = m * g.h;
    for (int d = 0; d < 3; ++d) g.shape[d] = (d < n) ? resolution : 1;
    double lo = (domain == Domain::disc) ? -1.0 - g.pad : -g.pad;
    for (int d = 0; d < n; ++d) g.origin[d] = lo;

    g.mask.resize(g.size());
    double collar_limit = 0.75 * g.pad;
    for (std::size_t i = 0; i < g.size(); ++i) {
        double sd = g.signed_dist(g.point(i));
        if (sd < -1e-12)
            g.mask[i] = static_cast<std::uint8_t>(PointClass::interior);
        else if (sd <= collar_limit)
            g.mask[i] = static_cast<std::uint8_t>(PointClass::collar);
        else
            g.mask[i] = static_cast<std::uint8_t>(PointClass::exterior);
    }
    return g;
}

inline bool same_layout(const Grid& a, const Grid& b) {
    if (a.n != b.n || a.h != b.h) return false;
    for (int d = 0; d < a.n; ++d)
        if (a.shape[d] != b.shape[d] || a.origin[d] != b.origin[d]) return false;
    return true;
}

} // namespace corrugate
