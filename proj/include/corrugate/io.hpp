#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <variant>

#include "corrugate/field.hpp"

namespace corrugate {

// CIGRID v1: one text header line, then row-major little-endian 64-bit floats,
// one component plane after another.

inline std::string cigrid_kind(int comps, int n) {
    if (comps == 1) return "scalar";
    if (comps == n) return "vector";
    if (comps == sym_components(n)) return "symmat";
    throw IoError("unknown field kind for CIGRID dump");
}

inline std::string cigrid_header(const Grid& g, const std::string& kind) {
    std::ostringstream os;
    os.precision(17);
    os << "CIGRID v1 n=" << g.n << " shape=";
    for (int d = 0; d < g.n; ++d) os << (d ? "," : "") << g.shape[d];
    os << " h=" << g.h << " bbox=";
    for (int d = 0; d < g.n; ++d) os << (d ? "," : "") << g.origin[d];
    for (int d = 0; d < g.n; ++d) os << "," << (g.origin[d] + g.h * (g.shape[d] - 1));
    os << " kind=" << kind;
    return os.str();
}

inline void write_cigrid(const std::string& path, const FieldBase& f) {
    const Grid& g = *f.grid;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for write: " + path);
    out << cigrid_header(g, cigrid_kind(f.comps, g.n)) << "\n";
    out.write(reinterpret_cast<const char*>(f.data.data()),
              static_cast<std::streamsize>(f.data.size() * sizeof(double)));
    if (!out) throw IoError("write failed: " + path);
}

struct CigridFile {
    std::shared_ptr<Grid> grid; // owns the layout the field points into
    std::string kind;
    int comps = 1;
    std::vector<double> data;

    ScalarField as_scalar() const {
        if (kind != "scalar") throw IoError("CIGRID file is not a scalar field");
        ScalarField f(*grid);
        f.data = data;
        return f;
    }
    VectorField as_vector() const {
        if (kind != "vector") throw IoError("CIGRID file is not a vector field");
        VectorField f(*grid);
        f.data = data;
        return f;
    }
    SymMatrixField as_symmat() const {
        if (kind != "symmat") throw IoError("CIGRID file is not a symmat field");
        SymMatrixField f(*grid);
        f.data = data;
        return f;
    }
};

namespace detail {
inline std::string header_value(const std::string& header, const std::string& key) {
    auto pos = header.find(" " + key + "=");
    if (pos == std::string::npos) throw IoError("CIGRID header missing key: " + key);
    pos += key.size() + 2;
    auto end = header.find(' ', pos);
    return header.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
}
} // namespace detail

inline CigridFile read_cigrid(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for read: " + path);
    std::string header;
    if (!std::getline(in, header)) throw IoError("missing CIGRID header: " + path);
    if (header.rfind("CIGRID v1 ", 0) != 0) throw IoError("not a CIGRID v1 file: " + path);

    CigridFile out;
    auto grid = std::make_shared<Grid>();
    grid->n = std::stoi(detail::header_value(header, "n"));
    if (grid->n < 2 || grid->n > 3) throw IoError("CIGRID: bad dimension");
    {
        std::istringstream ss(detail::header_value(header, "shape"));
        std::string tok;
        int d = 0;
        while (std::getline(ss, tok, ',')) {
            if (d >= grid->n) throw IoError("CIGRID: too many shape entries");
            grid->shape[d++] = std::stoi(tok);
        }
        if (d != grid->n) throw IoError("CIGRID: shape entry count mismatch");
    }
    grid->h = std::stod(detail::header_value(header, "h"));
    {
        std::istringstream ss(detail::header_value(header, "bbox"));
        std::string tok;
        std::vector<double> vals;
        while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
        if (static_cast<int>(vals.size()) != 2 * grid->n) throw IoError("CIGRID: bad bbox");
        for (int d = 0; d < grid->n; ++d) grid->origin[d] = vals[d];
    }
    grid->domain = Domain::none;
    grid->pad = 0.0;
    grid->mask.assign(grid->size(), static_cast<std::uint8_t>(PointClass::interior));

    out.kind = detail::header_value(header, "kind");
    out.comps = out.kind == "scalar" ? 1 : out.kind == "vector" ? grid->n
                : out.kind == "symmat" ? sym_components(grid->n)
                : throw IoError("CIGRID: unknown kind");
    out.data.resize(grid->size() * static_cast<std::size_t>(out.comps));
    in.read(reinterpret_cast<char*>(out.data.data()),
            static_cast<std::streamsize>(out.data.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(out.data.size() * sizeof(double)))
        throw IoError("CIGRID: truncated payload: " + path);
    out.grid = grid;
    return out;
}

// Reattach domain information (mask, pad) to a grid loaded from a file.
inline void rebind_domain(Grid& g, Domain domain, double pad) {
    g.domain = domain;
    g.pad = pad;
    double collar_limit = 0.75 * pad;
    g.mask.resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        double sd = g.signed_dist(g.point(i));
        if (sd < -1e-12)
            g.mask[i] = static_cast<std::uint8_t>(PointClass::interior);
        else if (sd <= collar_limit)
            g.mask[i] = static_cast<std::uint8_t>(PointClass::collar);
        else
            g.mask[i] = static_cast<std::uint8_t>(PointClass::exterior);
    }
}

} // namespace corrugate
