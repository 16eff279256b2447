#pragma once

// On-disk cube format: `<name>.hdr` text header plus `<name>.raw` payload of
// little-endian float32 in band-sequential order.
//
// Header grammar, one `key = value` per line:
//   height = 64
//   width = 64
//   bands = 16
//   dtype = f32le
//   interleave = bsq
//   wavelengths = 450, 483.3, ...
//
// Keys are case-insensitive; unknown keys are ignored so headers can carry
// extra annotations. Wavelengths are written with 17 significant digits so
// the doubles survive the text round trip.

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "legan/hsi/cube.hpp"

static_assert(std::endian::native == std::endian::little,
              "cube payload I/O assumes a little-endian host");

namespace legan {

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

// Accepts the base path, the .hdr path or the .raw path.
inline std::string base_path(const std::string& path) {
    for (const char* ext : {".hdr", ".raw"}) {
        const size_t n = std::string(ext).size();
        if (path.size() > n && path.compare(path.size() - n, n, ext) == 0) return path.substr(0, path.size() - n);
    }
    return path;
}

} // namespace detail

inline void save_cube(const HSICube& cube, const std::string& path) {
    cube.validate(); // NaN or malformed cubes are rejected before anything is written
    const std::string base = detail::base_path(path);

    std::ofstream hdr(base + ".hdr");
    if (!hdr) throw std::runtime_error("save_cube: cannot open " + base + ".hdr for writing");
    hdr << "height = " << cube.height << "\n";
    hdr << "width = " << cube.width << "\n";
    hdr << "bands = " << cube.bands << "\n";
    hdr << "dtype = f32le\n";
    hdr << "interleave = bsq\n";
    hdr << "wavelengths = ";
    char buf[64];
    for (size_t i = 0; i < cube.wavelengths.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", cube.wavelengths[i]);
        hdr << (i ? ", " : "") << buf;
    }
    hdr << "\n";
    if (!hdr) throw std::runtime_error("save_cube: write failed for " + base + ".hdr");
    hdr.close();

    std::ofstream raw(base + ".raw", std::ios::binary);
    if (!raw) throw std::runtime_error("save_cube: cannot open " + base + ".raw for writing");
    raw.write(reinterpret_cast<const char*>(cube.data.data()),
              static_cast<std::streamsize>(cube.data.size() * sizeof(float)));
    if (!raw) throw std::runtime_error("save_cube: write failed for " + base + ".raw");
}

inline HSICube load_cube(const std::string& path) {
    const std::string base = detail::base_path(path);

    std::ifstream hdr(base + ".hdr");
    if (!hdr) throw std::runtime_error("load_cube: missing header " + base + ".hdr");
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(hdr, line)) {
        const size_t eq = line.find('=');
        if (eq == std::string::npos) continue; // blank or comment-ish line
        const std::string key = detail::lower(detail::trim(line.substr(0, eq)));
        const std::string val = detail::trim(line.substr(eq + 1));
        if (!key.empty()) kv[key] = val;
    }

    auto need = [&](const char* key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw std::runtime_error(std::string("load_cube: header misses required key '") + key + "'");
        return it->second;
    };
    auto to_count = [](const std::string& s, const char* key) {
        try {
            size_t pos = 0;
            const long long v = std::stoll(s, &pos);
            if (pos != s.size() || v <= 0) throw std::exception();
            return static_cast<idx>(v);
        } catch (...) {
            throw std::runtime_error(std::string("load_cube: bad value for '") + key + "': " + s);
        }
    };

    HSICube cube;
    cube.height = to_count(need("height"), "height");
    cube.width = to_count(need("width"), "width");
    cube.bands = to_count(need("bands"), "bands");
    if (detail::lower(need("dtype")) != "f32le")
        throw std::runtime_error("load_cube: unsupported dtype '" + need("dtype") + "' (only f32le)");
    if (detail::lower(need("interleave")) != "bsq")
        throw std::runtime_error("load_cube: unsupported interleave '" + need("interleave") + "' (only bsq)");

    {
        std::istringstream ws(need("wavelengths"));
        std::string tok;
        while (std::getline(ws, tok, ',')) {
            tok = detail::trim(tok);
            if (tok.empty()) continue;
            try {
                size_t pos = 0;
                cube.wavelengths.push_back(std::stod(tok, &pos));
                if (pos != tok.size()) throw std::exception();
            } catch (...) {
                throw std::runtime_error("load_cube: bad wavelength token '" + tok + "'");
            }
        }
    }
    if (static_cast<idx>(cube.wavelengths.size()) != cube.bands)
        throw std::runtime_error("load_cube: header lists " + std::to_string(cube.wavelengths.size()) +
                                 " wavelengths for " + std::to_string(cube.bands) + " bands");
    for (size_t i = 1; i < cube.wavelengths.size(); ++i)
        if (!(cube.wavelengths[i] > cube.wavelengths[i - 1]))
            throw std::runtime_error("load_cube: wavelengths not strictly increasing");

    std::ifstream raw(base + ".raw", std::ios::binary | std::ios::ate);
    if (!raw) throw std::runtime_error("load_cube: missing payload " + base + ".raw");
    const std::streamsize bytes = raw.tellg();
    const std::streamsize expect = static_cast<std::streamsize>(cube.height * cube.width * cube.bands) *
                                   static_cast<std::streamsize>(sizeof(float));
    if (bytes != expect)
        throw std::runtime_error("load_cube: payload holds " + std::to_string(bytes) + " bytes, header implies " +
                                 std::to_string(expect));
    raw.seekg(0);
    cube.data.resize(static_cast<size_t>(cube.height * cube.width * cube.bands));
    raw.read(reinterpret_cast<char*>(cube.data.data()), expect);
    if (!raw) throw std::runtime_error("load_cube: short read on " + base + ".raw");
    cube.validate();
    return cube;
}

} // namespace legan
