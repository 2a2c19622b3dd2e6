#pragma once

#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "octsim/scan.hpp"

namespace octsim {

// Corpus format for label rasters: one binary 8-bit PGM per B-scan (pixel
// value = class code 0..3, rows = depth, columns = A-scans) plus a sidecar
// text file with the voxel spacing and timestamp. Recorded real segmentations
// in the same layout can be replayed through the perception pipeline.

inline void write_pgm(const std::filesystem::path& path, const std::uint8_t* data, int width, int height) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_pgm: cannot open " + path.string());
    out << "P5\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(width) * height);
    if (!out) throw std::runtime_error("write_pgm: write failed for " + path.string());
}

inline std::vector<std::uint8_t> read_pgm(const std::filesystem::path& path, int& width, int& height) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_pgm: cannot open " + path.string());
    auto next_token = [&]() -> std::string {
        std::string tok;
        int c;
        while ((c = in.get()) != EOF) {
            if (c == '#') {
                while ((c = in.get()) != EOF && c != '\n') {}
                continue;
            }
            if (std::isspace(c)) {
                if (!tok.empty()) return tok;
                continue;
            }
            tok.push_back(static_cast<char>(c));
        }
        return tok;
    };
    if (next_token() != "P5") throw std::runtime_error("read_pgm: not a binary PGM: " + path.string());
    width = std::stoi(next_token());
    height = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 255)
        throw std::runtime_error("read_pgm: unsupported header in " + path.string());
    std::vector<std::uint8_t> data(static_cast<std::size_t>(width) * height);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!in) throw std::runtime_error("read_pgm: truncated pixel data in " + path.string());
    return data;
}

inline std::filesystem::path bscan_raster_path(const std::filesystem::path& dir, const std::string& base, int b) {
    return dir / (base + "_b" + std::to_string(b) + ".pgm");
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& dir, const std::string& base) {
    return dir / (base + ".meta");
}

inline void save_b5scan(const B5Scan& scan, const std::filesystem::path& dir, const std::string& base) {
    std::filesystem::create_directories(dir);
    // pixel (row=d, col=a) <- labels[b][a][d]
    std::vector<std::uint8_t> img(static_cast<std::size_t>(scan.n_ascans) * scan.depth_pixels);
    for (int b = 0; b < scan.n_bscans; ++b) {
        for (int d = 0; d < scan.depth_pixels; ++d)
            for (int a = 0; a < scan.n_ascans; ++a)
                img[static_cast<std::size_t>(d) * scan.n_ascans + a] = scan.labels[scan.index(b, a, d)];
        write_pgm(bscan_raster_path(dir, base, b), img.data(), scan.n_ascans, scan.depth_pixels);
    }
    std::ofstream meta(sidecar_path(dir, base));
    if (!meta) throw std::runtime_error("save_b5scan: cannot write sidecar");
    meta.precision(17);
    meta << "n_bscans = " << scan.n_bscans << "\n"
         << "n_ascans = " << scan.n_ascans << "\n"
         << "depth_pixels = " << scan.depth_pixels << "\n"
         << "lateral_spacing_um = " << scan.voxel_spacing_um.x << "\n"
         << "inter_bscan_spacing_um = " << scan.voxel_spacing_um.y << "\n"
         << "axial_spacing_um = " << scan.voxel_spacing_um.z << "\n"
         << "timestamp_s = " << scan.timestamp_s << "\n";
}

inline B5Scan load_b5scan(const std::filesystem::path& dir, const std::string& base) {
    std::ifstream meta(sidecar_path(dir, base));
    if (!meta) throw std::runtime_error("load_b5scan: missing sidecar " + sidecar_path(dir, base).string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(meta, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    auto need = [&](const std::string& key) -> const std::string& {
        const auto it = kv.find(key);
        if (it == kv.end()) throw std::runtime_error("load_b5scan: sidecar missing key " + key);
        return it->second;
    };
    B5Scan scan;
    scan.n_bscans = std::stoi(need("n_bscans"));
    scan.n_ascans = std::stoi(need("n_ascans"));
    scan.depth_pixels = std::stoi(need("depth_pixels"));
    scan.voxel_spacing_um = {std::stod(need("lateral_spacing_um")), std::stod(need("inter_bscan_spacing_um")),
                             std::stod(need("axial_spacing_um"))};
    scan.timestamp_s = std::stod(need("timestamp_s"));
    scan.labels.assign(static_cast<std::size_t>(scan.n_bscans) * scan.n_ascans * scan.depth_pixels,
                       static_cast<std::uint8_t>(VoxelClass::background));
    for (int b = 0; b < scan.n_bscans; ++b) {
        int w = 0, h = 0;
        const auto img = read_pgm(bscan_raster_path(dir, base, b), w, h);
        if (w != scan.n_ascans || h != scan.depth_pixels)
            throw std::runtime_error("load_b5scan: raster size mismatch in B-scan " + std::to_string(b));
        for (int d = 0; d < scan.depth_pixels; ++d)
            for (int a = 0; a < scan.n_ascans; ++a)
                scan.labels[scan.index(b, a, d)] = img[static_cast<std::size_t>(d) * scan.n_ascans + a];
    }
    return scan;
}

}  // namespace octsim
