#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsdm/pointset.hpp"
#include "fsdm/tensor.hpp"

namespace fsdm {

/// Shortest decimal string that parses back to exactly the same double.
inline std::string fmt_double(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw std::runtime_error("fmt_double: conversion failed");
    return std::string(buf, p);
}

inline std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(path, mode);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    return f;
}

inline std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream f(path, mode);
    if (!f) throw std::runtime_error("cannot open for reading: " + path);
    return f;
}

/// Binary PGM (P5). Values in [-1, 1] map to round((v + 1) * 127.5), clamped
/// to [0, 255]; reading maps a pixel back by p / 127.5 - 1.
inline void write_pgm(const std::string& path, const Tensor& img) {
    int h = 0, w = 0;
    if (img.rank() == 2) {
        h = img.shape[0];
        w = img.shape[1];
    } else if (img.rank() == 3 && img.shape[0] == 1) {
        h = img.shape[1];
        w = img.shape[2];
    } else {
        throw std::invalid_argument("write_pgm: expects a single-channel image, got " + shape_str(img.shape));
    }
    std::ofstream f = open_out(path, std::ios::binary);
    f << "P5\n" << w << " " << h << "\n255\n";
    for (std::int64_t i = 0; i < img.numel(); ++i) {
        double v = std::round((img[i] + 1.0) * 127.5);
        if (v < 0.0) v = 0.0;
        if (v > 255.0) v = 255.0;
        const unsigned char byte = static_cast<unsigned char>(v);
        f.write(reinterpret_cast<const char*>(&byte), 1);
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

inline Tensor read_pgm(const std::string& path) {
    std::ifstream f = open_in(path, std::ios::binary);
    std::string magic;
    f >> magic;
    if (magic != "P5") throw std::runtime_error("read_pgm: not a binary PGM: " + path);
    int w = 0, h = 0, maxval = 0;
    f >> w >> h >> maxval;
    if (!f || w < 1 || h < 1 || maxval != 255)
        throw std::runtime_error("read_pgm: unsupported header in " + path);
    f.ignore(1);  // single whitespace after the header
    std::vector<char> bytes(static_cast<std::size_t>(w) * h);
    f.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("read_pgm: truncated pixel data in " + path);
    Tensor img = Tensor::zeros({1, h, w});
    for (std::size_t i = 0; i < bytes.size(); ++i)
        img[static_cast<std::int64_t>(i)] = static_cast<unsigned char>(bytes[i]) / 127.5 - 1.0;
    return img;
}

/// Point sets round-trip through CSV with an "x,y" header row.
inline void write_points_csv(const std::string& path, const PointSet& points) {
    if (points.dim != 2) throw std::invalid_argument("write_points_csv: expects 2-D points");
    std::ofstream f = open_out(path);
    f << "x,y\n";
    for (int i = 0; i < points.size(); ++i)
        f << fmt_double(points.coord(i, 0)) << "," << fmt_double(points.coord(i, 1)) << "\n";
    if (!f) throw std::runtime_error("write failed: " + path);
}

inline PointSet read_points_csv(const std::string& path) {
    std::ifstream f = open_in(path);
    std::string line;
    if (!std::getline(f, line) || line != "x,y")
        throw std::runtime_error("read_points_csv: missing x,y header in " + path);
    PointSet out(2);
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const std::size_t comma = line.find(',');
        if (comma == std::string::npos) throw std::runtime_error("read_points_csv: malformed row in " + path);
        out.add({std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
    }
    return out;
}

/// One evaluation checkpoint of a training or measurement run.
struct MetricsRow {
    std::string run_id;
    std::uint64_t seed = 0;
    int iteration = 0;
    double loss_dif = 0.0;
    double loss_ddc = 0.0;
    double loss_style = 0.0;
    double center_drift = 0.0;
    double rotation_deg = 0.0;
    double structure_corr = 0.0;
    double scs_proxy = 0.0;
    double diversity = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "run_id,seed,iteration,loss_dif,loss_ddc,loss_style,center_drift,rotation_deg,"
    "structure_corr,scs_proxy,diversity";

/// Streams MetricsRow records to a CSV file, writing the header up front.
/// Field values must be finite; the proxy columns are stand-ins computed from
/// small built-in encoders, not the large-network metrics they are named after.
class MetricsWriter {
  public:
    explicit MetricsWriter(const std::string& path) : f_(open_out(path)) { f_ << kMetricsHeader << "\n"; }

    void append(const MetricsRow& r) {
        for (double v : {r.loss_dif, r.loss_ddc, r.loss_style, r.center_drift, r.rotation_deg,
                         r.structure_corr, r.scs_proxy, r.diversity})
            if (!std::isfinite(v)) throw std::runtime_error("MetricsWriter: non-finite field in row");
        f_ << r.run_id << "," << r.seed << "," << r.iteration << "," << fmt_double(r.loss_dif) << ","
           << fmt_double(r.loss_ddc) << "," << fmt_double(r.loss_style) << "," << fmt_double(r.center_drift)
           << "," << fmt_double(r.rotation_deg) << "," << fmt_double(r.structure_corr) << ","
           << fmt_double(r.scs_proxy) << "," << fmt_double(r.diversity) << "\n";
        if (!f_) throw std::runtime_error("MetricsWriter: write failed");
    }

  private:
    std::ofstream f_;
};

}  // namespace fsdm
