#pragma once

// File formats: 8-bit PGM/PNG raster I/O, dB image export, binary weight and
// raster containers (little-endian), and RFC-4180 CSV fields.

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "denoiser.hpp"
#include "types.hpp"

namespace mfjmodl {

class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write to '" + path + "' failed");
}

class ByteWriter {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    }
    void f64(double d) {
        std::uint64_t v;
        std::memcpy(&v, &d, sizeof v);
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    }
    void raw(const std::string& s) { buf_ += s; }
    const std::string& bytes() const { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    ByteReader(const std::string& bytes, std::string what) : b_(bytes), what_(std::move(what)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b_[pos_++])) << (8 * i);
        return v;
    }
    double f64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_++])) << (8 * i);
        double d;
        std::memcpy(&d, &v, sizeof d);
        return d;
    }
    std::string raw(std::size_t n) {
        need(n);
        std::string s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == b_.size(); }

private:
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) throw FormatError(what_ + ": truncated file");
    }
    const std::string& b_;
    std::string what_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/// Gray raster with its declared maximum value.
struct GrayImage {
    RMatrix pixels;
    int max_value = 255;
};

/// Binary PGM (P5), 8- or 16-bit samples, comments allowed in the header.
inline GrayImage parse_pgm(const std::string& bytes) {
    std::size_t pos = 0;
    auto token = [&]() {
        for (;;) {
            while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
            if (pos < bytes.size() && bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
                continue;
            }
            break;
        }
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        return bytes.substr(start, pos - start);
    };
    auto number = [&](const char* field) {
        const std::string t = token();
        if (t.empty() || !std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; }) || t.size() > 9)
            throw FormatError(std::string("PGM: corrupt header (") + field + ")");
        return std::stoi(t);
    };
    if (token() != "P5") throw FormatError("PGM: missing P5 magic");
    const int width = number("width");
    const int height = number("height");
    const int maxval = number("maxval");
    if (width < 1 || height < 1) throw FormatError("PGM: corrupt header (empty raster)");
    if (maxval < 1 || maxval > 65535) throw FormatError("PGM: corrupt header (maxval out of range)");
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
        throw FormatError("PGM: corrupt header (no separator before data)");
    ++pos;
    const std::size_t depth = maxval < 256 ? 1 : 2;
    const std::size_t need = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * depth;
    if (bytes.size() - pos < need) throw FormatError("PGM: truncated pixel data");
    GrayImage img{RMatrix(height, width), maxval};
    for (Eigen::Index i = 0; i < img.pixels.size(); ++i) {
        const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos + static_cast<std::size_t>(i) * depth);
        img.pixels.data()[i] = depth == 1 ? p[0] : (p[0] << 8 | p[1]);
        if (img.pixels.data()[i] > maxval) throw FormatError("PGM: sample exceeds maxval");
    }
    return img;
}

/// Values are rounded and clamped to [0, 255].
inline std::string encode_pgm(const RMatrix& pixels) {
    require(pixels.rows() >= 1 && pixels.cols() >= 1, "encode_pgm: empty raster");
    std::string out = "P5\n" + std::to_string(pixels.cols()) + " " + std::to_string(pixels.rows()) + "\n255\n";
    out.reserve(out.size() + static_cast<std::size_t>(pixels.size()));
    for (Eigen::Index i = 0; i < pixels.size(); ++i) {
        const double v = pixels.data()[i];
        require(std::isfinite(v), "encode_pgm: non-finite pixel");
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L))));
    }
    return out;
}

inline void write_pgm(const std::string& path, const RMatrix& pixels) { detail::write_file(path, encode_pgm(pixels)); }

/// Grayscale PNG (any bit depth) decoded to 8-bit samples.
inline GrayImage decode_png(const std::string& bytes) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
        throw FormatError("PNG: " + std::string(image.message));
    if (image.format & PNG_FORMAT_FLAG_COLOR) {
        png_image_free(&image);
        throw FormatError("PNG: only grayscale images are supported");
    }
    image.format = PNG_FORMAT_GRAY;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr))
        throw FormatError("PNG: " + std::string(image.message));
    GrayImage img{RMatrix(image.height, image.width), 255};
    for (Eigen::Index i = 0; i < img.pixels.size(); ++i) img.pixels.data()[i] = buf[static_cast<std::size_t>(i)];
    return img;
}

/// Centers `in` on a rows x cols raster: larger inputs lose floor(excess/2)
/// leading rows/columns, smaller ones gain floor(deficit/2) leading zeros.
inline RMatrix center_fit(const RMatrix& in, Eigen::Index rows, Eigen::Index cols) {
    require(rows >= 1 && cols >= 1, "center_fit: target raster must be non-empty");
    RMatrix out = RMatrix::Zero(rows, cols);
    const Eigen::Index src_r = std::max<Eigen::Index>(0, (in.rows() - rows) / 2);
    const Eigen::Index src_c = std::max<Eigen::Index>(0, (in.cols() - cols) / 2);
    const Eigen::Index dst_r = std::max<Eigen::Index>(0, (rows - in.rows()) / 2);
    const Eigen::Index dst_c = std::max<Eigen::Index>(0, (cols - in.cols()) / 2);
    const Eigen::Index nr = std::min(rows, in.rows()), nc = std::min(cols, in.cols());
    out.block(dst_r, dst_c, nr, nc) = in.block(src_r, src_c, nr, nc);
    return out;
}

/// Loads a PGM (P5) or grayscale PNG, scales samples so the declared maximum
/// maps to 255, and center-fits the result to rows x cols.
inline RMatrix ingest_image(const std::string& path, Eigen::Index rows = 256, Eigen::Index cols = 256) {
    const std::string bytes = detail::read_file(path);
    GrayImage img;
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5')
        img = parse_pgm(bytes);
    else if (bytes.size() >= 8 && png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) == 0)
        img = decode_png(bytes);
    else
        throw FormatError("'" + path + "': unsupported image format (expected PGM P5 or PNG)");
    RMatrix scaled = img.pixels * (255.0 / img.max_value);
    return center_fit(scaled, rows, cols);
}

/// Gray level of each pixel: 255 (1 - dB / floor) for dB = 20 log10(|x| / peak),
/// clipped to [0, 255]; an all-zero image is black.
inline RMatrix db_gray_levels(const CMatrix& image, double db_floor = -40.0) {
    require(db_floor < 0.0, "export_image: dB floor must be negative");
    require(all_finite(image), "export_image: non-finite image");
    const RMatrix mag = image.cwiseAbs();
    const double peak = mag.size() ? mag.maxCoeff() : 0.0;
    RMatrix g = RMatrix::Zero(image.rows(), image.cols());
    if (peak <= 0.0) return g;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
        const double m = mag.data()[i];
        if (m <= 0.0) continue;
        const double db = 20.0 * std::log10(m / peak);
        g.data()[i] = std::clamp(255.0 * (1.0 - db / db_floor), 0.0, 255.0);
    }
    return g;
}

inline void export_image(const CMatrix& image, const std::string& path, double db_floor = -40.0) {
    write_pgm(path, db_gray_levels(image, db_floor));
}

// Weight container: "MFJM", u32 version, u32 layer count, u32 flags
// (bit 0 = residual), f64 lambda, then per layer u32 in, out, kh, kw followed
// by out*in*kh*kw f64 weights and out f64 biases.

inline constexpr std::uint32_t kWeightFormatVersion = 1;

struct WeightFile {
    DenoiserModel model;
    double lambda = 1.0;
};

inline std::string encode_weights(const DenoiserModel& model, double lambda) {
    model.validate();
    detail::ByteWriter w;
    w.raw("MFJM");
    w.u32(kWeightFormatVersion);
    w.u32(static_cast<std::uint32_t>(model.layers.size()));
    w.u32(model.residual ? 1u : 0u);
    w.f64(lambda);
    for (const ConvLayer& L : model.layers) {
        w.u32(static_cast<std::uint32_t>(L.in_channels));
        w.u32(static_cast<std::uint32_t>(L.out_channels));
        w.u32(ConvLayer::kKernel);
        w.u32(ConvLayer::kKernel);
        for (double v : L.weights) w.f64(v);
        for (double v : L.bias) w.f64(v);
    }
    return w.bytes();
}

inline WeightFile decode_weights(const std::string& bytes) {
    detail::ByteReader r(bytes, "weights");
    if (r.raw(4) != "MFJM") throw FormatError("weights: bad magic");
    const std::uint32_t version = r.u32();
    if (version != kWeightFormatVersion) throw FormatError("weights: unsupported version " + std::to_string(version));
    const std::uint32_t layers = r.u32();
    const std::uint32_t flags = r.u32();
    if (layers == 0 || layers > 1024) throw FormatError("weights: implausible layer count");
    WeightFile out;
    out.model.residual = (flags & 1u) != 0;
    out.lambda = r.f64();
    for (std::uint32_t l = 0; l < layers; ++l) {
        const std::uint32_t in = r.u32(), o = r.u32(), kh = r.u32(), kw = r.u32();
        if (kh != ConvLayer::kKernel || kw != ConvLayer::kKernel) throw FormatError("weights: only 3x3 kernels are supported");
        if (in == 0 || o == 0 || in > 4096 || o > 4096) throw FormatError("weights: implausible channel count");
        ConvLayer L(static_cast<int>(in), static_cast<int>(o));
        for (double& v : L.weights) v = r.f64();
        for (double& v : L.bias) v = r.f64();
        out.model.layers.push_back(std::move(L));
    }
    if (!r.at_end()) throw FormatError("weights: trailing bytes");
    try {
        out.model.validate();
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("weights: ") + e.what());
    }
    if (!(std::isfinite(out.lambda) && out.lambda > 0.0)) throw FormatError("weights: lambda must be positive");
    return out;
}

inline void save_weights(const std::string& path, const DenoiserModel& model, double lambda) {
    detail::write_file(path, encode_weights(model, lambda));
}

inline WeightFile load_weights(const std::string& path) { return decode_weights(detail::read_file(path)); }

// Raster container: "MFJR", u32 version, u32 kind (0 echo, 1 scene), u32 rows,
// u32 cols, two f64 header values (echo: fast-time origin and 0; scene:
// azimuth and range spacing), echo only: rows f64 slow times, then rows*cols
// interleaved f64 real/imaginary pairs in row-major order.

inline constexpr std::uint32_t kRasterFormatVersion = 1;

namespace detail {

inline std::string encode_raster(std::uint32_t kind, const CMatrix& data, double h0, double h1,
                                 const std::vector<double>* times) {
    ByteWriter w;
    w.raw("MFJR");
    w.u32(kRasterFormatVersion);
    w.u32(kind);
    w.u32(static_cast<std::uint32_t>(data.rows()));
    w.u32(static_cast<std::uint32_t>(data.cols()));
    w.f64(h0);
    w.f64(h1);
    if (times)
        for (double t : *times) w.f64(t);
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        w.f64(data.data()[i].real());
        w.f64(data.data()[i].imag());
    }
    return w.bytes();
}

struct RasterPayload {
    std::uint32_t kind = 0;
    CMatrix data;
    double h0 = 0.0, h1 = 0.0;
    std::vector<double> times;
};

inline RasterPayload decode_raster(const std::string& bytes) {
    ByteReader r(bytes, "raster");
    if (r.raw(4) != "MFJR") throw FormatError("raster: bad magic");
    if (r.u32() != kRasterFormatVersion) throw FormatError("raster: unsupported version");
    RasterPayload p;
    p.kind = r.u32();
    if (p.kind > 1) throw FormatError("raster: unknown kind");
    const std::uint32_t rows = r.u32(), cols = r.u32();
    if (rows == 0 || cols == 0) throw FormatError("raster: empty raster");
    const std::uint64_t cells = static_cast<std::uint64_t>(rows) * cols;
    if (cells * 16 > bytes.size()) throw FormatError("raster: truncated file");
    p.h0 = r.f64();
    p.h1 = r.f64();
    if (p.kind == 0) {
        p.times.resize(rows);
        for (double& t : p.times) t = r.f64();
    }
    p.data.resize(rows, cols);
    for (Eigen::Index i = 0; i < p.data.size(); ++i) {
        const double re = r.f64();
        p.data.data()[i] = cdouble(re, r.f64());
    }
    if (!r.at_end()) throw FormatError("raster: trailing bytes");
    return p;
}

}  // namespace detail

inline void save_echo(const std::string& path, const EchoMatrix& e) {
    e.validate();
    detail::write_file(path, detail::encode_raster(0, e.data, e.fast_time_origin, 0.0, &e.azimuth_times));
}

inline EchoMatrix load_echo(const std::string& path) {
    detail::RasterPayload p = detail::decode_raster(detail::read_file(path));
    if (p.kind != 0) throw FormatError("'" + path + "' holds a scene, not an echo");
    try {
        return EchoMatrix(std::move(p.data), std::move(p.times), p.h0);
    } catch (const Error& e) {
        throw FormatError(std::string("raster: ") + e.what());
    }
}

inline void save_scene(const std::string& path, const ReflectivityMap& s) {
    s.validate();
    detail::write_file(path, detail::encode_raster(1, s.data, s.azimuth_spacing, s.range_spacing, nullptr));
}

inline ReflectivityMap load_scene(const std::string& path) {
    detail::RasterPayload p = detail::decode_raster(detail::read_file(path));
    if (p.kind != 1) throw FormatError("'" + path + "' holds an echo, not a scene");
    try {
        return ReflectivityMap(std::move(p.data), p.h0, p.h1);
    } catch (const Error& e) {
        throw FormatError(std::string("raster: ") + e.what());
    }
}

/// RFC-4180 field: quoted when it holds a comma, quote, CR or LF; inner
/// quotes doubled.
inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

inline std::string csv_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += csv_field(fields[i]);
    }
    return out + "\r\n";
}

/// Shortest decimal that round-trips, so reports are byte-stable.
inline std::string format_number(double v) {
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

}  // namespace mfjmodl
