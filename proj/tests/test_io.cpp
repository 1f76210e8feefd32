#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "mfjmodl/io.hpp"
#include "oracles.hpp"

using namespace mfjmodl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("mfjmodl_io_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

RMatrix ramp(Eigen::Index rows, Eigen::Index cols) {
    RMatrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = static_cast<double>((r * 7 + c * 3) % 256);
    return m;
}

std::string pgm16(const RMatrix& v, int maxval) {
    std::string s = "P5\n# sixteen bit\n" + std::to_string(v.cols()) + " " + std::to_string(v.rows()) + "\n" +
                    std::to_string(maxval) + "\n";
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const auto x = static_cast<unsigned>(v.data()[i]);
        s.push_back(static_cast<char>(x >> 8));
        s.push_back(static_cast<char>(x & 0xff));
    }
    return s;
}

void write_png(const std::string& path, const std::vector<unsigned char>& px, int w, int h, bool color) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(w);
    img.height = static_cast<png_uint_32>(h);
    img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    ASSERT_TRUE(png_image_write_to_file(&img, path.c_str(), 0, px.data(), 0, nullptr));
}

}  // namespace

TEST(Pgm, RoundTripAndPassthrough) {
    TempDir t;
    const RMatrix img = ramp(256, 256);
    write_pgm(t.file("a.pgm"), img);
    EXPECT_EQ(ingest_image(t.file("a.pgm")), img);
    const GrayImage back = parse_pgm(encode_pgm(img));
    EXPECT_EQ(back.max_value, 255);
    EXPECT_EQ(back.pixels, img);
}

TEST(Pgm, EncodeRoundsAndClamps) {
    RMatrix v(1, 4);
    v << -3.0, 2.5, 254.4, 400.0;
    const GrayImage g = parse_pgm(encode_pgm(v));
    EXPECT_EQ(g.pixels(0, 0), 0.0);
    EXPECT_EQ(g.pixels(0, 1), 3.0);
    EXPECT_EQ(g.pixels(0, 2), 254.0);
    EXPECT_EQ(g.pixels(0, 3), 255.0);
}

TEST(Ingest, CenterCropAndPad) {
    TempDir t;
    const RMatrix img = ramp(200, 300);  // 300 wide, 200 tall
    write_pgm(t.file("b.pgm"), img);
    const RMatrix out = ingest_image(t.file("b.pgm"));
    ASSERT_EQ(out.rows(), 256);
    ASSERT_EQ(out.cols(), 256);
    // Rows: 56 missing, 28 zero rows on top. Columns: 44 extra, 22 dropped on the left.
    for (Eigen::Index r = 0; r < 256; ++r)
        for (Eigen::Index c = 0; c < 256; ++c) {
            const Eigen::Index sr = r - 28, sc = c + 22;
            const double expect = (sr >= 0 && sr < 200) ? img(sr, sc) : 0.0;
            ASSERT_EQ(out(r, c), expect) << r << "," << c;
        }
}

TEST(Ingest, RescalesDeclaredMaximum) {
    TempDir t;
    RMatrix v(2, 3);
    v << 0, 250, 500, 750, 1000, 100;
    detail::write_file(t.file("c.pgm"), pgm16(v, 1000));
    const RMatrix out = ingest_image(t.file("c.pgm"), 2, 3);
    EXPECT_DOUBLE_EQ(out(1, 1), 255.0);
    EXPECT_DOUBLE_EQ(out(0, 1), 63.75);
    std::string s = "P5 2 1 100\n";
    s.push_back(10);
    s.push_back(100);
    detail::write_file(t.file("d.pgm"), s);
    const RMatrix o2 = ingest_image(t.file("d.pgm"), 1, 2);
    EXPECT_DOUBLE_EQ(o2(0, 0), 25.5);
    EXPECT_DOUBLE_EQ(o2(0, 1), 255.0);
}

TEST(Ingest, Errors) {
    TempDir t;
    detail::write_file(t.file("x.txt"), "hello world");
    EXPECT_THROW(ingest_image(t.file("x.txt")), FormatError);
    EXPECT_THROW(ingest_image(t.file("missing.pgm")), IoError);
    for (const char* bad : {"P5\n-2 3\n255\n", "P5\n2 x\n255\n", "P5\n2 2\n70000\n", "P5\n2 2\n255\nab", "P5\n0 2\n255\n"}) {
        detail::write_file(t.file("bad.pgm"), bad);
        EXPECT_THROW(ingest_image(t.file("bad.pgm")), FormatError) << bad;
    }
    std::string over = "P5 1 1 10\n";
    over.push_back(20);
    EXPECT_THROW(parse_pgm(over), FormatError);
}

TEST(Png, GrayscaleAndColor) {
    TempDir t;
    std::vector<unsigned char> px(5 * 4);
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<unsigned char>(i * 13);
    write_png(t.file("g.png"), px, 5, 4, false);
    const RMatrix out = ingest_image(t.file("g.png"), 4, 5);
    for (Eigen::Index i = 0; i < out.size(); ++i) EXPECT_EQ(out.data()[i], px[static_cast<std::size_t>(i)]);
    write_png(t.file("c.png"), std::vector<unsigned char>(5 * 4 * 3, 9), 5, 4, true);
    EXPECT_THROW(ingest_image(t.file("c.png")), FormatError);
    std::string trunc = detail::read_file(t.file("g.png")).substr(0, 20);
    detail::write_file(t.file("t.png"), trunc);
    EXPECT_THROW(ingest_image(t.file("t.png")), FormatError);
}

TEST(Export, MappingExamples) {
    EXPECT_EQ(db_gray_levels(CMatrix::Zero(3, 3)).maxCoeff(), 0.0);
    CMatrix one = CMatrix::Zero(4, 4);
    one(2, 1) = cdouble(0.0, 3.0);
    const RMatrix g1 = db_gray_levels(one);
    EXPECT_EQ(g1(2, 1), 255.0);
    EXPECT_EQ(g1.sum(), 255.0);
    // Two levels: 1 and 0.5 (-6.02 dB) map to 255 and 255 * (1 - 6.0206 / 40).
    CMatrix two(1, 2);
    two << 1.0, 0.5;
    const RMatrix g2 = parse_pgm(encode_pgm(db_gray_levels(two))).pixels;
    EXPECT_EQ(g2(0, 0), 255.0);
    EXPECT_EQ(g2(0, 1), 217.0);
    // Below the floor clips to black.
    two << 1.0, 1e-3;
    EXPECT_EQ(db_gray_levels(two)(0, 1), 0.0);
    EXPECT_NEAR(db_gray_levels(two, -80.0)(0, 1), 63.75, 1e-9);
    CMatrix nan = CMatrix::Zero(1, 1);
    nan(0, 0) = std::nan("");
    EXPECT_THROW(db_gray_levels(nan), InvalidArgument);
    TempDir t;
    export_image(one, t.file("e.pgm"));
    EXPECT_EQ(parse_pgm(detail::read_file(t.file("e.pgm"))).pixels, g1);
}

TEST(Weights, RoundTripIsBitExact) {
    TempDir t;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const DenoiserModel m = DenoiserModel::make(1 + static_cast<int>(seed % 4), 3 + static_cast<int>(seed), seed,
                                                    seed % 2 == 0);
        save_weights(t.file("w.bin"), m, 0.125 + static_cast<double>(seed));
        const WeightFile w = load_weights(t.file("w.bin"));
        EXPECT_EQ(w.model.flatten(), m.flatten());
        EXPECT_EQ(w.model.residual, m.residual);
        EXPECT_EQ(w.lambda, 0.125 + static_cast<double>(seed));
    }
}

TEST(Weights, LayoutAndCorruption) {
    DenoiserModel m = DenoiserModel::make(1, 2, 1, true);
    const std::string b = encode_weights(m, 2.0);
    EXPECT_EQ(b.substr(0, 4), "MFJM");
    EXPECT_EQ(b.size(), 4u + 4 * 3 + 8 + 4 * 4 + 8 * (2 * 2 * 9 + 2));
    EXPECT_EQ(static_cast<unsigned char>(b[4]), 1u);  // version, little-endian
    EXPECT_EQ(static_cast<unsigned char>(b[12]), 1u);  // residual flag
    EXPECT_THROW(decode_weights("XXXX" + b.substr(4)), FormatError);
    EXPECT_THROW(decode_weights(b.substr(0, b.size() - 3)), FormatError);
    EXPECT_THROW(decode_weights(b + "z"), FormatError);
    std::string v2 = b;
    v2[4] = 2;
    EXPECT_THROW(decode_weights(v2), FormatError);
    std::string k5 = b;
    k5[4 + 12 + 8 + 8] = 5;  // kh of the first layer
    EXPECT_THROW(decode_weights(k5), FormatError);
}

TEST(Raster, EchoAndSceneRoundTrip) {
    TempDir t;
    const CMatrix d = oracle::random_complex(5, 7, 3);
    save_echo(t.file("e.bin"), EchoMatrix(d, {0.0, 0.1, 0.25, 0.3, 0.5}, 6.5e-5));
    const EchoMatrix e = load_echo(t.file("e.bin"));
    EXPECT_EQ(e.data, d);
    EXPECT_EQ(e.azimuth_times, (std::vector<double>{0.0, 0.1, 0.25, 0.3, 0.5}));
    EXPECT_EQ(e.fast_time_origin, 6.5e-5);
    save_scene(t.file("s.bin"), ReflectivityMap(d, 1.5, 0.75));
    const ReflectivityMap s = load_scene(t.file("s.bin"));
    EXPECT_EQ(s.data, d);
    EXPECT_EQ(s.azimuth_spacing, 1.5);
    EXPECT_EQ(s.range_spacing, 0.75);
    EXPECT_THROW(load_scene(t.file("e.bin")), FormatError);
    EXPECT_THROW(load_echo(t.file("s.bin")), FormatError);
    const std::string bytes = detail::read_file(t.file("s.bin"));
    detail::write_file(t.file("cut.bin"), bytes.substr(0, bytes.size() - 8));
    EXPECT_THROW(load_scene(t.file("cut.bin")), FormatError);
}

TEST(Csv, Rfc4180Quoting) {
    EXPECT_EQ(csv_field("plain"), "plain");
    EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
    EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    EXPECT_EQ(csv_field("two\nlines"), "\"two\nlines\"");
    EXPECT_EQ(csv_field(""), "");
    EXPECT_EQ(csv_row({"x", "1,2", "z"}), "x,\"1,2\",z\r\n");
}

TEST(Csv, NumbersRoundTrip) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 1000; ++i) {
        const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
        EXPECT_EQ(std::stod(format_number(v)), v);
    }
    EXPECT_EQ(format_number(0.5), "0.5");
    EXPECT_EQ(format_number(999.0), "999");
}
