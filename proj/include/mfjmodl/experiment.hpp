#pragma once

// Config-driven experiment harness: scene generation, sampling patterns,
// training, reconstruction and evaluation, with reproducible reports.

#include <glob.h>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <chrono>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "io.hpp"
#include "metrics.hpp"
#include "operators.hpp"
#include "recon.hpp"
#include "sampling.hpp"
#include "sar_core.hpp"
#include "scene.hpp"
#include "training.hpp"

namespace mfjmodl {

class ConfigError : public Error {
public:
    using Error::Error;
};

struct SceneSpec {
    std::string source = "synthetic";  // synthetic | images
    SceneTier tier = SceneTier::Sparse;
    int count = 4;
    Eigen::Index rows = 32;
    Eigen::Index cols = 32;
    std::vector<std::string> images;
    std::string echo_model = "operator";  // operator | physical
    double noise = 0.0;
};

struct PatternSpec {
    std::vector<std::string> kinds{"poisson"};  // uniform | poisson | staggered | jittered | joint | learned:PATH
    std::vector<double> budgets{0.5};
    double min_spacing = 0.5;  // PRI
    double pri_min = 0.75;     // multiples of the mean pulse interval
    double pri_max = 1.25;
    int ramp_steps = 8;
    double jitter = 0.3;  // fraction of the mean interval
};

struct ReconSpec {
    std::string method = "modl";  // mf | ista | modl
    int unroll = 5;
    int cg_iterations = 10;
    double cg_tolerance = 1e-10;
    double lambda = 0.5;
    std::string weights;
    int depth = 3;
    int width = 8;
    double ista_lambda = 0.05;
    int ista_iterations = 100;
};

struct TrainSpec {
    int epochs = 0;
    int samples = 8;
    double lr_pattern = 1e-4;  // PRI per step
    double lr_weights = 1e-3;
    double lr_lambda = 1e-3;
    double noise = 0.01;
    PatternGradientMode gradient = PatternGradientMode::ReconstructionOnly;
    std::vector<std::string> dataset;
};

struct ExperimentConfig {
    SarParams sar;
    SceneSpec scene;
    PatternSpec pattern;
    ReconSpec recon;
    TrainSpec train;
    std::string output_dir = "out";
    std::uint64_t seed = 1;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s + ",") {
        if (c == ',') {
            const std::string t = trim(cur);
            if (!t.empty()) out.push_back(t);
            cur.clear();
        } else {
            cur += c;
        }
    }
    return out;
}

inline std::vector<std::string> expand_glob(const std::string& pattern) {
    glob_t g{};
    std::vector<std::string> out;
    if (::glob(pattern.c_str(), 0, nullptr, &g) == 0)
        for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
    globfree(&g);
    return out;
}

/// Typed access to an INI tree that remembers where each key was written.
class ConfigReader {
public:
    ConfigReader(const std::string& text, std::string name) : name_(std::move(name)) {
        std::istringstream in(text);
        try {
            boost::property_tree::ini_parser::read_ini(in, tree_);
        } catch (const boost::property_tree::ini_parser_error& e) {
            throw ConfigError(name_ + ":" + std::to_string(e.line()) + ": " + e.message());
        }
        std::istringstream lines(text);
        std::string line, section;
        for (int n = 1; std::getline(lines, line); ++n) {
            const std::string t = trim(line);
            if (t.empty() || t[0] == ';' || t[0] == '#') continue;
            if (t[0] == '[') {
                section = trim(t.substr(1, t.find(']') - 1));
                section_lines_[section] = n;
            } else if (const auto eq = t.find('='); eq != std::string::npos) {
                lines_[section + "." + trim(t.substr(0, eq))] = n;
            }
        }
    }

    [[noreturn]] void fail(const std::string& section, const std::string& key, const std::string& msg) const {
        const auto it = lines_.find(section + "." + key);
        const std::string where = it != lines_.end() ? ":" + std::to_string(it->second) : "";
        throw ConfigError(name_ + where + ": [" + section + "] " + key + ": " + msg);
    }

    void check_keys(const std::map<std::string, std::set<std::string>>& allowed) const {
        for (const auto& [section, body] : tree_) {
            const auto s = allowed.find(section);
            if (s == allowed.end()) {
                const auto it = section_lines_.find(section);
                throw ConfigError(name_ + (it != section_lines_.end() ? ":" + std::to_string(it->second) : "") +
                                  ": unknown section [" + section + "]");
            }
            for (const auto& [key, value] : body)
                if (!s->second.count(key)) fail(section, key, "unknown key");
        }
    }

    std::optional<std::string> raw(const std::string& section, const std::string& key) const {
        const auto s = tree_.get_child_optional(boost::property_tree::ptree::path_type(section, '\0'));
        if (!s) return std::nullopt;
        const auto v = s->get_optional<std::string>(boost::property_tree::ptree::path_type(key, '\0'));
        if (!v) return std::nullopt;
        return trim(*v);
    }

    std::string text(const std::string& section, const std::string& key, const std::string& fallback) const {
        return raw(section, key).value_or(fallback);
    }

    double number(const std::string& section, const std::string& key, double fallback) const {
        const auto v = raw(section, key);
        if (!v) return fallback;
        double out = 0.0;
        const auto res = std::from_chars(v->data(), v->data() + v->size(), out);
        if (res.ec != std::errc() || res.ptr != v->data() + v->size() || !std::isfinite(out))
            fail(section, key, "expected a number, got '" + *v + "'");
        return out;
    }

    long long integer(const std::string& section, const std::string& key, long long fallback) const {
        const auto v = raw(section, key);
        if (!v) return fallback;
        long long out = 0;
        const auto res = std::from_chars(v->data(), v->data() + v->size(), out);
        if (res.ec != std::errc() || res.ptr != v->data() + v->size())
            fail(section, key, "expected an integer, got '" + *v + "'");
        return out;
    }

    std::vector<double> numbers(const std::string& section, const std::string& key, std::vector<double> fallback) const {
        const auto v = raw(section, key);
        if (!v) return fallback;
        std::vector<double> out;
        for (const std::string& item : split_list(*v)) {
            double x = 0.0;
            const auto res = std::from_chars(item.data(), item.data() + item.size(), x);
            if (res.ec != std::errc() || res.ptr != item.data() + item.size())
                fail(section, key, "expected a list of numbers, got '" + item + "'");
            out.push_back(x);
        }
        if (out.empty()) fail(section, key, "empty list");
        return out;
    }

    void check(bool ok, const std::string& section, const std::string& key, const std::string& msg) const {
        if (!ok) fail(section, key, msg);
    }

private:
    boost::property_tree::ptree tree_;
    std::string name_;
    std::map<std::string, int> lines_;
    std::map<std::string, int> section_lines_;
};

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

}  // namespace detail

/// Parses INI text. Relative paths resolve against `base_dir`; `name` labels
/// error messages, which carry the offending line number.
inline ExperimentConfig parse_config(const std::string& text, const std::string& name = "config",
                                     const std::filesystem::path& base_dir = ".") {
    const detail::ConfigReader r(text, name);
    r.check_keys({
        {"run", {"seed", "output"}},
        {"sar",
         {"carrier_frequency", "range_bandwidth", "range_sampling_rate", "pulse_duration", "range_chirp_rate",
          "doppler_rate", "prf", "platform_velocity", "platform_height", "antenna_length_azimuth"}},
        {"scene", {"source", "tier", "count", "rows", "cols", "images", "echo", "noise"}},
        {"pattern", {"kind", "budget", "min_spacing", "pri_min", "pri_max", "ramp_steps", "jitter"}},
        {"recon",
         {"method", "unroll", "cg_iterations", "cg_tolerance", "lambda", "weights", "depth", "width", "ista_lambda",
          "ista_iterations"}},
        {"train", {"epochs", "samples", "lr_pattern", "lr_weights", "lr_lambda", "noise", "gradient", "dataset"}},
    });
    ExperimentConfig c;

    const long long seed = r.integer("run", "seed", 1);
    r.check(seed >= 0, "run", "seed", "must be non-negative");
    c.seed = static_cast<std::uint64_t>(seed);
    c.output_dir = detail::resolve(base_dir, r.text("run", "output", "out"));

    SarParams& p = c.sar;
    auto sar_field = [&](const char* key, double& field) {
        field = r.number("sar", key, field);
        r.check(field > 0.0, "sar", key, "must be positive");
    };
    sar_field("carrier_frequency", p.carrier_frequency);
    p.wavelength = kSpeedOfLight / p.carrier_frequency;
    sar_field("range_bandwidth", p.range_bandwidth);
    sar_field("range_sampling_rate", p.range_sampling_rate);
    sar_field("pulse_duration", p.pulse_duration);
    sar_field("range_chirp_rate", p.range_chirp_rate);
    sar_field("doppler_rate", p.doppler_rate);
    sar_field("prf", p.prf);
    sar_field("platform_velocity", p.platform_velocity);
    sar_field("platform_height", p.platform_height);
    sar_field("antenna_length_azimuth", p.antenna_length_azimuth);
    try {
        p.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(name + ": [sar] " + e.what());
    }

    SceneSpec& s = c.scene;
    s.source = r.text("scene", "source", s.source);
    r.check(s.source == "synthetic" || s.source == "images", "scene", "source", "expected synthetic or images");
    try {
        s.tier = parse_scene_tier(r.text("scene", "tier", "sparse"));
    } catch (const InvalidArgument& e) {
        r.fail("scene", "tier", e.what());
    }
    s.count = static_cast<int>(r.integer("scene", "count", s.count));
    r.check(s.count >= 1, "scene", "count", "must be at least 1");
    s.rows = r.integer("scene", "rows", s.rows);
    s.cols = r.integer("scene", "cols", s.cols);
    r.check(s.rows >= 8 && s.rows <= 4096, "scene", "rows", "must lie in [8, 4096]");
    r.check(s.cols >= 8 && s.cols <= 4096, "scene", "cols", "must lie in [8, 4096]");
    s.echo_model = r.text("scene", "echo", s.echo_model);
    r.check(s.echo_model == "operator" || s.echo_model == "physical", "scene", "echo", "expected operator or physical");
    s.noise = r.number("scene", "noise", s.noise);
    r.check(s.noise >= 0.0, "scene", "noise", "must be non-negative");
    if (s.source == "images") {
        const auto list = r.raw("scene", "images");
        r.check(list.has_value(), "scene", "source", "images source needs an images = key");
        for (const std::string& pat : detail::split_list(*list)) {
            const auto hits = detail::expand_glob(detail::resolve(base_dir, pat));
            if (hits.empty()) r.fail("scene", "images", "no file matches '" + pat + "'");
            s.images.insert(s.images.end(), hits.begin(), hits.end());
        }
    }

    PatternSpec& ps = c.pattern;
    if (const auto k = r.raw("pattern", "kind")) ps.kinds = detail::split_list(*k);
    r.check(!ps.kinds.empty(), "pattern", "kind", "empty list");
    for (std::string& k : ps.kinds) {
        if (k.rfind("learned:", 0) == 0) {
            k = "learned:" + detail::resolve(base_dir, k.substr(8));
            if (!std::filesystem::exists(k.substr(8))) r.fail("pattern", "kind", "pattern file '" + k.substr(8) + "' not found");
            continue;
        }
        r.check(k == "uniform" || k == "poisson" || k == "staggered" || k == "jittered" || k == "joint", "pattern",
                "kind", "unknown pattern kind '" + k + "'");
    }
    ps.budgets = r.numbers("pattern", "budget", ps.budgets);
    for (double b : ps.budgets) r.check(b > 0.0 && b <= 1.0, "pattern", "budget", "fractions must lie in (0, 1]");
    ps.min_spacing = r.number("pattern", "min_spacing", ps.min_spacing);
    r.check(ps.min_spacing >= 0.0, "pattern", "min_spacing", "must be non-negative");
    ps.pri_min = r.number("pattern", "pri_min", ps.pri_min);
    ps.pri_max = r.number("pattern", "pri_max", ps.pri_max);
    r.check(ps.pri_min > 0.0, "pattern", "pri_min", "must be positive");
    r.check(ps.pri_max >= ps.pri_min, "pattern", "pri_max", "must be at least pri_min");
    ps.ramp_steps = static_cast<int>(r.integer("pattern", "ramp_steps", ps.ramp_steps));
    r.check(ps.ramp_steps >= 1, "pattern", "ramp_steps", "must be at least 1");
    ps.jitter = r.number("pattern", "jitter", ps.jitter);
    r.check(ps.jitter >= 0.0 && ps.jitter < 0.5, "pattern", "jitter", "must lie in [0, 0.5)");

    ReconSpec& rs = c.recon;
    rs.method = r.text("recon", "method", rs.method);
    r.check(rs.method == "mf" || rs.method == "ista" || rs.method == "modl", "recon", "method", "expected mf, ista or modl");
    rs.unroll = static_cast<int>(r.integer("recon", "unroll", rs.unroll));
    r.check(rs.unroll >= 1, "recon", "unroll", "must be at least 1");
    rs.cg_iterations = static_cast<int>(r.integer("recon", "cg_iterations", rs.cg_iterations));
    r.check(rs.cg_iterations >= 1, "recon", "cg_iterations", "must be at least 1");
    rs.cg_tolerance = r.number("recon", "cg_tolerance", rs.cg_tolerance);
    r.check(rs.cg_tolerance >= 0.0, "recon", "cg_tolerance", "must be non-negative");
    rs.lambda = r.number("recon", "lambda", rs.lambda);
    r.check(rs.lambda > 0.0, "recon", "lambda", "must be positive");
    if (const auto w = r.raw("recon", "weights")) {
        rs.weights = detail::resolve(base_dir, *w);
        if (!std::filesystem::exists(rs.weights)) r.fail("recon", "weights", "file '" + rs.weights + "' not found");
    }
    rs.depth = static_cast<int>(r.integer("recon", "depth", rs.depth));
    rs.width = static_cast<int>(r.integer("recon", "width", rs.width));
    r.check(rs.depth >= 1 && rs.depth <= 64, "recon", "depth", "must lie in [1, 64]");
    r.check(rs.width >= 1 && rs.width <= 256, "recon", "width", "must lie in [1, 256]");
    rs.ista_lambda = r.number("recon", "ista_lambda", rs.ista_lambda);
    r.check(rs.ista_lambda >= 0.0, "recon", "ista_lambda", "must be non-negative");
    rs.ista_iterations = static_cast<int>(r.integer("recon", "ista_iterations", rs.ista_iterations));
    r.check(rs.ista_iterations >= 0, "recon", "ista_iterations", "must be non-negative");

    TrainSpec& ts = c.train;
    ts.epochs = static_cast<int>(r.integer("train", "epochs", ts.epochs));
    r.check(ts.epochs >= 0, "train", "epochs", "must be non-negative");
    ts.samples = static_cast<int>(r.integer("train", "samples", ts.samples));
    r.check(ts.samples >= 1, "train", "samples", "must be at least 1");
    ts.lr_pattern = r.number("train", "lr_pattern", ts.lr_pattern);
    ts.lr_weights = r.number("train", "lr_weights", ts.lr_weights);
    ts.lr_lambda = r.number("train", "lr_lambda", ts.lr_lambda);
    r.check(ts.lr_pattern >= 0.0, "train", "lr_pattern", "must be non-negative");
    r.check(ts.lr_weights >= 0.0, "train", "lr_weights", "must be non-negative");
    r.check(ts.lr_lambda >= 0.0, "train", "lr_lambda", "must be non-negative");
    ts.noise = r.number("train", "noise", ts.noise);
    r.check(ts.noise >= 0.0, "train", "noise", "must be non-negative");
    const std::string grad = r.text("train", "gradient", "reconstruction");
    r.check(grad == "reconstruction" || grad == "echo", "train", "gradient", "expected reconstruction or echo");
    ts.gradient = grad == "echo" ? PatternGradientMode::ThroughEcho : PatternGradientMode::ReconstructionOnly;
    if (const auto d = r.raw("train", "dataset"))
        for (const std::string& pat : detail::split_list(*d)) {
            const auto hits = detail::expand_glob(detail::resolve(base_dir, pat));
            if (hits.empty()) r.fail("train", "dataset", "no file matches '" + pat + "'");
            ts.dataset.insert(ts.dataset.end(), hits.begin(), hits.end());
        }
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return parse_config(os.str(), path, std::filesystem::path(path).parent_path());
}

struct ReportRow {
    std::string scene_id;
    std::string pattern;
    double budget = 0.0;
    std::size_t pulses = 0;
    double ssim = std::nan("");
    double undersampled_psnr = std::nan("");
    double reconstruction_psnr = std::nan("");
    std::string status = "ok";

    double gain() const { return reconstruction_psnr - undersampled_psnr; }
};

struct Report {
    std::vector<ReportRow> rows;

    std::string to_csv() const {
        std::string out = csv_row({"scene_id", "pattern", "budget", "pulses", "ssim", "undersampled_psnr_db",
                                   "reconstruction_psnr_db", "psnr_gain_db", "status"});
        auto num = [](double v) { return std::isnan(v) ? std::string() : format_number(v); };
        for (const ReportRow& r : rows)
            out += csv_row({r.scene_id, r.pattern, format_number(r.budget), std::to_string(r.pulses), num(r.ssim),
                            num(r.undersampled_psnr), num(r.reconstruction_psnr), num(r.gain()), r.status});
        return out;
    }

    nlohmann::json to_json() const {
        auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
        nlohmann::json rows_json = nlohmann::json::array();
        for (const ReportRow& r : rows)
            rows_json.push_back({{"scene_id", r.scene_id},
                                 {"pattern", r.pattern},
                                 {"budget", r.budget},
                                 {"pulses", r.pulses},
                                 {"ssim", num(r.ssim)},
                                 {"undersampled_psnr_db", num(r.undersampled_psnr)},
                                 {"reconstruction_psnr_db", num(r.reconstruction_psnr)},
                                 {"psnr_gain_db", num(r.gain())},
                                 {"status", r.status}});
        return {{"rows", rows_json}};
    }

    /// Mean reconstruction PSNR over successful rows matching the filter.
    double mean_reconstruction_psnr(const std::function<bool(const ReportRow&)>& keep) const {
        double sum = 0.0;
        int n = 0;
        for (const ReportRow& r : rows)
            if (r.status == "ok" && keep(r)) {
                sum += r.reconstruction_psnr;
                ++n;
            }
        return n ? sum / n : std::nan("");
    }
};

/// Shared geometry of an experiment: imaging grid and filters on the full
/// Nyquist Doppler grid.
struct Workspace {
    ExperimentConfig cfg;
    ImagingGrid grid;
    CsaFilters filters;
    Aperture aperture;

    cdouble physical_gain{1.0, 0.0};

    explicit Workspace(ExperimentConfig c)
        : cfg(std::move(c)),
          grid(ImagingGrid::centered(cfg.sar, static_cast<std::size_t>(cfg.scene.rows),
                                     static_cast<std::size_t>(cfg.scene.cols))),
          filters(make_csa_filters(cfg.sar, NuftPlan(grid.slow_times(), grid.azimuth_cells, cfg.sar.prf), grid)),
          aperture{0.0, grid.aperture_end()} {
        if (cfg.scene.echo_model == "physical") {
            // Calibrate so a unit scatterer at the grid center images to 1.
            const auto ka = static_cast<Eigen::Index>(grid.azimuth_cells / 2);
            const auto kr = static_cast<Eigen::Index>(grid.range_cells / 2);
            const auto fast = grid.fast_times();
            const EchoMatrix e = point_target_echo(cfg.sar, cell_target(cfg.sar, ka, kr, fast), grid.slow_times(), fast);
            physical_gain = op::image(filters, NuftPlan(grid.slow_times(), na(), cfg.sar.prf), e.data)(ka, kr);
            if (std::abs(physical_gain) == 0.0) throw Error("physical echo model: reference scatterer images to zero");
        }
    }

    std::size_t na() const { return grid.azimuth_cells; }
    double pri() const { return cfg.sar.pri(); }

    NuftPlan plan(const SamplingPattern& p) const { return NuftPlan(p, na(), cfg.sar.prf); }

    std::size_t pulses_for(double budget) const {
        const auto m = static_cast<std::size_t>(std::lround(budget * static_cast<double>(na())));
        if (m < 2) throw InvalidArgument("budget " + format_number(budget) + " leaves fewer than 2 pulses");
        return m;
    }

    /// Pulses of each budget share the seed, so kinds at one budget are seed-matched.
    std::uint64_t pattern_seed(double budget) const {
        return mix_seed(cfg.seed, static_cast<std::uint64_t>(std::llround(budget * 1e6)));
    }

    SamplingPattern make_pattern(const std::string& kind, double budget) const {
        const std::size_t m = pulses_for(budget);
        const PatternSpec& ps = cfg.pattern;
        const double mean_gap = aperture.length() / static_cast<double>(m);
        const double spacing = std::min(ps.min_spacing * pri(), 0.9 * mean_gap);
        const std::uint64_t seed = pattern_seed(budget);
        if (kind == "uniform") return uniform_pattern(aperture, m);
        if (kind == "poisson" || kind == "joint") return poisson_disk_pattern(aperture, m, spacing, seed);
        if (kind == "staggered")
            return staggered_pattern(aperture, m, ps.pri_min * mean_gap, ps.pri_max * mean_gap,
                                     static_cast<std::size_t>(ps.ramp_steps));
        if (kind == "jittered") return jittered_uniform_pattern(aperture, m, spacing, ps.jitter, seed);
        if (kind.rfind("learned:", 0) == 0) {
            std::vector<double> pos = read_pattern_csv(kind.substr(8));
            SamplingPattern p{std::move(pos), aperture, 0.0};
            if (!p.satisfies_invariants())
                throw InvalidArgument("pattern file '" + kind.substr(8) + "' does not fit the aperture [0, " +
                                      format_number(aperture.end) + ")");
            return p;
        }
        throw InvalidArgument("unknown pattern kind '" + kind + "'");
    }

    /// Complex scene from an amplitude image: magnitude / 255, seeded random phase.
    CMatrix scene_from_amplitude(const RMatrix& amp, std::uint64_t seed) const {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
        CMatrix s(amp.rows(), amp.cols());
        for (Eigen::Index i = 0; i < amp.size(); ++i) s.data()[i] = std::polar(amp.data()[i] / 255.0, phase(rng));
        return s;
    }

    struct Scene {
        std::string id;
        CMatrix data;
    };

    std::vector<Scene> test_scenes() const {
        std::vector<Scene> out;
        if (cfg.scene.source == "images") {
            std::set<std::string> used;
            for (std::size_t i = 0; i < cfg.scene.images.size(); ++i) {
                std::string id = std::filesystem::path(cfg.scene.images[i]).stem().string();
                while (used.count(id)) id += "_";
                used.insert(id);
                out.push_back({id, scene_from_amplitude(ingest_image(cfg.scene.images[i], cfg.scene.rows, cfg.scene.cols),
                                                        mix_seed(cfg.seed, 3000 + i))});
            }
            return out;
        }
        for (int i = 0; i < cfg.scene.count; ++i) {
            char id[32];
            std::snprintf(id, sizeof id, "%s-%03d", to_string(cfg.scene.tier), i);
            out.push_back({id, synthetic_scene(cfg.scene.rows, cfg.scene.cols, cfg.scene.tier,
                                               mix_seed(cfg.seed, 1000000 + static_cast<std::uint64_t>(i)))});
        }
        return out;
    }

    std::vector<TrainingExample> training_set() const {
        std::vector<TrainingExample> out;
        if (!cfg.train.dataset.empty()) {
            for (std::size_t i = 0; i < cfg.train.dataset.size(); ++i)
                out.push_back(operator_example(
                    filters,
                    scene_from_amplitude(ingest_image(cfg.train.dataset[i], cfg.scene.rows, cfg.scene.cols),
                                         mix_seed(cfg.seed, 4000 + i)),
                    cfg.train.noise));
            return out;
        }
        for (int i = 0; i < cfg.train.samples; ++i)
            out.push_back(operator_example(filters,
                                           synthetic_scene(cfg.scene.rows, cfg.scene.cols, cfg.scene.tier,
                                                           mix_seed(cfg.seed, 2000000 + static_cast<std::uint64_t>(i))),
                                           cfg.train.noise));
        return out;
    }

    /// Echo at the pattern's pulse times: the model-based operator H* applied to
    /// the scene, or the point-scatterer simulator summed over every pixel and
    /// divided by the calibration gain.
    CMatrix echo(const CMatrix& scene, const SamplingPattern& p, std::uint64_t noise_seed) const {
        CMatrix s;
        if (cfg.scene.echo_model == "physical") {
            const ReflectivityMap map(scene, cfg.sar.azimuth_spacing(), cfg.sar.range_spacing());
            s = scene_echo(cfg.sar, map, p.positions, grid.fast_times(), 0.0).data / physical_gain;
        } else {
            s = op::inverse(filters, plan(p), scene);
        }
        add_complex_noise(s, cfg.scene.noise, noise_seed);
        return s;
    }

    /// Matched-filter image scaled by Na / M so its level matches full sampling.
    CMatrix matched_filter(const CMatrix& echo, const SamplingPattern& p) const {
        return op::image(filters, plan(p), echo) * (static_cast<double>(na()) / static_cast<double>(p.budget()));
    }

    ModlConfig modl_config(double lambda) const {
        ModlConfig m;
        m.unroll_count = cfg.recon.unroll;
        m.cg_iterations = cfg.recon.cg_iterations;
        m.cg_tolerance = cfg.recon.cg_tolerance;
        m.lambda = lambda;
        return m;
    }
};

/// Pattern, denoiser and lambda for one (pattern kind, budget) cell.
struct Group {
    std::string kind;
    double budget = 0.0;
    std::string label;
    SamplingPattern pattern;
    DenoiserModel model;
    double lambda = 0.5;
    std::vector<LossRecord> history;
};

inline std::string group_label(const std::string& kind, double budget) {
    std::string k = kind.rfind("learned:", 0) == 0 ? "learned" : kind;
    return k + "_b" + format_number(budget);
}

/// Builds the pattern and, for MoDL, the denoiser of a group: loaded from the
/// configured weights, trained when epochs > 0 (jointly with the pattern for
/// kind "joint", weights and lambda only otherwise), or freshly initialized.
inline Group prepare_group(const Workspace& ws, const std::string& kind, double budget,
                           const std::vector<TrainingExample>& train_set) {
    const ExperimentConfig& cfg = ws.cfg;
    Group g;
    g.kind = kind;
    g.budget = budget;
    g.label = group_label(kind, budget);
    g.pattern = ws.make_pattern(kind, budget);
    g.lambda = cfg.recon.lambda;
    g.model = DenoiserModel::make(cfg.recon.depth, cfg.recon.width, mix_seed(cfg.seed, 77));
    if (cfg.recon.method != "modl") return g;
    if (!cfg.recon.weights.empty()) {
        WeightFile w = load_weights(cfg.recon.weights);
        g.model = std::move(w.model);
        g.lambda = w.lambda;
    }
    if (cfg.train.epochs == 0) return g;
    TrainState st;
    st.pattern = g.pattern;
    st.model = g.model;
    st.rho = std::log(g.lambda);
    st.seed = mix_seed(cfg.seed, 99);
    LearningRates rates;
    rates.pattern = kind == "joint" ? cfg.train.lr_pattern * ws.pri() : 0.0;
    rates.weights = cfg.train.lr_weights;
    rates.lambda = cfg.train.lr_lambda;
    TrainOptions opts;
    opts.unroll_count = cfg.recon.unroll;
    opts.cg_iterations = cfg.recon.cg_iterations;
    opts.cg_tolerance = cfg.recon.cg_tolerance;
    opts.mode = cfg.train.gradient;
    g.history = train_joint(train_set, st, ws.filters, cfg.sar.prf, cfg.train.epochs, rates, opts);
    g.pattern = st.pattern;
    g.model = st.model;
    g.lambda = st.lambda();
    return g;
}

inline CMatrix reconstruct(const Workspace& ws, const Group& g, const CMatrix& echo) {
    const std::string& method = ws.cfg.recon.method;
    if (method == "mf") return ws.matched_filter(echo, g.pattern);
    const NuftPlan plan = ws.plan(g.pattern);
    if (method == "ista") {
        const EchoMatrix e(echo, g.pattern.positions, ws.grid.fast_time_origin);
        return ista_baseline(e, ws.filters, plan, ws.cfg.recon.ista_lambda, 0.0, ws.cfg.recon.ista_iterations).image.data;
    }
    return modl_forward(echo, ws.filters, plan, g.model, ws.modl_config(g.lambda));
}

inline std::string loss_history_csv(const std::vector<LossRecord>& h) {
    std::string out = csv_row({"epoch", "sample_index", "loss"});
    for (const LossRecord& r : h)
        out += csv_row({std::to_string(r.epoch), std::to_string(r.sample), format_number(r.loss)});
    return out;
}

inline std::string histogram_csv(const SamplingPattern& p, std::size_t bins = 16) {
    const IntervalHistogram h = interval_histogram(p, bins);
    std::string out = csv_row({"bin_lo_s", "bin_hi_s", "count"});
    for (std::size_t i = 0; i < h.counts.size(); ++i)
        out += csv_row({format_number(h.bin_edges[i]), format_number(h.bin_edges[i + 1]), std::to_string(h.counts[i])});
    return out;
}

/// Writes the group's pattern, interval histogram, weights and loss history.
inline void save_group(const Group& g, const std::filesystem::path& out) {
    std::filesystem::create_directories(out / "patterns");
    write_pattern_csv(g.pattern, (out / "patterns" / (g.label + ".csv")).string());
    if (g.pattern.budget() >= 2)
        detail::write_file((out / "patterns" / (g.label + "_intervals.csv")).string(), histogram_csv(g.pattern));
    if (!g.history.empty()) {
        std::filesystem::create_directories(out / "weights");
        save_weights((out / "weights" / (g.label + ".mfjm")).string(), g.model, g.lambda);
        detail::write_file((out / "weights" / (g.label + "_loss.csv")).string(), loss_history_csv(g.history));
    }
}

using ProgressLog = std::function<void(const std::string&)>;

/// Full grid: every pattern kind x budget x test scene. Writes report.csv,
/// report.json, timing.csv, per-stage images, patterns and weights under the
/// output directory. Row failures are recorded and the run continues.
inline Report run_experiment(const ExperimentConfig& cfg, const ProgressLog& log = {}) {
    const Workspace ws(cfg);
    const std::filesystem::path out(cfg.output_dir);
    std::filesystem::create_directories(out / "images");
    const auto scenes = ws.test_scenes();
    std::vector<TrainingExample> train_set;
    if (cfg.recon.method == "modl" && cfg.train.epochs > 0) train_set = ws.training_set();
    for (const auto& s : scenes) export_image(s.data, (out / "images" / (s.id + "_truth.pgm")).string());

    Report report;
    std::string timing = csv_row({"scene_id", "pattern", "budget", "seconds"});
    std::uint64_t row_index = 0;
    for (double budget : cfg.pattern.budgets)
        for (const std::string& kind : cfg.pattern.kinds) {
            const std::string label = group_label(kind, budget);
            Group g;
            std::string group_error;
            try {
                if (log) log("preparing " + label);
                g = prepare_group(ws, kind, budget, train_set);
                save_group(g, out);
            } catch (const Error& e) {
                group_error = e.what();
            }
            for (const auto& s : scenes) {
                const auto t0 = std::chrono::steady_clock::now();
                ReportRow row;
                row.scene_id = s.id;
                row.pattern = kind.rfind("learned:", 0) == 0 ? "learned" : kind;
                row.budget = budget;
                const std::uint64_t seed = mix_seed(cfg.seed, row_index++);
                if (!group_error.empty()) {
                    row.status = "error: " + group_error;
                    report.rows.push_back(row);
                    continue;
                }
                row.pulses = g.pattern.budget();
                try {
                    const CMatrix echo = ws.echo(s.data, g.pattern, seed);
                    const CMatrix mf = ws.matched_filter(echo, g.pattern);
                    const CMatrix rec = reconstruct(ws, g, echo);
                    if (!all_finite(rec)) throw Error("non-finite reconstruction");
                    row.ssim = complex_ssim(rec, s.data);
                    row.undersampled_psnr = psnr_for_report(complex_psnr(mf, s.data));
                    row.reconstruction_psnr = psnr_for_report(complex_psnr(rec, s.data));
                    const std::string stem = s.id + "_" + label;
                    export_image(mf, (out / "images" / (stem + "_mf.pgm")).string());
                    export_image(rec, (out / "images" / (stem + "_recon.pgm")).string());
                } catch (const Error& e) {
                    row.status = std::string("error: ") + e.what();
                }
                if (log) log(s.id + " " + label + ": " + row.status);
                report.rows.push_back(row);
                const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                timing += csv_row({s.id, row.pattern, format_number(budget), format_number(secs)});
            }
        }
    detail::write_file((out / "report.csv").string(), report.to_csv());
    detail::write_file((out / "report.json").string(), report.to_json().dump(2) + "\n");
    detail::write_file((out / "timing.csv").string(), timing);
    return report;
}

// Staged pipeline for the CLI. Every stage walks the same grid as
// run_experiment and exchanges artifacts through the output directory:
//   train        patterns/<group>.csv, weights/<group>.mfjm
//   simulate     scenes/<scene>.bin, echoes/<scene>_<group>.bin
//   reconstruct  recon/<scene>_<group>.bin
//   evaluate     evaluation.csv, evaluation.json

/// Group state for the staged commands: a trained pattern or weights found
/// under the output directory take precedence over the configured ones.
inline Group load_group(const Workspace& ws, const std::string& kind, double budget) {
    const std::filesystem::path out(ws.cfg.output_dir);
    Group g;
    g.kind = kind;
    g.budget = budget;
    g.label = group_label(kind, budget);
    const auto pattern_file = out / "patterns" / (g.label + ".csv");
    if (std::filesystem::exists(pattern_file))
        g.pattern = ws.make_pattern("learned:" + pattern_file.string(), budget);
    else
        g.pattern = ws.make_pattern(kind, budget);
    g.lambda = ws.cfg.recon.lambda;
    g.model = DenoiserModel::make(ws.cfg.recon.depth, ws.cfg.recon.width, mix_seed(ws.cfg.seed, 77));
    const auto weight_file = out / "weights" / (g.label + ".mfjm");
    const std::string source = std::filesystem::exists(weight_file) ? weight_file.string() : ws.cfg.recon.weights;
    if (!source.empty()) {
        WeightFile w = load_weights(source);
        g.model = std::move(w.model);
        g.lambda = w.lambda;
    }
    return g;
}

inline void for_each_group(const ExperimentConfig& cfg, const std::function<void(const std::string&, double)>& fn) {
    for (double budget : cfg.pattern.budgets)
        for (const std::string& kind : cfg.pattern.kinds) fn(kind, budget);
}

inline void train_stage(const ExperimentConfig& cfg, const ProgressLog& log = {}) {
    if (cfg.recon.method != "modl") throw ConfigError("train: [recon] method must be modl");
    if (cfg.train.epochs == 0) throw ConfigError("train: [train] epochs must be positive");
    const Workspace ws(cfg);
    const auto train_set = ws.training_set();
    for_each_group(cfg, [&](const std::string& kind, double budget) {
        if (log) log("training " + group_label(kind, budget));
        const Group g = prepare_group(ws, kind, budget, train_set);
        save_group(g, cfg.output_dir);
        if (log) log("final loss " + format_number(g.history.back().loss) + ", lambda " + format_number(g.lambda));
    });
}

inline void simulate_stage(const ExperimentConfig& cfg, const ProgressLog& log = {}) {
    const Workspace ws(cfg);
    const std::filesystem::path out(cfg.output_dir);
    for (const char* d : {"scenes", "echoes", "images", "patterns"}) std::filesystem::create_directories(out / d);
    const auto scenes = ws.test_scenes();
    for (const auto& s : scenes) {
        save_scene((out / "scenes" / (s.id + ".bin")).string(),
                   ReflectivityMap(s.data, cfg.sar.azimuth_spacing(), cfg.sar.range_spacing()));
        export_image(s.data, (out / "images" / (s.id + "_truth.pgm")).string());
    }
    std::uint64_t row_index = 0;
    for_each_group(cfg, [&](const std::string& kind, double budget) {
        const Group g = load_group(ws, kind, budget);
        write_pattern_csv(g.pattern, (out / "patterns" / (g.label + ".csv")).string());
        detail::write_file((out / "patterns" / (g.label + "_intervals.csv")).string(), histogram_csv(g.pattern));
        for (const auto& s : scenes) {
            const CMatrix echo = ws.echo(s.data, g.pattern, mix_seed(cfg.seed, row_index++));
            save_echo((out / "echoes" / (s.id + "_" + g.label + ".bin")).string(),
                      EchoMatrix(echo, g.pattern.positions, ws.grid.fast_time_origin));
            export_image(ws.matched_filter(echo, g.pattern), (out / "images" / (s.id + "_" + g.label + "_mf.pgm")).string());
            if (log) log("simulated " + s.id + " " + g.label);
        }
    });
}

inline void reconstruct_stage(const ExperimentConfig& cfg, const ProgressLog& log = {}) {
    const Workspace ws(cfg);
    const std::filesystem::path out(cfg.output_dir);
    std::filesystem::create_directories(out / "recon");
    std::filesystem::create_directories(out / "images");
    const auto scenes = ws.test_scenes();
    for_each_group(cfg, [&](const std::string& kind, double budget) {
        Group g = load_group(ws, kind, budget);
        for (const auto& s : scenes) {
            const std::string stem = s.id + "_" + g.label;
            const EchoMatrix e = load_echo((out / "echoes" / (stem + ".bin")).string());
            g.pattern = SamplingPattern{e.azimuth_times, ws.aperture, 0.0};
            g.pattern.validate();
            const CMatrix rec = reconstruct(ws, g, e.data);
            save_scene((out / "recon" / (stem + ".bin")).string(),
                       ReflectivityMap(rec, cfg.sar.azimuth_spacing(), cfg.sar.range_spacing()));
            export_image(rec, (out / "images" / (stem + "_recon.pgm")).string());
            if (log) log("reconstructed " + stem);
        }
    });
}

inline Report evaluate_stage(const ExperimentConfig& cfg, const ProgressLog& log = {}) {
    const Workspace ws(cfg);
    const std::filesystem::path out(cfg.output_dir);
    const auto scenes = ws.test_scenes();
    Report report;
    for_each_group(cfg, [&](const std::string& kind, double budget) {
        const std::string label = group_label(kind, budget);
        for (const auto& s : scenes) {
            const std::string stem = s.id + "_" + label;
            ReportRow row;
            row.scene_id = s.id;
            row.pattern = kind.rfind("learned:", 0) == 0 ? "learned" : kind;
            row.budget = budget;
            try {
                const ReflectivityMap truth = load_scene((out / "scenes" / (s.id + ".bin")).string());
                const EchoMatrix e = load_echo((out / "echoes" / (stem + ".bin")).string());
                const ReflectivityMap rec = load_scene((out / "recon" / (stem + ".bin")).string());
                const SamplingPattern p{e.azimuth_times, ws.aperture, 0.0};
                row.pulses = p.budget();
                row.ssim = complex_ssim(rec.data, truth.data);
                row.undersampled_psnr = psnr_for_report(complex_psnr(ws.matched_filter(e.data, p), truth.data));
                row.reconstruction_psnr = psnr_for_report(complex_psnr(rec.data, truth.data));
            } catch (const Error& e) {
                row.status = std::string("error: ") + e.what();
            }
            if (log) log("evaluated " + stem + ": " + row.status);
            report.rows.push_back(row);
        }
    });
    detail::write_file((out / "evaluation.csv").string(), report.to_csv());
    detail::write_file((out / "evaluation.json").string(), report.to_json().dump(2) + "\n");
    return report;
}

}  // namespace mfjmodl
