#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "mfjmodl/experiment.hpp"

using namespace mfjmodl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("mfjmodl_exp_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

std::string expect_config_error(const std::string& text, const fs::path& base = ".") {
    try {
        parse_config(text, "cfg.ini", base);
    } catch (const ConfigError& e) {
        return e.what();
    }
    ADD_FAILURE() << "no ConfigError for:\n" << text;
    return "";
}

// 16x16 scenes, three of them unless the scene lines say otherwise.
ExperimentConfig small(const TempDir& t, const std::string& rest, const std::string& scene = "count = 3\n") {
    return parse_config("[run]\nseed = 5\noutput = out\n[scene]\nrows = 16\ncols = 16\n" + scene + rest, "cfg.ini",
                        t.path);
}

}  // namespace

TEST(Config, DefaultsAndOverrides) {
    const ExperimentConfig d = parse_config("");
    EXPECT_EQ(d.seed, 1u);
    EXPECT_EQ(d.recon.method, "modl");
    EXPECT_EQ(d.pattern.kinds, (std::vector<std::string>{"poisson"}));
    EXPECT_EQ(d.train.gradient, PatternGradientMode::ReconstructionOnly);
    const ExperimentConfig c = parse_config(
        "; comment\n[run]\nseed = 42\n[sar]\nprf = 250\n[pattern]\nkind = uniform, staggered\nbudget = 0.5, 0.25, "
        "0.125\n[recon]\nmethod = ista\n[train]\ngradient = echo\n");
    EXPECT_EQ(c.seed, 42u);
    EXPECT_EQ(c.sar.prf, 250.0);
    EXPECT_EQ(c.pattern.kinds, (std::vector<std::string>{"uniform", "staggered"}));
    EXPECT_EQ(c.pattern.budgets, (std::vector<double>{0.5, 0.25, 0.125}));
    EXPECT_EQ(c.recon.method, "ista");
    EXPECT_EQ(c.train.gradient, PatternGradientMode::ThroughEcho);
    const ExperimentConfig f = parse_config("[sar]\ncarrier_frequency = 5e9\n");
    EXPECT_NEAR(f.sar.wavelength, kSpeedOfLight / 5e9, 1e-15);
}

TEST(Config, ErrorsCarryLineNumbers) {
    EXPECT_NE(expect_config_error("[run]\nseed = 1\n\n[pattern]\nbudget = 1.5\n").find("cfg.ini:5:"), std::string::npos);
    EXPECT_NE(expect_config_error("[recon]\nunroll = two\n").find("cfg.ini:2: [recon] unroll"), std::string::npos);
    EXPECT_NE(expect_config_error("[scene]\n\nbogus = 1\n").find("cfg.ini:3: [scene] bogus: unknown key"),
              std::string::npos);
    EXPECT_NE(expect_config_error("[nowhere]\nx = 1\n").find("cfg.ini:1: unknown section"), std::string::npos);
    EXPECT_NE(expect_config_error("[run]\nthis line has no equals\n").find("cfg.ini:2:"), std::string::npos);
    EXPECT_NE(expect_config_error("[pattern]\nkind = hexagonal\n").find("cfg.ini:2:"), std::string::npos);
    EXPECT_NE(expect_config_error("[pattern]\nbudget = 0\n").find("(0, 1]"), std::string::npos);
    EXPECT_NE(expect_config_error("[recon]\n\nweights = /no/such/file.mfjm\n").find("cfg.ini:3:"), std::string::npos);
    EXPECT_NE(expect_config_error("[pattern]\nkind = learned:/no/such.csv\n").find("not found"), std::string::npos);
    EXPECT_NE(expect_config_error("[scene]\nsource = images\nimages = /no/such/*.pgm\n").find("cfg.ini:3:"),
              std::string::npos);
    EXPECT_NE(expect_config_error("[sar]\nprf = -1\n").find("cfg.ini:2:"), std::string::npos);
    EXPECT_THROW(load_config("/no/such/config.ini"), ConfigError);
}

TEST(Experiment, MatchedFilterRoundTripAtFullSampling) {
    TempDir t;
    const Report r = run_experiment(small(t, "[pattern]\nkind = uniform\nbudget = 1.0\n[recon]\nmethod = mf\n"));
    ASSERT_EQ(r.rows.size(), 3u);
    for (const ReportRow& row : r.rows) {
        EXPECT_EQ(row.status, "ok");
        EXPECT_EQ(row.pulses, 16u);
        EXPECT_GE(row.reconstruction_psnr, 80.0);
    }
}

TEST(Experiment, BudgetOrderingAndColumnConsistency) {
    TempDir t;
    ExperimentConfig c = small(t, "[pattern]\nkind = uniform, poisson\nbudget = 1.0, 0.5\n[recon]\nmethod = modl\nunroll = 2\n");
    c.scene.tier = SceneTier::Medium;
    const Report r = run_experiment(c);
    ASSERT_EQ(r.rows.size(), 12u);
    for (const ReportRow& row : r.rows) {
        ASSERT_EQ(row.status, "ok");
        EXPECT_DOUBLE_EQ(row.gain(), row.reconstruction_psnr - row.undersampled_psnr);
        EXPECT_GE(row.ssim, -1.0);
        EXPECT_LE(row.ssim, 1.0);
    }
    for (const ReportRow& half : r.rows) {
        if (half.budget != 0.5) continue;
        for (const ReportRow& full : r.rows) {
            if (full.budget == 1.0 && full.scene_id == half.scene_id && full.pattern == half.pattern) {
                EXPECT_LT(half.undersampled_psnr, full.undersampled_psnr) << half.scene_id << " " << half.pattern;
            }
        }
    }
}

TEST(Experiment, RerunIsByteIdentical) {
    TempDir t;
    ExperimentConfig c =
        small(t, "[pattern]\nkind = poisson, joint\nbudget = 0.5\n[recon]\nunroll = 2\n"
                 "[train]\nepochs = 2\nsamples = 2\nlr_pattern = 0.05\n",
              "count = 3\nnoise = 0.05\n");
    run_experiment(c);
    const std::string csv = detail::read_file(c.output_dir + "/report.csv");
    const std::string json = detail::read_file(c.output_dir + "/report.json");
    const std::string weights = detail::read_file(c.output_dir + "/weights/joint_b0.5.mfjm");
    run_experiment(c);
    EXPECT_EQ(detail::read_file(c.output_dir + "/report.csv"), csv);
    EXPECT_EQ(detail::read_file(c.output_dir + "/report.json"), json);
    EXPECT_EQ(detail::read_file(c.output_dir + "/weights/joint_b0.5.mfjm"), weights);
    c.seed = 6;
    run_experiment(c);
    EXPECT_NE(detail::read_file(c.output_dir + "/report.csv"), csv);
}

TEST(Experiment, ArtifactsOnDisk) {
    TempDir t;
    const ExperimentConfig c =
        small(t, "[pattern]\nkind = staggered, joint\nbudget = 0.5\n[recon]\nunroll = 2\n[train]\nepochs = 3\n"
                 "samples = 2\nlr_pattern = 0.05\n");
    run_experiment(c);
    const fs::path out(c.output_dir);
    for (const char* f : {"report.csv", "report.json", "timing.csv", "images/sparse-000_truth.pgm",
                          "images/sparse-002_joint_b0.5_recon.pgm", "images/sparse-001_staggered_b0.5_mf.pgm",
                          "patterns/joint_b0.5.csv", "patterns/joint_b0.5_intervals.csv", "patterns/staggered_b0.5.csv",
                          "weights/joint_b0.5.mfjm", "weights/joint_b0.5_loss.csv", "weights/staggered_b0.5.mfjm"})
        EXPECT_TRUE(fs::exists(out / f)) << f;
    // Joint training moves pulses away from the seed-matched Poisson start.
    const Workspace ws(c);
    const std::vector<double> learned = read_pattern_csv((out / "patterns/joint_b0.5.csv").string());
    EXPECT_NE(learned, ws.make_pattern("poisson", 0.5).positions);
    const std::string loss = detail::read_file((out / "weights/joint_b0.5_loss.csv").string());
    EXPECT_EQ(loss.substr(0, 25), "epoch,sample_index,loss\r\n");
    EXPECT_EQ(std::count(loss.begin(), loss.end(), '\n'), 1 + 3 * 2);
    const nlohmann::json j = nlohmann::json::parse(detail::read_file((out / "report.json").string()));
    EXPECT_EQ(j["rows"].size(), 6u);
    // A stored pattern reloads as a learned pattern.
    const ExperimentConfig again = small(t, "[pattern]\nkind = learned:out/patterns/joint_b0.5.csv\nbudget = 0.5\n"
                                            "[recon]\nunroll = 2\nweights = out/weights/joint_b0.5.mfjm\n");
    EXPECT_EQ(Workspace(again).make_pattern(again.pattern.kinds[0], 0.5).positions, learned);
}

TEST(Experiment, RowFailuresAreRecorded) {
    TempDir t;
    const Report r = run_experiment(small(t, "[pattern]\nkind = uniform\nbudget = 0.05, 0.5\n[recon]\nmethod = mf\n"));
    ASSERT_EQ(r.rows.size(), 6u);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(r.rows[static_cast<std::size_t>(i)].status.rfind("error: ", 0), 0u);
    for (int i = 3; i < 6; ++i) EXPECT_EQ(r.rows[static_cast<std::size_t>(i)].status, "ok");
    const std::string csv = r.to_csv();
    EXPECT_NE(csv.find("fewer than 2 pulses"), std::string::npos);
}

TEST(Experiment, ImageScenesAndIsta) {
    TempDir t;
    fs::create_directories(t.path / "imgs");
    for (int k = 0; k < 2; ++k) {
        RMatrix img = RMatrix::Zero(20, 12);
        img(5 + k, 6) = 255.0;
        img(10, 3 + k) = 128.0;
        write_pgm((t.path / "imgs" / ("patch" + std::to_string(k) + ".pgm")).string(), img);
    }
    const Report r = run_experiment(small(t,
                                          "[pattern]\nkind = poisson\nbudget = 0.5\n[recon]\nmethod = ista\n"
                                          "ista_iterations = 30\nista_lambda = 0.01\n",
                                          "source = images\nimages = imgs/*.pgm\n"));
    ASSERT_EQ(r.rows.size(), 2u);
    EXPECT_EQ(r.rows[0].scene_id, "patch0");
    for (const ReportRow& row : r.rows) {
        EXPECT_EQ(row.status, "ok");
        EXPECT_GT(row.gain(), 0.0);
    }
}

TEST(Experiment, PhysicalEchoFocuses) {
    // The point simulator needs a raster longer than the chirp (200 samples).
    TempDir t;
    const ExperimentConfig c = parse_config("[run]\noutput = out\n[scene]\nrows = 256\ncols = 256\ncount = 1\n"
                                            "echo = physical\n[pattern]\nkind = uniform\nbudget = 1.0\n[recon]\n"
                                            "method = mf\n",
                                            "cfg.ini", t.path);
    const Report r = run_experiment(c);
    ASSERT_EQ(r.rows.size(), 1u);
    EXPECT_EQ(r.rows[0].status, "ok");
    EXPECT_GT(r.rows[0].reconstruction_psnr, 25.0);
}
