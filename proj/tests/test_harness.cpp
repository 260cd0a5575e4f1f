#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "oracles.hpp"

using namespace capinv;
namespace fs = std::filesystem;

TEST(Ssd, Examples) {
    FieldGrid a(21), b(21);
    a.normalized = b.normalized = true;
    std::mt19937_64 rng(1);
    a.values = oracle::random_vector(rng, 441);
    b.values = a.values;
    EXPECT_EQ(ssd(a, b), 0.0);
    for (double& v : b.values) v += 0.1;
    EXPECT_NEAR(ssd(a, b), 4.41, 1e-12);
    b.values = oracle::random_vector(rng, 441);
    EXPECT_NEAR(ssd(a, b), oracle::naive_ssd(a, b), 1e-12);
    double mse = 0.0;
    for (std::size_t k = 0; k < 441; ++k) mse += (a.values[k] - b.values[k]) * (a.values[k] - b.values[k]);
    mse /= 441.0;
    EXPECT_NEAR(ssd(a, b), 441.0 * mse, 1e-10);
}

TEST(Ssd, Mismatches) {
    FieldGrid a(21), b(41);
    EXPECT_THROW(ssd(a, b), ShapeError);
    FieldGrid c(21);
    a.normalized = true;
    EXPECT_THROW(ssd(a, c), ShapeError);
}

TEST(Quantiles, LinearInterpolation) {
    const std::vector<double> v{1.0, 2.0, 3.0, 4.0, 5.0};
    EXPECT_EQ(quantile_sorted(v, 0.5), 3.0);
    EXPECT_EQ(quantile_sorted(v, 0.25), 2.0);
    EXPECT_EQ(quantile_sorted(v, 0.75), 4.0);
    EXPECT_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
    EXPECT_EQ(median({}), 0.0);
}

TEST(Aggregate, SkipsFailuresAndCountsThem) {
    std::vector<SweepCell> cells;
    for (std::uint64_t s = 1; s <= 4; ++s) {
        SweepCell c;
        c.key = {"vae", "adam"};
        c.d = 0.36;
        c.noise = 0.1;
        c.seed = s;
        c.ssd = static_cast<double>(s);
        c.failed = s == 4;
        cells.push_back(c);
    }
    const auto rows = aggregate(cells);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].count, 3u);
    EXPECT_EQ(rows[0].failures, 1u);
    EXPECT_EQ(rows[0].median, 2.0);
    EXPECT_EQ(rows[0].q1, 1.5);
    EXPECT_EQ(rows[0].q3, 2.5);
    EXPECT_EQ(rows[0].iqr(), 1.0);
}

class Sweep : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        CapacitorConfig base;
        base.fine_n = 41;
        train = new Dataset(generate_dataset(linspace(0.2, 0.8, 13), base));
        test = new Dataset(generate_dataset({0.36, 0.5}, base));
        GenerativeConfig cfg;
        cfg.max_iterations = 200;
        cfg.minibatch_size = 13;
        const auto model = train_generative(ModelKind::VAE, dataset_matrix(*train), cfg, 3, {441, {16}, 4}).model;
        inputs = new SweepInputs;
        inputs->groundtruth = *test;
        inputs->fullspace = build_fullspace(*train);
        inputs->latent.emplace(ApproachKey{"vae", "adam"}, build_latent(model, *train));
    }
    static void TearDownTestSuite() {
        delete train;
        delete test;
        delete inputs;
    }

    static SweepConfig config() {
        SweepConfig c;
        c.noise_levels = {0.01, 0.5};
        c.test_d = {0.36, 0.5};
        c.seeds = {1, 2, 3};
        c.approaches = {{"fullspace", "-"}, {"vae", "adam"}};
        return c;
    }

    static Dataset* train;
    static Dataset* test;
    static SweepInputs* inputs;
};

Dataset* Sweep::train = nullptr;
Dataset* Sweep::test = nullptr;
SweepInputs* Sweep::inputs = nullptr;

TEST_F(Sweep, EmptyNoiseLevelsGiveEmptyResult) {
    SweepConfig c = config();
    c.noise_levels.clear();
    EXPECT_TRUE(run_noise_sweep(c, *inputs).cells.empty());
    const fs::path dir = fs::temp_directory_path() / "capinv_empty_export";
    fs::remove_all(dir);
    const ExportPaths p = export_results({}, *test, dir);
    EXPECT_EQ(io::read_file(p.fig8_ssd), std::string(kAggregateHeader) + "\n");
    EXPECT_EQ(io::read_file(p.cells), std::string(kCellsHeader) + "\n");
    EXPECT_EQ(io::read_file(p.table2_timing), std::string(kTimingHeader) + "\n");
}

TEST_F(Sweep, CellCountAndSsdMatchesOracle) {
    const SweepResult r = run_noise_sweep(config(), *inputs);
    ASSERT_EQ(r.cells.size(), 2u * 2u * 2u * 3u);
    for (const auto& c : r.cells) {
        ASSERT_FALSE(c.failed) << c.error;
        const FieldGrid truth = as_grid(groundtruth_for(*test, c.d).field, 21);
        EXPECT_NEAR(c.ssd, oracle::naive_ssd(truth, c.reconstruction), 1e-12);
    }
}

TEST_F(Sweep, InvariantToSeedOrderAndThreads) {
    const SweepResult a = run_noise_sweep(config(), *inputs);
    SweepConfig shuffled = config();
    shuffled.seeds = {3, 1, 2};
    shuffled.threads = 3;
    const SweepResult b = run_noise_sweep(shuffled, *inputs);
    EXPECT_EQ(aggregates_to_csv(aggregate(a.cells)), aggregates_to_csv(aggregate(b.cells)));
}

TEST_F(Sweep, FailuresAreMarkedNotDropped) {
    SweepConfig c = config();
    c.inverse.max_iterations = 1;
    c.inverse.step_scale = 1e-9;
    const SweepResult r = run_noise_sweep(c, *inputs);
    ASSERT_EQ(r.cells.size(), 24u);
    std::size_t failed = 0;
    for (const auto& cell : r.cells) {
        failed += cell.failed;
        if (cell.failed) EXPECT_FALSE(cell.error.empty());
    }
    EXPECT_GT(failed, 0u);
    const std::string csv = cells_to_csv(r.cells);
    EXPECT_NE(csv.find("failed"), std::string::npos);
}

TEST_F(Sweep, ExportRoundTripIsExact) {
    SweepResult r = run_noise_sweep(config(), *inputs);
    const auto cells = cells_from_csv(cells_to_csv(r.cells));
    ASSERT_EQ(cells.size(), r.cells.size());
    for (std::size_t k = 0; k < cells.size(); ++k) {
        EXPECT_EQ(cells[k].key, r.cells[k].key);
        EXPECT_EQ(cells[k].d, r.cells[k].d);
        EXPECT_EQ(cells[k].noise, r.cells[k].noise);
        EXPECT_EQ(cells[k].seed, r.cells[k].seed);
        EXPECT_EQ(cells[k].ssd, r.cells[k].ssd);
    }
    const auto agg = aggregate(r.cells);
    const auto back = aggregates_from_csv(aggregates_to_csv(agg));
    ASSERT_EQ(back.size(), agg.size());
    for (std::size_t k = 0; k < agg.size(); ++k) {
        EXPECT_EQ(back[k].median, agg[k].median);
        EXPECT_EQ(back[k].q1, agg[k].q1);
        EXPECT_EQ(back[k].q3, agg[k].q3);
        EXPECT_EQ(back[k].count, agg[k].count);
    }

    const fs::path dir = fs::temp_directory_path() / "capinv_export";
    fs::remove_all(dir);
    const ExportPaths p = export_results(r, *test, dir);
    // fig8 holds the fullspace rows, fig9 the Adam rows: header + 2 d x 2 noise each
    auto lines = [](const std::string& s) { return std::count(s.begin(), s.end(), '\n'); };
    EXPECT_EQ(lines(io::read_file(p.fig8_ssd)), 5);
    EXPECT_EQ(lines(io::read_file(p.fig9_ssd)), 5);
    // header + groundtruth + 2 approaches x 2 noise levels, 21 rows each
    EXPECT_EQ(lines(io::read_file(p.fig6_fields)), 1 + 21 * 5);
}

TEST_F(Sweep, TimingStructure) {
    TimingInputs in;
    in.train = train;
    in.fullspace = inputs->fullspace;
    in.latent.emplace_back("vae-adam", inputs->latent.at({"vae", "adam"}));
    EXPECT_THROW(run_timing(in, 99), ConfigError);
    const auto rows = run_timing(in, 100);
    std::size_t empty = 0;
    for (const auto& row : rows) {
        if (!row.median_ms) {
            ++empty;
            EXPECT_EQ(row.approach, "fullspace");
            EXPECT_TRUE(row.stage == "encoder" || row.stage == "decoder");
        } else {
            EXPECT_GE(*row.median_ms, 0.0);
        }
    }
    EXPECT_EQ(empty, 2u);
    const auto back = timing_from_csv(timing_to_csv(rows));
    ASSERT_EQ(back.size(), rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) EXPECT_EQ(back[k].median_ms, rows[k].median_ms);
}

namespace {

int run(const std::vector<std::string>& args, std::string* out_text = nullptr) {
    std::ostringstream out, err;
    const int code = cli_main(args, out, err);
    if (out_text) *out_text = out.str() + err.str();
    return code;
}

}  // namespace

TEST(Cli, RejectsMissingAndUnknownArguments) {
    EXPECT_NE(run({}), 0);
    EXPECT_NE(run({"generate"}), 0);
    EXPECT_NE(run({"generate", "--out", "x.csv", "--bogus", "1"}), 0);
    EXPECT_NE(run({"frobnicate"}), 0);
    EXPECT_EQ(run({"--help"}), 0);
}

TEST(Cli, RuntimeErrorsExitWithOne) {
    std::string text;
    EXPECT_EQ(run({"train", "--data", "/nonexistent/data.csv", "--out", "/tmp/m.model"}, &text), 1);
    EXPECT_NE(text.find("error"), std::string::npos);
}

TEST(Cli, EndToEnd) {
    const fs::path dir = fs::temp_directory_path() / "capinv_cli";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto p = [&](const char* name) { return (dir / name).string(); };

    ASSERT_EQ(run({"generate", "--fine-n", "41", "--count", "13", "--d-min", "0.2", "--d-max", "0.8", "--out",
                   p("train.csv")}),
              0);
    ASSERT_EQ(run({"generate", "--fine-n", "41", "--test-set", "--out", p("test.csv")}), 0);
    EXPECT_EQ(load_dataset(p("test.csv")).size(), 7u);

    ASSERT_EQ(run({"train", "--data", p("train.csv"), "--kind", "vae", "--optimizer", "adam", "--iters", "50",
                   "--batch", "13", "--hidden", "16", "--latent", "4", "--out", p("vae.model")}),
              0);
    EXPECT_TRUE(fs::exists(p("vae.model.loss.csv")));
    ASSERT_EQ(run({"train", "--data", p("train.csv"), "--kind", "ae", "--optimizer", "momentum", "--iters", "50",
                   "--batch", "13", "--hidden", "16", "--latent", "4", "--out", p("ae.model")}),
              0);

    std::string text;
    ASSERT_EQ(run({"invert", "--approach", "latent", "--data", p("train.csv"), "--model", p("vae.model"),
                   "--regression", p("vae.reg"), "--d", "0.36", "--groundtruth", p("test.csv"), "--out",
                   p("field.csv")},
                  &text),
              0)
        << text;
    EXPECT_NE(text.find("ssd "), std::string::npos);
    EXPECT_TRUE(fs::exists(p("vae.reg")));
    ASSERT_EQ(run({"invert", "--approach", "fullspace", "--data", p("train.csv"), "--regression", p("full.reg"),
                   "--d", "0.36", "--noise", "0.1", "--out", p("field_full.csv")}),
              0);

    io::write_file(dir / "sweep.cfg",
                   "# small sweep\n"
                   "train = train.csv\n"
                   "test = test.csv\n"
                   "out = results\n"
                   "model.vae.adam = vae.model\n"
                   "model.ae.momentum = ae.model\n"
                   "noise_levels = 0.01,0.1\n"
                   "seeds = 1,2\n"
                   "timing_repetitions = 100\n");
    ASSERT_EQ(run({"sweep", "--config", p("sweep.cfg")}, &text), 0) << text;
    for (const char* f : {"fig6_fields.csv", "fig8_ssd.csv", "fig9_ssd.csv", "table2_timing.csv", "sweep_cells.csv"})
        EXPECT_TRUE(fs::exists(dir / "results" / f)) << f;
    EXPECT_EQ(cells_from_csv(io::read_file(dir / "results" / "sweep_cells.csv")).size(), 3u * 7u * 2u * 2u);

    ASSERT_EQ(run({"bench", "--data", p("train.csv"), "--model", "vae=" + p("vae.model"), "--out", p("bench.csv")}),
              0);
    EXPECT_EQ(run({"bench", "--data", p("train.csv"), "--reps", "10", "--out", p("bench.csv")}), 1);
}

TEST(Cli, SweepConfigErrors) {
    const fs::path dir = fs::temp_directory_path() / "capinv_cfg";
    fs::create_directories(dir);
    io::write_file(dir / "bad.cfg", "train = a\ntest = b\ncolour = blue\n");
    EXPECT_THROW(parse_sweep_file(dir / "bad.cfg"), FormatError);
    io::write_file(dir / "missing.cfg", "train = a\n");
    EXPECT_THROW(parse_sweep_file(dir / "missing.cfg"), FormatError);
    io::write_file(dir / "model.cfg", "train = a\ntest = b\nmodel.gan.adam = x\n");
    EXPECT_THROW(parse_sweep_file(dir / "model.cfg"), Error);
}
