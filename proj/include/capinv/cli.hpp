#pragma once

// Command-line front end: generate, train, invert, sweep, bench.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "capinv/harness.hpp"

namespace capinv {

namespace fs = std::filesystem;

// Parsed `sweep.cfg`: one key=value per line, '#' comments. Relative paths
// are resolved against the config file's directory.
//
//   train = train.csv
//   test = test.csv
//   out = results
//   fullspace = true
//   model.ae.momentum = ae_momentum.model
//   model.vae.adam = vae_adam.model
//   noise_levels = 0.01,0.1,0.5,1.0
//   test_d = 0.3,0.36,0.4,0.5,0.6,0.7,0.8
//   seeds = 1,2,3,4,5
//   threads = 1
//   timing_repetitions = 100
//   noise_site = search
struct SweepFile {
    fs::path train;
    fs::path test;
    fs::path out = "results";
    bool fullspace = true;
    std::vector<std::pair<ApproachKey, fs::path>> models;
    SweepConfig config;
    std::size_t timing_repetitions = 100;
    double field_d = 0.36;
};

inline SweepFile parse_sweep_file(const fs::path& path) {
    const fs::path base = path.parent_path();
    auto resolve = [&](const std::string& v) {
        fs::path p(v);
        return p.is_absolute() ? p : base / p;
    };
    SweepFile file;
    io::LineReader reader(io::read_file(path));
    std::string_view line;
    while (reader.next(line)) {
        if (line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw FormatError("sweep config line " + std::to_string(reader.line_number()) + ": expected key=value");
        const std::string key(io::trim(line.substr(0, eq)));
        const std::string value(io::trim(line.substr(eq + 1)));
        if (key == "train") {
            file.train = resolve(value);
        } else if (key == "test") {
            file.test = resolve(value);
        } else if (key == "out") {
            file.out = resolve(value);
        } else if (key == "fullspace") {
            file.fullspace = value == "true" || value == "1";
        } else if (key.starts_with("model.")) {
            const auto parts = io::split(key, '.');
            if (parts.size() != 3) throw FormatError("sweep config: model keys look like model.<ae|vae>.<optimizer>");
            model_kind_from_string(std::string(parts[1]));
            optimizer_from_string(std::string(parts[2]));
            file.models.push_back({{std::string(parts[1]), std::string(parts[2])}, resolve(value)});
        } else if (key == "noise_levels") {
            file.config.noise_levels = io::parse_doubles(value);
        } else if (key == "test_d") {
            file.config.test_d = io::parse_doubles(value);
        } else if (key == "seeds") {
            file.config.seeds.clear();
            if (!io::trim(value).empty())
                for (auto tok : io::split(value, ',')) file.config.seeds.push_back(io::parse_count(tok));
        } else if (key == "threads") {
            file.config.threads = static_cast<unsigned>(io::parse_count(value));
        } else if (key == "timing_repetitions") {
            file.timing_repetitions = io::parse_count(value);
        } else if (key == "noise_site") {
            if (value != "search" && value != "field") throw FormatError("sweep config: noise_site is search or field");
            file.config.noise_site = value == "field" ? NoiseSite::FieldThenEncode : NoiseSite::SearchSpace;
        } else if (key == "field_d") {
            file.field_d = io::parse_double(value);
        } else if (key == "inverse_step_scale") {
            file.config.inverse.step_scale = io::parse_double(value);
        } else if (key == "inverse_tolerance") {
            file.config.inverse.tolerance = io::parse_double(value);
        } else if (key == "inverse_max_iterations") {
            file.config.inverse.max_iterations = io::parse_count(value);
        } else {
            throw FormatError("sweep config: unknown key '" + key + "'");
        }
    }
    if (file.train.empty() || file.test.empty()) throw FormatError("sweep config: 'train' and 'test' are required");
    if (file.fullspace) file.config.approaches.push_back({"fullspace", "-"});
    for (const auto& [key, p] : file.models) file.config.approaches.push_back(key);
    return file;
}

inline ExportPaths run_sweep_file(const SweepFile& file, std::ostream& log) {
    const Dataset train = load_dataset(file.train);
    const Dataset test = load_dataset(file.test);
    SweepInputs inputs;
    inputs.groundtruth = test;
    TimingInputs timing;
    timing.train = &train;
    timing.inverse = file.config.inverse;
    timing.target_d = file.field_d;
    if (file.fullspace) {
        inputs.fullspace = build_fullspace(train);
        timing.fullspace = inputs.fullspace;
    }
    for (const auto& [key, path] : file.models) {
        GenerativeModel model = load_model(path);
        if (to_string(model.kind) != key.approach)
            throw ConfigError("sweep: " + path.string() + " holds a " + to_string(model.kind) + " model, expected " +
                              key.approach);
        auto surrogate = build_latent(std::move(model), train);
        timing.latent.emplace_back(key.label(), surrogate);
        inputs.latent.emplace(key, std::move(surrogate));
    }
    SweepResult result = run_noise_sweep(file.config, inputs);
    std::size_t failed = 0;
    for (const auto& c : result.cells) failed += c.failed;
    log << "sweep: " << result.cells.size() << " cells, " << failed << " failed\n";
    if (file.timing_repetitions > 0) result.timing = run_timing(timing, file.timing_repetitions);
    return export_results(result, test, file.out, file.field_d);
}

namespace cli {

struct SolverFlags {
    CapacitorConfig geometry;
    SorOptions sor;
    unsigned threads = 0;

    void attach(CLI::App* app) {
        app->add_option("--a", geometry.a, "Plate left edge")->capture_default_str();
        app->add_option("--b", geometry.b, "Plate right edge")->capture_default_str();
        app->add_option("--v0", geometry.v0, "Plate potential magnitude")->capture_default_str();
        app->add_option("--fine-n", geometry.fine_n, "Solver nodes per side")->capture_default_str();
        app->add_option("--coarse-n", geometry.coarse_n, "Model grid nodes per side")->capture_default_str();
        app->add_option("--omega", sor.omega, "SOR relaxation factor (0 = 2/(1+sin(pi/n)))")->capture_default_str();
        app->add_option("--tol", sor.tol, "SOR update tolerance, relative to v0")->capture_default_str();
        app->add_option("--max-sweeps", sor.max_sweeps, "SOR sweep limit")->capture_default_str();
        app->add_option("--threads", threads, "Solver threads (0 = all cores)")->capture_default_str();
    }
};

}  // namespace cli

// Returns the process exit code. args excludes the program name.
inline int cli_main(const std::vector<std::string>& args, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
    CLI::App app{"Capacitor field generation, generative-model training and inverse prediction", "capinv"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Solve capacitor fields and write a dataset");
    double d_min = 0.1, d_max = 0.9;
    std::size_t count = 120;
    std::string gen_out;
    bool test_set = false;
    cli::SolverFlags solver;
    gen->add_option("--d-min", d_min, "Smallest separation")->capture_default_str();
    gen->add_option("--d-max", d_max, "Largest separation")->capture_default_str();
    gen->add_option("--count", count, "Number of uniformly spaced separations")->capture_default_str();
    gen->add_flag("--test-set", test_set, "Use the fixed test separations 0.3,0.36,0.4,...,0.8");
    gen->add_option("--out", gen_out, "Dataset path")->required();
    solver.attach(gen);

    // train
    auto* tr = app.add_subcommand("train", "Train an AE or VAE on a dataset's fields");
    std::string tr_data, tr_out, tr_history, tr_regression, kind = "vae", optimizer = "adam";
    std::optional<double> lr;
    GenerativeConfig gcfg;
    std::uint64_t tr_seed = 7;
    Architecture arch;
    tr->add_option("--data", tr_data, "Training dataset")->required();
    tr->add_option("--kind", kind, "ae or vae")->check(CLI::IsMember({"ae", "vae"}))->capture_default_str();
    tr->add_option("--optimizer", optimizer, "momentum or adam")
        ->check(CLI::IsMember({"momentum", "adam"}))
        ->capture_default_str();
    tr->add_option("--lr", lr, "Learning rate (default 1e-3 Adam, 1e-5 Momentum)");
    tr->add_option("--iters", gcfg.max_iterations, "Minibatch steps")->capture_default_str();
    tr->add_option("--batch", gcfg.minibatch_size, "Minibatch size")->capture_default_str();
    tr->add_option("--beta", gcfg.beta, "KLD weight")->capture_default_str();
    tr->add_option("--momentum", gcfg.optimizer.momentum, "Momentum coefficient")->capture_default_str();
    tr->add_option("--beta1", gcfg.optimizer.beta1, "Adam first-moment decay")->capture_default_str();
    tr->add_option("--beta2", gcfg.optimizer.beta2, "Adam second-moment decay")->capture_default_str();
    tr->add_option("--eps", gcfg.optimizer.epsilon, "Adam epsilon")->capture_default_str();
    tr->add_option("--hidden", arch.hidden, "Hidden layer widths")->capture_default_str();
    tr->add_option("--latent", arch.latent, "Latent width Z")->capture_default_str();
    tr->add_option("--seed", tr_seed, "Master seed")->capture_default_str();
    tr->add_option("--out", tr_out, "Model path")->required();
    tr->add_option("--history", tr_history, "Loss history path (default <out>.loss.csv)");
    tr->add_option("--regression", tr_regression, "Also fit and write the latent regression here");

    // invert
    auto* inv = app.add_subcommand("invert", "Recover a field for a target separation");
    std::string approach = "latent", inv_data, inv_model, inv_regression, inv_out, inv_truth, noise_site = "search";
    double target = 0.36, noise = 0.0;
    std::uint64_t inv_seed = 1;
    InverseOptions inv_opts;
    inv->add_option("--approach", approach, "fullspace or latent")
        ->check(CLI::IsMember({"fullspace", "latent"}))
        ->capture_default_str();
    inv->add_option("--data", inv_data, "Training dataset (anchor and regression targets)")->required();
    inv->add_option("--model", inv_model, "Generative model (latent approach)");
    inv->add_option("--regression", inv_regression, "Regression file; fitted and written if absent")->required();
    inv->add_option("--d", target, "Target separation")->capture_default_str();
    inv->add_option("--noise", noise, "AWGN variance on the initial estimate")->capture_default_str();
    inv->add_option("--seed", inv_seed, "Noise seed")->capture_default_str();
    inv->add_option("--noise-site", noise_site, "search (noise in the search space) or field (corrupt then encode)")
        ->check(CLI::IsMember({"search", "field"}))
        ->capture_default_str();
    inv->add_option("--step-scale", inv_opts.step_scale, "Step as a multiple of 1/(phi.phi)")->capture_default_str();
    inv->add_option("--inv-tol", inv_opts.tolerance, "Residual tolerance")->capture_default_str();
    inv->add_option("--inv-max-iter", inv_opts.max_iterations, "Iteration limit")->capture_default_str();
    inv->add_option("--groundtruth", inv_truth, "Dataset holding the target field; prints the ssd");
    inv->add_option("--out", inv_out, "Output grid CSV")->required();

    // sweep
    auto* sw = app.add_subcommand("sweep", "Run a noise sweep and export the result tables");
    std::string sweep_cfg;
    sw->add_option("--config", sweep_cfg, "Sweep configuration file")->required()->check(CLI::ExistingFile);

    // bench
    auto* bench = app.add_subcommand("bench", "Time the pipeline stages");
    std::string bench_data, bench_out;
    std::vector<std::string> bench_models;
    std::size_t reps = 100;
    double bench_d = 0.36;
    bench->add_option("--data", bench_data, "Training dataset")->required();
    bench->add_option("--model", bench_models, "label=PATH, repeatable");
    bench->add_option("--reps", reps, "Timed repetitions per stage (>= 100)")->capture_default_str();
    bench->add_option("--d", bench_d, "Target separation")->capture_default_str();
    bench->add_option("--out", bench_out, "Timing table CSV")->required();

    if (args.empty()) {
        err << app.help();
        return 2;
    }
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (*gen) {
            solver.sor.tol *= solver.geometry.v0;
            const auto d_values = test_set ? default_test_d() : linspace(d_min, d_max, count);
            const Dataset data = generate_dataset(d_values, solver.geometry, solver.sor, solver.threads);
            save_dataset(data, gen_out);
            out << "wrote " << data.size() << " records to " << gen_out << "\n";
        } else if (*tr) {
            const OptimizerKind ok = optimizer_from_string(optimizer);
            const OptimizerConfig defaults = OptimizerConfig::defaults(ok);
            gcfg.optimizer.kind = ok;
            gcfg.optimizer.learning_rate = lr.value_or(defaults.learning_rate);
            const Dataset data = load_dataset(tr_data);
            const TrainedGenerative trained =
                train_generative(model_kind_from_string(kind), dataset_matrix(data), gcfg, tr_seed, arch);
            save_model(trained.model, tr_out);
            if (tr_history.empty()) tr_history = tr_out + ".loss.csv";
            io::write_file(tr_history, loss_history_to_string(trained.history));
            if (!tr_regression.empty()) save_regression(build_latent(trained.model, data).regression, tr_regression);
            const LossRecord last = trained.history.empty() ? LossRecord{} : trained.history.back();
            out << "trained " << kind << " (" << optimizer << "), final loss " << last.total << " (rec " << last.rec
                << ", kld " << last.kld << ")\n";
        } else if (*inv) {
            const Dataset data = load_dataset(inv_data);
            const bool have_regression = fs::exists(inv_regression);
            FieldGrid field;
            if (approach == "fullspace") {
                FullspaceSurrogate s = have_regression ? build_fullspace(data, load_regression(inv_regression))
                                                       : build_fullspace(data);
                if (!have_regression) save_regression(s.regression, inv_regression);
                field = recover_field(s, target, noise, inv_seed, inv_opts);
            } else {
                if (inv_model.empty()) throw ConfigError("invert: --model is required for the latent approach");
                GenerativeModel model = load_model(inv_model);
                LatentSurrogate s = have_regression ? build_latent(std::move(model), data, load_regression(inv_regression))
                                                    : build_latent(std::move(model), data);
                if (!have_regression) save_regression(s.regression, inv_regression);
                field = recover_field(s, target, noise, inv_seed, inv_opts,
                                      noise_site == "field" ? NoiseSite::FieldThenEncode : NoiseSite::SearchSpace);
            }
            io::write_file(inv_out, grid_to_csv(field));
            out << "wrote " << field.n << "x" << field.n << " field for d=" << target << " to " << inv_out << "\n";
            if (!inv_truth.empty()) {
                const Dataset truth = load_dataset(inv_truth);
                out << "ssd " << io::format_double(ssd(as_grid(groundtruth_for(truth, target).field, truth.grid), field))
                    << "\n";
            }
        } else if (*sw) {
            const ExportPaths paths = run_sweep_file(parse_sweep_file(sweep_cfg), out);
            out << "wrote " << paths.fig6_fields.string() << ", " << paths.fig8_ssd.string() << ", "
                << paths.fig9_ssd.string() << ", " << paths.table2_timing.string() << "\n";
        } else if (*bench) {
            const Dataset data = load_dataset(bench_data);
            TimingInputs timing;
            timing.train = &data;
            timing.target_d = bench_d;
            timing.fullspace = build_fullspace(data);
            for (const auto& spec : bench_models) {
                const auto eq = spec.find('=');
                if (eq == std::string::npos) throw ConfigError("bench: --model expects label=PATH");
                timing.latent.emplace_back(spec.substr(0, eq), build_latent(load_model(spec.substr(eq + 1)), data));
            }
            const auto rows = run_timing(timing, reps);
            io::write_file(bench_out, timing_to_csv(rows));
            out << timing_to_csv(rows);
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace capinv
