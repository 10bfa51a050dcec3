#include "momentum/cli.hpp"

#include "momentum/config.hpp"
#include "momentum/training.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

namespace momentum::cli {

namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        out.push_back(item);
    }
    return out;
}

std::vector<double> parse_real_list(const std::string& flag, const std::string& text) {
    std::vector<double> out;
    for (const auto& item : split_list(text)) {
        double v = 0.0;
        const auto* end = item.data() + item.size();
        const auto [ptr, ec] = std::from_chars(item.data(), end, v);
        if (item.empty() || ec != std::errc() || ptr != end) {
            throw UsageError(flag + ": malformed list '" + text + "'");
        }
        out.push_back(v);
    }
    if (out.empty()) throw UsageError(flag + ": empty list");
    return out;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + path.parent_path().string());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    return out;
}

void finish(std::ofstream& out, const fs::path& path) {
    out.flush();
    if (!out) throw IoError("write failed for " + path.string());
}

TrainConfig load_config(const std::string& path, const std::optional<std::uint64_t>& seed) {
    ConfigFile file;
    try {
        file = ConfigFile::load(path);
    } catch (const std::ios_base::failure& e) {
        throw IoError(e.what());
    }
    TrainConfig config = to_train_config(file);
    if (seed) config.seed = *seed;
    return config;
}

// ---------------------------------------------------------------------------

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::optional<std::uint64_t>& seed, std::ostream& err) {
    if (out_dir.empty()) throw UsageError("train: --out <dir> is required");
    const TrainConfig config = load_config(config_path, seed);
    const std::size_t every = config.eval_every > 0 ? config.eval_every : 100;
    TrainHooks hooks;
    hooks.on_iteration = [&](std::size_t i, double loss) {
        if ((i + 1) % every == 0) err << "iteration " << (i + 1) << " train loss " << loss << '\n';
        return false;
    };
    const TrainResult result = train(config, hooks);

    const fs::path dir(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string());

    {
        const fs::path p = dir / "metrics.csv";
        auto out = open_out(p);
        write_metrics_csv(out, result.log);
        finish(out, p);
    }
    {
        const fs::path p = dir / "params.bin";
        auto out = open_out(p);
        write_model(out, result.model);
        finish(out, p);
    }
    {
        const fs::path p = dir / "manifest.txt";
        auto out = open_out(p);
        out << "# momentumrnn run manifest\n"
            << "version = " << kVersion << '\n'
            << "seed = " << config.seed << '\n'
            << "iterations_run = " << result.iterations_run << '\n'
            << echo_config(config);
        finish(out, p);
    }
    err << "train: " << result.iterations_run << " iterations, outputs in " << dir.string() << '\n';
    return kExitOk;
}

int cmd_gradcheck(const std::string& kinds_text, std::size_t seeds, double perturb, std::ostream& out,
                  std::ostream& err) {
    std::vector<CellKind> kinds;
    if (kinds_text == "all") {
        kinds.assign(std::begin(kAllCellKinds), std::end(kAllCellKinds));
    } else {
        for (const auto& name : split_list(kinds_text)) {
            if (name.empty()) continue;
            const auto kind = parse_cell_kind(name);
            if (!kind) throw UsageError("gradcheck: unknown cell kind '" + name + "'");
            kinds.push_back(*kind);
        }
    }
    if (kinds.empty()) throw UsageError("gradcheck: --kinds must name at least one cell kind");
    if (seeds == 0) throw UsageError("gradcheck: --seeds must be >= 1");

    constexpr std::size_t kSteps[] = {1, 3, 8};
    constexpr std::size_t kDims[] = {1, 2, 5};
    bool all_ok = true;
    out << std::left << std::setw(18) << "kind" << std::setw(8) << "cases" << std::setw(16) << "max_rel_error"
        << "max_abs_error\n";
    for (CellKind kind : kinds) {
        double worst = 0.0;
        double worst_abs = 0.0;
        std::size_t cases = 0;
        for (std::size_t seed = 0; seed < seeds; ++seed) {
            for (std::size_t steps : kSteps) for (std::size_t d : kDims) for (std::size_t h : kDims) {
                const GradCheckResult r = gradient_check_instance(kind, seed, steps, d, h, perturb);
                ++cases;
                worst = std::max(worst, r.max_rel_error);
                worst_abs = std::max(worst_abs, r.max_abs_error);
                if (!r.passed) {
                    all_ok = false;
                    err << "gradcheck FAIL: kind=" << to_string(kind) << " seed=" << seed << " T=" << steps
                        << " d=" << d << " h=" << h << " param=" << r.worst_param << " index=" << r.worst_index
                        << " rel_error=" << r.max_rel_error << '\n';
                }
            }
        }
        out << std::left << std::setw(18) << to_string(kind) << std::setw(8) << cases << std::scientific
            << std::setprecision(3) << std::setw(16) << worst << worst_abs << std::defaultfloat << '\n';
    }
    return all_ok ? kExitOk : kExitGradCheck;
}

int cmd_gradflow(const std::string& config_path, const std::string& out_csv,
                 const std::optional<std::uint64_t>& seed, std::ostream& err) {
    if (out_csv.empty()) throw UsageError("gradflow: --out <csv> is required");
    TrainConfig config = load_config(config_path, seed);
    if (!config.snapshot_every) config.snapshot_every = std::max<std::size_t>(config.iterations, 1);

    std::vector<ModelSnapshot> snapshots;
    if (config.iterations == 0) {
        snapshots.push_back({0, init_model(config)});
    } else {
        snapshots = train(config).snapshots;
    }
    const auto records = gradient_flow(config, snapshots);
    auto out = open_out(out_csv);
    write_gradflow_csv(out, records);
    finish(out, out_csv);
    err << "gradflow: " << records.size() << " snapshots written to " << out_csv << '\n';
    return kExitOk;
}

struct GenOptions {
    std::string task = "copying";
    std::size_t alphabet = 4;
    std::size_t copy_len = 5;
    std::size_t spacing = 20;
    std::size_t seq_len = 100;
    std::size_t n = 1;
    bool pretty = false;
};

int cmd_gen(const GenOptions& opt, const std::string& out_csv, std::uint64_t seed, std::ostream& out) {
    const auto kind = parse_task_kind(opt.task);
    if (!kind || (*kind != TaskKind::Copying && *kind != TaskKind::Adding && *kind != TaskKind::Synthetic)) {
        throw UsageError("gen: --task must be copying, adding or synthetic");
    }
    Rng rng(seed, streams::kTrainData);
    SequenceBatch batch;
    CopyingSpec copying{opt.alphabet, opt.copy_len, opt.spacing, opt.n};
    try {
        switch (*kind) {
            case TaskKind::Copying: batch = gen_copying(copying, rng); break;
            case TaskKind::Adding: batch = gen_adding(AddingSpec{opt.seq_len, opt.n}, rng); break;
            default: batch = gen_synthetic(SyntheticSpec{opt.seq_len, 1, 10, opt.n}, rng); break;
        }
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("gen: ") + e.what());
    }
    if (opt.pretty && *kind == TaskKind::Copying) {
        for (std::size_t b = 0; b < batch.batch(); ++b) out << render_copying(batch, copying, b);
    }
    if (!out_csv.empty()) {
        auto file = open_out(out_csv);
        write_batch_csv(file, batch);
        finish(file, out_csv);
    }
    return kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::string& mu_text, const std::string& s_text,
              const std::string& out_csv, const std::optional<std::uint64_t>& seed, std::ostream& err) {
    const auto mus = parse_real_list("--mu", mu_text);
    const auto ss = parse_real_list("--s", s_text);
    if (out_csv.empty()) throw UsageError("sweep: --out <csv> is required");
    const TrainConfig base = load_config(config_path, seed);
    std::vector<SweepRow> rows;
    try {
        rows = mu_s_sweep(base, mus, ss);
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("sweep: ") + e.what());
    }
    auto out = open_out(out_csv);
    write_sweep_csv(out, rows);
    finish(out, out_csv);
    err << "sweep: " << rows.size() << " runs written to " << out_csv << '\n';
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Momentum-accelerated recurrent cells: training, gradient checks and diagnostics",
                 "momentumrnn"};
    app.require_subcommand(1);
    app.fallthrough();

    std::optional<std::uint64_t> seed;
    std::string out_path;
    app.add_option("--seed", seed, "Override the run seed");
    app.add_option("--out", out_path, "Output directory (train) or CSV file (other verbs)");

    std::string config_path;

    auto* train_cmd = app.add_subcommand("train", "Train a model from a config file");
    train_cmd->add_option("--config", config_path, "Config file")->required();

    std::string kinds = "all";
    std::size_t seeds = 5;
    double perturb = 0.0;
    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Compare BPTT gradients with finite differences");
    gradcheck_cmd->add_option("--kinds", kinds, "Comma-separated cell kinds, or 'all'");
    gradcheck_cmd->add_option("--seeds", seeds, "Random instances per kind and length");
    gradcheck_cmd->add_option("--perturb", perturb, "Offset added to analytic gradients (test hook)")
        ->group("");

    auto* gradflow_cmd = app.add_subcommand("gradflow", "Per-step gradient norms over training snapshots");
    gradflow_cmd->add_option("--config", config_path, "Config file")->required();

    GenOptions gen;
    auto* gen_cmd = app.add_subcommand("gen", "Generate a task batch as CSV");
    gen_cmd->add_option("--task", gen.task, "copying, adding or synthetic");
    gen_cmd->add_option("--alphabet", gen.alphabet, "Copying alphabet size N");
    gen_cmd->add_option("--copy-len", gen.copy_len, "Copying length K");
    gen_cmd->add_option("--spacing", gen.spacing, "Copying blank spacing L");
    gen_cmd->add_option("--seq-len", gen.seq_len, "Adding/synthetic sequence length T");
    gen_cmd->add_option("-n,--n", gen.n, "Number of sequences");
    gen_cmd->add_flag("--pretty", gen.pretty, "Print copying sequences as text");

    std::string mu_list;
    std::string s_list;
    auto* sweep_cmd = app.add_subcommand("sweep", "Grid over momentum mu and step size s");
    sweep_cmd->add_option("--config", config_path, "Config file")->required();
    sweep_cmd->add_option("--mu", mu_list, "Comma-separated mu values")->required();
    sweep_cmd->add_option("--s", s_list, "Comma-separated s values")->required();

    try {
        std::vector<std::string> rest(args.begin() + (args.empty() ? 0 : 1), args.end());
        std::reverse(rest.begin(), rest.end());
        app.parse(rest);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(config_path, out_path, seed, err);
        if (gradcheck_cmd->parsed()) return cmd_gradcheck(kinds, seeds, perturb, out, err);
        if (gradflow_cmd->parsed()) return cmd_gradflow(config_path, out_path, seed, err);
        if (gen_cmd->parsed()) return cmd_gen(gen, out_path, seed.value_or(0), out);
        if (sweep_cmd->parsed()) return cmd_sweep(config_path, mu_list, s_list, out_path, seed, err);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DivergenceError& e) {
        err << "diverged: " << e.what() << '\n';
        return kExitDiverged;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << '\n';
        return kExitIo;
    } catch (const MnistError& e) {
        err << "i/o error: " << e.what() << '\n';
        return kExitIo;
    } catch (const NumericError& e) {
        err << "diverged: " << e.what() << '\n';
        return kExitDiverged;
    }
    err << "usage error: no command\n";
    return kExitUsage;
}

}  // namespace momentum::cli
