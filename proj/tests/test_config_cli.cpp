#include "momentum/cli.hpp"
#include "momentum/config.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace momentum;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"(# tiny adding run
cell.kind = momentum_rnn
cell.h = 4
cell.mu = 0.6
cell.s = 1.0
task.kind = adding
task.seq_len = 8
task.eval_batch = 8
optim.kind = adam
optim.lr = 0.001
run.batch = 4
run.iterations = 6
run.eval_every = 3
run.seed = 5
)";

TrainConfig parse_text(const std::string& text) {
    std::istringstream in(text);
    return to_train_config(ConfigFile::parse(in));
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("momentum_cli_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_file(const fs::path& path, const std::string& text) {
    std::ofstream(path) << text;
    return path;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct CliRun {
    int code;
    std::string out;
    std::string err;
};

CliRun cli_run(std::vector<std::string> args) {
    args.insert(args.begin(), "momentumrnn");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

}  // namespace

TEST_CASE("config parsing") {
    const TrainConfig c = parse_text(kTinyConfig);
    CHECK(c.cell.kind == CellKind::MomentumRnn);
    CHECK(c.cell.hidden_dim == 4);
    CHECK(c.cell.input_dim == 2);
    CHECK(c.task.adding.seq_len == 8);
    CHECK(c.optim.kind == OptimizerKind::Adam);
    CHECK(c.optim.lr == 0.001);
    CHECK(c.batch_size == 4);
    CHECK(c.seed == 5);
    CHECK(c.clip_norm == 1.0);
    CHECK_FALSE(c.snapshot_every.has_value());
}

TEST_CASE("config errors") {
    CHECK_THROWS_AS(parse_text(std::string(kTinyConfig) + "cell.bogus = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_text(std::string(kTinyConfig) + "cell.h = 5\n"), ConfigError);
    CHECK_THROWS_AS(parse_text(std::string(kTinyConfig) + "no equals sign\n"), ConfigError);
    CHECK_THROWS_AS(parse_text("cell.kind = rnn\n"), ConfigError);
    CHECK_THROWS_AS(parse_text(std::string(kTinyConfig) + "cell.mu = fast\n"), ConfigError);
    CHECK_THROWS_AS(parse_text(std::string(kTinyConfig) + "cell.schedule = weekly\n"), ConfigError);
    CHECK_THROWS_AS(parse_text(std::string(kTinyConfig) + "cell.d = 3\n"), ConfigError);
    CHECK_THROWS_AS(parse_text(std::string(kTinyConfig) + "cell.s = -1\n"), ConfigError);
    CHECK_THROWS_AS(ConfigFile::load("/nonexistent/config.cfg"), std::ios_base::failure);
}

TEST_CASE("config echo parses back to the same run") {
    TrainConfig c = parse_text(std::string(kTinyConfig) + "optim.clip = none\nrun.snapshot_every = 2\n");
    CHECK_FALSE(c.clip_norm.has_value());
    const TrainConfig back = parse_text(echo_config(c));
    CHECK(echo_config(back) == echo_config(c));
    CHECK(back.cell.mu == c.cell.mu);
    CHECK(back.snapshot_every == 2);
}

TEST_CASE("cli usage errors") {
    CHECK(cli_run({}).code == cli::kExitUsage);
    CHECK(cli_run({"frobnicate"}).code == cli::kExitUsage);
    CHECK(cli_run({"train"}).code == cli::kExitUsage);
    CHECK(cli_run({"gradcheck", "--kinds", ""}).code == cli::kExitUsage);
    CHECK(cli_run({"gradcheck", "--kinds", "gru"}).code == cli::kExitUsage);
    CHECK(cli_run({"--help"}).code == cli::kExitOk);
}

TEST_CASE("cli gradcheck") {
    const CliRun ok = cli_run({"gradcheck", "--kinds", "rnn,adam_lstm", "--seeds", "1"});
    CHECK(ok.code == cli::kExitOk);
    CHECK(ok.out.find("adam_lstm") != std::string::npos);
    const CliRun bad = cli_run({"gradcheck", "--kinds", "lstm", "--seeds", "1", "--perturb", "1e-3"});
    CHECK(bad.code == cli::kExitGradCheck);
    CHECK(bad.err.find("lstm") != std::string::npos);
}

TEST_CASE("cli train writes reproducible outputs") {
    const fs::path dir = scratch("train");
    const fs::path cfg = write_file(dir / "run.cfg", kTinyConfig);
    REQUIRE(cli_run({"train", "--config", cfg.string(), "--out", (dir / "a").string()}).code == cli::kExitOk);
    REQUIRE(cli_run({"train", "--config", cfg.string(), "--out", (dir / "b").string()}).code == cli::kExitOk);
    CHECK(slurp(dir / "a" / "metrics.csv") == slurp(dir / "b" / "metrics.csv"));
    CHECK(slurp(dir / "a" / "params.bin") == slurp(dir / "b" / "params.bin"));
    CHECK(fs::exists(dir / "a" / "manifest.txt"));
    CHECK(slurp(dir / "a" / "manifest.txt").find("seed = 5") != std::string::npos);

    REQUIRE(cli_run({"--seed", "6", "train", "--config", cfg.string(), "--out", (dir / "c").string()}).code ==
            cli::kExitOk);
    CHECK(slurp(dir / "a" / "metrics.csv") != slurp(dir / "c" / "metrics.csv"));

    CHECK(cli_run({"train", "--config", (dir / "missing.cfg").string(), "--out", (dir / "d").string()}).code ==
          cli::kExitIo);
    const fs::path bad = write_file(dir / "bad.cfg", std::string(kTinyConfig) + "cell.h = 3\n");
    CHECK(cli_run({"train", "--config", bad.string(), "--out", (dir / "e").string()}).code == cli::kExitUsage);
    const fs::path diverge = write_file(
        dir / "diverge.cfg", std::string(kTinyConfig) + "optim.clip = none\n");
    std::string text = slurp(diverge);
    text.replace(text.find("optim.kind = adam"), 17, "optim.kind = sgd");
    text.replace(text.find("optim.lr = 0.001"), 16, "optim.lr = 1e300");
    write_file(diverge, text);
    CHECK(cli_run({"train", "--config", diverge.string(), "--out", (dir / "f").string()}).code ==
          cli::kExitDiverged);
}

TEST_CASE("cli gen, gradflow and sweep") {
    const fs::path dir = scratch("misc");
    const CliRun pretty = cli_run({"gen", "--task", "copying", "--alphabet", "4", "--copy-len", "5", "--spacing",
                                   "20", "--pretty", "--seed", "3"});
    CHECK(pretty.code == cli::kExitOk);
    CHECK(pretty.out.rfind("Input:  ", 0) == 0);
    CHECK(pretty.out.find(":----\nOutput: -------------------------") != std::string::npos);

    CHECK(cli_run({"gen", "--task", "adding", "--seq-len", "10", "-n", "3", "--out", (dir / "add.csv").string()})
              .code == cli::kExitOk);
    CHECK(slurp(dir / "add.csv").rfind("seq_id,t,channel,value,target\n", 0) == 0);
    CHECK(cli_run({"gen", "--task", "mnist"}).code == cli::kExitUsage);

    const fs::path cfg = write_file(dir / "run.cfg", kTinyConfig);
    CHECK(cli_run({"gradflow", "--config", cfg.string(), "--out", (dir / "flow.csv").string()}).code ==
          cli::kExitOk);
    const std::string flow = slurp(dir / "flow.csv");
    CHECK(flow.rfind("iteration,t,grad_norm\n0,1,", 0) == 0);
    CHECK(flow.find("\n6,8,") != std::string::npos);

    CHECK(cli_run({"sweep", "--config", cfg.string(), "--mu", "0,0.5", "--s", "1", "--out",
                   (dir / "sweep.csv").string()})
              .code == cli::kExitOk);
    CHECK(slurp(dir / "sweep.csv").rfind("mu,s,final_train_loss,final_eval_metric\n0,1,", 0) == 0);
    CHECK(cli_run({"sweep", "--config", cfg.string(), "--mu", "0,x", "--s", "1", "--out",
                   (dir / "sweep.csv").string()})
              .code == cli::kExitUsage);
}
