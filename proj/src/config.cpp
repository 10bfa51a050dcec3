#include "momentum/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <set>
#include <sstream>

namespace momentum {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

double to_real(const std::string& key, const std::string& value) {
    double out = 0.0;
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected a real number, got '" + value + "'");
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
    std::uint64_t out = 0;
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
    }
    return out;
}

std::size_t to_count(const std::string& key, const std::string& value) {
    return static_cast<std::size_t>(to_u64(key, value));
}

bool to_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

template <typename T>
T to_enum(const std::string& key, const std::string& value, std::optional<T> parsed) {
    if (!parsed) throw ConfigError(key + ": unknown value '" + value + "'");
    return *parsed;
}

std::string real17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

using Setter = std::function<void(TrainConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"cell.kind", [](TrainConfig& c, const std::string& k, const std::string& v) {
             c.cell.kind = to_enum(k, v, parse_cell_kind(v));
         }},
        {"cell.d", [](TrainConfig& c, const std::string& k, const std::string& v) { c.cell.input_dim = to_count(k, v); }},
        {"cell.h", [](TrainConfig& c, const std::string& k, const std::string& v) { c.cell.hidden_dim = to_count(k, v); }},
        {"cell.mu", [](TrainConfig& c, const std::string& k, const std::string& v) { c.cell.mu = to_real(k, v); }},
        {"cell.s", [](TrainConfig& c, const std::string& k, const std::string& v) { c.cell.s = to_real(k, v); }},
        {"cell.beta", [](TrainConfig& c, const std::string& k, const std::string& v) { c.cell.beta = to_real(k, v); }},
        {"cell.eps", [](TrainConfig& c, const std::string& k, const std::string& v) { c.cell.eps = to_real(k, v); }},
        {"cell.schedule", [](TrainConfig& c, const std::string& k, const std::string& v) {
             c.cell.schedule = to_enum(k, v, parse_schedule(v));
         }},
        {"cell.restart_f", [](TrainConfig& c, const std::string& k, const std::string& v) { c.cell.restart_f = to_count(k, v); }},
        {"cell.activation", [](TrainConfig& c, const std::string& k, const std::string& v) {
             c.cell.activation = to_enum(k, v, parse_activation(v));
         }},
        {"cell.forget_bias", [](TrainConfig& c, const std::string& k, const std::string& v) { c.cell.forget_bias = to_real(k, v); }},

        {"task.kind", [](TrainConfig& c, const std::string& k, const std::string& v) {
             c.task.kind = to_enum(k, v, parse_task_kind(v));
         }},
        {"task.alphabet", [](TrainConfig& c, const std::string& k, const std::string& v) { c.task.copying.alphabet = to_count(k, v); }},
        {"task.copy_len", [](TrainConfig& c, const std::string& k, const std::string& v) { c.task.copying.copy_len = to_count(k, v); }},
        {"task.spacing", [](TrainConfig& c, const std::string& k, const std::string& v) { c.task.copying.spacing = to_count(k, v); }},
        {"task.seq_len", [](TrainConfig& c, const std::string& k, const std::string& v) {
             c.task.adding.seq_len = to_count(k, v);
             c.task.synthetic.seq_len = c.task.adding.seq_len;
         }},
        {"task.input_dim", [](TrainConfig& c, const std::string& k, const std::string& v) { c.task.synthetic.input_dim = to_count(k, v); }},
        {"task.classes", [](TrainConfig& c, const std::string& k, const std::string& v) { c.task.synthetic.classes = to_count(k, v); }},
        {"task.mnist_images", [](TrainConfig& c, const std::string&, const std::string& v) { c.task.mnist_images = v; }},
        {"task.mnist_labels", [](TrainConfig& c, const std::string&, const std::string& v) { c.task.mnist_labels = v; }},
        {"task.mnist_test_images", [](TrainConfig& c, const std::string&, const std::string& v) { c.task.mnist_test_images = v; }},
        {"task.mnist_test_labels", [](TrainConfig& c, const std::string&, const std::string& v) { c.task.mnist_test_labels = v; }},
        {"task.eval_batch", [](TrainConfig& c, const std::string& k, const std::string& v) { c.task.eval_batch = to_count(k, v); }},

        {"optim.kind", [](TrainConfig& c, const std::string& k, const std::string& v) {
             c.optim.kind = to_enum(k, v, parse_optimizer_kind(v));
         }},
        {"optim.lr", [](TrainConfig& c, const std::string& k, const std::string& v) { c.optim.lr = to_real(k, v); }},
        {"optim.momentum", [](TrainConfig& c, const std::string& k, const std::string& v) { c.optim.momentum = to_real(k, v); }},
        {"optim.alpha", [](TrainConfig& c, const std::string& k, const std::string& v) { c.optim.alpha = to_real(k, v); }},
        {"optim.beta1", [](TrainConfig& c, const std::string& k, const std::string& v) { c.optim.beta1 = to_real(k, v); }},
        {"optim.beta2", [](TrainConfig& c, const std::string& k, const std::string& v) { c.optim.beta2 = to_real(k, v); }},
        {"optim.eps", [](TrainConfig& c, const std::string& k, const std::string& v) { c.optim.eps = to_real(k, v); }},
        {"optim.clip", [](TrainConfig& c, const std::string& k, const std::string& v) {
             if (v == "none") {
                 c.clip_norm.reset();
             } else {
                 c.clip_norm = to_real(k, v);
             }
         }},

        {"run.batch", [](TrainConfig& c, const std::string& k, const std::string& v) { c.batch_size = to_count(k, v); }},
        {"run.iterations", [](TrainConfig& c, const std::string& k, const std::string& v) { c.iterations = to_count(k, v); }},
        {"run.seed", [](TrainConfig& c, const std::string& k, const std::string& v) { c.seed = to_u64(k, v); }},
        {"run.eval_every", [](TrainConfig& c, const std::string& k, const std::string& v) { c.eval_every = to_count(k, v); }},
        {"run.snapshot_every", [](TrainConfig& c, const std::string& k, const std::string& v) {
             if (v == "none") {
                 c.snapshot_every.reset();
             } else {
                 c.snapshot_every = to_count(k, v);
             }
         }},
        {"run.wall_clock", [](TrainConfig& c, const std::string& k, const std::string& v) { c.wall_clock = to_bool(k, v); }},
    };
    return table;
}

const std::vector<std::string>& required_keys() {
    static const std::vector<std::string> keys = {"cell.kind",  "cell.h",   "task.kind",     "optim.kind",
                                                  "optim.lr",   "run.batch", "run.iterations"};
    return keys;
}

}  // namespace

ConfigFile ConfigFile::parse(std::istream& in) {
    ConfigFile out;
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string text = trim(line);
        if (text.empty()) continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        }
        std::string key = trim(std::string_view(text).substr(0, eq));
        std::string value = trim(std::string_view(text).substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        if (!seen.insert(key).second) throw ConfigError(key + ": duplicate key");
        out.entries.emplace_back(std::move(key), std::move(value));
    }
    return out;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("cannot open config " + path.string());
    return parse(in);
}

TrainConfig to_train_config(const ConfigFile& file) {
    TrainConfig config;
    bool has_d = false;
    std::set<std::string> present;
    for (const auto& [key, value] : file.entries) {
        const auto it = setters().find(key);
        if (it == setters().end()) throw ConfigError(key + ": unknown key");
        if (value.empty()) throw ConfigError(key + ": empty value");
        it->second(config, key, value);
        present.insert(key);
        if (key == "cell.d") has_d = true;
    }
    for (const auto& key : required_keys()) {
        if (!present.count(key)) throw ConfigError(key + ": missing required key");
    }
    if (!has_d) config.cell.input_dim = config.task.input_dim();
    try {
        config.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return config;
}

std::string echo_config(const TrainConfig& c) {
    std::ostringstream os;
    os << "cell.kind = " << to_string(c.cell.kind) << '\n'
       << "cell.d = " << c.cell.input_dim << '\n'
       << "cell.h = " << c.cell.hidden_dim << '\n'
       << "cell.mu = " << real17(c.cell.mu) << '\n'
       << "cell.s = " << real17(c.cell.s) << '\n'
       << "cell.beta = " << real17(c.cell.beta) << '\n'
       << "cell.eps = " << real17(c.cell.eps) << '\n'
       << "cell.schedule = " << to_string(c.cell.schedule) << '\n'
       << "cell.restart_f = " << c.cell.restart_f << '\n'
       << "cell.activation = " << to_string(c.cell.activation) << '\n'
       << "cell.forget_bias = " << real17(c.cell.forget_bias) << '\n'
       << "task.kind = " << to_string(c.task.kind) << '\n'
       << "task.alphabet = " << c.task.copying.alphabet << '\n'
       << "task.copy_len = " << c.task.copying.copy_len << '\n'
       << "task.spacing = " << c.task.copying.spacing << '\n'
       << "task.seq_len = "
       << (c.task.kind == TaskKind::Synthetic ? c.task.synthetic.seq_len : c.task.adding.seq_len) << '\n'
       << "task.input_dim = " << c.task.synthetic.input_dim << '\n'
       << "task.classes = " << c.task.synthetic.classes << '\n';
    if (!c.task.mnist_images.empty()) os << "task.mnist_images = " << c.task.mnist_images.string() << '\n';
    if (!c.task.mnist_labels.empty()) os << "task.mnist_labels = " << c.task.mnist_labels.string() << '\n';
    if (!c.task.mnist_test_images.empty()) {
        os << "task.mnist_test_images = " << c.task.mnist_test_images.string() << '\n';
    }
    if (!c.task.mnist_test_labels.empty()) {
        os << "task.mnist_test_labels = " << c.task.mnist_test_labels.string() << '\n';
    }
    os << "task.eval_batch = " << c.task.eval_batch << '\n'
       << "optim.kind = " << to_string(c.optim.kind) << '\n'
       << "optim.lr = " << real17(c.optim.lr) << '\n'
       << "optim.momentum = " << real17(c.optim.momentum) << '\n'
       << "optim.alpha = " << real17(c.optim.alpha) << '\n'
       << "optim.beta1 = " << real17(c.optim.beta1) << '\n'
       << "optim.beta2 = " << real17(c.optim.beta2) << '\n'
       << "optim.eps = " << real17(c.optim.eps) << '\n'
       << "optim.clip = " << (c.clip_norm ? real17(*c.clip_norm) : std::string("none")) << '\n'
       << "run.batch = " << c.batch_size << '\n'
       << "run.iterations = " << c.iterations << '\n'
       << "run.seed = " << c.seed << '\n'
       << "run.eval_every = " << c.eval_every << '\n'
       << "run.snapshot_every = "
       << (c.snapshot_every ? std::to_string(*c.snapshot_every) : std::string("none")) << '\n'
       << "run.wall_clock = " << (c.wall_clock ? "true" : "false") << '\n';
    return os.str();
}

}  // namespace momentum
