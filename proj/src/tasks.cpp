#include "momentum/tasks.hpp"

#include "format.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace momentum {

std::string_view to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::Copying: return "copying";
        case TaskKind::Adding: return "adding";
        case TaskKind::Mnist: return "mnist";
        case TaskKind::Pmnist: return "pmnist";
        case TaskKind::Synthetic: return "synthetic";
    }
    return "unknown";
}

std::optional<TaskKind> parse_task_kind(std::string_view name) {
    for (auto k : {TaskKind::Copying, TaskKind::Adding, TaskKind::Mnist, TaskKind::Pmnist,
                   TaskKind::Synthetic}) {
        if (to_string(k) == name) return k;
    }
    return std::nullopt;
}

void CopyingSpec::validate() const {
    if (alphabet < 2) throw std::invalid_argument("copying: alphabet size must be >= 2");
    if (copy_len < 1) throw std::invalid_argument("copying: copy length must be >= 1");
    if (batch < 1) throw std::invalid_argument("copying: batch must be >= 1");
}

void AddingSpec::validate() const {
    if (seq_len < 4) throw std::invalid_argument("adding: sequence length must be >= 4");
    if (batch < 1) throw std::invalid_argument("adding: batch must be >= 1");
}

void SyntheticSpec::validate() const {
    if (seq_len < 1) throw std::invalid_argument("synthetic: sequence length must be >= 1");
    if (input_dim < 1) throw std::invalid_argument("synthetic: input dimension must be >= 1");
    if (classes < 2) throw std::invalid_argument("synthetic: need at least 2 classes");
    if (batch < 1) throw std::invalid_argument("synthetic: batch must be >= 1");
}

SequenceBatch gen_copying(const CopyingSpec& spec, Rng& rng) {
    spec.validate();
    const std::size_t k_len = spec.copy_len;
    const std::size_t steps = spec.seq_len();
    const std::size_t batch = spec.batch;

    SequenceBatch out;
    out.task = TaskKind::Copying;
    out.inputs.assign(steps, Tensor2(spec.vocab(), batch));
    out.step_labels.assign(steps, std::vector<int>(batch, spec.blank_symbol()));

    for (std::size_t b = 0; b < batch; ++b) {
        std::vector<int> chars(k_len);
        for (auto& ch : chars) ch = static_cast<int>(rng.uniform_int(spec.alphabet));
        for (std::size_t t = 0; t < steps; ++t) {
            int symbol = spec.blank_symbol();
            if (t < k_len) {
                symbol = chars[t];
            } else if (t == k_len + spec.spacing) {
                symbol = spec.start_symbol();
            }
            out.inputs[t](static_cast<std::size_t>(symbol), b) = 1.0;
            if (t >= k_len + spec.spacing) out.step_labels[t][b] = chars[t - k_len - spec.spacing];
        }
    }
    return out;
}

SequenceBatch gen_adding(const AddingSpec& spec, Rng& rng) {
    spec.validate();
    const std::size_t steps = spec.seq_len;
    const std::size_t half = steps / 2;

    SequenceBatch out;
    out.task = TaskKind::Adding;
    out.inputs.assign(steps, Tensor2(2, spec.batch));
    out.values.assign(spec.batch, 0.0);
    for (std::size_t b = 0; b < spec.batch; ++b) {
        for (std::size_t t = 0; t < steps; ++t) out.inputs[t](0, b) = rng.uniform();
        const std::size_t first = rng.uniform_int(half);
        const std::size_t second = half + rng.uniform_int(steps - half);
        out.inputs[first](1, b) = 1.0;
        out.inputs[second](1, b) = 1.0;
        out.values[b] = out.inputs[first](0, b) + out.inputs[second](0, b);
    }
    return out;
}

SequenceBatch gen_synthetic(const SyntheticSpec& spec, Rng& rng) {
    spec.validate();
    SequenceBatch out;
    out.task = TaskKind::Synthetic;
    out.inputs.assign(spec.seq_len, Tensor2(spec.input_dim, spec.batch));
    out.labels.resize(spec.batch);
    for (std::size_t b = 0; b < spec.batch; ++b) {
        out.labels[b] = static_cast<int>(rng.uniform_int(spec.classes));
        for (auto& x : out.inputs)
            for (std::size_t i = 0; i < spec.input_dim; ++i) x(i, b) = rng.uniform();
    }
    return out;
}

MemorylessBaselines memoryless_baselines(const CopyingSpec& copying) {
    MemorylessBaselines out;
    const double n = static_cast<double>(copying.alphabet);
    const double k = static_cast<double>(copying.copy_len);
    out.copying_nats = n <= 1.0 ? 0.0 : k * std::log(n) / static_cast<double>(copying.seq_len());
    out.adding_mse = 1.0 / 6.0;
    return out;
}

Permutation random_permutation(std::size_t n, Rng& rng) {
    Permutation perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = rng.uniform_int(i);
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

bool is_permutation_of_range(const Permutation& perm, std::size_t n) {
    if (perm.size() != n) return false;
    std::vector<bool> seen(n, false);
    for (std::size_t p : perm) {
        if (p >= n || seen[p]) return false;
        seen[p] = true;
    }
    return true;
}

Permutation inverse_permutation(const Permutation& perm) {
    if (!is_permutation_of_range(perm, perm.size())) {
        throw std::invalid_argument("inverse_permutation: not a permutation");
    }
    Permutation inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
    return inv;
}

std::vector<Tensor1> pixel_sequence(const std::vector<double>& image, const Permutation* permutation) {
    if (image.size() != kMnistPixels) {
        throw ShapeError("pixel_sequence: image must have 28x28 pixels");
    }
    if (permutation && !is_permutation_of_range(*permutation, kMnistPixels)) {
        throw std::invalid_argument("pixel_sequence: invalid permutation");
    }
    std::vector<Tensor1> seq;
    seq.reserve(kMnistPixels);
    for (std::size_t t = 0; t < kMnistPixels; ++t) {
        seq.push_back(Tensor1{image[permutation ? (*permutation)[t] : t]});
    }
    return seq;
}

SequenceBatch mnist_batch(const MnistDataset& data, const std::vector<std::size_t>& indices,
                          const Permutation* permutation) {
    if (permutation && !is_permutation_of_range(*permutation, kMnistPixels)) {
        throw std::invalid_argument("mnist_batch: invalid permutation");
    }
    SequenceBatch out;
    out.task = permutation ? TaskKind::Pmnist : TaskKind::Mnist;
    out.inputs.assign(kMnistPixels, Tensor2(1, indices.size()));
    out.labels.resize(indices.size());
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const auto& image = data.images.at(indices[b]);
        for (std::size_t t = 0; t < kMnistPixels; ++t) {
            out.inputs[t](0, b) = image[permutation ? (*permutation)[t] : t];
        }
        out.labels[b] = data.labels.at(indices[b]);
    }
    return out;
}

void write_batch_csv(std::ostream& out, const SequenceBatch& batch) {
    const bool has_target = !batch.labels.empty() || !batch.values.empty() ||
                            !batch.step_labels.empty();
    out << "seq_id,t,channel,value" << (has_target ? ",target" : "") << '\n';
    for (std::size_t b = 0; b < batch.batch(); ++b) {
        for (std::size_t t = 0; t < batch.steps(); ++t) {
            std::string target;
            if (!batch.step_labels.empty()) {
                target = std::to_string(batch.step_labels[t][b]);
            } else if (!batch.labels.empty()) {
                target = std::to_string(batch.labels[b]);
            } else if (!batch.values.empty()) {
                target = detail::real9(batch.values[b]);
            }
            for (std::size_t c = 0; c < batch.input_dim(); ++c) {
                out << b << ',' << t << ',' << c << ',' << detail::real9(batch.inputs[t](c, b));
                if (has_target) out << ',' << target;
                out << '\n';
            }
        }
    }
}

std::string render_copying(const SequenceBatch& batch, const CopyingSpec& spec, std::size_t seq) {
    if (batch.task != TaskKind::Copying || seq >= batch.batch()) {
        throw std::invalid_argument("render_copying: not a copying batch or sequence out of range");
    }
    auto glyph = [&](int symbol) -> char {
        if (symbol == spec.start_symbol()) return ':';
        if (symbol == spec.blank_symbol()) return '-';
        // alphabet shown 1-based; beyond 9 the glyphs continue through ASCII
        return static_cast<char>('1' + symbol);
    };
    std::string input = "Input:  ";
    std::string output = "Output: ";
    for (std::size_t t = 0; t < batch.steps(); ++t) {
        int symbol = 0;
        for (std::size_t c = 0; c < batch.input_dim(); ++c) {
            if (batch.inputs[t](c, seq) == 1.0) symbol = static_cast<int>(c);
        }
        input += glyph(symbol);
        output += glyph(batch.step_labels[t][seq]);
    }
    return input + "\n" + output + "\n";
}

}  // namespace momentum
