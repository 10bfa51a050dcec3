// Long-dependency benchmark generators (copying, adding), a random
// classification task for gradient-flow diagnostics, and the pixel-by-pixel
// MNIST pipeline over standard IDX files.

#pragma once

#include "momentum/numerics.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace momentum {

enum class TaskKind { Copying, Adding, Mnist, Pmnist, Synthetic };

std::string_view to_string(TaskKind kind);
std::optional<TaskKind> parse_task_kind(std::string_view name);

/// Inputs are time-major: inputs[t] is [d x B]. Exactly one target field is
/// populated depending on the task.
struct SequenceBatch {
    TaskKind task = TaskKind::Synthetic;
    std::vector<Tensor2> inputs;
    std::vector<int> labels;                    ///< one class per sequence
    std::vector<std::vector<int>> step_labels;  ///< copying: [T][B]
    std::vector<double> values;                 ///< adding: one real per sequence

    std::size_t steps() const { return inputs.size(); }
    std::size_t batch() const { return inputs.empty() ? 0 : inputs.front().cols(); }
    std::size_t input_dim() const { return inputs.empty() ? 0 : inputs.front().rows(); }
};

/// Symbols 0..N-1 are the alphabet, N is <start>, N+1 is <blank>.
struct CopyingSpec {
    std::size_t alphabet = 4;
    std::size_t copy_len = 5;
    std::size_t spacing = 20;
    std::size_t batch = 1;

    void validate() const;
    std::size_t seq_len() const { return 2 * copy_len + spacing; }
    std::size_t vocab() const { return alphabet + 2; }
    int start_symbol() const { return static_cast<int>(alphabet); }
    int blank_symbol() const { return static_cast<int>(alphabet) + 1; }
};

struct AddingSpec {
    std::size_t seq_len = 100;
    std::size_t batch = 1;

    void validate() const;
};

/// Uniform [0, 1) inputs of dimension d with labels uniform over `classes`.
struct SyntheticSpec {
    std::size_t seq_len = 200;
    std::size_t input_dim = 1;
    std::size_t classes = 10;
    std::size_t batch = 1;

    void validate() const;
};

SequenceBatch gen_copying(const CopyingSpec& spec, Rng& rng);
SequenceBatch gen_adding(const AddingSpec& spec, Rng& rng);
SequenceBatch gen_synthetic(const SyntheticSpec& spec, Rng& rng);

struct MemorylessBaselines {
    double copying_nats = 0.0;
    double adding_mse = 0.0;
};

/// Copying: K ln N / (2K + L) nats per step. Adding: Var of the sum, 1/6.
MemorylessBaselines memoryless_baselines(const CopyingSpec& copying);

// ---------------------------------------------------------------------------
// MNIST

struct MnistError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
inline constexpr std::size_t kMnistSide = 28;
inline constexpr std::size_t kMnistPixels = kMnistSide * kMnistSide;

struct MnistDataset {
    std::size_t rows = kMnistSide;
    std::size_t cols = kMnistSide;
    std::vector<std::vector<double>> images;  ///< row-major pixels in [0, 1]
    std::vector<std::uint8_t> labels;

    std::size_t size() const { return labels.size(); }
};

MnistDataset load_mnist_idx(const std::filesystem::path& images_path,
                            const std::filesystem::path& labels_path);
/// Parse IDX from in-memory streams; used by the file loader.
MnistDataset parse_mnist_idx(std::istream& images, std::istream& labels);

using Permutation = std::vector<std::size_t>;

/// Uniform random bijection on 0..n-1 (Fisher-Yates).
Permutation random_permutation(std::size_t n, Rng& rng);
bool is_permutation_of_range(const Permutation& perm, std::size_t n);
Permutation inverse_permutation(const Permutation& perm);

/// Length-784 scalar sequence; element t is image[perm[t]] when permuted.
std::vector<Tensor1> pixel_sequence(const std::vector<double>& image,
                                    const Permutation* permutation = nullptr);

/// Batch of the given examples, pixel-by-pixel, optionally permuted.
SequenceBatch mnist_batch(const MnistDataset& data, const std::vector<std::size_t>& indices,
                          const Permutation* permutation);

// ---------------------------------------------------------------------------
// Inspection

/// `seq_id,t,channel,value[,target]`, one row per (sequence, step, channel).
void write_batch_csv(std::ostream& out, const SequenceBatch& batch);

/// Two-line rendering of one copying sequence: alphabet as 1..N, ':' for
/// <start>, '-' for <blank>.
std::string render_copying(const SequenceBatch& batch, const CopyingSpec& spec, std::size_t seq);

}  // namespace momentum
