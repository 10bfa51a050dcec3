// Dense real64 vectors and row-major matrices, the elementwise math used by
// the recurrent cells, weight initializers, a counter-based RNG and the
// binary tensor record used for parameter snapshots.
//
// Every shape mismatch is a hard error (ShapeError). Nothing broadcasts.

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace momentum {

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

/// Raised when a computation produces NaN or Inf.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Tensor1 {
public:
    Tensor1() = default;
    explicit Tensor1(std::size_t len, double fill = 0.0) : data_(len, fill) {}
    explicit Tensor1(std::vector<double> values) : data_(std::move(values)) {}
    Tensor1(std::initializer_list<double> values) : data_(values) {}

    std::size_t len() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    const std::vector<double>& values() const { return data_; }

    bool operator==(const Tensor1&) const = default;

private:
    std::vector<double> data_;
};

/// Row-major dense matrix.
class Tensor2 {
public:
    Tensor2() = default;
    Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Tensor2(std::size_t rows, std::size_t cols, std::vector<double> values);

    static Tensor2 from_rows(std::initializer_list<std::initializer_list<double>> rows);
    /// n x 1 column holding x.
    static Tensor2 column(const Tensor1& x);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    Tensor1 col(std::size_t c) const;
    void set_col(std::size_t c, const Tensor1& x);

    /// Rows [begin, begin + count) as a new matrix.
    Tensor2 row_block(std::size_t begin, std::size_t count) const;

    void fill(double value);

    bool operator==(const Tensor2&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Pure operations. Inputs are never modified and results are fresh.

Tensor2 matmul(const Tensor2& a, const Tensor2& b);
Tensor1 matvec(const Tensor2& a, const Tensor1& x);
Tensor1 hadamard(const Tensor1& a, const Tensor1& b);
Tensor2 transpose(const Tensor2& a);

enum class Elementwise { Sigmoid, Tanh, Sqrt };

Tensor1 elementwise(Elementwise f, const Tensor1& x);

double sigmoid(double x);

double l2_norm(const Tensor1& x);
double frobenius_norm(const Tensor2& a);

bool all_finite(std::span<const double> values);

// ---------------------------------------------------------------------------
// In-place kernels for the unrolled recurrences. Shapes are checked.

enum class Trans { No, Yes };

/// c = op(a) * op(b) + beta * c
void gemm(const Tensor2& a, Trans ta, const Tensor2& b, Trans tb, double beta, Tensor2& c);

// ---------------------------------------------------------------------------
// Counter-based generator: output k of stream s under seed is a pure hash of
// (seed, s, k). Consumers each take their own stream id, so the draws of one
// module never shift when another module changes how many numbers it uses.

class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t next_u64();
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    /// Standard normal (Box-Muller, one value per two uniforms).
    double normal();
    /// Uniform on {0, ..., n - 1}; n >= 1.
    std::uint64_t uniform_int(std::uint64_t n);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }
    std::uint64_t counter() const { return counter_; }

    /// Fresh generator on another stream of the same seed.
    Rng fork(std::uint64_t stream) const { return Rng(seed_, stream); }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// Stream ids handed out to the library's RNG consumers.
namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kTrainData = 2;
inline constexpr std::uint64_t kEvalData = 3;
inline constexpr std::uint64_t kPermutation = 4;
inline constexpr std::uint64_t kGradCheck = 5;
inline constexpr std::uint64_t kReadoutInit = 6;
}  // namespace streams

// ---------------------------------------------------------------------------
// Initializers

Tensor2 identity_init(std::size_t n);

/// Orthogonal matrix from the QR factorization of a Gaussian matrix with the
/// signs of R's diagonal folded into Q. Columns are orthonormal when
/// rows >= cols, rows are orthonormal otherwise.
Tensor2 orthogonal_init(std::size_t rows, std::size_t cols, Rng& rng);

Tensor2 gaussian(std::size_t rows, std::size_t cols, double stddev, Rng& rng);

// ---------------------------------------------------------------------------
// Snapshot record: "MOMO", u32 version, u64 rows, u64 cols, rows*cols f64,
// all little-endian.

inline constexpr std::uint32_t kTensorFormatVersion = 1;

void write_tensor(std::ostream& out, const Tensor2& t);
Tensor2 read_tensor(std::istream& in);

}  // namespace momentum
