#include "momentum/numerics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace momentum {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap view(const Tensor2& t) {
    return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                    static_cast<Eigen::Index>(t.cols()));
}

MutMap view(Tensor2& t) {
    return MutMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

std::string dims(const Tensor2& t) {
    std::ostringstream os;
    os << t.rows() << "x" << t.cols();
    return os.str();
}

void require_finite(std::span<const double> values, const char* op) {
    if (!all_finite(values)) {
        throw NumericError(std::string(op) + ": non-finite result");
    }
}

}  // namespace

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("Tensor2: data length does not match rows*cols");
    }
}

Tensor2 Tensor2::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> values;
    values.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw ShapeError("Tensor2::from_rows: ragged rows");
        }
        values.insert(values.end(), row.begin(), row.end());
    }
    return Tensor2(r, c, std::move(values));
}

Tensor2 Tensor2::column(const Tensor1& x) {
    return Tensor2(x.len(), 1, x.values());
}

Tensor1 Tensor2::col(std::size_t c) const {
    if (c >= cols_) throw ShapeError("Tensor2::col: index out of range");
    Tensor1 out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
}

void Tensor2::set_col(std::size_t c, const Tensor1& x) {
    if (c >= cols_ || x.len() != rows_) throw ShapeError("Tensor2::set_col: shape mismatch");
    for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = x[r];
}

Tensor2 Tensor2::row_block(std::size_t begin, std::size_t count) const {
    if (begin + count > rows_) throw ShapeError("Tensor2::row_block: out of range");
    auto first = data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_);
    return Tensor2(count, cols_,
                   std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * cols_)));
}

void Tensor2::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + dims(a) + " times " + dims(b));
    }
    Tensor2 out(a.rows(), b.cols());
    if (a.cols() > 0) view(out).noalias() = view(a) * view(b);
    require_finite(out.data(), "matmul");
    return out;
}

Tensor1 matvec(const Tensor2& a, const Tensor1& x) {
    if (a.cols() != x.len()) {
        throw ShapeError("matvec: " + dims(a) + " times vector of length " +
                         std::to_string(x.len()));
    }
    Tensor1 y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto row = a.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
    require_finite(y.data(), "matvec");
    return y;
}

Tensor1 hadamard(const Tensor1& a, const Tensor1& b) {
    if (a.len() != b.len()) throw ShapeError("hadamard: length mismatch");
    Tensor1 out(a.len());
    for (std::size_t i = 0; i < a.len(); ++i) out[i] = a[i] * b[i];
    require_finite(out.data(), "hadamard");
    return out;
}

Tensor2 transpose(const Tensor2& a) {
    Tensor2 out(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
    return out;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tensor1 elementwise(Elementwise f, const Tensor1& x) {
    Tensor1 out(x.len());
    for (std::size_t i = 0; i < x.len(); ++i) {
        switch (f) {
            case Elementwise::Sigmoid: out[i] = sigmoid(x[i]); break;
            case Elementwise::Tanh: out[i] = std::tanh(x[i]); break;
            case Elementwise::Sqrt:
                if (x[i] < 0.0) {
                    throw DomainError("elementwise sqrt: negative element at index " +
                                      std::to_string(i));
                }
                out[i] = std::sqrt(x[i]);
                break;
        }
    }
    require_finite(out.data(), "elementwise");
    return out;
}

double l2_norm(const Tensor1& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v * v;
    return std::sqrt(acc);
}

double frobenius_norm(const Tensor2& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v * v;
    return std::sqrt(acc);
}

bool all_finite(std::span<const double> values) {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void gemm(const Tensor2& a, Trans ta, const Tensor2& b, Trans tb, double beta, Tensor2& c) {
    const std::size_t m = ta == Trans::No ? a.rows() : a.cols();
    const std::size_t k = ta == Trans::No ? a.cols() : a.rows();
    const std::size_t kb = tb == Trans::No ? b.rows() : b.cols();
    const std::size_t n = tb == Trans::No ? b.cols() : b.rows();
    if (k != kb || c.rows() != m || c.cols() != n) {
        throw ShapeError("gemm: op(" + dims(a) + ") * op(" + dims(b) + ") into " + dims(c));
    }
    auto out = view(c);
    if (beta == 0.0) {
        out.setZero();
    } else if (beta != 1.0) {
        out *= beta;
    }
    if (k == 0) return;
    const auto av = view(a);
    const auto bv = view(b);
    if (ta == Trans::No && tb == Trans::No) {
        out.noalias() += av * bv;
    } else if (ta == Trans::No) {
        out.noalias() += av * bv.transpose();
    } else if (tb == Trans::No) {
        out.noalias() += av.transpose() * bv;
    } else {
        out.noalias() += av.transpose() * bv.transpose();
    }
}

Tensor2 identity_init(std::size_t n) {
    Tensor2 out(n, n);
    for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
    return out;
}

Tensor2 gaussian(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
    Tensor2 out(rows, cols);
    for (double& v : out.data()) v = stddev * rng.normal();
    return out;
}

Tensor2 orthogonal_init(std::size_t rows, std::size_t cols, Rng& rng) {
    if (rows == 0 || cols == 0) throw ShapeError("orthogonal_init: empty shape");
    const bool tall = rows >= cols;
    const std::size_t big = tall ? rows : cols;
    const std::size_t small = tall ? cols : rows;

    RowMat a(static_cast<Eigen::Index>(big), static_cast<Eigen::Index>(small));
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = rng.normal();

    Eigen::HouseholderQR<RowMat> qr(a);
    RowMat q = qr.householderQ() * RowMat::Identity(a.rows(), a.cols());
    const RowMat r = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
        if (r(j, j) < 0.0) q.col(j) *= -1.0;
    }

    Tensor2 out(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            out(i, j) = tall ? q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))
                             : q(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
        }
    }
    return out;
}

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
    std::array<char, sizeof(T)> bytes{};
    auto bits = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
    std::copy(bits.begin(), bits.end(), bytes.begin());
    out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in) {
    std::array<unsigned char, sizeof(T)> bits{};
    in.read(reinterpret_cast<char*>(bits.data()), bits.size());
    if (!in) throw std::runtime_error("read_tensor: truncated record");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
    return std::bit_cast<T>(bits);
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor2& t) {
    out.write("MOMO", 4);
    put_le<std::uint32_t>(out, kTensorFormatVersion);
    put_le<std::uint64_t>(out, t.rows());
    put_le<std::uint64_t>(out, t.cols());
    for (double v : t.data()) put_le<double>(out, v);
}

Tensor2 read_tensor(std::istream& in) {
    std::array<char, 4> magic{};
    in.read(magic.data(), 4);
    if (!in || std::string(magic.data(), 4) != "MOMO") {
        throw std::runtime_error("read_tensor: bad magic");
    }
    const auto version = get_le<std::uint32_t>(in);
    if (version != kTensorFormatVersion) {
        throw std::runtime_error("read_tensor: unsupported version " + std::to_string(version));
    }
    const auto rows = get_le<std::uint64_t>(in);
    const auto cols = get_le<std::uint64_t>(in);
    std::vector<double> values(rows * cols);
    for (double& v : values) v = get_le<double>(in);
    return Tensor2(rows, cols, std::move(values));
}

}  // namespace momentum
