#include "momentum/tasks.hpp"

#include <array>
#include <fstream>
#include <istream>

namespace momentum {

namespace {

std::uint32_t read_be32(std::istream& in, const char* what) {
    std::array<unsigned char, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), 4);
    if (!in) throw MnistError(std::string(what) + ": truncated header");
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
           std::uint32_t{b[3]};
}

}  // namespace

MnistDataset parse_mnist_idx(std::istream& images, std::istream& labels) {
    if (read_be32(images, "images") != kIdxImagesMagic) throw MnistError("images: bad magic number");
    const std::uint32_t n_images = read_be32(images, "images");
    const std::uint32_t rows = read_be32(images, "images");
    const std::uint32_t cols = read_be32(images, "images");
    if (read_be32(labels, "labels") != kIdxLabelsMagic) throw MnistError("labels: bad magic number");
    const std::uint32_t n_labels = read_be32(labels, "labels");
    if (n_images != n_labels) {
        throw MnistError("image count " + std::to_string(n_images) + " does not match label count " +
                         std::to_string(n_labels));
    }
    if (rows != kMnistSide || cols != kMnistSide) throw MnistError("images: expected 28x28");

    MnistDataset out;
    out.images.reserve(n_images);
    std::vector<unsigned char> buf(kMnistPixels);
    for (std::uint32_t i = 0; i < n_images; ++i) {
        images.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!images) throw MnistError("images: truncated at image " + std::to_string(i));
        std::vector<double> px(kMnistPixels);
        for (std::size_t p = 0; p < kMnistPixels; ++p) px[p] = buf[p] / 255.0;
        out.images.push_back(std::move(px));
    }
    out.labels.resize(n_labels);
    labels.read(reinterpret_cast<char*>(out.labels.data()), static_cast<std::streamsize>(n_labels));
    if (!labels) throw MnistError("labels: truncated");
    for (auto l : out.labels) {
        if (l > 9) throw MnistError("labels: value out of range 0-9");
    }
    return out;
}

MnistDataset load_mnist_idx(const std::filesystem::path& images_path,
                            const std::filesystem::path& labels_path) {
    std::ifstream images(images_path, std::ios::binary);
    if (!images) throw MnistError("cannot open " + images_path.string());
    std::ifstream labels(labels_path, std::ios::binary);
    if (!labels) throw MnistError("cannot open " + labels_path.string());
    return parse_mnist_idx(images, labels);
}

}  // namespace momentum
