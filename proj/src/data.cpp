#include "bat/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>

namespace bat {

void Dataset::validate() const {
    if (features.rank() != 2) throw ShapeError("dataset features must be a matrix");
    if (features.rows() != labels.size()) throw ShapeError("dataset feature/label counts differ");
    for (auto y : labels) {
        if (y >= classes) throw std::invalid_argument("dataset label out of range");
    }
    for (double v : features.data()) {
        if (v < box_lo || v > box_hi) throw std::invalid_argument("dataset feature outside the input box");
    }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out = *this;
    out.features = gather_rows(features, indices);
    out.labels.clear();
    out.labels.reserve(indices.size());
    for (auto i : indices) out.labels.push_back(labels.at(i));
    return out;
}

Dataset Dataset::head(std::size_t n) const {
    std::vector<std::size_t> idx(std::min(n, size()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return subset(idx);
}

Dataset gen_two_moons(std::size_t n, double noise, std::uint64_t seed, double box_lo, double box_hi) {
    if (n < 2) throw std::invalid_argument("two moons needs at least 2 points");
    if (noise < 0.0) throw std::invalid_argument("noise must be non-negative");
    const std::size_t n_outer = n / 2;
    const std::size_t n_inner = n - n_outer;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> jitter(0.0, 1.0);

    std::vector<double> xs;
    std::vector<std::size_t> ys;
    xs.reserve(2 * n);
    ys.reserve(n);
    auto arc_param = [](std::size_t i, std::size_t count) {
        return count > 1 ? std::numbers::pi * static_cast<double>(i) / static_cast<double>(count - 1) : 0.0;
    };
    for (std::size_t i = 0; i < n_outer; ++i) {
        const double t = arc_param(i, n_outer);
        xs.push_back(std::cos(t));
        xs.push_back(std::sin(t));
        ys.push_back(0);
    }
    for (std::size_t i = 0; i < n_inner; ++i) {
        const double t = arc_param(i, n_inner);
        xs.push_back(1.0 - std::cos(t));
        xs.push_back(0.5 - std::sin(t));
        ys.push_back(1);
    }
    for (auto& v : xs) {
        if (noise > 0.0) v += noise * jitter(rng);
        v = std::clamp(v, box_lo, box_hi);
    }

    Dataset d;
    d.features = Tensor::from({n, 2}, std::move(xs));
    d.labels = std::move(ys);
    d.classes = 2;
    d.name = "two_moons";
    d.box_lo = box_lo;
    d.box_hi = box_hi;
    return d;
}

Dataset gen_gaussian_blobs(std::size_t n, const std::vector<std::vector<double>>& centers, double sigma,
                           std::uint64_t seed, double box_lo, double box_hi) {
    if (centers.size() < 2) throw std::invalid_argument("blobs need at least 2 centers");
    if (sigma < 0.0) throw std::invalid_argument("sigma must be non-negative");
    const std::size_t dim = centers.front().size();
    for (const auto& c : centers) {
        if (c.size() != dim || dim == 0) throw std::invalid_argument("blob centers must share a positive dimension");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> xs;
    xs.reserve(n * dim);
    std::vector<std::size_t> ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        ys[i] = i % centers.size();
        for (std::size_t j = 0; j < dim; ++j) {
            xs.push_back(std::clamp(centers[ys[i]][j] + sigma * gauss(rng), box_lo, box_hi));
        }
    }
    Dataset d;
    d.features = Tensor::from({n, dim}, std::move(xs));
    d.labels = std::move(ys);
    d.classes = centers.size();
    d.name = "gaussian_blobs";
    d.box_lo = box_lo;
    d.box_hi = box_hi;
    return d;
}

// ---- IDX --------------------------------------------------------------------

std::size_t IdxHeader::payload_size() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t at) {
    return (static_cast<std::uint32_t>(bytes[at]) << 24) | (static_cast<std::uint32_t>(bytes[at + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[at + 2]) << 8) | static_cast<std::uint32_t>(bytes[at + 3]);
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::size_t expected_rank(std::uint32_t magic) {
    switch (magic) {
        case kIdxImagesMagic:
            return 3;
        case kIdxLabelsMagic:
            return 1;
        default:
            throw IdxError(IdxError::Kind::BadMagic, "bad magic " + std::to_string(magic) + " in IDX header");
    }
}

}  // namespace

IdxFile parse_idx(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw IdxError(IdxError::Kind::Truncated, "IDX file shorter than its magic number");
    IdxFile file;
    file.header.magic = read_be32(bytes, 0);
    const std::size_t rank = expected_rank(file.header.magic);
    if ((file.header.magic & 0xFFu) != rank) {
        throw IdxError(IdxError::Kind::BadDimensions, "IDX magic dimension byte disagrees with its type");
    }
    const std::size_t header_size = 4 + 4 * rank;
    if (bytes.size() < header_size) throw IdxError(IdxError::Kind::Truncated, "IDX header truncated");
    for (std::size_t i = 0; i < rank; ++i) file.header.dims.push_back(read_be32(bytes, 4 + 4 * i));
    const std::size_t payload = file.header.payload_size();
    if (bytes.size() - header_size < payload) {
        throw IdxError(IdxError::Kind::Truncated, "IDX payload truncated: header promises " + std::to_string(payload) +
                                                      " bytes, found " + std::to_string(bytes.size() - header_size));
    }
    if (bytes.size() - header_size > payload) {
        throw IdxError(IdxError::Kind::CountMismatch, "IDX file has bytes past the declared payload");
    }
    file.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header_size), bytes.end());
    return file;
}

std::vector<std::uint8_t> encode_idx(const IdxFile& file) {
    if (file.header.dims.size() != expected_rank(file.header.magic)) {
        throw IdxError(IdxError::Kind::BadDimensions, "IDX dimension count does not match magic");
    }
    if (file.payload.size() != file.header.payload_size()) {
        throw IdxError(IdxError::Kind::CountMismatch, "IDX payload size does not match header");
    }
    std::vector<std::uint8_t> out;
    out.reserve(4 + 4 * file.header.dims.size() + file.payload.size());
    write_be32(out, file.header.magic);
    for (auto d : file.header.dims) write_be32(out, d);
    out.insert(out.end(), file.payload.begin(), file.payload.end());
    return out;
}

IdxFile read_idx_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IdxError(IdxError::Kind::Io, "cannot open IDX file " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_idx(bytes);
}

void write_idx_file(const std::filesystem::path& path, const IdxFile& file) {
    const auto bytes = encode_idx(file);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IdxError(IdxError::Kind::Io, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::optional<std::size_t> limit) {
    const IdxFile img = read_idx_file(images);
    const IdxFile lab = read_idx_file(labels);
    if (img.header.magic != kIdxImagesMagic) throw IdxError(IdxError::Kind::BadMagic, images.string() + " is not an IDX image file");
    if (lab.header.magic != kIdxLabelsMagic) throw IdxError(IdxError::Kind::BadMagic, labels.string() + " is not an IDX label file");
    if (img.header.item_count() != lab.header.item_count()) {
        throw IdxError(IdxError::Kind::CountMismatch, "image count " + std::to_string(img.header.item_count()) +
                                                          " differs from label count " +
                                                          std::to_string(lab.header.item_count()));
    }
    const std::size_t rows = img.header.dims[1], cols = img.header.dims[2];
    const std::size_t pixels = rows * cols;
    const std::size_t n = std::min(img.header.item_count(), limit.value_or(img.header.item_count()));

    std::vector<double> xs(n * pixels);
    for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = static_cast<double>(img.payload[i]) / 255.0;
    std::vector<std::size_t> ys(lab.payload.begin(), lab.payload.begin() + static_cast<std::ptrdiff_t>(n));

    Dataset d;
    d.features = Tensor::from({n, pixels}, std::move(xs));
    d.labels = std::move(ys);
    d.classes = 10;
    for (auto y : d.labels) d.classes = std::max(d.classes, y + 1);
    d.name = "idx:" + images.filename().string();
    d.box_lo = 0.0;
    d.box_hi = 1.0;
    d.normalization = "u8/255";
    d.image_rows = rows;
    d.image_cols = cols;
    return d;
}

std::pair<IdxFile, IdxFile> to_idx(const Dataset& data) {
    if (data.image_rows == 0 || data.image_cols == 0) throw std::invalid_argument("dataset has no image geometry");
    const std::size_t n = data.size();
    IdxFile img{{kIdxImagesMagic,
                 {static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(data.image_rows),
                  static_cast<std::uint32_t>(data.image_cols)}},
                {}};
    img.payload.reserve(data.features.numel());
    for (double v : data.features.data()) img.payload.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    IdxFile lab{{kIdxLabelsMagic, {static_cast<std::uint32_t>(n)}}, {}};
    for (auto y : data.labels) lab.payload.push_back(static_cast<std::uint8_t>(y));
    return {std::move(img), std::move(lab)};
}

}  // namespace bat
