#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bat/tensor.hpp"

namespace bat {

struct Dataset {
    Tensor features;                  // [N, d]
    std::vector<std::size_t> labels;  // N
    std::size_t classes = 2;
    std::string name;
    double box_lo = -3.0;
    double box_hi = 3.0;
    std::string normalization = "none";
    // Set for image datasets.
    std::size_t image_rows = 0;
    std::size_t image_cols = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.cols(); }
    void validate() const;

    Dataset subset(std::span<const std::size_t> indices) const;
    Dataset head(std::size_t n) const;
};

// Two interleaved half circles; class 0 is (cos t, sin t), class 1 is
// (1 - cos t, 0.5 - sin t), t evenly spaced on [0, pi], plus N(0, noise^2)
// jitter. Features are clamped into [box_lo, box_hi].
Dataset gen_two_moons(std::size_t n, double noise, std::uint64_t seed, double box_lo = -3.0, double box_hi = 3.0);

// Balanced isotropic Gaussian clusters, one class per center, assigned
// round-robin.
Dataset gen_gaussian_blobs(std::size_t n, const std::vector<std::vector<double>>& centers, double sigma,
                           std::uint64_t seed, double box_lo = -3.0, double box_hi = 3.0);

// ---- IDX --------------------------------------------------------------------

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;  // 2051
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;  // 2049

struct IdxHeader {
    std::uint32_t magic = 0;
    std::vector<std::uint32_t> dims;

    std::size_t item_count() const { return dims.empty() ? 0 : dims[0]; }
    std::size_t payload_size() const;
};

class IdxError : public std::runtime_error {
   public:
    enum class Kind { Io, BadMagic, BadDimensions, Truncated, CountMismatch };

    IdxError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

   private:
    Kind kind_;
};

struct IdxFile {
    IdxHeader header;
    std::vector<std::uint8_t> payload;
};

IdxFile parse_idx(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_idx(const IdxFile& file);

IdxFile read_idx_file(const std::filesystem::path& path);
void write_idx_file(const std::filesystem::path& path, const IdxFile& file);

// Pixels scaled by 1/255 into [0, 1]; at most `limit` examples are kept.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::optional<std::size_t> limit = std::nullopt);

// Inverse of load_idx for datasets whose pixels are multiples of 1/255.
std::pair<IdxFile, IdxFile> to_idx(const Dataset& data);

}  // namespace bat
