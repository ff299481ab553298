#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gaf/array.hpp"

namespace gaf {

enum class DatasetKind { gaussians, moons, spirals, checkerboard };

std::string to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(const std::string& name);

/// Per-dimension affine map taking raw coordinates to zero mean and unit std.
struct NormalizationStats {
    std::vector<double> mean;
    std::vector<double> std;

    friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

struct DatasetSpec {
    DatasetKind kind = DatasetKind::gaussians;
    std::size_t num_classes = 3;
    std::size_t per_class = 2000;
    std::size_t dim = 2;
    std::uint64_t seed = 0;

    /// Stable identifier, e.g. "gaussians/N=3/M=2000/d=2/seed=7".
    std::string identifier() const;

    friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

/// Labeled point cloud stored in normalized coordinates, class-major order.
struct LabeledDataset {
    DatasetSpec spec;
    Array<float> points;                 // (N * M) x d, normalized
    std::vector<std::uint32_t> labels;   // one per row
    NormalizationStats stats;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const noexcept { return spec.dim; }
    std::size_t num_classes() const noexcept { return spec.num_classes; }

    /// Rows belonging to one class.
    Array<float> class_points(std::size_t cls) const;

    friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

/// Raw (unnormalized) samples in class-major order, with labels.
Array<double> sample_raw(const DatasetSpec& spec, std::vector<std::uint32_t>& labels);

NormalizationStats compute_stats(const Array<double>& raw);
Array<float> normalize(const Array<double>& raw, const NormalizationStats& stats);
Array<double> denormalize(const Array<float>& points, const NormalizationStats& stats);

/// Deterministic dataset; normalization statistics are fit on the generated points.
LabeledDataset make_dataset(const DatasetSpec& spec);

/// Fresh samples from the same distribution as `train` (own seed), normalized with train's statistics.
LabeledDataset make_holdout(const LabeledDataset& train, std::size_t per_class, std::uint64_t seed);

inline constexpr std::uint32_t dataset_format_version = 1;

/// Layout: u64 header length, JSON header, float32 point block, uint32 label block (all little-endian).
void save_dataset(const std::filesystem::path& path, const LabeledDataset& dataset);
LabeledDataset load_dataset(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_dataset(const LabeledDataset& dataset);
LabeledDataset decode_dataset(std::span<const std::uint8_t> bytes);

}  // namespace gaf
