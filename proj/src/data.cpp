#include "gaf/data.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gaf/io.hpp"
#include "gaf/rng.hpp"

namespace gaf {

namespace {

constexpr double gaussian_radius = 3.0;
constexpr double gaussian_sigma = 0.5;
constexpr double moons_noise = 0.1;
constexpr double spiral_noise = 0.05;
constexpr int board_cells = 4;

void check_spec(const DatasetSpec& spec) {
    if (spec.per_class == 0) {
        throw ValueError("samples per class must be positive");
    }
    if (spec.dim == 0) {
        throw ValueError("dataset dimension must be positive");
    }
    switch (spec.kind) {
        case DatasetKind::moons:
            if (spec.num_classes != 2) throw ValueError("moons requires exactly 2 classes");
            break;
        case DatasetKind::checkerboard:
            if (spec.num_classes < 2 || spec.num_classes > board_cells * board_cells) {
                throw ValueError("checkerboard requires between 2 and 16 classes");
            }
            break;
        default:
            if (spec.num_classes < 2) throw ValueError(to_string(spec.kind) + " requires at least 2 classes");
    }
    if (spec.kind != DatasetKind::gaussians && spec.dim != 2) {
        throw ValueError(to_string(spec.kind) + " is only defined in 2 dimensions");
    }
    if (spec.kind == DatasetKind::gaussians && spec.dim < 2 && spec.num_classes > 2) {
        throw ValueError("gaussians with more than 2 classes need at least 2 dimensions");
    }
}

}  // namespace

std::string to_string(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::gaussians: return "gaussians";
        case DatasetKind::moons: return "moons";
        case DatasetKind::spirals: return "spirals";
        case DatasetKind::checkerboard: return "checkerboard";
    }
    return "unknown";
}

DatasetKind parse_dataset_kind(const std::string& name) {
    for (auto k : {DatasetKind::gaussians, DatasetKind::moons, DatasetKind::spirals, DatasetKind::checkerboard}) {
        if (to_string(k) == name) return k;
    }
    throw ValueError("unknown dataset kind '" + name + "'");
}

std::string DatasetSpec::identifier() const {
    std::ostringstream os;
    os << to_string(kind) << "/N=" << num_classes << "/M=" << per_class << "/d=" << dim << "/seed=" << seed;
    return os.str();
}

Array<float> LabeledDataset::class_points(std::size_t cls) const {
    if (cls >= spec.num_classes) {
        throw ValueError("class index out of range");
    }
    std::vector<float> out;
    for (std::size_t r = 0; r < labels.size(); ++r) {
        if (labels[r] == cls) {
            const auto row = points.row(r);
            out.insert(out.end(), row.begin(), row.end());
        }
    }
    const std::size_t rows = out.size() / spec.dim;
    return Array<float>(Shape{rows, spec.dim}, std::move(out));
}

Array<double> sample_raw(const DatasetSpec& spec, std::vector<std::uint32_t>& labels) {
    check_spec(spec);
    const CounterRng rng(spec.seed);
    const std::size_t n = spec.num_classes * spec.per_class;
    const std::size_t d = spec.dim;
    Array<double> raw(Shape{n, d});
    labels.assign(n, 0);
    const double two_pi = 2.0 * std::numbers::pi;

    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        for (std::size_t s = 0; s < spec.per_class; ++s) {
            const std::size_t r = c * spec.per_class + s;
            labels[r] = static_cast<std::uint32_t>(c);
            auto normal = [&](std::uint32_t k) { return rng.normal(Stream::dataset, r, k); };
            auto uniform = [&](std::uint32_t k) { return rng.uniform(Stream::dataset, r, k); };
            auto row = raw.row(r);
            switch (spec.kind) {
                case DatasetKind::gaussians: {
                    const double angle = two_pi * static_cast<double>(c) / static_cast<double>(spec.num_classes);
                    for (std::size_t k = 0; k < d; ++k) {
                        double center = 0.0;
                        if (d == 1) {
                            center = c == 0 ? -gaussian_radius : gaussian_radius;
                        } else if (k == 0) {
                            center = gaussian_radius * std::cos(angle);
                        } else if (k == 1) {
                            center = gaussian_radius * std::sin(angle);
                        }
                        row[k] = center + gaussian_sigma * normal(static_cast<std::uint32_t>(k));
                    }
                    break;
                }
                case DatasetKind::moons: {
                    const double theta = std::numbers::pi * uniform(0);
                    if (c == 0) {
                        row[0] = std::cos(theta);
                        row[1] = std::sin(theta);
                    } else {
                        row[0] = 1.0 - std::cos(theta);
                        row[1] = 0.5 - std::sin(theta);
                    }
                    row[0] += moons_noise * normal(1);
                    row[1] += moons_noise * normal(2);
                    break;
                }
                case DatasetKind::spirals: {
                    const double radius = 0.1 + 0.9 * std::sqrt(uniform(0));
                    const double theta =
                        two_pi * static_cast<double>(c) / static_cast<double>(spec.num_classes) + 1.5 * two_pi * radius / 2.0;
                    row[0] = 2.0 * radius * std::cos(theta) + spiral_noise * normal(1);
                    row[1] = 2.0 * radius * std::sin(theta) + spiral_noise * normal(2);
                    break;
                }
                case DatasetKind::checkerboard: {
                    std::vector<std::pair<int, int>> cells;
                    for (int i = 0; i < board_cells; ++i) {
                        for (int j = 0; j < board_cells; ++j) {
                            if (static_cast<std::size_t>(i + j) % spec.num_classes == c) cells.emplace_back(i, j);
                        }
                    }
                    const auto pick = cells[rng.below(cells.size(), Stream::dataset, r, 3)];
                    row[0] = -2.0 + pick.first + uniform(0);
                    row[1] = -2.0 + pick.second + uniform(1);
                    break;
                }
            }
        }
    }
    return raw;
}

NormalizationStats compute_stats(const Array<double>& raw) {
    const std::size_t n = raw.rows();
    const std::size_t d = raw.cols();
    NormalizationStats s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t k = 0; k < d; ++k) s.mean[k] += raw.at(r, k);
    }
    for (auto& m : s.mean) m /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t k = 0; k < d; ++k) {
            const double e = raw.at(r, k) - s.mean[k];
            s.std[k] += e * e;
        }
    }
    for (auto& v : s.std) {
        v = std::sqrt(v / static_cast<double>(n));
        if (!(v > 0.0)) v = 1.0;
    }
    return s;
}

Array<float> normalize(const Array<double>& raw, const NormalizationStats& stats) {
    const std::size_t d = raw.cols();
    if (stats.mean.size() != d || stats.std.size() != d) {
        throw ShapeError("normalization statistics do not match point dimension");
    }
    Array<float> out(raw.shape());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const std::size_t k = i % d;
        out[i] = static_cast<float>((raw[i] - stats.mean[k]) / stats.std[k]);
    }
    return out;
}

Array<double> denormalize(const Array<float>& points, const NormalizationStats& stats) {
    const std::size_t d = points.cols();
    if (stats.mean.size() != d || stats.std.size() != d) {
        throw ShapeError("normalization statistics do not match point dimension");
    }
    Array<double> out(points.shape());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const std::size_t k = i % d;
        out[i] = static_cast<double>(points[i]) * stats.std[k] + stats.mean[k];
    }
    return out;
}

LabeledDataset make_dataset(const DatasetSpec& spec) {
    LabeledDataset ds;
    ds.spec = spec;
    const auto raw = sample_raw(spec, ds.labels);
    ds.stats = compute_stats(raw);
    ds.points = normalize(raw, ds.stats);
    return ds;
}

LabeledDataset make_holdout(const LabeledDataset& train, std::size_t per_class, std::uint64_t seed) {
    LabeledDataset ds;
    ds.spec = train.spec;
    ds.spec.per_class = per_class;
    ds.spec.seed = seed;
    const auto raw = sample_raw(ds.spec, ds.labels);
    ds.stats = train.stats;
    ds.points = normalize(raw, ds.stats);
    return ds;
}

// ---------------------------------------------------------------------------
// Persistence

std::vector<std::uint8_t> encode_dataset(const LabeledDataset& dataset) {
    const nlohmann::json header = {
        {"format", "gaf-dataset"},
        {"version", dataset_format_version},
        {"kind", to_string(dataset.spec.kind)},
        {"classes", dataset.spec.num_classes},
        {"per_class", dataset.spec.per_class},
        {"dim", dataset.spec.dim},
        {"seed", dataset.spec.seed},
        {"rows", dataset.size()},
        {"normalization", {{"mean", dataset.stats.mean}, {"std", dataset.stats.std}}},
    };
    const std::string text = header.dump();
    io::Bytes out;
    io::append_le<std::uint64_t>(out, text.size());
    io::append_bytes(out, text);
    io::append_le_span<float>(out, dataset.points.values());
    io::append_le_span<std::uint32_t>(out, dataset.labels);
    return out;
}

LabeledDataset decode_dataset(std::span<const std::uint8_t> bytes) {
    io::Reader reader(bytes);
    const auto header_len = reader.read<std::uint64_t>("header length");
    const auto header_bytes = reader.take(header_len, "header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_bytes.begin(), header_bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("header", e.what());
    }
    try {
        if (header.at("format").get<std::string>() != "gaf-dataset") {
            throw ParseError("header", "not a dataset file");
        }
        const auto version = header.at("version").get<std::uint32_t>();
        if (version != dataset_format_version) {
            throw UnsupportedVersionError("unsupported dataset format version " + std::to_string(version) +
                                          " (expected " + std::to_string(dataset_format_version) + ")");
        }
        LabeledDataset ds;
        ds.spec.kind = parse_dataset_kind(header.at("kind").get<std::string>());
        ds.spec.num_classes = header.at("classes").get<std::size_t>();
        ds.spec.per_class = header.at("per_class").get<std::size_t>();
        ds.spec.dim = header.at("dim").get<std::size_t>();
        ds.spec.seed = header.at("seed").get<std::uint64_t>();
        const auto rows = header.at("rows").get<std::size_t>();
        ds.stats.mean = header.at("normalization").at("mean").get<std::vector<double>>();
        ds.stats.std = header.at("normalization").at("std").get<std::vector<double>>();
        if (rows == 0 || ds.spec.dim == 0 || ds.stats.mean.size() != ds.spec.dim || ds.stats.std.size() != ds.spec.dim) {
            throw ParseError("header", "inconsistent dimensions");
        }
        ds.points = Array<float>(Shape{rows, ds.spec.dim}, reader.read_vector<float>(rows * ds.spec.dim, "points"));
        ds.labels = reader.read_vector<std::uint32_t>(rows, "labels");
        if (reader.remaining() != 0) {
            throw ParseError("labels", "unexpected trailing bytes");
        }
        for (auto l : ds.labels) {
            if (l >= ds.spec.num_classes) throw ParseError("labels", "label out of range");
        }
        return ds;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("header", e.what());
    }
}

void save_dataset(const std::filesystem::path& path, const LabeledDataset& dataset) {
    io::write_file(path, encode_dataset(dataset));
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
    return decode_dataset(io::read_file(path));
}

}  // namespace gaf
