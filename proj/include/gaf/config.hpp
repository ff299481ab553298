#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gaf/data.hpp"
#include "gaf/metrics.hpp"
#include "gaf/trainer.hpp"
#include "gaf/transport.hpp"

namespace gaf {

struct DataSection {
    DatasetSpec spec;
    std::size_t holdout_per_class = 2000;
};

struct SampleSection {
    std::size_t steps = 250;
    Schedule schedule = Schedule::linear;
    std::size_t per_class = 1000;
    std::vector<std::size_t> sweep = {2, 5, 10, 20, 40, 80, 250};
};

struct TransportSection {
    std::vector<std::size_t> pair = {0, 1};
    std::size_t alpha_steps = 10;
    std::vector<std::size_t> cycle = {0, 1, 2, 0};
    std::vector<std::size_t> bary_classes = {0, 1, 2};
    std::size_t bary_resolution = 7;
    std::size_t latents = 64;
};

struct EvalSection {
    std::size_t samples_per_class = 2000;
    std::size_t projections = 64;
    std::size_t probe_samples = 2000;
};

/// Seeds actually used by each stage. A section's own "seed" key wins; otherwise
/// the seed is derived from the top-level seed.
struct SeedPlan {
    std::uint64_t root = 0;
    std::uint64_t data = 0;
    std::uint64_t holdout = 0;
    std::uint64_t model = 0;
    std::uint64_t train = 0;
    std::uint64_t sample = 0;
    std::uint64_t transport = 0;
    std::uint64_t eval = 0;
};

struct ExperimentConfig {
    GafConfig model;
    TrainConfig train;
    DataSection data;
    SampleSection sample;
    TransportSection transport;
    EvalSection eval;
    std::filesystem::path output = "out";
    SeedPlan seeds;

    EvalOptions eval_options() const;
    SampleOptions sample_options() const;
};

/// Desk defaults: 3-class Gaussian mixture, 2000 points per class.
ExperimentConfig default_config();

/// Strict parse: unknown sections or keys raise ConfigError.
ExperimentConfig parse_config(const nlohmann::json& doc);

/// Applies `section.key=value`; the value is read as JSON, falling back to a plain string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Fully resolved configuration (every key, derived seeds filled in).
nlohmann::json to_json(const ExperimentConfig& config);

/// SHA-256 of the canonical resolved configuration.
std::string config_digest(const ExperimentConfig& config);

}  // namespace gaf
