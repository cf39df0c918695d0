#pragma once

// Run configuration: a JSON document with sections geometry, noise, data,
// generator, critic, train, refine and eval. Every field has a default and
// unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "uar/classical.hpp"
#include "uar/data.hpp"
#include "uar/train.hpp"

namespace uar::config {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct GeometrySection {
    std::size_t n = 64;
    std::size_t n_angles = 30;
    std::size_t n_det = 95;
    double det_spacing = 1.0;
    tomo::Geometry build() const { return tomo::Geometry::parallel(n, n_angles, n_det, det_spacing); }
};

struct DataSection {
    data::PoolCounts counts;
    std::uint64_t master_seed = 2024;
};

struct EvalSection {
    std::vector<double> sweep_lambdas{1e-3, 1e-2, 1e-1, 1.0};
    std::vector<double> descent_etas{1e-3, 3e-3, 1e-2};
    std::size_t descent_probes = 10;
    std::size_t descent_batch = 32;
    std::uint64_t descent_seed = 99;
    std::vector<double> tv_lambda_grid{1.0, 2.0, 4.0, 8.0, 16.0};
    std::size_t tv_iters = 300;
    double tv_balance = 0.01;
    std::size_t tv_tuning_images = 1;  // validation phantoms for the TV weight
    double tv_lambda = 0.0;            // > 0 skips the grid search
};

struct RunConfig {
    GeometrySection geometry;
    data::NoiseConfig noise;
    DataSection data;
    model::GeneratorConfig generator;
    model::CriticConfig critic;
    model::TrainConfig train;
    model::RefineConfig refine;
    EvalSection eval;

    // Throws ConfigError on any invalid value.
    void validate() const;
};

// Throws ConfigError on malformed JSON, unknown keys, wrong types or invalid values.
RunConfig parse(const std::string& json_text);
RunConfig load(const std::filesystem::path& path);
// Full configuration including defaults, pretty-printed; parse(to_json(c)) == c.
std::string to_json(const RunConfig& cfg);
void save(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace uar::config
