#pragma once

// Artifact-producing workflows behind the command-line tool. Every workflow
// writes config.json and run.log into its output directory; everything except
// run.log and the seconds column of metrics.csv is a pure function of the
// configuration and inputs.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "uar/config.hpp"
#include "uar/eval.hpp"
#include "uar/io.hpp"

namespace uar::app {

namespace fs = std::filesystem;

/// Timestamped log written to <out>/run.log and optionally echoed.
class RunLog {
public:
    RunLog(const fs::path& path, std::function<void(const std::string&)> echo = {});
    void operator()(const std::string& line);

private:
    fs::path path_;
    std::function<void(const std::string&)> echo_;
    double start_;
};

struct Options {
    std::function<void(const std::string&)> echo;  // progress lines besides run.log
};

/// A dataset directory produced by gen_data.
struct Dataset {
    tomo::Geometry geometry;
    data::DatasetPools pools;
};

// Writes the pools plus manifest.json (counts, master seed, geometry, noise).
void gen_data(const config::RunConfig& cfg, const fs::path& out, const Options& opt = {});
Dataset load_data(const fs::path& dir);

// Writes checkpoints/<tag>.uarl, model.uarl, losses.csv, epochs.csv, and
// metrics.csv plus one PGM per test sample for the trained generator.
model::TrainResult train(const config::RunConfig& cfg, const fs::path& data_dir, const fs::path& out,
                         const Options& opt = {});

// One PGM per test sample plus metrics.csv. With y_file set, reconstructs only
// that sinogram (a single-array UARL file) and writes recon.pgm.
void reconstruct(const config::RunConfig& cfg, const fs::path& checkpoint, const fs::path& data_dir,
                 const fs::path& out, const std::optional<fs::path>& y_file = {}, const Options& opt = {});
void refine(const config::RunConfig& cfg, const fs::path& checkpoint, const fs::path& data_dir, const fs::path& out,
            const Options& opt = {});
void fbp(const config::RunConfig& cfg, const fs::path& data_dir, const fs::path& out, const Options& opt = {});
// TV weight: eval.tv_lambda when positive, else the grid value with the best
// mean PSNR on eval.tv_tuning_images simulated validation pairs outside the
// dataset.
void tv(const config::RunConfig& cfg, const fs::path& data_dir, const fs::path& out, const Options& opt = {});

struct Evaluation {
    eval::MetricsReport fbp, tv, uar, refined;
    eval::MarkovReport markov;
    eval::DescentReport descent;
    double tv_lambda = 0.0;
    std::vector<std::vector<double>> refine_traces;  // objective per test sample
    double tv_seconds = 0.0;
};

// All methods on the test set: metrics.csv (fbp, tv, uar, uar-refined),
// markov.csv, descent.csv, summary.json.
Evaluation evaluate(const config::RunConfig& cfg, const fs::path& checkpoint, const fs::path& data_dir,
                    const fs::path& out, const Options& opt = {});
// Compares every <sample>.pgm in image_dir with the test ground truth.
void evaluate_images(const fs::path& image_dir, const fs::path& data_dir, const fs::path& out,
                     const Options& opt = {});

// Trains one model per eval.sweep_lambdas entry; writes sweep.csv and
// lambda_<value>/model.uarl.
eval::LambdaSweepReport sweep_lambda(const config::RunConfig& cfg, const fs::path& data_dir, const fs::path& out,
                                     const Options& opt = {});

// TV weight selection used by tv and evaluate.
double choose_tv_lambda(const config::RunConfig& cfg, const tomo::RadonOperator& op);

}  // namespace uar::app
