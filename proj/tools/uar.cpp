// uar: data generation, training, reconstruction and evaluation.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "uar/app.hpp"
#include "uar/checks.hpp"
#include "uar/parallel.hpp"

namespace fs = std::filesystem;
using namespace uar;

namespace {

config::RunConfig load_config(const std::string& path) {
    return path.empty() ? config::RunConfig{} : config::load(path);
}

void echo(const std::string& line) { std::fprintf(stderr, "%s\n", line.c_str()); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App cli{"Unrolled adversarial regularization for sparse-view CT"};
    cli.require_subcommand(1);

    std::size_t threads = 0;
    cli.add_option("--threads", threads, "worker threads (default: UAR_THREADS or 1)");
    bool quiet = false;
    cli.add_flag("-q,--quiet", quiet, "only write run.log");

    std::string config_path, data_dir, out_dir, checkpoint, y_file, images_dir, work_dir;

    auto with_config = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "JSON run configuration (defaults when omitted)")
            ->check(CLI::ExistingFile);
    };
    auto with_data = [&](CLI::App* sub) {
        sub->add_option("-d,--data", data_dir, "dataset directory from gen-data")->required()->check(CLI::ExistingDirectory);
    };
    auto with_out = [&](CLI::App* sub) { sub->add_option("-o,--out", out_dir, "output directory")->required(); };
    auto with_checkpoint = [&](CLI::App* sub) {
        sub->add_option("-k,--checkpoint", checkpoint, "trained model (.uarl)")->required();
    };

    auto* gen = cli.add_subcommand("gen-data", "simulate phantoms and sinograms");
    with_config(gen);
    with_out(gen);

    auto* train = cli.add_subcommand("train", "three-phase adversarial training");
    with_config(train);
    with_data(train);
    with_out(train);

    auto* recon = cli.add_subcommand("reconstruct", "apply a trained reconstruction network");
    with_config(recon);
    with_checkpoint(recon);
    with_data(recon);
    with_out(recon);
    recon->add_option("-y,--sinogram", y_file, "single sinogram (.uarl) instead of the test set")
        ->check(CLI::ExistingFile);

    auto* refine = cli.add_subcommand("refine", "variational refinement with the trained critic");
    with_config(refine);
    with_checkpoint(refine);
    with_data(refine);
    with_out(refine);

    auto* fbp = cli.add_subcommand("fbp", "filtered back-projection baseline");
    with_config(fbp);
    with_data(fbp);
    with_out(fbp);

    auto* tv = cli.add_subcommand("tv", "total-variation baseline");
    with_config(tv);
    with_data(tv);
    with_out(tv);

    auto* ev = cli.add_subcommand("eval", "metrics and theory checks on the test set");
    with_config(ev);
    with_data(ev);
    with_out(ev);
    auto* ev_ckpt = ev->add_option("-k,--checkpoint", checkpoint, "trained model (.uarl)");
    auto* ev_imgs = ev->add_option("--images", images_dir, "compare <sample>.pgm files with the ground truth instead")
                        ->check(CLI::ExistingDirectory);
    ev_ckpt->excludes(ev_imgs);
    ev_imgs->excludes(ev_ckpt);

    auto* sweep = cli.add_subcommand("sweep-lambda", "train one model per eval.sweep_lambdas entry");
    with_config(sweep);
    with_data(sweep);
    with_out(sweep);

    auto* verify = cli.add_subcommand("verify", "self-checks: fast (oracles) or full (adds the acceptance suite)");
    std::string level = "fast";
    verify->add_option("level", level, "fast | full")->check(CLI::IsMember({"fast", "full"}));
    verify->add_option("-w,--work", work_dir, "artifact cache for the full suite")->default_val("uar-verify");

    auto* show = cli.add_subcommand("config", "print the effective configuration as JSON");
    with_config(show);

    CLI11_PARSE(cli, argc, argv);

    if (threads > 0) set_worker_count(threads);
    app::Options opt;
    if (!quiet) opt.echo = echo;

    try {
        const config::RunConfig cfg = load_config(config_path);
        if (*gen) {
            app::gen_data(cfg, out_dir, opt);
        } else if (*train) {
            app::train(cfg, data_dir, out_dir, opt);
        } else if (*recon) {
            app::reconstruct(cfg, checkpoint, data_dir, out_dir,
                             y_file.empty() ? std::nullopt : std::optional<fs::path>(y_file), opt);
        } else if (*refine) {
            app::refine(cfg, checkpoint, data_dir, out_dir, opt);
        } else if (*fbp) {
            app::fbp(cfg, data_dir, out_dir, opt);
        } else if (*tv) {
            app::tv(cfg, data_dir, out_dir, opt);
        } else if (*ev) {
            if (!images_dir.empty()) {
                app::evaluate_images(images_dir, data_dir, out_dir, opt);
            } else if (!checkpoint.empty()) {
                const auto e = app::evaluate(cfg, checkpoint, data_dir, out_dir, opt);
                if (!e.markov.pass()) {
                    std::fprintf(stderr, "markov check failed\n");
                    return 1;
                }
            } else {
                std::fprintf(stderr, "eval: either --checkpoint or --images is required\n");
                return 2;
            }
        } else if (*sweep) {
            const auto report = app::sweep_lambda(cfg, data_dir, out_dir, opt);
            std::printf("lambda,mean_psnr,mean_distortion,w1_estimate\n");
            for (const auto& r : report.rows) {
                std::printf("%g,%.4f,%.4f,%.6f\n", r.lambda, r.mean_psnr, r.mean_distortion, r.w1_estimate);
            }
        } else if (*verify) {
            auto print = [](const checks::Result& r) {
                std::printf("[%s] %s: %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
                std::fflush(stdout);
            };
            bool ok = checks::fast_suite(print);
            if (level == "full") {
                checks::AcceptanceOptions ao{work_dir, quiet ? std::function<void(const std::string&)>{} : echo};
                ok = checks::acceptance_suite(ao, print) && ok;
            }
            return ok ? 0 : 1;
        } else if (*show) {
            std::cout << config::to_json(cfg);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
