#include "uar/app.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "uar/classical.hpp"
#include "uar/metrics.hpp"
#include "uar/ot.hpp"
#include "uar/rng.hpp"

namespace uar::app {

using nlohmann::json;

namespace {

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

void write_text(const fs::path& path, const std::string& text) {
    io::write_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

json geometry_json(const tomo::Geometry& g) {
    return {{"n", g.n}, {"n_angles", g.n_angles}, {"n_det", g.n_det}, {"det_spacing", g.det_spacing}};
}

void prepare(const config::RunConfig& cfg, const fs::path& out) {
    fs::create_directories(out);
    config::save(out / "config.json", cfg);
}

std::string test_id(std::size_t i) { return io::sample_name('t', i); }

struct Timed {
    tomo::Image image;
    double seconds = 0.0;
};

template <class F>
Timed timed(F&& f) {
    const double t0 = now_seconds();
    tomo::Image img = f();
    return {std::move(img), now_seconds() - t0};
}

double distortion(const model::Problem& problem, const tomo::Sinogram& y, const tomo::Image& x) {
    const auto ax = problem.forward(x);
    double s = 0.0;
    for (std::size_t i = 0; i < ax.size(); ++i) {
        const double r = y.values[i] - ax.values[i];
        s += r * r;
    }
    return s;
}

// PGMs and metrics rows for one method over the test pairs.
void emit_method(const model::Problem& problem, const Dataset& ds, const std::string& method,
                 const std::vector<Timed>& recon, const fs::path& image_dir, std::vector<io::MetricsRow>& rows) {
    for (std::size_t i = 0; i < recon.size(); ++i) {
        const auto& x = recon[i].image;
        io::write_pgm(image_dir / (test_id(i) + ".pgm"), x);
        rows.push_back({test_id(i), method, eval::psnr(x, ds.pools.test_x[i]), eval::ssim(x, ds.pools.test_x[i]),
                        distortion(problem, ds.pools.test_y[i], x), recon[i].seconds});
    }
}

std::vector<tomo::Image> images_of(const std::vector<Timed>& v) {
    std::vector<tomo::Image> out;
    out.reserve(v.size());
    for (const auto& t : v) out.push_back(t.image);
    return out;
}

io::Checkpoint load_matching(const fs::path& checkpoint, const Dataset& ds) {
    if (!fs::exists(checkpoint)) throw std::runtime_error("checkpoint not found: " + checkpoint.string());
    io::Checkpoint ckpt = io::load_checkpoint(checkpoint);
    io::require_geometry(ckpt, ds.geometry);
    return ckpt;
}

void require_test_set(const Dataset& ds) {
    if (ds.pools.test_x.empty()) throw std::runtime_error("dataset has no test pairs");
}

std::string fmt(double v) { return io::format_double(v); }

}  // namespace

RunLog::RunLog(const fs::path& path, std::function<void(const std::string&)> echo)
    : path_(path), echo_(std::move(echo)), start_(now_seconds()) {
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
    std::ofstream(path_, std::ios::trunc);
}

void RunLog::operator()(const std::string& line) {
    char stamp[32];
    std::snprintf(stamp, sizeof stamp, "[%8.1fs] ", now_seconds() - start_);
    std::ofstream(path_, std::ios::app) << stamp << line << '\n';
    if (echo_) echo_(line);
}

// ---- data ------------------------------------------------------------------

void gen_data(const config::RunConfig& cfg, const fs::path& out, const Options& opt) {
    prepare(cfg, out);
    RunLog log(out / "run.log", opt.echo);
    const tomo::Geometry g = cfg.geometry.build();
    log("generating " + std::to_string(cfg.data.counts.x) + " + " + std::to_string(cfg.data.counts.y) + " + " +
        std::to_string(cfg.data.counts.test) + " samples");
    const auto pools = data::make_pools(cfg.data.counts, g, cfg.noise, cfg.data.master_seed);
    io::save_dataset(out, pools);
    json manifest = {{"train_x", pools.train_x.size()},
                     {"train_y", pools.train_y.size()},
                     {"test", pools.test_x.size()},
                     {"master_seed", cfg.data.master_seed},
                     {"sigma_e", cfg.noise.sigma_e},
                     {"geometry", geometry_json(g)}};
    write_text(out / "manifest.json", manifest.dump(2) + "\n");
    log("done");
}

Dataset load_data(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) throw std::runtime_error("no manifest.json in " + dir.string());
    std::ifstream f(manifest_path);
    json m;
    try {
        m = json::parse(f);
        const auto& g = m.at("geometry");
        Dataset ds;
        ds.geometry = tomo::Geometry::parallel(g.at("n").get<std::size_t>(), g.at("n_angles").get<std::size_t>(),
                                               g.at("n_det").get<std::size_t>(), g.at("det_spacing").get<double>());
        ds.pools = io::load_dataset(dir, ds.geometry);
        if (ds.pools.train_x.size() != m.at("train_x").get<std::size_t>() ||
            ds.pools.train_y.size() != m.at("train_y").get<std::size_t>() ||
            ds.pools.test_x.size() != m.at("test").get<std::size_t>()) {
            throw io::FormatError("dataset files do not match manifest counts in " + dir.string());
        }
        return ds;
    } catch (const json::exception& e) {
        throw io::FormatError(manifest_path.string() + ": " + e.what());
    }
}

// ---- training --------------------------------------------------------------

model::TrainResult train(const config::RunConfig& cfg, const fs::path& data_dir, const fs::path& out,
                         const Options& opt) {
    const Dataset ds = load_data(data_dir);
    if (!(ds.geometry == cfg.geometry.build())) throw io::FormatError("config geometry differs from the dataset's");
    prepare(cfg, out);
    RunLog log(out / "run.log", opt.echo);
    const model::Problem problem(ds.geometry);

    model::TrainHooks hooks;
    hooks.log = [&](const std::string& s) { log(s); };
    hooks.checkpoint = [&](const std::string& tag, const model::TrainState& st) {
        io::Checkpoint c{ds.geometry, st.gen, st.critic, st.gen_opt, st.critic_opt, st.phase, st.step};
        io::save_checkpoint(out / "checkpoints" / (tag + ".uarl"), c);
        log("checkpoint " + tag);
    };
    log("training on " + std::to_string(ds.pools.train_x.size()) + " images and " +
        std::to_string(ds.pools.train_y.size()) + " sinograms, gp_mode " + model::gp_mode_name(cfg.train.gp_mode));
    model::TrainResult result;
    try {
        result = model::train(ds.pools, problem, cfg.generator, cfg.critic, cfg.train, hooks);
    } catch (const model::TrainingError& e) {
        log(std::string("training aborted: ") + e.what());
        throw;
    }
    io::Checkpoint final_ckpt{ds.geometry, result.gen, result.critic, std::nullopt, std::nullopt, 3, 0};
    io::save_checkpoint(out / "model.uarl", final_ckpt);

    std::ostringstream losses;
    losses << "phase,step,kind,value\n";
    for (const auto& r : result.log.losses) {
        losses << r.phase << ',' << r.step << ',' << (r.kind == 'c' ? "critic" : "generator") << ',' << fmt(r.value)
               << '\n';
    }
    write_text(out / "losses.csv", losses.str());
    std::ostringstream epochs;
    epochs << "phase,epoch,validation_psnr,w1_estimate\n";
    for (const auto& e : result.log.epochs) {
        epochs << e.phase << ',' << e.epoch << ',' << fmt(e.validation_psnr) << ',' << fmt(e.w1_estimate) << '\n';
    }
    write_text(out / "epochs.csv", epochs.str());

    if (!ds.pools.test_x.empty()) {
        std::vector<Timed> recon;
        for (const auto& y : ds.pools.test_y) recon.push_back(timed([&] { return model::reconstruct(problem, result.gen, y); }));
        std::vector<io::MetricsRow> rows;
        emit_method(problem, ds, "uar", recon, out / "images", rows);
        io::write_metrics_csv(out / "metrics.csv", rows);
    }
    log("done");
    return result;
}

// ---- single-method reconstruction -------------------------------------------

void reconstruct(const config::RunConfig& cfg, const fs::path& checkpoint, const fs::path& data_dir,
                 const fs::path& out, const std::optional<fs::path>& y_file, const Options& opt) {
    const Dataset ds = load_data(data_dir);
    const io::Checkpoint ckpt = load_matching(checkpoint, ds);
    prepare(cfg, out);
    RunLog log(out / "run.log", opt.echo);
    const model::Problem problem(ds.geometry);
    if (y_file) {
        const auto arrays = io::load_arrays(*y_file);
        const auto& g = ds.geometry;
        if (arrays.size() != 1 || arrays[0].dims != std::vector<std::uint64_t>{g.n_angles, g.n_det}) {
            throw io::FormatError(y_file->string() + ": expected one " + std::to_string(g.n_angles) + "x" +
                                  std::to_string(g.n_det) + " sinogram");
        }
        tomo::Sinogram y(g.n_angles, g.n_det);
        y.values = arrays[0].values;
        io::write_pgm(out / "recon.pgm", model::reconstruct(problem, ckpt.gen, y));
        log("reconstructed " + y_file->string());
        return;
    }
    require_test_set(ds);
    std::vector<Timed> recon;
    for (const auto& y : ds.pools.test_y) recon.push_back(timed([&] { return model::reconstruct(problem, ckpt.gen, y); }));
    std::vector<io::MetricsRow> rows;
    emit_method(problem, ds, "uar", recon, out / "images", rows);
    io::write_metrics_csv(out / "metrics.csv", rows);
    log("reconstructed " + std::to_string(recon.size()) + " test samples");
}

void refine(const config::RunConfig& cfg, const fs::path& checkpoint, const fs::path& data_dir, const fs::path& out,
            const Options& opt) {
    const Dataset ds = load_data(data_dir);
    const io::Checkpoint ckpt = load_matching(checkpoint, ds);
    require_test_set(ds);
    prepare(cfg, out);
    RunLog log(out / "run.log", opt.echo);
    const model::Problem problem(ds.geometry);
    std::vector<Timed> recon;
    std::ostringstream trace;
    trace << "sample_id,iteration,objective,step\n";
    for (std::size_t i = 0; i < ds.pools.test_y.size(); ++i) {
        model::RefineResult r;
        recon.push_back(timed([&] {
            r = model::refine(problem, ckpt.gen, ckpt.critic, ds.pools.test_y[i], cfg.refine);
            return r.image;
        }));
        for (std::size_t k = 0; k < r.objective.size(); ++k) {
            trace << test_id(i) << ',' << k << ',' << fmt(r.objective[k]) << ','
                  << (k == 0 ? "0" : fmt(r.steps[k - 1])) << '\n';
        }
    }
    write_text(out / "refine_trace.csv", trace.str());
    std::vector<io::MetricsRow> rows;
    emit_method(problem, ds, "uar-refined", recon, out / "images", rows);
    io::write_metrics_csv(out / "metrics.csv", rows);
    log("refined " + std::to_string(recon.size()) + " test samples");
}

void fbp(const config::RunConfig& cfg, const fs::path& data_dir, const fs::path& out, const Options& opt) {
    const Dataset ds = load_data(data_dir);
    require_test_set(ds);
    prepare(cfg, out);
    RunLog log(out / "run.log", opt.echo);
    const model::Problem problem(ds.geometry);
    std::vector<Timed> recon;
    for (const auto& y : ds.pools.test_y) recon.push_back(timed([&] { return problem.fbp(y); }));
    std::vector<io::MetricsRow> rows;
    emit_method(problem, ds, "fbp", recon, out / "images", rows);
    io::write_metrics_csv(out / "metrics.csv", rows);
    log("fbp on " + std::to_string(recon.size()) + " test samples");
}

double choose_tv_lambda(const config::RunConfig& cfg, const tomo::RadonOperator& op) {
    if (cfg.eval.tv_lambda > 0.0) return cfg.eval.tv_lambda;
    const std::size_t m = cfg.eval.tv_tuning_images;
    // Validation pairs come from their own seed stream, disjoint from every pool.
    std::vector<tomo::Image> truth;
    std::vector<tomo::Sinogram> ys;
    for (std::size_t i = 0; i < m; ++i) {
        truth.push_back(data::random_phantom(derive_seed(cfg.data.master_seed, data::kValidationStream, 2 * i),
                                             op.geometry().n));
        ys.push_back(data::simulate_measurement(truth.back(), op, cfg.noise,
                                                derive_seed(cfg.data.master_seed, data::kValidationStream, 2 * i + 1)));
    }
    double best = cfg.eval.tv_lambda_grid.front(), best_psnr = -1e300;
    const double norm = classical::stacked_norm(op);
    for (double lambda : cfg.eval.tv_lambda_grid) {
        classical::TVConfig tc;
        tc.lambda_tv = lambda;
        tc.iters = cfg.eval.tv_iters;
        tc.balance = cfg.eval.tv_balance;
        classical::set_steps(tc, norm);
        double total = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            total += eval::psnr(classical::tv_reconstruct(ys[i], op, tc).image, truth[i]);
        }
        if (total / static_cast<double>(m) > best_psnr) {
            best_psnr = total / static_cast<double>(m);
            best = lambda;
        }
    }
    return best;
}

namespace {

std::vector<Timed> run_tv(const config::RunConfig& cfg, const tomo::RadonOperator& op, const Dataset& ds,
                          double lambda) {
    classical::TVConfig tc;
    tc.lambda_tv = lambda;
    tc.iters = cfg.eval.tv_iters;
    tc.balance = cfg.eval.tv_balance;
    classical::set_steps(tc, classical::stacked_norm(op));
    std::vector<Timed> recon;
    for (const auto& y : ds.pools.test_y) recon.push_back(timed([&] { return classical::tv_reconstruct(y, op, tc).image; }));
    return recon;
}

}  // namespace

void tv(const config::RunConfig& cfg, const fs::path& data_dir, const fs::path& out, const Options& opt) {
    const Dataset ds = load_data(data_dir);
    require_test_set(ds);
    prepare(cfg, out);
    RunLog log(out / "run.log", opt.echo);
    const model::Problem problem(ds.geometry);
    const double lambda = choose_tv_lambda(cfg, *problem.op());
    log("TV weight " + fmt(lambda));
    const auto recon = run_tv(cfg, *problem.op(), ds, lambda);
    std::vector<io::MetricsRow> rows;
    emit_method(problem, ds, "tv", recon, out / "images", rows);
    io::write_metrics_csv(out / "metrics.csv", rows);
    log("tv on " + std::to_string(recon.size()) + " test samples");
}

// ---- evaluation ------------------------------------------------------------

Evaluation evaluate(const config::RunConfig& cfg, const fs::path& checkpoint, const fs::path& data_dir,
                    const fs::path& out, const Options& opt) {
    const Dataset ds = load_data(data_dir);
    const io::Checkpoint ckpt = load_matching(checkpoint, ds);
    require_test_set(ds);
    prepare(cfg, out);
    RunLog log(out / "run.log", opt.echo);
    const model::Problem problem(ds.geometry);
    const auto& tx = ds.pools.test_x;
    const auto& ty = ds.pools.test_y;
    Evaluation ev;
    std::vector<io::MetricsRow> rows;

    std::vector<Timed> fbp_r, uar_r, ref_r;
    for (const auto& y : ty) fbp_r.push_back(timed([&] { return problem.fbp(y); }));
    emit_method(problem, ds, "fbp", fbp_r, out / "images" / "fbp", rows);
    ev.fbp = eval::evaluate_reconstructions(problem, ckpt.critic, images_of(fbp_r), tx, ty);
    log("fbp mean PSNR " + fmt(ev.fbp.psnr_summary.mean));

    const double t0 = now_seconds();
    ev.tv_lambda = choose_tv_lambda(cfg, *problem.op());
    const auto tv_r = run_tv(cfg, *problem.op(), ds, ev.tv_lambda);
    ev.tv_seconds = now_seconds() - t0;
    emit_method(problem, ds, "tv", tv_r, out / "images" / "tv", rows);
    ev.tv = eval::evaluate_reconstructions(problem, ckpt.critic, images_of(tv_r), tx, ty);
    log("tv (weight " + fmt(ev.tv_lambda) + ") mean PSNR " + fmt(ev.tv.psnr_summary.mean));

    for (const auto& y : ty) uar_r.push_back(timed([&] { return model::reconstruct(problem, ckpt.gen, y); }));
    emit_method(problem, ds, "uar", uar_r, out / "images" / "uar", rows);
    ev.uar = eval::evaluate_reconstructions(problem, ckpt.critic, images_of(uar_r), tx, ty);
    log("uar mean PSNR " + fmt(ev.uar.psnr_summary.mean));

    for (std::size_t i = 0; i < ty.size(); ++i) {
        model::RefineResult r;
        ref_r.push_back(timed([&] {
            r = model::refine_from(problem, ckpt.critic, ty[i], uar_r[i].image, cfg.refine);
            return r.image;
        }));
        ev.refine_traces.push_back(std::move(r.objective));
    }
    emit_method(problem, ds, "uar-refined", ref_r, out / "images" / "uar-refined", rows);
    ev.refined = eval::evaluate_reconstructions(problem, ckpt.critic, images_of(ref_r), tx, ty);
    log("refined mean PSNR " + fmt(ev.refined.psnr_summary.mean));
    io::write_metrics_csv(out / "metrics.csv", rows);

    ev.markov = eval::markov_checks(ev.uar);
    std::ostringstream mk;
    mk << "statistic,eta,empirical,bound,margin,pass\n";
    auto markov_rows = [&](const char* name, const std::vector<eval::MarkovResult>& rs) {
        for (std::size_t k = 0; k < rs.size(); ++k) {
            mk << name << ',' << fmt(ev.markov.etas[k]) << ',' << fmt(rs[k].empirical) << ',' << fmt(rs[k].bound)
               << ',' << fmt(rs[k].margin()) << ',' << (rs[k].pass ? "true" : "false") << '\n';
        }
    };
    markov_rows("distortion", ev.markov.distortion);
    markov_rows("critic", ev.markov.critic);
    write_text(out / "markov.csv", mk.str());
    log(std::string("markov checks ") + (ev.markov.pass() ? "pass" : "FAIL"));

    ev.descent = eval::wasserstein_descent_check(problem, ckpt.gen, ckpt.critic, ds.pools, cfg.eval.descent_etas,
                                                 cfg.eval.descent_probes, cfg.eval.descent_batch,
                                                 cfg.eval.descent_seed);
    std::ostringstream dc;
    dc << "probe_seed,eta,w1\n";
    for (const auto& p : ev.descent.probes) {
        dc << p.seed << ",0," << fmt(p.baseline) << '\n';
        for (std::size_t k = 0; k < p.w1.size(); ++k) dc << p.seed << ',' << fmt(ev.descent.etas[k]) << ',' << fmt(p.w1[k]) << '\n';
    }
    write_text(out / "descent.csv", dc.str());
    log("critic descent step improves W1 in " + fmt(ev.descent.improved_fraction()) + " of probes");

    auto method_json = [](const eval::MetricsReport& r) {
        return json{{"psnr_mean", r.psnr_summary.mean},     {"psnr_std", r.psnr_summary.stddev},
                    {"ssim_mean", r.ssim_summary.mean},     {"ssim_std", r.ssim_summary.stddev},
                    {"mean_distortion", r.mean_distortion}, {"w1_estimate", r.w1_estimate}};
    };
    json summary = {{"fbp", method_json(ev.fbp)},
                    {"tv", method_json(ev.tv)},
                    {"uar", method_json(ev.uar)},
                    {"uar-refined", method_json(ev.refined)},
                    {"tv_lambda", ev.tv_lambda},
                    {"markov_pass", ev.markov.pass()},
                    {"descent_improved_fraction", ev.descent.improved_fraction()}};
    write_text(out / "summary.json", summary.dump(2) + "\n");
    log("done");
    return ev;
}

void evaluate_images(const fs::path& image_dir, const fs::path& data_dir, const fs::path& out, const Options& opt) {
    const Dataset ds = load_data(data_dir);
    require_test_set(ds);
    fs::create_directories(out);
    RunLog log(out / "run.log", opt.echo);
    const model::Problem problem(ds.geometry);
    std::vector<io::MetricsRow> rows;
    for (std::size_t i = 0; i < ds.pools.test_x.size(); ++i) {
        const fs::path p = image_dir / (test_id(i) + ".pgm");
        if (!fs::exists(p)) continue;
        const tomo::Image x = io::decode_pgm(io::read_bytes(p));
        if (x.n != ds.geometry.n) throw io::FormatError(p.string() + ": image size differs from the dataset");
        rows.push_back({test_id(i), "pgm", eval::psnr(x, ds.pools.test_x[i]), eval::ssim(x, ds.pools.test_x[i]),
                        distortion(problem, ds.pools.test_y[i], x), 0.0});
    }
    if (rows.empty()) throw std::runtime_error("no test-sample PGMs found in " + image_dir.string());
    io::write_metrics_csv(out / "metrics.csv", rows);
    log("evaluated " + std::to_string(rows.size()) + " images");
}

eval::LambdaSweepReport sweep_lambda(const config::RunConfig& cfg, const fs::path& data_dir, const fs::path& out,
                                     const Options& opt) {
    const Dataset ds = load_data(data_dir);
    if (!(ds.geometry == cfg.geometry.build())) throw io::FormatError("config geometry differs from the dataset's");
    require_test_set(ds);
    prepare(cfg, out);
    RunLog log(out / "run.log", opt.echo);
    const model::Problem problem(ds.geometry);
    std::vector<eval::LambdaSweepRow> rows;
    for (double lambda : cfg.eval.sweep_lambdas) {
        model::TrainConfig tc = cfg.train;
        tc.lambda = lambda;
        tc.checkpoint_every = 0;
        model::TrainHooks hooks;
        hooks.log = [&](const std::string& s) { log("lambda " + fmt(lambda) + ": " + s); };
        const auto result = model::train(ds.pools, problem, cfg.generator, cfg.critic, tc, hooks);
        io::save_checkpoint(out / ("lambda_" + fmt(lambda)) / "model.uarl",
                            {ds.geometry, result.gen, result.critic, std::nullopt, std::nullopt, 3, 0});
        const auto report = eval::evaluate_model(problem, result.gen, result.critic, ds.pools.test_x, ds.pools.test_y);
        rows.push_back({lambda, report.psnr_summary.mean, report.mean_distortion, report.w1_estimate});
        log("lambda " + fmt(lambda) + ": mean PSNR " + fmt(rows.back().mean_psnr) + ", distortion " +
            fmt(rows.back().mean_distortion) + ", W1 estimate " + fmt(rows.back().w1_estimate));
    }
    auto report = eval::summarize_sweep(std::move(rows));
    std::ostringstream s;
    s << "lambda,mean_psnr,mean_distortion,w1_estimate\n";
    for (const auto& r : report.rows) {
        s << fmt(r.lambda) << ',' << fmt(r.mean_psnr) << ',' << fmt(r.mean_distortion) << ',' << fmt(r.w1_estimate)
          << '\n';
    }
    write_text(out / "sweep.csv", s.str());
    if (report.checked) {
        log(std::string("orderings: distortion ") + (report.distortion_ordered ? "ok" : "violated") + ", W1 " +
            (report.w1_ordered ? "ok" : "violated") + ", smallest-lambda PSNR minimum " +
            (report.psnr_minimum_first ? "ok" : "violated"));
    }
    return report;
}

}  // namespace uar::app
