#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "uar/app.hpp"
#include "uar/checks.hpp"
#include "uar/ot.hpp"
#include "uar/parallel.hpp"

namespace uar::checks {

namespace fs = std::filesystem;

namespace {

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_text(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << text;
}

// A stage directory is reused when its stamp, the full configuration that
// produced it, agrees with the current one on the listed JSON pointers;
// anything else is rebuilt from scratch.
class Stage {
public:
    Stage(fs::path dir, const config::RunConfig& cfg, std::vector<std::string> inputs)
        : dir_(std::move(dir)), config_(config::to_json(cfg)), inputs_(std::move(inputs)) {}
    const fs::path& dir() const { return dir_; }
    bool done() const {
        if (!fs::exists(dir_ / "stamp")) return false;
        const auto stamp = nlohmann::json::parse(read_text(dir_ / "stamp"), nullptr, false);
        if (stamp.is_discarded()) return false;
        const auto now = nlohmann::json::parse(config_);
        return std::all_of(inputs_.begin(), inputs_.end(), [&](const std::string& p) {
            const nlohmann::json::json_pointer ptr(p);
            return stamp.contains(ptr) && stamp.at(ptr) == now.at(ptr);
        });
    }
    void reset() const {
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void finish() const { write_text(dir_ / "stamp", config_); }

private:
    fs::path dir_;
    std::string config_;
    std::vector<std::string> inputs_;
};

const std::vector<std::string> kDataInputs{"/geometry", "/noise", "/data"};
const std::vector<std::string> kTrainInputs{"/geometry", "/noise", "/data", "/generator", "/critic", "/train"};

// Default desk configuration.
config::RunConfig desk_config() { return config::RunConfig{}; }

// Shorter schedule on a smaller pool for the four-model lambda sweep.
config::RunConfig sweep_config() {
    config::RunConfig c;
    c.data.counts = {100, 100, 32};
    c.train.epochs[0] = 4;
    c.train.epochs[1] = 3;
    c.train.epochs[2] = 6;
    c.train.checkpoint_every = 0;
    return c;
}

// Seconds-scale pipeline for the reproducibility check.
config::RunConfig tiny_config() {
    config::RunConfig c;
    c.geometry = {16, 8, 23, 1.0};
    c.data.counts = {6, 6, 3};
    c.generator = {2, 4, 5, 0.1, 0.01};
    c.critic = {6, 4, 5, 16, 0.2};
    c.train.epochs[0] = c.train.epochs[1] = c.train.epochs[2] = 1;
    c.train.checkpoint_every = 1;
    c.train.probe_size = 3;
    c.train.validation_size = 2;
    c.refine.max_iters = 5;
    c.eval.descent_probes = 2;
    c.eval.descent_batch = 4;
    c.eval.tv_iters = 20;
    c.eval.tv_tuning_images = 1;
    return c;
}

struct DeskArtifacts {
    fs::path data, train, eval;
    double train_seconds = 0.0;
    app::Evaluation evaluation;
};

// Lines of a metrics CSV with the trailing seconds column removed.
std::string without_seconds(const std::string& csv) {
    std::istringstream in(csv);
    std::ostringstream out;
    for (std::string line; std::getline(in, line);) out << line.substr(0, line.rfind(',')) << '\n';
    return out.str();
}

// First difference between two run directories, ignoring run.log and timing columns.
std::string compare_trees(const fs::path& a, const fs::path& b) {
    std::vector<fs::path> files;
    for (const auto& root : {a, b}) {
        for (const auto& e : fs::recursive_directory_iterator(root)) {
            if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root));
        }
    }
    std::sort(files.begin(), files.end());
    files.erase(std::unique(files.begin(), files.end()), files.end());
    std::size_t compared = 0;
    for (const auto& rel : files) {
        if (rel.filename() == "run.log") continue;
        if (!fs::exists(a / rel) || !fs::exists(b / rel)) return "only in one run: " + rel.string();
        std::string ta = read_text(a / rel), tb = read_text(b / rel);
        if (rel.filename() == "metrics.csv") {
            ta = without_seconds(ta);
            tb = without_seconds(tb);
        }
        if (ta != tb) return "differs: " + rel.string();
        ++compared;
    }
    return compared == 0 ? "no files compared" : "";
}

bool monotone(const std::vector<double>& trace) {
    for (std::size_t i = 1; i < trace.size(); ++i) {
        if (trace[i] > trace[i - 1]) return false;
    }
    return true;
}

}  // namespace

bool acceptance_suite(const AcceptanceOptions& opt, const Reporter& report) {
    bool ok = true;
    std::size_t index = 0;
    auto emit = [&](bool pass, const std::string& detail) {
        static const char* names[] = {"adjoint",         "gradcheck",         "second-order",   "w1-oracle",
                                      "dual-feasibility", "baseline-ordering", "desk-training",  "refinement",
                                      "lambda-sweep",    "wasserstein-step",  "markov",         "reproducibility"};
        ok = ok && pass;
        report({std::to_string(index + 1) + " " + names[index], pass, detail});
        ++index;
    };
    auto log = [&](const std::string& s) {
        if (opt.log) opt.log(s);
    };
    app::Options quiet;
    app::Options verbose;
    verbose.echo = opt.log;
    const fs::path work = opt.work_dir;
    fs::create_directories(work);

    // 1-4: exact oracles.
    {
        const auto t0 = std::chrono::steady_clock::now();
        const double err = adjoint_error(tomo::Geometry::desk_default(), 10, 1);
        const double secs = seconds_since(t0);
        emit(err < 1e-12 && secs < 1.0, "max relative error " + fmt("%.2e", err) + " in " + fmt("%.3f", secs) + " s");
    }
    {
        double worst = 0.0;
        std::size_t checked = 0, excluded = 0, cases = 0;
        std::string worst_name;
        for (const auto& c : gradcheck_all(5, 2)) {
            ++cases;
            checked += c.stats.checked;
            excluded += c.stats.excluded;
            if (c.stats.worst >= worst) {
                worst = c.stats.worst;
                worst_name = c.name;
            }
        }
        emit(worst < 1e-5 && excluded * 100 <= checked + excluded,
             std::to_string(cases) + " cases x 5 instances, worst relative error " + fmt("%.2e", worst) + " (" +
                 worst_name + "), " + std::to_string(excluded) + " of " + std::to_string(checked + excluded) +
                 " coordinates at kinks");
    }
    {
        const double err = second_order_error(3);
        emit(err < 1e-4, "relative error " + fmt("%.2e", err));
    }
    {
        const auto s = w1_oracle(100, 4);
        emit(s.mismatches == 0 && s.worst_axiom_violation <= 1e-9,
             std::to_string(s.mismatches) + " mismatches in " + std::to_string(s.trials) +
                 " trials, worst axiom violation " + fmt("%.2e", s.worst_axiom_violation));
    }

    // Desk pipeline, cached across runs.
    const config::RunConfig desk = desk_config();
    DeskArtifacts d;
    d.data = work / "desk" / "data";
    d.train = work / "desk" / "train";
    d.eval = work / "desk" / "eval";
    {
        const Stage s(d.data, desk, kDataInputs);
        if (!s.done()) {
            log("generating desk data");
            s.reset();
            app::gen_data(desk, d.data, quiet);
            s.finish();
        }
    }
    {
        const Stage s(d.train, desk, kTrainInputs);
        if (!s.done()) {
            log("training the desk model (long)");
            s.reset();
            const auto t0 = std::chrono::steady_clock::now();
            app::train(desk, d.data, d.train, verbose);
            write_text(d.train / "seconds", fmt("%.3f", seconds_since(t0)) + " " + std::to_string(worker_count()));
            s.finish();
        }
        d.train_seconds = std::stod(read_text(d.train / "seconds"));
    }
    {
        log("evaluating the desk model");
        fs::remove_all(d.eval);
        d.evaluation = app::evaluate(desk, d.train / "model.uarl", d.data, d.eval, quiet);
    }
    const auto& ev = d.evaluation;

    // 5: random critics and the trained critic on 16-image batches.
    {
        const app::Dataset ds = app::load_data(d.data);
        const model::Problem problem(ds.geometry);
        const io::Checkpoint ckpt = io::load_checkpoint(d.train / "model.uarl");
        std::vector<model::Critic> critics{ckpt.critic};
        for (std::uint64_t seed = 1; seed <= 3; ++seed) critics.push_back(model::make_critic(desk.critic, seed));
        auto slice = [](const std::vector<tomo::Image>& v, std::size_t from) {
            return std::vector<tomo::Image>(v.begin() + from, v.begin() + from + 16);
        };
        std::vector<tomo::Image> fbp_test, uar_test;
        for (const auto& y : ds.pools.test_y) {
            fbp_test.push_back(problem.fbp(y));
            uar_test.push_back(model::reconstruct(problem, ckpt.gen, y));
        }
        const std::vector<std::pair<std::vector<tomo::Image>, std::vector<tomo::Image>>> batches{
            {slice(uar_test, 0), slice(ds.pools.test_x, 0)},
            {slice(fbp_test, 16), slice(ds.pools.test_x, 16)},
            {slice(ds.pools.train_x, 0), slice(ds.pools.train_x, 16)},
        };
        double worst = -INFINITY;
        std::size_t pairs = 0;
        for (const auto& c : critics) {
            for (const auto& [a, b] : batches) {
                for (int dir = 0; dir < 2; ++dir) {
                    const auto& p = dir ? b : a;
                    const auto& q = dir ? a : b;
                    const double slack = ot::w1_critic_estimate(c, p, q).normalized() -
                                         ot::w1_exact(ot::PointCloud::from_images(p), ot::PointCloud::from_images(q));
                    worst = std::max(worst, slack);
                    ++pairs;
                }
            }
        }
        emit(worst <= 1e-9, std::to_string(critics.size()) + " critics x " + std::to_string(pairs / critics.size()) +
                                " ordered batch pairs, max (normalized estimate - W1) " + fmt("%.4g", worst));
    }

    // 6-8: desk quality orderings.
    {
        const double gap = ev.tv.psnr_summary.mean - ev.fbp.psnr_summary.mean;
        emit(gap >= 2.0 && ev.tv_seconds < 300.0,
             "TV " + fmt("%.2f", ev.tv.psnr_summary.mean) + " dB vs FBP " + fmt("%.2f", ev.fbp.psnr_summary.mean) +
                 " dB (" + fmt("%+.2f", gap) + "), weight " + fmt("%g", ev.tv_lambda) + ", " +
                 fmt("%.1f", ev.tv_seconds) + " s");
    }
    {
        const double gap = ev.uar.psnr_summary.mean - ev.fbp.psnr_summary.mean;
        emit(gap >= 3.0 && d.train_seconds <= 1800.0,
             "UAR " + fmt("%.2f", ev.uar.psnr_summary.mean) + " dB vs FBP " + fmt("%.2f", ev.fbp.psnr_summary.mean) +
                 " dB (" + fmt("%+.2f", gap) + "), training " + fmt("%.0f", d.train_seconds) + " s on " +
                 read_text(d.train / "seconds").substr(read_text(d.train / "seconds").find(' ') + 1) +
                 " thread(s); PSNR clause " + (gap >= 3.0 ? "met" : "missed") + ", 1800 s clause " +
                 (d.train_seconds <= 1800.0 ? "met" : "missed"));
    }
    {
        const double gap = ev.refined.psnr_summary.mean - ev.uar.psnr_summary.mean;
        std::size_t monotone_traces = 0;
        for (const auto& t : ev.refine_traces) monotone_traces += monotone(t);
        emit(gap >= 0.1 && monotone_traces == ev.refine_traces.size(),
             "refined " + fmt("%.2f", ev.refined.psnr_summary.mean) + " dB vs UAR " +
                 fmt("%.2f", ev.uar.psnr_summary.mean) + " dB (" + fmt("%+.3f", gap) + "), " +
                 std::to_string(monotone_traces) + "/" + std::to_string(ev.refine_traces.size()) +
                 " traces non-increasing");
    }

    // 9: lambda sweep on the reduced schedule.
    {
        const config::RunConfig sc = sweep_config();
        auto sweep_inputs = kTrainInputs;
        sweep_inputs.push_back("/eval/sweep_lambdas");
        const Stage data(work / "sweep" / "data", sc, kDataInputs), runs(work / "sweep" / "runs", sc, sweep_inputs);
        if (!data.done()) {
            data.reset();
            app::gen_data(sc, data.dir(), quiet);
            data.finish();
        }
        if (!runs.done()) {
            log("training the lambda sweep (long)");
            runs.reset();
            app::sweep_lambda(sc, data.dir(), runs.dir(), verbose);
            runs.finish();
        }
        // Re-evaluate the stored models so the verdict never comes from a stale summary.
        const app::Dataset ds = app::load_data(data.dir());
        const model::Problem problem(ds.geometry);
        std::vector<eval::LambdaSweepRow> rows;
        for (double lambda : sc.eval.sweep_lambdas) {
            const auto ckpt = io::load_checkpoint(runs.dir() / ("lambda_" + io::format_double(lambda)) / "model.uarl");
            const auto r = eval::evaluate_model(problem, ckpt.gen, ckpt.critic, ds.pools.test_x, ds.pools.test_y);
            rows.push_back({lambda, r.psnr_summary.mean, r.mean_distortion, r.w1_estimate});
        }
        const auto rep = eval::summarize_sweep(rows);
        std::string detail;
        for (const auto& r : rep.rows) {
            detail += "[" + fmt("%g", r.lambda) + ": " + fmt("%.2f", r.mean_psnr) + " dB, D " +
                      fmt("%.1f", r.mean_distortion) + ", W1 " + fmt("%.4g", r.w1_estimate) + "] ";
        }
        detail += std::string("distortion ") + (rep.distortion_ordered ? "ok" : "VIOLATED") + ", W1 " +
                  (rep.w1_ordered ? "ok" : "VIOLATED") + ", PSNR minimum " + (rep.psnr_minimum_first ? "ok" : "VIOLATED");
        emit(rep.checked && rep.pass(), detail);
    }

    // 10: critic gradient step versus exact W1.
    {
        const double frac = ev.descent.improved_fraction();
        emit(frac >= 0.7, fmt("%.0f", 100.0 * frac) + "% of " + std::to_string(ev.descent.probes.size()) +
                              " probes improved by some eta");
    }

    // 12 runs two tiny pipelines; their evaluations also feed 11.
    std::vector<std::pair<std::string, eval::MarkovReport>> markov{{"desk", ev.markov}};
    std::string repro;
    {
        const config::RunConfig tc = tiny_config();
        const fs::path runs[2] = {work / "repro" / "a", work / "repro" / "b"};
        for (int r = 0; r < 2; ++r) {
            fs::remove_all(runs[r]);
            app::gen_data(tc, runs[r] / "data", quiet);
            app::train(tc, runs[r] / "data", runs[r] / "train", quiet);
            const auto e = app::evaluate(tc, runs[r] / "train" / "model.uarl", runs[r] / "data", runs[r] / "eval", quiet);
            markov.emplace_back(r == 0 ? "tiny-a" : "tiny-b", e.markov);
        }
        repro = compare_trees(runs[0], runs[1]);
    }
    {
        bool pass = true;
        double min_margin = INFINITY;
        for (const auto& [name, m] : markov) {
            pass = pass && m.pass();
            for (const auto* set : {&m.distortion, &m.critic}) {
                for (const auto& r : *set) min_margin = std::min(min_margin, r.margin());
            }
        }
        emit(pass, std::to_string(markov.size()) + " evaluation runs, smallest margin " + fmt("%.4g", min_margin));
    }
    emit(repro.empty(), repro.empty() ? "checkpoints, PGMs, CSVs and summaries byte-identical" : repro);
    return ok;
}

}  // namespace uar::checks
