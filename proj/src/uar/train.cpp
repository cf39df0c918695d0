#include "uar/train.hpp"

#include <cmath>
#include <cstdio>

#include "uar/metrics.hpp"
#include "uar/rng.hpp"

namespace uar::model {

namespace {

constexpr std::uint64_t kInitStream = 10;
constexpr std::uint64_t kBatchStream = 100;

void check_finite(double v, const char* what, int phase, std::size_t step) {
    if (!std::isfinite(v)) {
        throw TrainingError(std::string("non-finite ") + what + " loss in phase " + std::to_string(phase) +
                            " at step " + std::to_string(step));
    }
}

}  // namespace

void TrainConfig::validate() const {
    if (!(lambda >= 0.0) || !(lambda_gp >= 0.0)) throw std::invalid_argument("train: lambda and lambda_gp must be >= 0");
    if (batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
    for (double r : lr) {
        if (!(r > 0.0)) throw std::invalid_argument("train: learning rates must be positive");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw std::invalid_argument("train: Adam betas must lie in [0, 1)");
    }
    if (generator_updates == 0) throw std::invalid_argument("train: generator_updates must be positive");
}

double critic_step(Critic& critic, nn::AdamState& opt, const std::vector<tomo::Image>& batch_x,
                   const std::vector<tomo::Image>& batch_u, double lambda_gp, std::uint64_t seed, GpMode mode) {
    ad::Graph graph(ad::GraphOptions{mode == GpMode::exact, false});
    const nn::ParamSet bound = nn::bind(graph, critic.params);
    const ad::Tensor loss = critic_loss(graph, critic.config, bound, batch_x, batch_u, lambda_gp, seed, mode);
    const double value = loss.item();
    if (!std::isfinite(value)) return value;
    nn::adam_step(critic.params, nn::gradients(graph, loss, bound), opt);
    return value;
}

double generator_step(Generator& gen, nn::AdamState& opt, const Problem& problem, const Critic& critic,
                      const std::vector<tomo::Sinogram>& batch_y, double lambda, FidelityScale scale) {
    ad::Graph graph;
    const nn::ParamSet bound = nn::bind(graph, gen.params);
    const ad::Tensor loss = generator_loss(problem, gen.config, bound, critic, batch_y, lambda, scale);
    const double value = loss.item();
    if (!std::isfinite(value)) return value;
    nn::adam_step(gen.params, nn::gradients(graph, loss, bound), opt);
    return value;
}

double critic_gap(const Problem& problem, const Generator& gen, const Critic& critic,
                  const std::vector<tomo::Sinogram>& ys, const std::vector<tomo::Image>& xs) {
    if (ys.empty() || xs.empty()) return 0.0;
    double a = 0.0, b = 0.0;
    for (const auto& y : ys) a += critic_value(critic, reconstruct(problem, gen, y));
    for (const auto& x : xs) b += critic_value(critic, x);
    return a / static_cast<double>(ys.size()) - b / static_cast<double>(xs.size());
}

TrainResult train(const data::DatasetPools& pools, const Problem& problem, const GeneratorConfig& gcfg,
                  const CriticConfig& ccfg, const TrainConfig& cfg, const TrainHooks& hooks) {
    cfg.validate();
    if (pools.train_x.empty() || pools.train_y.empty()) throw std::invalid_argument("train: empty pools");
    const std::size_t nx = pools.train_x.size(), ny = pools.train_y.size(), nb = cfg.batch_size;

    TrainState state;
    state.gen = make_generator(gcfg, derive_seed(cfg.seed, kInitStream, 0));
    state.critic = make_critic(ccfg, derive_seed(cfg.seed, kInitStream, 1));
    TrainLog log;

    // Phase 1 pairs ground truth with FBP reconstructions.
    std::vector<tomo::Image> fbp_y(ny);
    for (std::size_t i = 0; i < ny; ++i) fbp_y[i] = problem.fbp(pools.train_y[i]);

    const std::size_t probe = std::min({cfg.probe_size, nx, ny});
    const std::vector<tomo::Sinogram> probe_y(pools.train_y.begin(), pools.train_y.begin() + probe);
    const std::vector<tomo::Image> probe_x(pools.train_x.begin(), pools.train_x.begin() + probe);
    const std::size_t nval = std::min(cfg.validation_size, pools.test_x.size());

    auto say = [&](const std::string& msg) {
        if (hooks.log) hooks.log(msg);
    };
    auto emit = [&](const std::string& tag) {
        if (hooks.checkpoint) hooks.checkpoint(tag, state);
    };
    auto end_epoch = [&](int phase, std::size_t epoch) {
        EpochRecord rec;
        rec.phase = phase;
        rec.epoch = epoch;
        if (nval > 0) {
            double total = 0.0;
            for (std::size_t i = 0; i < nval; ++i) {
                total += eval::psnr(reconstruct(problem, state.gen, pools.test_y[i]), pools.test_x[i]);
            }
            rec.validation_psnr = total / static_cast<double>(nval);
        }
        rec.w1_estimate = critic_gap(problem, state.gen, state.critic, probe_y, probe_x);
        log.epochs.push_back(rec);
        char buf[160];
        std::snprintf(buf, sizeof buf, "phase %d epoch %zu: validation PSNR %.3f dB, critic gap %.5f", phase, epoch,
                      rec.validation_psnr, rec.w1_estimate);
        say(buf);
        if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
            emit("phase" + std::to_string(phase) + "-epoch" + std::to_string(epoch));
        }
    };
    auto batch_rng = [&](int phase, std::size_t step, std::size_t sub) {
        return CounterRng(derive_seed(cfg.seed, kBatchStream + 10 * static_cast<std::uint64_t>(phase) + sub, step));
    };
    auto draw_x = [&](CounterRng& rng) {
        std::vector<std::size_t> idx(nb);
        for (auto& i : idx) i = rng.below(nx);
        return idx;
    };
    auto draw_y = [&](CounterRng& rng) {
        std::vector<std::size_t> idx(nb);
        for (auto& i : idx) i = rng.below(ny);
        return idx;
    };
    auto gen_update = [&](int phase, std::size_t step, std::size_t sub) {
        CounterRng rng = batch_rng(phase, step, sub);
        std::vector<tomo::Sinogram> by;
        for (auto i : draw_y(rng)) by.push_back(pools.train_y[i]);
        const double v = generator_step(state.gen, state.gen_opt, problem, state.critic, by, cfg.lambda, cfg.fidelity);
        check_finite(v, "generator", phase, step);
        log.losses.push_back({phase, step, 'g', v});
    };
    auto critic_update = [&](int phase, std::size_t step, bool use_generator) {
        CounterRng rng = batch_rng(phase, step, 0);
        std::vector<tomo::Image> bx, bu;
        for (auto i : draw_x(rng)) bx.push_back(pools.train_x[i]);
        for (auto i : draw_y(rng)) {
            bu.push_back(use_generator ? reconstruct(problem, state.gen, pools.train_y[i]) : fbp_y[i]);
        }
        const double v = critic_step(state.critic, state.critic_opt, bx, bu, cfg.lambda_gp, rng.next_u64(), cfg.gp_mode);
        check_finite(v, "critic", phase, step);
        log.losses.push_back({phase, step, 'c', v});
    };

    const std::size_t per_epoch = cfg.steps_per_epoch(nx);
    for (int phase = 1; phase <= 3; ++phase) {
        const std::size_t epochs = cfg.epochs[phase - 1];
        const double lr = cfg.lr[phase - 1];
        state.phase = phase;
        state.step = 0;
        state.critic_opt = nn::AdamState::for_params(state.critic.params, lr, cfg.beta1, cfg.beta2);
        state.gen_opt = nn::AdamState::for_params(state.gen.params, lr, cfg.beta1, cfg.beta2);
        say("phase " + std::to_string(phase) + ": " + std::to_string(epochs * per_epoch) + " steps");
        for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
            for (std::size_t k = 0; k < per_epoch; ++k) {
                const std::size_t step = state.step;
                if (phase == 1) {
                    critic_update(phase, step, false);
                } else if (phase == 2) {
                    gen_update(phase, step, 1);
                } else {
                    critic_update(phase, step, true);
                    for (std::size_t u = 0; u < cfg.generator_updates; ++u) gen_update(phase, step, 1 + u);
                }
                ++state.step;
            }
            end_epoch(phase, epoch);
        }
        emit("phase" + std::to_string(phase));
    }
    return {std::move(state.gen), std::move(state.critic), std::move(log)};
}

}  // namespace uar::model
