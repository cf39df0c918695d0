#include "uar/config.hpp"

#include <cmath>
#include <concepts>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "uar/io.hpp"

namespace uar::config {

using nlohmann::json;

namespace {

// Reads typed fields from one JSON object and rejects keys nobody asked for.
class Section {
public:
    Section(const json& parent, const std::string& name) : name_(name) {
        if (!parent.contains(name)) return;
        obj_ = &parent.at(name);
        if (!obj_->is_object()) throw ConfigError(name + ": expected an object");
    }

    void get(const char* key, double& out) {
        if (const json* v = find(key)) {
            if (!v->is_number()) fail(key, "expected a number");
            out = v->get<double>();
            if (!std::isfinite(out)) fail(key, "must be finite");
        }
    }
    template <std::unsigned_integral T>
    void get(const char* key, T& out) {
        get_unsigned(key, out);
    }
    void get(const char* key, std::string& out) {
        if (const json* v = find(key)) {
            if (!v->is_string()) fail(key, "expected a string");
            out = v->get<std::string>();
        }
    }
    void get(const char* key, std::vector<double>& out) {
        if (const json* v = find(key)) {
            if (!v->is_array()) fail(key, "expected an array of numbers");
            out.clear();
            for (const auto& e : *v) {
                if (!e.is_number()) fail(key, "expected an array of numbers");
                out.push_back(e.get<double>());
            }
        }
    }
    template <std::size_t N, class T>
    void get(const char* key, T (&out)[N]) {
        if (const json* v = find(key)) {
            if (!v->is_array() || v->size() != N) fail(key, "expected an array of " + std::to_string(N) + " numbers");
            for (std::size_t i = 0; i < N; ++i) {
                const auto& e = (*v)[i];
                if constexpr (std::is_floating_point_v<T>) {
                    if (!e.is_number()) fail(key, "expected numbers");
                    out[i] = e.get<T>();
                } else {
                    if (!e.is_number_unsigned()) fail(key, "expected non-negative integers");
                    out[i] = e.get<T>();
                }
            }
        }
    }
    void finish() const {
        if (!obj_) return;
        for (const auto& [key, _] : obj_->items()) {
            if (!seen_.count(key)) throw ConfigError(name_ + ": unknown key '" + key + "'");
        }
    }

private:
    const json* find(const char* key) {
        seen_.insert(key);
        if (!obj_ || !obj_->contains(key)) return nullptr;
        return &obj_->at(key);
    }
    template <class T>
    void get_unsigned(const char* key, T& out) {
        if (const json* v = find(key)) {
            if (!v->is_number_unsigned()) fail(key, "expected a non-negative integer");
            out = v->get<T>();
        }
    }
    [[noreturn]] void fail(const char* key, const std::string& msg) const {
        throw ConfigError(name_ + "." + key + ": " + msg);
    }

    std::string name_;
    const json* obj_ = nullptr;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

}  // namespace

void RunConfig::validate() const {
    require(geometry.n >= 16, "geometry.n must be >= 16");
    require(geometry.n_angles >= 1, "geometry.n_angles must be >= 1");
    require(geometry.det_spacing > 0.0, "geometry.det_spacing must be positive");
    try {
        geometry.build().validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("geometry: ") + e.what());
    }
    require(noise.sigma_e >= 0.0, "noise.sigma_e must be >= 0");
    require(generator.kernel % 2 == 1 && critic.kernel % 2 == 1, "kernel sizes must be odd");
    require(generator.channels >= 1, "generator.channels must be >= 1");
    require(critic.conv_layers >= 1 && critic.base_channels >= 1, "critic needs at least one conv layer and channel");
    require(critic.slope >= 0.0, "critic.slope must be >= 0");
    try {
        train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    require(refine.lambda_prime >= 0.0 && refine.sigma_tik >= 0.0, "refine: lambda_prime and sigma_tik must be >= 0");
    require(refine.initial_step > 0.0 && refine.shrink > 0.0 && refine.shrink < 1.0,
            "refine: initial_step must be positive and shrink in (0, 1)");
    require(refine.sufficient_decrease > 0.0 && refine.sufficient_decrease < 1.0,
            "refine: sufficient_decrease must lie in (0, 1)");
    require(refine.fidelity_weight >= 0.0, "refine.fidelity_weight must be >= 0");
    for (std::size_t i = 1; i < eval.sweep_lambdas.size(); ++i) {
        require(eval.sweep_lambdas[i] > eval.sweep_lambdas[i - 1], "eval.sweep_lambdas must be strictly increasing");
    }
    for (double l : eval.sweep_lambdas) require(l >= 0.0, "eval.sweep_lambdas must be >= 0");
    for (double e : eval.descent_etas) require(e > 0.0, "eval.descent_etas must be positive");
    for (double l : eval.tv_lambda_grid) require(l > 0.0, "eval.tv_lambda_grid must be positive");
    require(eval.tv_balance > 0.0, "eval.tv_balance must be positive");
    require(!eval.tv_lambda_grid.empty() || eval.tv_lambda > 0.0, "eval: empty TV grid and no fixed tv_lambda");
    require(eval.tv_lambda >= 0.0, "eval.tv_lambda must be >= 0");
    require(eval.tv_tuning_images > 0 || eval.tv_lambda > 0.0, "eval: tv_tuning_images must be positive without a fixed tv_lambda");
}

RunConfig parse(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config: top level must be an object");
    static const std::set<std::string> sections{"geometry", "noise",  "data",   "generator",
                                                "critic",   "train",  "refine", "eval"};
    for (const auto& [key, _] : root.items()) {
        if (!sections.count(key)) throw ConfigError("config: unknown section '" + key + "'");
    }

    RunConfig c;
    {
        Section s(root, "geometry");
        s.get("n", c.geometry.n);
        s.get("n_angles", c.geometry.n_angles);
        s.get("n_det", c.geometry.n_det);
        s.get("det_spacing", c.geometry.det_spacing);
        s.finish();
    }
    {
        Section s(root, "noise");
        s.get("sigma_e", c.noise.sigma_e);
        s.finish();
    }
    {
        Section s(root, "data");
        s.get("train_x", c.data.counts.x);
        s.get("train_y", c.data.counts.y);
        s.get("test", c.data.counts.test);
        s.get("master_seed", c.data.master_seed);
        s.finish();
    }
    {
        Section s(root, "generator");
        s.get("layers", c.generator.layers);
        s.get("channels", c.generator.channels);
        s.get("kernel", c.generator.kernel);
        s.get("prelu_init", c.generator.prelu_init);
        s.get("step_init", c.generator.step_init);
        s.finish();
    }
    {
        Section s(root, "critic");
        s.get("conv_layers", c.critic.conv_layers);
        s.get("base_channels", c.critic.base_channels);
        s.get("kernel", c.critic.kernel);
        s.get("hidden", c.critic.hidden);
        s.get("slope", c.critic.slope);
        s.finish();
    }
    {
        Section s(root, "train");
        auto& t = c.train;
        s.get("lambda", t.lambda);
        s.get("lambda_gp", t.lambda_gp);
        s.get("batch_size", t.batch_size);
        s.get("epochs", t.epochs);
        s.get("lr", t.lr);
        s.get("beta1", t.beta1);
        s.get("beta2", t.beta2);
        s.get("generator_updates", t.generator_updates);
        s.get("seed", t.seed);
        std::string mode = model::gp_mode_name(t.gp_mode);
        s.get("gp_mode", mode);
        try {
            t.gp_mode = model::parse_gp_mode(mode);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("train.gp_mode: ") + e.what());
        }
        std::string scale = model::fidelity_scale_name(t.fidelity);
        s.get("fidelity", scale);
        try {
            t.fidelity = model::parse_fidelity_scale(scale);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("train.fidelity: ") + e.what());
        }
        s.get("checkpoint_every", t.checkpoint_every);
        s.get("probe_size", t.probe_size);
        s.get("validation_size", t.validation_size);
        s.finish();
    }
    {
        Section s(root, "refine");
        auto& r = c.refine;
        s.get("lambda_prime", r.lambda_prime);
        s.get("sigma_tik", r.sigma_tik);
        s.get("max_iters", r.max_iters);
        s.get("initial_step", r.initial_step);
        s.get("shrink", r.shrink);
        s.get("sufficient_decrease", r.sufficient_decrease);
        s.get("min_step", r.min_step);
        s.get("fidelity_weight", r.fidelity_weight);
        s.finish();
    }
    {
        Section s(root, "eval");
        auto& e = c.eval;
        s.get("sweep_lambdas", e.sweep_lambdas);
        s.get("descent_etas", e.descent_etas);
        s.get("descent_probes", e.descent_probes);
        s.get("descent_batch", e.descent_batch);
        s.get("descent_seed", e.descent_seed);
        s.get("tv_lambda_grid", e.tv_lambda_grid);
        s.get("tv_iters", e.tv_iters);
        s.get("tv_balance", e.tv_balance);
        s.get("tv_tuning_images", e.tv_tuning_images);
        s.get("tv_lambda", e.tv_lambda);
        s.finish();
    }
    c.validate();
    return c;
}

RunConfig load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    try {
        return parse(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string to_json(const RunConfig& c) {
    const auto& t = c.train;
    const auto& r = c.refine;
    const auto& e = c.eval;
    json j;
    j["geometry"] = {{"n", c.geometry.n},
                     {"n_angles", c.geometry.n_angles},
                     {"n_det", c.geometry.n_det},
                     {"det_spacing", c.geometry.det_spacing}};
    j["noise"] = {{"sigma_e", c.noise.sigma_e}};
    j["data"] = {{"train_x", c.data.counts.x},
                 {"train_y", c.data.counts.y},
                 {"test", c.data.counts.test},
                 {"master_seed", c.data.master_seed}};
    j["generator"] = {{"layers", c.generator.layers},
                      {"channels", c.generator.channels},
                      {"kernel", c.generator.kernel},
                      {"prelu_init", c.generator.prelu_init},
                      {"step_init", c.generator.step_init}};
    j["critic"] = {{"conv_layers", c.critic.conv_layers},
                   {"base_channels", c.critic.base_channels},
                   {"kernel", c.critic.kernel},
                   {"hidden", c.critic.hidden},
                   {"slope", c.critic.slope}};
    j["train"] = {{"lambda", t.lambda},
                  {"lambda_gp", t.lambda_gp},
                  {"batch_size", t.batch_size},
                  {"epochs", {t.epochs[0], t.epochs[1], t.epochs[2]}},
                  {"lr", {t.lr[0], t.lr[1], t.lr[2]}},
                  {"beta1", t.beta1},
                  {"beta2", t.beta2},
                  {"generator_updates", t.generator_updates},
                  {"seed", t.seed},
                  {"gp_mode", model::gp_mode_name(t.gp_mode)},
                  {"fidelity", model::fidelity_scale_name(t.fidelity)},
                  {"checkpoint_every", t.checkpoint_every},
                  {"probe_size", t.probe_size},
                  {"validation_size", t.validation_size}};
    j["refine"] = {{"lambda_prime", r.lambda_prime},
                   {"sigma_tik", r.sigma_tik},
                   {"max_iters", r.max_iters},
                   {"initial_step", r.initial_step},
                   {"shrink", r.shrink},
                   {"sufficient_decrease", r.sufficient_decrease},
                   {"min_step", r.min_step},
                   {"fidelity_weight", r.fidelity_weight}};
    j["eval"] = {{"sweep_lambdas", e.sweep_lambdas},
                 {"descent_etas", e.descent_etas},
                 {"descent_probes", e.descent_probes},
                 {"descent_batch", e.descent_batch},
                 {"descent_seed", e.descent_seed},
                 {"tv_lambda_grid", e.tv_lambda_grid},
                 {"tv_iters", e.tv_iters},
                 {"tv_balance", e.tv_balance},
                 {"tv_tuning_images", e.tv_tuning_images},
                 {"tv_lambda", e.tv_lambda}};
    return j.dump(2) + "\n";
}

void save(const std::filesystem::path& path, const RunConfig& cfg) {
    const std::string text = to_json(cfg);
    io::write_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace uar::config
