#pragma once

// Line-oriented "key = value" configuration files with [section] headers and
// '#' comments, plus the typed round trip for the training configuration.

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "legan/hsi/cube_io.hpp"
#include "legan/losses/losses.hpp"
#include "legan/models/archive.hpp"
#include "legan/models/config.hpp"
#include "legan/train/adam.hpp"

namespace legan {

enum class LossVariant { ssrp, wasserstein_plain, js };

inline std::string to_string(LossVariant v) {
    switch (v) {
        case LossVariant::ssrp: return "ssrp";
        case LossVariant::wasserstein_plain: return "wasserstein_plain";
        case LossVariant::js: return "js";
    }
    throw std::logic_error("loss variant: bad enum value");
}

inline LossVariant parse_loss_variant(const std::string& s) {
    if (s == "ssrp") return LossVariant::ssrp;
    if (s == "wasserstein_plain") return LossVariant::wasserstein_plain;
    if (s == "js") return LossVariant::js;
    throw std::invalid_argument("loss variant: expected ssrp, wasserstein_plain or js, got '" + s + "'");
}

struct TrainConfig {
    GeneratorConfig gen;
    DiscriminatorConfig critic;
    EncoderConfig encoder;
    LossWeights weights;
    AdamConfig adam;
    idx scale = 2;
    idx pretrain_iters = 100;
    idx joint_iters = 500;
    idx batch_size = 8;
    idx critic_steps_per_gen = 1;
    idx eval_period = 50;
    idx checkpoint_period = 0; // 0 disables periodic checkpoints
    idx eval_samples = 16;     // held-out patches per diversity evaluation
    idx cx_pool_target = 16;   // pool critic head maps to at most this edge for the contextual term
    double clip_value = 0.05;  // weight clip of the plain Wasserstein arm
    LossVariant loss_variant = LossVariant::ssrp;
    int ablation_model = 5;
    std::uint64_t seed = 0;

    void validate() const {
        gen.validate();
        critic.validate();
        encoder.validate();
        weights.validate();
        if (gen.bands != critic.bands || gen.bands != encoder.bands)
            throw std::invalid_argument("train config: band counts of the three networks differ");
        if (gen.scale != scale) throw std::invalid_argument("train config: generator scale differs from scale");
        if (pretrain_iters < 0 || joint_iters < 0) throw std::invalid_argument("train config: negative iterations");
        if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be positive");
        if (critic_steps_per_gen < 1) throw std::invalid_argument("train config: critic_steps_per_gen must be >= 1");
        if (eval_period < 1) throw std::invalid_argument("train config: eval_period must be positive");
        if (checkpoint_period < 0) throw std::invalid_argument("train config: negative checkpoint_period");
        if (eval_samples < 2) throw std::invalid_argument("train config: eval_samples must be at least 2");
        if (cx_pool_target < 1) throw std::invalid_argument("train config: cx_pool_target must be positive");
        if (!(clip_value > 0.0)) throw std::invalid_argument("train config: clip_value must be positive");
        if (ablation_model < 1 || ablation_model > 5)
            throw std::invalid_argument("train config: ablation_model must be 1..5");
        if (!(adam.lr > 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
            !(adam.eps > 0.0))
            throw std::invalid_argument("train config: bad adam constants");
    }
};

// small networks sized so a full run fits a single-core time budget
inline TrainConfig desk_train_config(idx bands = 16, idx scale = 2, idx hr_patch = 64) {
    TrainConfig c;
    c.scale = scale;
    c.gen.bands = bands;
    c.gen.n_resblocks = 2;
    c.gen.feature_width = 8;
    c.gen.first_kernel = 5;
    c.gen.scale = scale;
    c.critic.bands = bands;
    c.critic.n_maxpool_blocks = 3;
    c.critic.base_channels = 16;
    c.critic.dense_width = 64;
    c.critic.input_size = hr_patch;
    c.encoder.bands = bands;
    c.encoder.channel_schedule = {8, 8, 16, 16, 32, 32, 64, 64};
    c.encoder.latent_dim = 64;
    return c;
}

namespace detail_cfg {

// parse "key = value" lines, prefixing keys with the active [section]
inline std::map<std::string, std::string> read_kv_sections(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::map<std::string, std::string> kv;
    std::string line, section;
    while (std::getline(in, line)) {
        const std::string s = detail::trim(line);
        if (s.empty() || s[0] == '#') continue;
        if (s.front() == '[' && s.back() == ']') {
            section = detail::trim(s.substr(1, s.size() - 2));
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw std::runtime_error("config: malformed line '" + s + "' in " + path);
        const std::string key = detail::trim(s.substr(0, eq));
        const std::string val = detail::trim(s.substr(eq + 1));
        if (key.empty()) throw std::runtime_error("config: empty key in " + path);
        kv[section.empty() ? key : section + "." + key] = val;
    }
    return kv;
}

inline const std::string& need(const std::map<std::string, std::string>& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error("config: missing key '" + key + "'");
    return it->second;
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw std::runtime_error("config: key '" + key + "' wants a boolean, got '" + v + "'");
}

} // namespace detail_cfg

inline void write_train_config(const TrainConfig& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("config: cannot write " + path);
    out << "[train]\n";
    out << "scale = " << c.scale << "\n";
    out << "pretrain_iters = " << c.pretrain_iters << "\n";
    out << "joint_iters = " << c.joint_iters << "\n";
    out << "batch_size = " << c.batch_size << "\n";
    out << "critic_steps_per_gen = " << c.critic_steps_per_gen << "\n";
    out << "eval_period = " << c.eval_period << "\n";
    out << "checkpoint_period = " << c.checkpoint_period << "\n";
    out << "eval_samples = " << c.eval_samples << "\n";
    out << "cx_pool_target = " << c.cx_pool_target << "\n";
    out << "clip_value = " << detail::format_double(c.clip_value) << "\n";
    out << "loss_variant = " << to_string(c.loss_variant) << "\n";
    out << "ablation_model = " << c.ablation_model << "\n";
    out << "seed = " << c.seed << "\n";
    out << "[weights]\n";
    out << "lambda_spectral = " << detail::format_double(c.weights.lambda_spectral) << "\n";
    out << "eta_spatial = " << detail::format_double(c.weights.eta_spatial) << "\n";
    out << "sigma_adversarial = " << detail::format_double(c.weights.sigma_adversarial) << "\n";
    out << "mu_latent = " << detail::format_double(c.weights.mu_latent) << "\n";
    out << "[adam]\n";
    out << "lr = " << detail::format_double(c.adam.lr) << "\n";
    out << "beta1 = " << detail::format_double(c.adam.beta1) << "\n";
    out << "beta2 = " << detail::format_double(c.adam.beta2) << "\n";
    out << "eps = " << detail::format_double(c.adam.eps) << "\n";
    out << "[generator]\n";
    out << "bands = " << c.gen.bands << "\n";
    out << "n_resblocks = " << c.gen.n_resblocks << "\n";
    out << "feature_width = " << c.gen.feature_width << "\n";
    out << "first_kernel = " << c.gen.first_kernel << "\n";
    out << "residual_scale = " << detail::format_double(c.gen.residual_scale) << "\n";
    out << "single_stage_upscale = " << (c.gen.single_stage_upscale ? 1 : 0) << "\n";
    out << "bicubic_skip = " << (c.gen.bicubic_skip ? 1 : 0) << "\n";
    out << "progressive_resize = " << (c.gen.progressive_resize ? 1 : 0) << "\n";
    out << "[critic]\n";
    out << "n_maxpool_blocks = " << c.critic.n_maxpool_blocks << "\n";
    out << "base_channels = " << c.critic.base_channels << "\n";
    out << "dense_width = " << c.critic.dense_width << "\n";
    out << "input_size = " << c.critic.input_size << "\n";
    out << "sigmoid_output = " << (c.critic.sigmoid_output ? 1 : 0) << "\n";
    out << "[encoder]\n";
    out << "channel_schedule = " << detail::shape_csv(c.encoder.channel_schedule) << "\n";
    out << "latent_dim = " << c.encoder.latent_dim << "\n";
    if (!out) throw std::runtime_error("config: write failed for " + path);
}

inline TrainConfig read_train_config(const std::string& path) {
    using detail_cfg::need;
    const auto kv = detail_cfg::read_kv_sections(path);
    TrainConfig c;
    c.scale = std::stoll(need(kv, "train.scale"));
    c.pretrain_iters = std::stoll(need(kv, "train.pretrain_iters"));
    c.joint_iters = std::stoll(need(kv, "train.joint_iters"));
    c.batch_size = std::stoll(need(kv, "train.batch_size"));
    c.critic_steps_per_gen = std::stoll(need(kv, "train.critic_steps_per_gen"));
    c.eval_period = std::stoll(need(kv, "train.eval_period"));
    c.checkpoint_period = std::stoll(need(kv, "train.checkpoint_period"));
    c.eval_samples = std::stoll(need(kv, "train.eval_samples"));
    c.cx_pool_target = std::stoll(need(kv, "train.cx_pool_target"));
    c.clip_value = std::stod(need(kv, "train.clip_value"));
    c.loss_variant = parse_loss_variant(need(kv, "train.loss_variant"));
    c.ablation_model = static_cast<int>(std::stoll(need(kv, "train.ablation_model")));
    c.seed = std::stoull(need(kv, "train.seed"));
    c.weights.lambda_spectral = std::stod(need(kv, "weights.lambda_spectral"));
    c.weights.eta_spatial = std::stod(need(kv, "weights.eta_spatial"));
    c.weights.sigma_adversarial = std::stod(need(kv, "weights.sigma_adversarial"));
    c.weights.mu_latent = std::stod(need(kv, "weights.mu_latent"));
    c.adam.lr = std::stod(need(kv, "adam.lr"));
    c.adam.beta1 = std::stod(need(kv, "adam.beta1"));
    c.adam.beta2 = std::stod(need(kv, "adam.beta2"));
    c.adam.eps = std::stod(need(kv, "adam.eps"));
    c.gen.bands = std::stoll(need(kv, "generator.bands"));
    c.gen.n_resblocks = std::stoll(need(kv, "generator.n_resblocks"));
    c.gen.feature_width = std::stoll(need(kv, "generator.feature_width"));
    c.gen.first_kernel = std::stoll(need(kv, "generator.first_kernel"));
    c.gen.residual_scale = std::stod(need(kv, "generator.residual_scale"));
    c.gen.single_stage_upscale = detail_cfg::parse_bool(need(kv, "generator.single_stage_upscale"), "single_stage_upscale");
    c.gen.bicubic_skip = detail_cfg::parse_bool(need(kv, "generator.bicubic_skip"), "bicubic_skip");
    c.gen.progressive_resize = detail_cfg::parse_bool(need(kv, "generator.progressive_resize"), "progressive_resize");
    c.gen.scale = c.scale;
    c.critic.bands = c.gen.bands;
    c.critic.n_maxpool_blocks = std::stoll(need(kv, "critic.n_maxpool_blocks"));
    c.critic.base_channels = std::stoll(need(kv, "critic.base_channels"));
    c.critic.dense_width = std::stoll(need(kv, "critic.dense_width"));
    c.critic.input_size = std::stoll(need(kv, "critic.input_size"));
    c.critic.sigmoid_output = detail_cfg::parse_bool(need(kv, "critic.sigmoid_output"), "sigmoid_output");
    c.encoder.bands = c.gen.bands;
    c.encoder.channel_schedule = detail::parse_shape_csv(need(kv, "encoder.channel_schedule"), "encoder schedule");
    c.encoder.latent_dim = std::stoll(need(kv, "encoder.latent_dim"));
    c.validate();
    return c;
}

// canonical text form, used to compare configurations for checkpoint safety
inline std::string config_fingerprint(const TrainConfig& c) {
    std::ostringstream os;
    os << c.scale << "|" << c.gen.bands << "|" << c.gen.n_resblocks << "|" << c.gen.feature_width << "|"
       << c.gen.first_kernel << "|" << detail::format_double(c.gen.residual_scale) << "|" << c.gen.single_stage_upscale
       << "|" << c.gen.bicubic_skip << "|" << c.gen.progressive_resize << "|" << c.critic.n_maxpool_blocks << "|"
       << c.critic.base_channels << "|" << c.critic.dense_width << "|" << c.critic.input_size << "|"
       << c.critic.sigmoid_output << "|" << detail::shape_csv(c.encoder.channel_schedule) << "|"
       << c.encoder.latent_dim << "|" << c.ablation_model << "|" << to_string(c.loss_variant);
    return os.str();
}

} // namespace legan
