#pragma once

// Adversarial training loop: critic updates alternate with a joint
// generator/encoder update, after a warm-up phase that pretrains the critic
// against bicubic fakes and the encoder on a reconstruction task. Also:
// diversity evaluation, run checkpointing and mode-collapse diagnostics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "legan/hsi/batch.hpp"
#include "legan/hsi/dataset.hpp"
#include "legan/hsi/degrade.hpp"
#include "legan/losses/losses.hpp"
#include "legan/metrics/diversity.hpp"
#include "legan/metrics/fidelity.hpp"
#include "legan/models/archive.hpp"
#include "legan/models/discriminator.hpp"
#include "legan/models/encoder.hpp"
#include "legan/models/generator.hpp"
#include "legan/train/adam.hpp"
#include "legan/train/config_io.hpp"

namespace legan {

enum class CriticObjective { wasserstein, bce_raw, bce_prob };
enum class GenObjective { mse_adv, mse_adv_latent, adv_wasserstein, adv_js, composite };

// the architecture and objectives actually trained, after the ablation-model
// and loss-variant switches are applied to a base configuration
struct EffectiveSetup {
    int model = 5;
    GeneratorConfig gen;
    DiscriminatorConfig critic;
    EncoderConfig encoder;
    bool use_encoder = true;
    bool clip_critic = false;
    CriticObjective critic_obj = CriticObjective::wasserstein;
    GenObjective gen_obj = GenObjective::composite;
    LossWeights weights; // applied to the logged components; total is their weighted sum

    std::string describe() const {
        auto gen_obj_name = [&] {
            switch (gen_obj) {
                case GenObjective::mse_adv: return "mse+adversarial";
                case GenObjective::mse_adv_latent: return "mse+adversarial+latent";
                case GenObjective::adv_wasserstein: return "adversarial_wasserstein";
                case GenObjective::adv_js: return "adversarial_js";
                case GenObjective::composite: return "spectral+texture+adversarial+latent";
            }
            return "";
        };
        auto critic_obj_name = [&] {
            switch (critic_obj) {
                case CriticObjective::wasserstein: return "score_gap";
                case CriticObjective::bce_raw: return "cross_entropy_on_scores";
                case CriticObjective::bce_prob: return "cross_entropy_on_probabilities";
            }
            return "";
        };
        std::ostringstream os;
        os << "model = " << model << "\n";
        os << "spectral_convs = full_band_stack\n";
        os << "upscale = " << (gen.progressive_resize ? "resize_convolution" : "subpixel_shuffle") << "\n";
        os << "critic_output = " << (critic.sigmoid_output ? "probability" : "raw_score") << "\n";
        os << "latent_encoder = " << (use_encoder ? "on" : "off") << "\n";
        os << "generator_objective = " << gen_obj_name() << "\n";
        os << "critic_objective = " << critic_obj_name() << "\n";
        os << "weight_clip = " << (clip_critic ? "on" : "off") << "\n";
        return os.str();
    }
};

inline EffectiveSetup resolve_setup(const TrainConfig& cfg) {
    cfg.validate();
    EffectiveSetup s;
    s.model = cfg.ablation_model;
    s.gen = cfg.gen;
    s.critic = cfg.critic;
    s.encoder = cfg.encoder;
    s.gen.progressive_resize = (s.model == 1);
    s.critic.sigmoid_output = (s.model <= 2);
    s.use_encoder = (s.model >= 4);
    if (s.model <= 4) {
        s.gen_obj = (s.model == 4) ? GenObjective::mse_adv_latent : GenObjective::mse_adv;
        s.critic_obj = s.critic.sigmoid_output ? CriticObjective::bce_prob : CriticObjective::wasserstein;
        s.weights = LossWeights{0.0, cfg.weights.eta_spatial, cfg.weights.sigma_adversarial,
                                s.model == 4 ? cfg.weights.mu_latent : 0.0};
    } else {
        switch (cfg.loss_variant) {
            case LossVariant::ssrp:
                s.gen_obj = GenObjective::composite;
                s.critic_obj = CriticObjective::wasserstein;
                s.weights = cfg.weights;
                break;
            case LossVariant::wasserstein_plain:
                s.gen_obj = GenObjective::adv_wasserstein;
                s.critic_obj = CriticObjective::wasserstein;
                s.clip_critic = true;
                s.weights = LossWeights{0.0, 0.0, 1.0, 0.0};
                break;
            case LossVariant::js:
                s.gen_obj = GenObjective::adv_js;
                s.critic_obj = CriticObjective::bce_raw;
                s.weights = LossWeights{0.0, 0.0, 1.0, 0.0};
                break;
        }
    }
    s.gen.validate();
    s.critic.validate();
    s.encoder.validate();
    return s;
}

// raised when the training loss leaves the finite range; callers translate
// this into the numerical-abort exit path
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CurveRow {
    idx iter = 0;
    double spectral = 0.0;
    double spatial = 0.0;
    double adversarial = 0.0;
    double latent = 0.0;
    double total = 0.0;
    double is_score = std::numeric_limits<double>::quiet_NaN(); // filled on evaluation iterations
    double fid = std::numeric_limits<double>::quiet_NaN();
};

inline void write_curves_csv(const std::vector<CurveRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("curves: cannot write " + path);
    out << "iter,spectral,spatial,adversarial,latent,total,is,fid\n";
    for (const auto& r : rows) {
        out << r.iter << "," << detail::format_double(r.spectral) << "," << detail::format_double(r.spatial) << ","
            << detail::format_double(r.adversarial) << "," << detail::format_double(r.latent) << ","
            << detail::format_double(r.total);
        out << ",";
        if (std::isfinite(r.is_score)) out << detail::format_double(r.is_score);
        out << ",";
        if (std::isfinite(r.fid)) out << detail::format_double(r.fid);
        out << "\n";
    }
    if (!out) throw std::runtime_error("curves: write failed for " + path);
}

inline std::vector<CurveRow> read_curves_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("curves: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("curves: empty file " + path);
    std::vector<CurveRow> rows;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        while (cells.size() < 8) cells.emplace_back();
        if (cells.size() != 8) throw std::runtime_error("curves: malformed row '" + line + "'");
        CurveRow r;
        r.iter = std::stoll(cells[0]);
        r.spectral = std::stod(cells[1]);
        r.spatial = std::stod(cells[2]);
        r.adversarial = std::stod(cells[3]);
        r.latent = std::stod(cells[4]);
        r.total = std::stod(cells[5]);
        if (!detail::trim(cells[6]).empty()) r.is_score = std::stod(cells[6]);
        if (!detail::trim(cells[7]).empty()) r.fid = std::stod(cells[7]);
        if (!rows.empty() && r.iter <= rows.back().iter)
            throw std::runtime_error("curves: iteration column must increase in " + path);
        rows.push_back(r);
    }
    return rows;
}

struct TrainState {
    TrainConfig config;
    GeneratorWeights gen;
    DiscriminatorWeights critic;
    EncoderWeights encoder;
    AdamMoments opt_gen, opt_critic, opt_encoder;
    Rng rng;
    idx iter = 0;
    bool pretrained = false;
    std::vector<CurveRow> curves;
};

inline TrainState init_train_state(const TrainConfig& cfg) {
    const EffectiveSetup su = resolve_setup(cfg);
    TrainState st;
    st.config = cfg;
    st.gen = init_weights(su.gen, mix_seed(cfg.seed, 0x67656eULL));
    st.critic = init_weights(su.critic, mix_seed(cfg.seed, 0x637274ULL));
    st.encoder = init_weights(su.encoder, mix_seed(cfg.seed, 0x656e63ULL));
    st.opt_gen = init_adam(st.gen.params);
    st.opt_critic = init_adam(st.critic.params);
    st.opt_encoder = init_adam(st.encoder.params);
    st.rng = Rng(mix_seed(cfg.seed, 0x747261696eULL));
    return st;
}

namespace detail_train {

inline std::vector<idx> sample_picks(Rng& rng, const std::vector<idx>& pool, idx n) {
    std::vector<idx> out;
    out.reserve(static_cast<size_t>(n));
    for (idx i = 0; i < n; ++i) out.push_back(pool[rng.below(pool.size())]);
    return out;
}

inline Tensor<float> gather_batch(const PatchPairDataset& data, const std::vector<idx>& picks, bool high_res) {
    std::vector<HSICube> sel;
    sel.reserve(picks.size());
    for (idx i : picks) {
        const auto& p = data.pairs[static_cast<size_t>(i)];
        sel.push_back(high_res ? p.hr : p.lr);
    }
    return to_batch(sel);
}

// smallest pooling factor that divides the edge and brings it to the target
inline idx pool_divisor(idx edge, idx target) {
    for (idx k = (edge + target - 1) / target; k < edge; ++k)
        if (edge % k == 0) return k;
    return edge;
}

inline std::vector<const Tensor<float>*> collect_grads(const Tape<float>& t, const BoundParams<float>& p,
                                                       const ParamStore& store) {
    std::vector<const Tensor<float>*> g(store.items.size(), nullptr);
    for (size_t i = 0; i < store.items.size(); ++i) {
        const auto& item = store.items[i];
        if (!item.trainable || item.buffer) continue;
        const Var<float> v = p.by_index[i];
        if (v.valid() && t.needs_grad(v)) g[i] = &t.grad(v);
    }
    return g;
}

inline double scalar(const Tape<float>& t, Var<float> v) { return static_cast<double>(t.val(v)[0]); }

// mean per-channel activation of the critic's flattened last block, used as
// the feature embedding for diversity metrics
inline Tensor<double> critic_gap_features(const DiscriminatorWeights& critic, const Tensor<float>& batch) {
    const auto taps = discriminator_forward(critic, batch);
    const idx n = taps.penultimate.dim(0);
    const idx c = critic.config.block_channels(critic.config.n_maxpool_blocks - 1);
    const idx per = taps.penultimate.dim(1) / c;
    Tensor<double> out({n, c});
    for (idx i = 0; i < n; ++i)
        for (idx ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            for (idx j = 0; j < per; ++j) acc += taps.penultimate.at2(i, ch * per + j);
            out.at2(i, ch) = acc / static_cast<double>(per);
        }
    return out;
}

} // namespace detail_train

// one critic update against a prepared fake batch; returns the critic loss
inline double critic_step_on(TrainState& st, const EffectiveSetup& su, const Tensor<float>& real_hr,
                             const Tensor<float>& fake_hr) {
    Tape<float> t;
    auto p = bind_params_mut(t, st.critic.params);
    auto real = discriminator_graph(t, st.critic.config, p, t.constant(real_hr), true);
    auto fake = discriminator_graph(t, st.critic.config, p, t.constant(fake_hr), true);
    Var<float> loss;
    switch (su.critic_obj) {
        case CriticObjective::wasserstein:
            loss = critic_loss(t, real.score, fake.score);
            break;
        case CriticObjective::bce_raw:
            loss = js_gan_losses(t, real.score, fake.score).first;
            break;
        case CriticObjective::bce_prob: {
            auto log_real = ad::mean_all(t, ad::log_(t, ad::add_scalar(t, real.score, 1e-12f)));
            auto one_minus = ad::add_scalar(t, ad::neg(t, fake.score), 1.0f);
            auto log_fake = ad::mean_all(t, ad::log_(t, ad::add_scalar(t, one_minus, 1e-12f)));
            loss = ad::neg(t, ad::add(t, log_real, log_fake));
            break;
        }
    }
    t.backward(loss);
    adam_step(st.critic.params, detail_train::collect_grads(t, p, st.critic.params), st.opt_critic, st.config.adam);
    if (su.clip_critic) clip_weights(st.critic.params, static_cast<float>(st.config.clip_value));
    return detail_train::scalar(t, loss);
}

// one generator (and, when coupled, encoder) update; the returned breakdown
// holds the unweighted components and their weighted sum in double precision
inline LossBreakdown generator_update(TrainState& st, const EffectiveSetup& su, const Tensor<float>& lr_b,
                                      const Tensor<float>& hr_b) {
    const GeneratorConfig& gcfg = st.gen.config;
    const idx hr_h = hr_b.dim(2), hr_w = hr_b.dim(3);

    Tape<float> t;
    auto gp = bind_params(t, st.gen.params, true);
    Var<float> skip;
    if (gcfg.bicubic_skip) skip = t.constant(bicubic_resize_batch(lr_b, hr_h, hr_w));
    auto sr = generator_graph(t, gcfg, gp, t.constant(lr_b), skip);

    // critic weights stay constant here; gradients flow through its graph
    // into the generator output
    auto dp = bind_params(t, st.critic.params, false);
    auto fake = discriminator_graph(t, st.critic.config, dp, sr, false);

    const auto zero = [&t] { return t.constant(Tensor<float>({1}, 0.0f)); };
    Var<float> spectral = zero(), spatial = zero(), adversarial, latent = zero();

    if (su.critic.sigmoid_output)
        adversarial = ad::neg(t, ad::mean_all(t, ad::log_(t, ad::add_scalar(t, fake.score, 1e-12f))));
    else if (su.gen_obj == GenObjective::adv_js)
        adversarial = ad::neg(t, ad::mean_all(t, ad::log_sigmoid(t, fake.score)));
    else
        adversarial = generator_adversarial_loss(t, fake.score);

    // a zero latent weight cannot move the encoder, so skip the dead branch
    BoundParams<float> ep;
    const bool train_encoder = su.use_encoder && su.weights.mu_latent > 0.0;
    if (train_encoder) {
        ep = bind_params(t, st.encoder.params, true);
        auto z_sr = encoder_graph(t, st.encoder.config, ep, sr);
        auto z_hr = t.constant(encoder_forward(st.encoder, hr_b));
        latent = latent_reg_loss(t, z_hr, z_sr);
    }

    if (su.gen_obj == GenObjective::composite) {
        const auto hr_taps = discriminator_forward(st.critic, hr_b);
        const idx k = detail_train::pool_divisor(t.val(fake.feat_mu).dim(2), st.config.cx_pool_target);
        auto mu_sr = fake.feat_mu;
        auto mu_hr = t.constant(hr_taps.feat_mu);
        if (k > 1) {
            mu_sr = ad::avg_pool2d(t, mu_sr, k);
            mu_hr = ad::avg_pool2d(t, mu_hr, k);
        }
        spectral = spectral_contextual_loss(t, mu_sr, mu_hr, gcfg.bands);
        spatial = spatial_texture_loss(t, fake.feat_phi, t.constant(hr_taps.feat_phi));
    } else if (su.gen_obj == GenObjective::mse_adv || su.gen_obj == GenObjective::mse_adv_latent) {
        auto diff = ad::sub(t, sr, t.constant(hr_b));
        spatial = ad::mean_all(t, ad::mul(t, diff, diff));
    }

    const auto parts = ssrp_loss(t, spectral, spatial, adversarial, latent, su.weights);
    t.backward(parts.total);
    adam_step(st.gen.params, detail_train::collect_grads(t, gp, st.gen.params), st.opt_gen, st.config.adam);
    if (train_encoder)
        adam_step(st.encoder.params, detail_train::collect_grads(t, ep, st.encoder.params), st.opt_encoder,
                  st.config.adam);

    return make_breakdown(detail_train::scalar(t, spectral), detail_train::scalar(t, spatial),
                          detail_train::scalar(t, adversarial), detail_train::scalar(t, latent), su.weights);
}

// warm-up: the critic learns to separate real patches from bicubic fakes,
// and the encoder learns to summarize real patches (through a throwaway
// linear decoder reconstructing a pooled copy of its input)
inline void pretrain(TrainState& st, const PatchPairDataset& data) {
    const EffectiveSetup su = resolve_setup(st.config);
    const auto pool = data.indices(SplitTag::train);
    if (pool.empty()) throw std::invalid_argument("pretrain: dataset has no training pairs");

    ParamStore dec;
    AdamMoments dec_opt;
    idx rec_edge = 0;

    for (idx it = 0; it < st.config.pretrain_iters; ++it) {
        const auto picks = detail_train::sample_picks(st.rng, pool, st.config.batch_size);
        const auto hr_b = detail_train::gather_batch(data, picks, true);
        const auto lr_b = detail_train::gather_batch(data, picks, false);
        critic_step_on(st, su, hr_b, bicubic_resize_batch(lr_b, hr_b.dim(2), hr_b.dim(3)));

        if (!su.use_encoder) continue;
        if (rec_edge == 0) {
            for (idx e : {8, 4, 2, 1})
                if (hr_b.dim(2) % e == 0 && hr_b.dim(3) % e == 0) {
                    rec_edge = e;
                    break;
                }
            Rng drng(mix_seed(st.config.seed, 0x646563ULL));
            init::add_dense(dec, "dec", hr_b.dim(1) * rec_edge * rec_edge, st.encoder.config.latent_dim, drng);
            dec_opt = init_adam(dec);
        }
        Tape<float> t;
        auto ep = bind_params(t, st.encoder.params, true);
        auto dp = bind_params(t, dec, true);
        auto z = encoder_graph(t, st.encoder.config, ep, t.constant(hr_b));
        auto recon = ad::add_bias_rows(t, ad::matmul(t, z, dp.var("dec.w"), false, true), dp.var("dec.b"));
        auto target = ad::avg_pool2d(t, t.constant(hr_b), hr_b.dim(2) / rec_edge);
        target = ad::reshape(t, target, {hr_b.dim(0), hr_b.dim(1) * rec_edge * rec_edge});
        auto diff = ad::sub(t, recon, target);
        auto loss = ad::mean_all(t, ad::mul(t, diff, diff));
        t.backward(loss);
        adam_step(st.encoder.params, detail_train::collect_grads(t, ep, st.encoder.params), st.opt_encoder,
                  st.config.adam);
        adam_step(dec, detail_train::collect_grads(t, dp, dec), dec_opt, st.config.adam);
    }
    st.pretrained = true;
}

// IS and FID over critic features of held-out patches, comparing real
// high-res patches against the generator's outputs
inline DiversityReport eval_diversity(const TrainState& st, const PatchPairDataset& data, idx n,
                                      std::uint64_t sample_seed) {
    auto pool = data.indices(SplitTag::test);
    if (pool.empty()) pool = data.indices(SplitTag::train);
    if (pool.empty()) throw std::invalid_argument("eval: dataset is empty");
    if (n < 2) throw std::invalid_argument("eval: need at least two samples");
    Rng rng(sample_seed);
    const auto picks = detail_train::sample_picks(rng, pool, n);

    std::vector<double> real_rows, gen_rows;
    idx width = 0;
    for (size_t off = 0; off < picks.size(); off += static_cast<size_t>(st.config.batch_size)) {
        const size_t end = std::min(picks.size(), off + static_cast<size_t>(st.config.batch_size));
        const std::vector<idx> chunk(picks.begin() + static_cast<std::ptrdiff_t>(off),
                                     picks.begin() + static_cast<std::ptrdiff_t>(end));
        const auto hr_b = detail_train::gather_batch(data, chunk, true);
        const auto lr_b = detail_train::gather_batch(data, chunk, false);
        const auto real_f = detail_train::critic_gap_features(st.critic, hr_b);
        const auto gen_f = detail_train::critic_gap_features(st.critic, generator_forward(st.gen, lr_b));
        width = real_f.dim(1);
        real_rows.insert(real_rows.end(), real_f.data.begin(), real_f.data.end());
        gen_rows.insert(gen_rows.end(), gen_f.data.begin(), gen_f.data.end());
    }
    Tensor<double> real_f({n, width}, std::move(real_rows));
    Tensor<double> gen_f({n, width}, std::move(gen_rows));

    PatchClassifier cls;
    cls.fit(real_f, std::min<idx>(10, n), mix_seed(sample_seed, 0x6b6dULL));
    const auto fid = fid_from_features(real_f, gen_f);

    DiversityReport rep;
    rep.is_score = inception_score(cls.predict(gen_f));
    rep.fid = fid.value;
    rep.fid_regularized = fid.regularized;
    rep.n_samples = n;
    rep.feature_layer = "critic last-block channel means";
    return rep;
}

inline void save_checkpoint(const TrainState& st, const std::string& dir);
inline TrainState restore_checkpoint(const std::string& dir, const TrainConfig* expected = nullptr);

// alternate critic and generator/encoder updates until the configured
// iteration count, logging one curve row per generator update
inline void joint_train(TrainState& st, const PatchPairDataset& data, const std::string& run_dir = "") {
    const EffectiveSetup su = resolve_setup(st.config);
    if (!st.pretrained) throw std::logic_error("joint_train: run the pretraining phase first");
    const auto pool = data.indices(SplitTag::train);
    if (pool.empty()) throw std::invalid_argument("joint_train: dataset has no training pairs");

    namespace fs = std::filesystem;
    if (!run_dir.empty()) {
        fs::create_directories(run_dir);
        fs::create_directories(run_dir + "/diag");
        write_train_config(st.config, run_dir + "/config.cfg");
    }

    for (idx iter = st.iter + 1; iter <= st.config.joint_iters; ++iter) {
        for (idx c = 0; c < st.config.critic_steps_per_gen; ++c) {
            const auto picks = detail_train::sample_picks(st.rng, pool, st.config.batch_size);
            const auto hr_b = detail_train::gather_batch(data, picks, true);
            const auto lr_b = detail_train::gather_batch(data, picks, false);
            critic_step_on(st, su, hr_b, generator_forward(st.gen, lr_b));
        }
        const auto picks = detail_train::sample_picks(st.rng, pool, st.config.batch_size);
        const auto hr_b = detail_train::gather_batch(data, picks, true);
        const auto lr_b = detail_train::gather_batch(data, picks, false);
        const LossBreakdown bd = generator_update(st, su, lr_b, hr_b);
        if (!std::isfinite(bd.total))
            throw DivergenceError("joint_train: loss diverged at iteration " + std::to_string(iter));

        CurveRow row;
        row.iter = iter;
        row.spectral = bd.spectral;
        row.spatial = bd.spatial;
        row.adversarial = bd.adversarial;
        row.latent = bd.latent;
        row.total = bd.total;
        if (iter % st.config.eval_period == 0) {
            const auto div = eval_diversity(st, data, st.config.eval_samples,
                                            mix_seed(st.config.seed, 0x6576616cULL + static_cast<std::uint64_t>(iter)));
            row.is_score = div.is_score;
            row.fid = div.fid;
        }
        st.curves.push_back(row);
        st.iter = iter;

        if (!run_dir.empty() && st.config.checkpoint_period > 0 && iter % st.config.checkpoint_period == 0)
            save_checkpoint(st, run_dir + "/ckpt-" + std::to_string(iter));
    }
    if (!run_dir.empty()) write_curves_csv(st.curves, run_dir + "/curves.csv");
}

namespace detail_train {

inline void save_moments(const AdamMoments& a, const ParamStore& store, const std::string& path) {
    TensorArchive ar;
    ar.kind = "optimizer";
    ar.meta["config.step_count"] = std::to_string(a.step_count);
    for (size_t i = 0; i < store.items.size(); ++i) {
        const auto& item = store.items[i];
        if (!item.trainable || item.buffer) continue;
        ar.tensors.add("m." + item.name, a.m[i], false);
        ar.tensors.add("v." + item.name, a.v[i], false);
    }
    save_archive(ar, path);
}

inline AdamMoments load_moments(const std::string& path, const ParamStore& store) {
    const TensorArchive ar = load_archive(path);
    if (ar.kind != "optimizer") throw std::runtime_error("checkpoint: " + path + " is not an optimizer archive");
    AdamMoments a;
    a.step_count = std::stoll(detail::meta_need(ar, "config.step_count"));
    a.m.resize(store.items.size());
    a.v.resize(store.items.size());
    for (size_t i = 0; i < store.items.size(); ++i) {
        const auto& item = store.items[i];
        if (!item.trainable || item.buffer) continue;
        a.m[i] = ar.tensors.at("m." + item.name);
        a.v[i] = ar.tensors.at("v." + item.name);
        if (a.m[i].shape != item.value.shape || a.v[i].shape != item.value.shape)
            throw std::runtime_error("checkpoint: moment shape mismatch for " + item.name);
    }
    return a;
}

inline std::map<std::string, std::string> read_kv_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        const std::string s = detail::trim(line);
        if (s.empty() || s[0] == '#') continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw std::runtime_error("checkpoint: malformed line '" + s + "' in " + path);
        kv[detail::trim(s.substr(0, eq))] = detail::trim(s.substr(eq + 1));
    }
    return kv;
}

} // namespace detail_train

inline void save_checkpoint(const TrainState& st, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    save_network(st.gen, dir + "/generator");
    save_network(st.critic, dir + "/critic");
    save_network(st.encoder, dir + "/encoder");
    detail_train::save_moments(st.opt_gen, st.gen.params, dir + "/opt_generator");
    detail_train::save_moments(st.opt_critic, st.critic.params, dir + "/opt_critic");
    detail_train::save_moments(st.opt_encoder, st.encoder.params, dir + "/opt_encoder");
    write_train_config(st.config, dir + "/config.cfg");
    write_curves_csv(st.curves, dir + "/curves.csv");
    std::ofstream out(dir + "/train.txt");
    if (!out) throw std::runtime_error("checkpoint: cannot write " + dir + "/train.txt");
    out << "version = 1\n";
    out << "iter = " << st.iter << "\n";
    out << "pretrained = " << (st.pretrained ? 1 : 0) << "\n";
    out << "rng = " << st.rng.serialize() << "\n";
    if (!out) throw std::runtime_error("checkpoint: write failed for " + dir + "/train.txt");
}

inline TrainState restore_checkpoint(const std::string& dir, const TrainConfig* expected) {
    TrainState st;
    st.config = read_train_config(dir + "/config.cfg");
    if (expected && config_fingerprint(*expected) != config_fingerprint(st.config))
        throw std::runtime_error("checkpoint: stored architecture does not match the requested configuration");
    const EffectiveSetup su = resolve_setup(st.config);

    st.gen = load_generator(dir + "/generator");
    st.critic = load_discriminator(dir + "/critic");
    st.encoder = load_encoder(dir + "/encoder");
    const GeneratorConfig& g = st.gen.config;
    const DiscriminatorConfig& c = st.critic.config;
    const EncoderConfig& e = st.encoder.config;
    const bool nets_match =
        g.bands == su.gen.bands && g.n_resblocks == su.gen.n_resblocks && g.feature_width == su.gen.feature_width &&
        g.first_kernel == su.gen.first_kernel && g.scale == su.gen.scale &&
        g.single_stage_upscale == su.gen.single_stage_upscale && g.bicubic_skip == su.gen.bicubic_skip &&
        g.progressive_resize == su.gen.progressive_resize && c.bands == su.critic.bands &&
        c.n_maxpool_blocks == su.critic.n_maxpool_blocks && c.base_channels == su.critic.base_channels &&
        c.dense_width == su.critic.dense_width && c.input_size == su.critic.input_size &&
        c.sigmoid_output == su.critic.sigmoid_output && e.bands == su.encoder.bands &&
        e.channel_schedule == su.encoder.channel_schedule && e.latent_dim == su.encoder.latent_dim;
    if (!nets_match) throw std::runtime_error("checkpoint: stored networks do not match the stored configuration");

    st.opt_gen = detail_train::load_moments(dir + "/opt_generator", st.gen.params);
    st.opt_critic = detail_train::load_moments(dir + "/opt_critic", st.critic.params);
    st.opt_encoder = detail_train::load_moments(dir + "/opt_encoder", st.encoder.params);
    st.curves = read_curves_csv(dir + "/curves.csv");

    const auto kv = detail_train::read_kv_lines(dir + "/train.txt");
    st.iter = std::stoll(detail_cfg::need(kv, "iter"));
    st.pretrained = detail_cfg::need(kv, "pretrained") == "1";
    st.rng.deserialize(detail_cfg::need(kv, "rng"));
    return st;
}

// score-histogram overlap between real and generated batches; values near
// one mean the critic cannot tell the distributions apart, values near zero
// mean the generator covers almost none of the real score range
struct CollapseDiagnostics {
    std::vector<double> real_scores, gen_scores;
    std::vector<double> real_hist, gen_hist; // shared-range histograms, each summing to one
    double hist_lo = 0.0, hist_hi = 0.0;
    double score_overlap = 0.0; // sum over bins of sqrt(p * q)
    bool small_sample = false;  // fewer than 32 scores per side
    std::vector<std::pair<idx, double>> is_curve, fid_curve;
};

inline CollapseDiagnostics diagnostics_from_scores(std::vector<double> real, std::vector<double> gen, idx bins = 64) {
    if (real.empty() || gen.empty()) throw std::invalid_argument("diagnostics: empty score set");
    if (bins < 1) throw std::invalid_argument("diagnostics: need at least one bin");
    CollapseDiagnostics d;
    d.small_sample = static_cast<idx>(std::min(real.size(), gen.size())) < 32;
    d.hist_lo = std::min(*std::min_element(real.begin(), real.end()), *std::min_element(gen.begin(), gen.end()));
    d.hist_hi = std::max(*std::max_element(real.begin(), real.end()), *std::max_element(gen.begin(), gen.end()));
    double span = d.hist_hi - d.hist_lo;
    if (!(span > 0.0)) span = 1.0; // all scores identical: one shared bin
    auto fill = [&](const std::vector<double>& scores) {
        std::vector<double> h(static_cast<size_t>(bins), 0.0);
        for (double s : scores) {
            idx b = static_cast<idx>((s - d.hist_lo) / span * static_cast<double>(bins));
            b = std::clamp<idx>(b, 0, bins - 1);
            h[static_cast<size_t>(b)] += 1.0 / static_cast<double>(scores.size());
        }
        return h;
    };
    d.real_hist = fill(real);
    d.gen_hist = fill(gen);
    double acc = 0.0;
    for (idx b = 0; b < bins; ++b)
        acc += std::sqrt(d.real_hist[static_cast<size_t>(b)] * d.gen_hist[static_cast<size_t>(b)]);
    d.score_overlap = std::min(acc, 1.0);
    d.real_scores = std::move(real);
    d.gen_scores = std::move(gen);
    return d;
}

inline CollapseDiagnostics collapse_diagnostics(const TrainState& st, const PatchPairDataset& data, idx n = 64) {
    auto pool = data.indices(SplitTag::test);
    if (pool.empty()) pool = data.indices(SplitTag::train);
    if (pool.empty()) throw std::invalid_argument("diagnostics: dataset is empty");
    Rng rng(mix_seed(st.config.seed, 0x64696167ULL));
    const auto picks = detail_train::sample_picks(rng, pool, n);

    std::vector<double> real, gen;
    for (size_t off = 0; off < picks.size(); off += static_cast<size_t>(st.config.batch_size)) {
        const size_t end = std::min(picks.size(), off + static_cast<size_t>(st.config.batch_size));
        const std::vector<idx> chunk(picks.begin() + static_cast<std::ptrdiff_t>(off),
                                     picks.begin() + static_cast<std::ptrdiff_t>(end));
        const auto hr_b = detail_train::gather_batch(data, chunk, true);
        const auto lr_b = detail_train::gather_batch(data, chunk, false);
        const auto rs = discriminator_forward(st.critic, hr_b).score;
        const auto gs = discriminator_forward(st.critic, generator_forward(st.gen, lr_b)).score;
        for (idx i = 0; i < rs.numel(); ++i) real.push_back(rs[i]);
        for (idx i = 0; i < gs.numel(); ++i) gen.push_back(gs[i]);
    }
    auto d = diagnostics_from_scores(std::move(real), std::move(gen));
    for (const auto& r : st.curves) {
        if (std::isfinite(r.is_score)) d.is_curve.emplace_back(r.iter, r.is_score);
        if (std::isfinite(r.fid)) d.fid_curve.emplace_back(r.iter, r.fid);
    }
    return d;
}

inline std::string format_diagnostics(const CollapseDiagnostics& d) {
    std::ostringstream os;
    os << "score_overlap = " << detail::format_double(d.score_overlap) << "\n";
    os << "real_scores = " << d.real_scores.size() << "\n";
    os << "gen_scores = " << d.gen_scores.size() << "\n";
    os << "hist_range = [" << detail::format_double(d.hist_lo) << ", " << detail::format_double(d.hist_hi) << "]\n";
    if (d.small_sample) os << "warning = fewer than 32 scores per side; overlap estimate is coarse\n";
    if (!d.is_curve.empty()) os << "is_last = " << detail::format_double(d.is_curve.back().second) << "\n";
    if (!d.fid_curve.empty()) os << "fid_last = " << detail::format_double(d.fid_curve.back().second) << "\n";
    return os.str();
}

// mean full-reference quality of a model (or of plain bicubic upsampling)
// over one split of a dataset
struct FidelitySummary {
    double psnr = 0.0, ssim = 0.0, sam = 0.0, sre = 0.0;
    idx n = 0;
};

namespace detail_train {

inline HSICube clamp_reflectance(HSICube c) {
    for (auto& v : c.data) v = std::clamp(v, 0.0f, 255.0f);
    return c;
}

template <typename MakeSr>
FidelitySummary summarize_fidelity(const PatchPairDataset& data, SplitTag tag, idx limit, MakeSr&& make_sr) {
    auto idxs = data.indices(tag);
    if (idxs.empty()) throw std::invalid_argument("fidelity: split is empty");
    if (limit > 0 && static_cast<idx>(idxs.size()) > limit) idxs.resize(static_cast<size_t>(limit));
    FidelitySummary s;
    for (idx i : idxs) {
        const auto& p = data.pairs[static_cast<size_t>(i)];
        const HSICube sr = clamp_reflectance(make_sr(p));
        s.psnr += psnr(p.hr, sr);
        s.ssim += ssim(p.hr, sr);
        s.sam += sam(p.hr, sr);
        s.sre += sre(p.hr, sr);
        ++s.n;
    }
    const double n = static_cast<double>(s.n);
    s.psnr /= n;
    s.ssim /= n;
    s.sam /= n;
    s.sre /= n;
    return s;
}

} // namespace detail_train

inline FidelitySummary mean_fidelity(const GeneratorWeights& gen, const PatchPairDataset& data, SplitTag tag,
                                     idx limit = 0) {
    return detail_train::summarize_fidelity(data, tag, limit, [&](const PatchPair& p) {
        return generator_forward(gen, std::span<const HSICube>(&p.lr, 1)).front();
    });
}

inline FidelitySummary bicubic_fidelity(const PatchPairDataset& data, SplitTag tag, idx limit = 0) {
    return detail_train::summarize_fidelity(
        data, tag, limit, [&](const PatchPair& p) { return bicubic_resize(p.lr, p.hr.height, p.hr.width); });
}

// exhaustive sweep over loss-weight combinations; each run starts from the
// same seed so rows differ only in the weights
struct GridPoint {
    LossWeights weights;
    double psnr = 0.0;
    double sam = 0.0;
};

inline std::vector<GridPoint> grid_search(const TrainConfig& base, const PatchPairDataset& data,
                                          std::span<const double> lambdas, std::span<const double> etas,
                                          std::span<const double> sigmas, std::span<const double> mus,
                                          idx eval_limit = 8) {
    if (lambdas.empty() || etas.empty() || sigmas.empty() || mus.empty())
        throw std::invalid_argument("grid search: every weight list needs at least one value");
    std::vector<GridPoint> rows;
    for (double l : lambdas)
        for (double e : etas)
            for (double s : sigmas)
                for (double m : mus) {
                    TrainConfig cfg = base;
                    cfg.weights = LossWeights{l, e, s, m};
                    TrainState st = init_train_state(cfg);
                    pretrain(st, data);
                    joint_train(st, data);
                    const auto ev = mean_fidelity(st.gen, data, SplitTag::test, eval_limit);
                    rows.push_back(GridPoint{cfg.weights, ev.psnr, ev.sam});
                }
    std::stable_sort(rows.begin(), rows.end(), [](const GridPoint& a, const GridPoint& b) { return a.psnr > b.psnr; });
    return rows;
}

} // namespace legan
