#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "legan/hsi/synth.hpp"
#include "legan/train/trainer.hpp"
#include "support/test_util.hpp"

using namespace legan;

namespace {

// small enough that a few hundred iterations run in seconds
TrainConfig tiny_config(std::uint64_t seed = 7) {
    TrainConfig c;
    c.scale = 2;
    c.gen.bands = 6;
    c.gen.n_resblocks = 1;
    c.gen.feature_width = 4;
    c.gen.first_kernel = 3;
    c.gen.scale = 2;
    c.critic.bands = 6;
    c.critic.n_maxpool_blocks = 2;
    c.critic.base_channels = 8;
    c.critic.dense_width = 16;
    c.critic.input_size = 32;
    c.encoder.bands = 6;
    c.encoder.channel_schedule = {4, 4, 8, 8, 16, 16, 32, 32};
    c.encoder.latent_dim = 16;
    c.batch_size = 4;
    c.pretrain_iters = 2;
    c.joint_iters = 4;
    c.eval_period = 2;
    c.eval_samples = 4;
    c.seed = seed;
    return c;
}

PatchPairDataset tiny_dataset(std::uint64_t seed = 42) {
    SynthSpec spec;
    spec.height = 160;
    spec.width = 160;
    spec.bands = 6;
    spec.n_endmembers = 6;
    spec.smoothness = 2.0; // sharp enough that bicubic resampling loses real detail
    spec.seed = seed;
    auto ds = crop_pairs(synth_cube(spec), 2, 32, 16);
    return split_dataset(std::move(ds), 0.7, seed + 1);
}

bool stores_equal(const ParamStore& a, const ParamStore& b) {
    if (a.items.size() != b.items.size()) return false;
    for (size_t i = 0; i < a.items.size(); ++i) {
        if (a.items[i].name != b.items[i].name) return false;
        if (a.items[i].value.shape != b.items[i].value.shape) return false;
        if (a.items[i].value.data != b.items[i].value.data) return false;
    }
    return true;
}

bool moments_equal(const AdamMoments& a, const AdamMoments& b) {
    if (a.step_count != b.step_count || a.m.size() != b.m.size()) return false;
    for (size_t i = 0; i < a.m.size(); ++i)
        if (a.m[i].data != b.m[i].data || a.v[i].data != b.v[i].data) return false;
    return true;
}

std::vector<std::string> split_lines(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == '\n') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::string scratch_dir(const std::string& leaf) {
    const auto dir = std::filesystem::temp_directory_path() / ("legan_trainer_" + leaf);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

} // namespace

TEST_CASE("ablation models resolve to the documented architectures and objectives") {
    auto cfg = tiny_config();

    cfg.ablation_model = 1;
    auto m1 = resolve_setup(cfg);
    REQUIRE(m1.gen.progressive_resize);
    REQUIRE(m1.critic.sigmoid_output);
    REQUIRE_FALSE(m1.use_encoder);
    REQUIRE(m1.gen_obj == GenObjective::mse_adv);
    REQUIRE(m1.critic_obj == CriticObjective::bce_prob);
    REQUIRE(m1.weights.lambda_spectral == 0.0);
    REQUIRE(m1.weights.mu_latent == 0.0);

    cfg.ablation_model = 2;
    auto m2 = resolve_setup(cfg);
    REQUIRE_FALSE(m2.gen.progressive_resize);
    REQUIRE(m2.critic.sigmoid_output);

    // the first two rungs differ in the upscaling path and nothing else
    const auto l1 = split_lines(m1.describe());
    const auto l2 = split_lines(m2.describe());
    REQUIRE(l1.size() == l2.size());
    idx diff = 0;
    std::string changed;
    for (size_t i = 0; i < l1.size(); ++i)
        if (l1[i] != l2[i]) {
            ++diff;
            changed = l2[i];
        }
    REQUIRE(diff == 2); // the model number line and the upscale line
    REQUIRE(changed.find("upscale") != std::string::npos);

    cfg.ablation_model = 3;
    auto m3 = resolve_setup(cfg);
    REQUIRE_FALSE(m3.critic.sigmoid_output);
    REQUIRE(m3.critic_obj == CriticObjective::wasserstein);
    REQUIRE_FALSE(m3.use_encoder);

    cfg.ablation_model = 4;
    auto m4 = resolve_setup(cfg);
    REQUIRE(m4.use_encoder);
    REQUIRE(m4.gen_obj == GenObjective::mse_adv_latent);
    REQUIRE(m4.weights.mu_latent == cfg.weights.mu_latent);

    cfg.ablation_model = 5;
    auto m5 = resolve_setup(cfg);
    REQUIRE(m5.gen_obj == GenObjective::composite);
    REQUIRE(m5.weights.lambda_spectral == cfg.weights.lambda_spectral);
    REQUIRE(m5.describe() == resolve_setup(tiny_config()).describe()); // the full model is the default

    cfg.loss_variant = LossVariant::wasserstein_plain;
    auto wp = resolve_setup(cfg);
    REQUIRE(wp.gen_obj == GenObjective::adv_wasserstein);
    REQUIRE(wp.clip_critic);
    REQUIRE(wp.weights.sigma_adversarial == 1.0);
    REQUIRE(wp.weights.eta_spatial == 0.0);

    cfg.loss_variant = LossVariant::js;
    auto js = resolve_setup(cfg);
    REQUIRE(js.gen_obj == GenObjective::adv_js);
    REQUIRE(js.critic_obj == CriticObjective::bce_raw);
    REQUIRE_FALSE(js.clip_critic);

    cfg.ablation_model = 0;
    REQUIRE_THROWS_AS(resolve_setup(cfg), std::invalid_argument);
}

TEST_CASE("critic output range follows the ablation rung") {
    auto cfg = tiny_config(11);
    const auto data = tiny_dataset(11);
    const auto picks = data.indices(SplitTag::train);
    std::vector<HSICube> sel;
    for (idx i : picks) sel.push_back(data.pairs[static_cast<size_t>(i)].hr);
    const auto batch = to_batch(sel);

    cfg.ablation_model = 1;
    auto bounded = init_train_state(cfg);
    const auto sb = discriminator_forward(bounded.critic, batch).score;
    for (idx i = 0; i < sb.numel(); ++i) {
        REQUIRE(sb[i] >= 0.0f); // float sigmoid may saturate at the boundary
        REQUIRE(sb[i] <= 1.0f);
    }

    cfg.ablation_model = 3;
    auto raw = init_train_state(cfg);
    const auto sr = discriminator_forward(raw.critic, batch).score;
    float lo = sr[0], hi = sr[0];
    for (idx i = 0; i < sr.numel(); ++i) {
        lo = std::min(lo, sr[i]);
        hi = std::max(hi, sr[i]);
    }
    REQUIRE((lo < 0.0f || hi > 1.0f));
}

TEST_CASE("pretraining with zero iterations leaves every parameter untouched") {
    auto cfg = tiny_config(3);
    cfg.pretrain_iters = 0;
    auto st = init_train_state(cfg);
    const auto gen0 = st.gen.params;
    const auto critic0 = st.critic.params;
    const auto enc0 = st.encoder.params;
    const auto rng0 = st.rng.serialize();
    pretrain(st, tiny_dataset(3));
    REQUIRE(st.pretrained);
    REQUIRE(stores_equal(st.gen.params, gen0));
    REQUIRE(stores_equal(st.critic.params, critic0));
    REQUIRE(stores_equal(st.encoder.params, enc0));
    REQUIRE(st.rng.serialize() == rng0);
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
    const auto data = tiny_dataset(5);
    auto run = [&] {
        auto st = init_train_state(tiny_config(5));
        pretrain(st, data);
        joint_train(st, data);
        return st;
    };
    auto a = run();
    auto b = run();
    REQUIRE(stores_equal(a.gen.params, b.gen.params));
    REQUIRE(stores_equal(a.critic.params, b.critic.params));
    REQUIRE(stores_equal(a.encoder.params, b.encoder.params));
    REQUIRE(a.curves.size() == b.curves.size());
    for (size_t i = 0; i < a.curves.size(); ++i) {
        REQUIRE(a.curves[i].total == b.curves[i].total);
        REQUIRE(a.curves[i].spectral == b.curves[i].spectral);
    }
}

TEST_CASE("pretraining separates real patches from bicubic fakes") {
    auto cfg = tiny_config(99);
    cfg.pretrain_iters = 200;
    auto st = init_train_state(cfg);
    const auto data = tiny_dataset(99);
    pretrain(st, data);

    const auto test_ids = data.indices(SplitTag::test);
    REQUIRE(test_ids.size() >= 2);
    std::vector<HSICube> hr, lr;
    for (idx i : test_ids) {
        hr.push_back(data.pairs[static_cast<size_t>(i)].hr);
        lr.push_back(data.pairs[static_cast<size_t>(i)].lr);
    }
    const auto hr_b = to_batch(hr);
    const auto fake_b = bicubic_resize_batch(to_batch(lr), hr_b.dim(2), hr_b.dim(3));
    const auto real_s = discriminator_forward(st.critic, hr_b).score;
    const auto fake_s = discriminator_forward(st.critic, fake_b).score;
    double margin = 0.0;
    for (idx i = 0; i < real_s.numel(); ++i) margin += real_s[i] - fake_s[i];
    margin /= static_cast<double>(real_s.numel());
    REQUIRE(margin > 0.0);
}

TEST_CASE("critic and generator updates stay inside their own networks") {
    auto cfg = tiny_config(17);
    const auto data = tiny_dataset(17);
    auto st = init_train_state(cfg);
    pretrain(st, data);
    const auto su = resolve_setup(cfg);

    const auto picks = detail_train::sample_picks(st.rng, data.indices(SplitTag::train), cfg.batch_size);
    const auto hr_b = detail_train::gather_batch(data, picks, true);
    const auto lr_b = detail_train::gather_batch(data, picks, false);

    auto gen0 = st.gen.params;
    auto enc0 = st.encoder.params;
    auto critic0 = st.critic.params;
    critic_step_on(st, su, hr_b, generator_forward(st.gen, lr_b));
    REQUIRE(stores_equal(st.gen.params, gen0));
    REQUIRE(stores_equal(st.encoder.params, enc0));
    REQUIRE_FALSE(stores_equal(st.critic.params, critic0));

    critic0 = st.critic.params;
    generator_update(st, su, lr_b, hr_b);
    REQUIRE(stores_equal(st.critic.params, critic0)); // weights and running stats both
    REQUIRE_FALSE(stores_equal(st.gen.params, gen0));
    REQUIRE_FALSE(stores_equal(st.encoder.params, enc0));
}

TEST_CASE("the logged total is the weighted sum of the logged components") {
    const auto data = tiny_dataset(19);

    auto cfg = tiny_config(19);
    auto st = init_train_state(cfg);
    pretrain(st, data);
    joint_train(st, data);
    REQUIRE(st.curves.size() == static_cast<size_t>(cfg.joint_iters));
    for (const auto& r : st.curves) {
        const double want = cfg.weights.lambda_spectral * r.spectral + cfg.weights.eta_spatial * r.spatial +
                            cfg.weights.sigma_adversarial * r.adversarial + cfg.weights.mu_latent * r.latent;
        REQUIRE(std::abs(r.total - want) <= 1e-9 * std::max(1.0, std::abs(want)));
    }

    cfg.loss_variant = LossVariant::js;
    auto js = init_train_state(cfg);
    pretrain(js, data);
    joint_train(js, data);
    for (const auto& r : js.curves) {
        REQUIRE(r.spectral == 0.0);
        REQUIRE(r.latent == 0.0);
        REQUIRE(r.total == r.adversarial);
    }
}

TEST_CASE("joint training requires pretraining and aborts on divergence") {
    const auto data = tiny_dataset(23);
    auto st = init_train_state(tiny_config(23));
    REQUIRE_THROWS_AS(joint_train(st, data), std::logic_error);

    auto cfg = tiny_config(23);
    cfg.ablation_model = 3; // plain content objective: a poisoned weight surfaces immediately
    auto bad = init_train_state(cfg);
    pretrain(bad, data);
    bad.gen.params.items[0].value[0] = std::numeric_limits<float>::infinity();
    REQUIRE_THROWS_AS(joint_train(bad, data), DivergenceError);
}

TEST_CASE("curve files round-trip exactly") {
    std::vector<CurveRow> rows;
    CurveRow a;
    a.iter = 1;
    a.spectral = 0.123456789012345;
    a.spatial = 2.5e-7;
    a.adversarial = -3.25;
    a.latent = 17.0;
    a.total = 1234.5678;
    rows.push_back(a);
    CurveRow b = a;
    b.iter = 2;
    b.is_score = 3.75;
    b.fid = 0.5;
    rows.push_back(b);

    const auto dir = scratch_dir("curves");
    write_curves_csv(rows, dir + "/curves.csv");
    const auto back = read_curves_csv(dir + "/curves.csv");
    REQUIRE(back.size() == rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        REQUIRE(back[i].iter == rows[i].iter);
        REQUIRE(back[i].spectral == rows[i].spectral);
        REQUIRE(back[i].spatial == rows[i].spatial);
        REQUIRE(back[i].adversarial == rows[i].adversarial);
        REQUIRE(back[i].latent == rows[i].latent);
        REQUIRE(back[i].total == rows[i].total);
    }
    REQUIRE(std::isnan(back[0].is_score));
    REQUIRE(std::isnan(back[0].fid));
    REQUIRE(back[1].is_score == 3.75);
    REQUIRE(back[1].fid == 0.5);

    rows[1].iter = 1; // iteration column must increase
    write_curves_csv(rows, dir + "/bad.csv");
    REQUIRE_THROWS_AS(read_curves_csv(dir + "/bad.csv"), std::runtime_error);
}

TEST_CASE("training configuration files round-trip") {
    auto cfg = tiny_config(29);
    cfg.loss_variant = LossVariant::wasserstein_plain;
    cfg.ablation_model = 4;
    cfg.weights.lambda_spectral = 3.5;
    cfg.checkpoint_period = 10;
    cfg.clip_value = 0.01;
    cfg.seed = 991;

    const auto dir = scratch_dir("config");
    write_train_config(cfg, dir + "/run.cfg");
    const auto back = read_train_config(dir + "/run.cfg");
    REQUIRE(config_fingerprint(back) == config_fingerprint(cfg));
    REQUIRE(back.weights.lambda_spectral == cfg.weights.lambda_spectral);
    REQUIRE(back.seed == cfg.seed);
    REQUIRE(back.checkpoint_period == cfg.checkpoint_period);
    REQUIRE(back.clip_value == cfg.clip_value);
    REQUIRE(back.loss_variant == cfg.loss_variant);
    REQUIRE(back.adam.lr == cfg.adam.lr);

    std::ofstream(dir + "/broken.cfg") << "[train]\nscale = 2\n";
    REQUIRE_THROWS_AS(read_train_config(dir + "/broken.cfg"), std::runtime_error);
}

TEST_CASE("checkpoints restore bit-exactly and resuming matches a straight run") {
    const auto data = tiny_dataset(31);
    auto cfg = tiny_config(31);
    cfg.joint_iters = 6;
    cfg.checkpoint_period = 3;
    const auto dir = scratch_dir("resume");

    auto straight = init_train_state(cfg);
    pretrain(straight, data);
    joint_train(straight, data);

    auto chk = init_train_state(cfg);
    pretrain(chk, data);
    joint_train(chk, data, dir);

    auto restored = restore_checkpoint(dir + "/ckpt-3");
    REQUIRE(restored.iter == 3);
    REQUIRE(restored.pretrained);
    REQUIRE(restored.curves.size() == 3);
    REQUIRE(stores_equal(restored.gen.params, straight.gen.params) == false); // mid-run snapshot
    REQUIRE(moments_equal(restored.opt_gen, restored.opt_gen));

    // a second save of the same state is byte-identical in tensor content
    {
        auto again = restore_checkpoint(dir + "/ckpt-3");
        REQUIRE(stores_equal(again.gen.params, restored.gen.params));
        REQUIRE(stores_equal(again.critic.params, restored.critic.params));
        REQUIRE(stores_equal(again.encoder.params, restored.encoder.params));
        REQUIRE(moments_equal(again.opt_gen, restored.opt_gen));
        REQUIRE(moments_equal(again.opt_critic, restored.opt_critic));
        REQUIRE(moments_equal(again.opt_encoder, restored.opt_encoder));
        REQUIRE(again.rng.serialize() == restored.rng.serialize());
    }

    joint_train(restored, data);
    REQUIRE(restored.curves.size() == straight.curves.size());
    for (size_t i = 0; i < straight.curves.size(); ++i) {
        REQUIRE(restored.curves[i].iter == straight.curves[i].iter);
        REQUIRE(restored.curves[i].total == straight.curves[i].total);
        REQUIRE(restored.curves[i].spectral == straight.curves[i].spectral);
        REQUIRE(restored.curves[i].spatial == straight.curves[i].spatial);
        REQUIRE(restored.curves[i].adversarial == straight.curves[i].adversarial);
        REQUIRE(restored.curves[i].latent == straight.curves[i].latent);
    }
    REQUIRE(stores_equal(restored.gen.params, straight.gen.params));
    REQUIRE(stores_equal(restored.critic.params, straight.critic.params));
    REQUIRE(stores_equal(restored.encoder.params, straight.encoder.params));
    REQUIRE(moments_equal(restored.opt_gen, straight.opt_gen));

    auto other = cfg;
    other.gen.feature_width = 8;
    REQUIRE_THROWS_AS(restore_checkpoint(dir + "/ckpt-3", &other), std::runtime_error);
}

TEST_CASE("collapse diagnostics measure score-histogram overlap") {
    std::vector<double> same{0.1, 0.4, 0.4, 0.9, 0.3, 0.2};
    auto d = diagnostics_from_scores(same, same);
    REQUIRE(std::abs(d.score_overlap - 1.0) <= 1e-9);
    REQUIRE(d.small_sample);

    std::vector<double> low(40, 0.0), high(40, 0.0);
    for (size_t i = 0; i < low.size(); ++i) {
        low[i] = static_cast<double>(i) * 0.01;        // [0, 0.4)
        high[i] = 10.0 + static_cast<double>(i) * 0.01; // far away
    }
    auto disjoint = diagnostics_from_scores(low, high);
    REQUIRE(disjoint.score_overlap == 0.0);
    REQUIRE_FALSE(disjoint.small_sample);

    // hand-built Bhattacharyya coefficient on a fixed interleaved sample
    std::vector<double> real, gen;
    Rng rng(99);
    for (int i = 0; i < 200; ++i) {
        real.push_back(rng.normal());
        gen.push_back(rng.normal() + 0.5);
    }
    auto got = diagnostics_from_scores(real, gen);
    double lo = real[0], hi = real[0];
    for (double v : real) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (double v : gen) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::vector<double> hr(64, 0.0), hg(64, 0.0);
    for (double v : real) {
        auto b = std::min<idx>(63, static_cast<idx>((v - lo) / (hi - lo) * 64.0));
        hr[static_cast<size_t>(b)] += 1.0 / 200.0;
    }
    for (double v : gen) {
        auto b = std::min<idx>(63, static_cast<idx>((v - lo) / (hi - lo) * 64.0));
        hg[static_cast<size_t>(b)] += 1.0 / 200.0;
    }
    double want = 0.0;
    for (size_t b = 0; b < 64; ++b) want += std::sqrt(hr[b] * hg[b]);
    REQUIRE(std::abs(got.score_overlap - std::min(want, 1.0)) <= 1e-12);
    REQUIRE(got.score_overlap > 0.0);
    REQUIRE(got.score_overlap < 1.0);

    std::vector<double> constant(50, 2.5);
    auto flat = diagnostics_from_scores(constant, constant);
    REQUIRE(std::abs(flat.score_overlap - 1.0) <= 1e-9);

    REQUIRE_THROWS_AS(diagnostics_from_scores({}, {1.0}), std::invalid_argument);
}

TEST_CASE("collapse diagnostics run on a trained state and attach metric curves") {
    const auto data = tiny_dataset(37);
    auto st = init_train_state(tiny_config(37));
    pretrain(st, data);
    joint_train(st, data);
    auto d = collapse_diagnostics(st, data, 8);
    REQUIRE(d.real_scores.size() == 8);
    REQUIRE(d.gen_scores.size() == 8);
    REQUIRE(d.small_sample);
    REQUIRE(d.score_overlap >= 0.0);
    REQUIRE(d.score_overlap <= 1.0);
    REQUIRE(d.is_curve.size() == 2); // eval every 2 of 4 iterations
    REQUIRE(d.fid_curve.size() == 2);
    const auto text = format_diagnostics(d);
    REQUIRE(text.find("score_overlap") != std::string::npos);
    REQUIRE(text.find("warning") != std::string::npos);
}

TEST_CASE("diversity evaluation is reproducible and within metric bounds") {
    const auto data = tiny_dataset(41);
    auto st = init_train_state(tiny_config(41));
    pretrain(st, data);
    const auto a = eval_diversity(st, data, 6, 1234);
    const auto b = eval_diversity(st, data, 6, 1234);
    REQUIRE(a.is_score == b.is_score);
    REQUIRE(a.fid == b.fid);
    REQUIRE(a.is_score >= 1.0 - 1e-9);
    REQUIRE(a.is_score <= 6.0 + 1e-9);
    REQUIRE(a.fid >= 0.0);
    REQUIRE(a.n_samples == 6);
}

TEST_CASE("fidelity summaries average the per-pair metrics") {
    const auto data = tiny_dataset(43);
    const auto got = bicubic_fidelity(data, SplitTag::test, 2);
    REQUIRE(got.n == 2);
    const auto ids = data.indices(SplitTag::test);
    double want_psnr = 0.0, want_sam = 0.0;
    for (idx k = 0; k < 2; ++k) {
        const auto& p = data.pairs[static_cast<size_t>(ids[static_cast<size_t>(k)])];
        const auto up = bicubic_resize(p.lr, p.hr.height, p.hr.width);
        want_psnr += psnr(p.hr, up);
        want_sam += sam(p.hr, up);
    }
    REQUIRE(testutil::close(got.psnr, want_psnr / 2.0, 1e-12, 1e-12));
    REQUIRE(testutil::close(got.sam, want_sam / 2.0, 1e-12, 1e-12));

    auto st = init_train_state(tiny_config(43));
    const auto model = mean_fidelity(st.gen, data, SplitTag::test, 2);
    REQUIRE(model.n == 2);
    REQUIRE(std::isfinite(model.psnr));
    REQUIRE(std::isfinite(model.sam));
}

TEST_CASE("grid search ranks weight combinations by mean psnr") {
    const auto data = tiny_dataset(47);
    auto cfg = tiny_config(47);
    cfg.pretrain_iters = 0;
    cfg.joint_iters = 2;
    const double lambdas[] = {12.5, 1.0};
    const double etas[] = {12.5};
    const double sigmas[] = {0.0063};
    const double mus[] = {0.015};
    const auto rows = grid_search(cfg, data, lambdas, etas, sigmas, mus, 2);
    REQUIRE(rows.size() == 2);
    REQUIRE(rows[0].psnr >= rows[1].psnr);
    REQUIRE(std::isfinite(rows[0].sam));
    REQUIRE((rows[0].weights.lambda_spectral == 12.5 || rows[0].weights.lambda_spectral == 1.0));
    REQUIRE_THROWS_AS(grid_search(cfg, data, {}, etas, sigmas, mus, 2), std::invalid_argument);
}
