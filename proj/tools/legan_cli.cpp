// Command-line front end: synthesize data, degrade it, train models,
// evaluate checkpoints, render diagnostics and run the ablation ladder.
// Exit codes: 0 success, 2 argument or configuration error, 3 numerical
// abort (diverged training run).

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "legan/hsi/synth.hpp"
#include "legan/losses/mode_spectrum.hpp"
#include "legan/train/trainer.hpp"
#include "legan/util/plot.hpp"

namespace fs = std::filesystem;
using namespace legan;

namespace {

constexpr const char* kToolVersion = "legan 1.0.0";

// records what a subcommand produced; written last, after checking that
// every listed artifact actually exists
struct RunManifest {
    std::string command;
    std::vector<std::pair<std::string, std::string>> config; // effective parameters
    std::vector<std::pair<std::string, std::uint64_t>> seeds;
    std::vector<std::string> artifacts;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void add_artifact(const std::string& path) { artifacts.push_back(path); }

    void write(const std::string& path) {
        for (const auto& a : artifacts)
            if (!fs::exists(a)) throw std::runtime_error("manifest: declared artifact missing: " + a);
        std::ofstream out(path);
        if (!out) throw std::runtime_error("manifest: cannot write " + path);
        out << "tool = " << kToolVersion << "\n";
        out << "command = " << command << "\n";
        for (const auto& [k, v] : seeds) out << "seed." << k << " = " << v << "\n";
        for (const auto& [k, v] : config) out << "config." << k << " = " << v << "\n";
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        out << "wall_clock_s = " << detail::format_double(wall) << "\n";
        for (const auto& a : artifacts) out << "artifact = " << a << "\n";
        if (!out) throw std::runtime_error("manifest: write failed for " + path);
    }
};

std::string joined_args(int argc, char** argv) {
    std::string s;
    for (int i = 0; i < argc; ++i) {
        if (i) s += ' ';
        s += argv[i];
    }
    return s;
}

// ---- shared dataset assembly ------------------------------------------------

struct DataArgs {
    std::vector<std::string> cubes;
    idx hr_patch = 64;
    idx stride = 32;
    double train_ratio = 0.7;
    std::uint64_t split_seed = 1;
};

void add_data_options(CLI::App* cmd, DataArgs& d) {
    cmd->add_option("--data", d.cubes, "high-resolution cube file(s), .hdr/.raw base path")
        ->required()
        ->expected(-1);
    cmd->add_option("--hr-patch", d.hr_patch, "high-res patch edge in pixels");
    cmd->add_option("--stride", d.stride, "patch stride in pixels");
    cmd->add_option("--train-ratio", d.train_ratio, "fraction of patches used for training");
    cmd->add_option("--split-seed", d.split_seed, "seed of the train/test split");
}

PatchPairDataset build_dataset(const DataArgs& d, idx scale) {
    PatchPairDataset ds;
    bool first = true;
    for (const auto& path : d.cubes) {
        auto part = crop_pairs(load_cube(path), scale, d.hr_patch, d.stride, fs::path(path).stem().string());
        ds = first ? std::move(part) : concat_datasets(std::move(ds), part);
        first = false;
    }
    return split_dataset(std::move(ds), d.train_ratio, d.split_seed);
}

std::optional<std::uint64_t> env_seed_override() {
    const char* v = std::getenv("HSISR_SEED");
    if (!v || !*v) return std::nullopt;
    try {
        size_t used = 0;
        const std::uint64_t s = std::stoull(v, &used);
        if (used != std::string(v).size()) throw std::invalid_argument("trailing characters");
        return s;
    } catch (const std::exception&) {
        throw std::invalid_argument(std::string("HSISR_SEED must be an unsigned integer, got '") + v + "'");
    }
}

void add_network_artifacts(RunManifest& man, const std::string& dir) {
    for (const char* base : {"generator", "critic", "encoder", "opt_generator", "opt_critic", "opt_encoder"}) {
        man.add_artifact(dir + "/" + base + ".hdr");
        man.add_artifact(dir + "/" + base + ".raw");
    }
    man.add_artifact(dir + "/train.txt");
    man.add_artifact(dir + "/config.cfg");
    man.add_artifact(dir + "/curves.csv");
}

// ---- synth ------------------------------------------------------------------

struct SynthArgs {
    idx width = 64, height = 64, bands = 16, endmembers = 6;
    double smoothness = 2.5;
    std::uint64_t seed = 0;
    std::string out;
};

int run_synth(const SynthArgs& a, RunManifest man) {
    SynthSpec spec;
    spec.width = a.width;
    spec.height = a.height;
    spec.bands = a.bands;
    spec.n_endmembers = a.endmembers;
    spec.smoothness = a.smoothness;
    spec.seed = a.seed;
    const HSICube cube = synth_cube(spec);
    fs::create_directories(fs::path(a.out).parent_path().empty() ? "." : fs::path(a.out).parent_path().string());
    save_cube(cube, a.out);
    man.seeds.emplace_back("synth", a.seed);
    man.config = {{"width", std::to_string(a.width)},          {"height", std::to_string(a.height)},
                  {"bands", std::to_string(a.bands)},          {"endmembers", std::to_string(a.endmembers)},
                  {"smoothness", detail::format_double(a.smoothness)}};
    man.add_artifact(a.out + ".hdr");
    man.add_artifact(a.out + ".raw");
    man.write(a.out + ".manifest.txt");
    return 0;
}

// ---- degrade ----------------------------------------------------------------

struct DegradeArgs {
    std::string in, out;
    idx scale = 2;
    std::string snr = "inf";
    std::uint64_t seed = 0;
};

int run_degrade(const DegradeArgs& a, RunManifest man) {
    double snr_db = 0.0;
    bool noiseless = false;
    if (a.snr == "inf") {
        noiseless = true;
    } else {
        try {
            size_t used = 0;
            snr_db = std::stod(a.snr, &used);
            if (used != a.snr.size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw std::invalid_argument("--snr wants 'inf' or a decibel value, got '" + a.snr + "'");
        }
        if (!(snr_db > 0.0) || !std::isfinite(snr_db))
            throw std::invalid_argument("--snr must be positive and finite");
    }
    HSICube lr = bicubic_downsample(load_cube(a.in), a.scale);
    if (!noiseless) lr = add_noise_snr(lr, snr_db, a.seed);
    fs::create_directories(fs::path(a.out).parent_path().empty() ? "." : fs::path(a.out).parent_path().string());
    save_cube(lr, a.out);
    man.seeds.emplace_back("noise", a.seed);
    man.config = {{"scale", std::to_string(a.scale)}, {"snr", a.snr}, {"in", a.in}};
    man.add_artifact(a.out + ".hdr");
    man.add_artifact(a.out + ".raw");
    man.write(a.out + ".manifest.txt");
    return 0;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
    std::string config_path, out;
    DataArgs data;
    std::optional<int> ablation;
    std::optional<std::string> loss;
    std::optional<std::uint64_t> seed;
    std::optional<idx> pretrain_iters, joint_iters, checkpoint_period;
};

TrainConfig effective_train_config(const TrainArgs& a) {
    TrainConfig cfg = read_train_config(a.config_path);
    if (a.ablation) cfg.ablation_model = *a.ablation;
    if (a.loss) cfg.loss_variant = parse_loss_variant(*a.loss);
    if (a.seed) cfg.seed = *a.seed;
    if (a.pretrain_iters) cfg.pretrain_iters = *a.pretrain_iters;
    if (a.joint_iters) cfg.joint_iters = *a.joint_iters;
    if (a.checkpoint_period) cfg.checkpoint_period = *a.checkpoint_period;
    if (const auto env = env_seed_override()) cfg.seed = *env;
    cfg.validate();
    return cfg;
}

int run_train(const TrainArgs& a, RunManifest man) {
    const TrainConfig cfg = effective_train_config(a);
    const auto ds = build_dataset(a.data, cfg.scale);

    TrainState st = init_train_state(cfg);
    pretrain(st, ds);
    joint_train(st, ds, a.out);
    const std::string final_ckpt = a.out + "/ckpt-" + std::to_string(st.iter);
    save_checkpoint(st, final_ckpt);

    const auto setup_text = resolve_setup(cfg).describe();
    std::ofstream(a.out + "/setup.txt") << setup_text;

    man.seeds.emplace_back("train", cfg.seed);
    man.config = {{"file", a.config_path},
                  {"ablation_model", std::to_string(cfg.ablation_model)},
                  {"loss_variant", to_string(cfg.loss_variant)},
                  {"joint_iters", std::to_string(cfg.joint_iters)}};
    for (const auto& line : {std::string("config.cfg"), std::string("curves.csv"), std::string("setup.txt")})
        man.add_artifact(a.out + "/" + line);
    add_network_artifacts(man, final_ckpt);
    man.write(a.out + "/manifest.txt");
    std::cout << "trained " << st.iter << " iterations, final checkpoint " << final_ckpt << "\n";
    return 0;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint, out;
    DataArgs data;
    bool oracle_identity = false;
    std::string baseline; // "bicubic" or empty
    idx limit = 0;
};

int run_eval(const EvalArgs& a, RunManifest man) {
    if (!a.baseline.empty() && a.baseline != "bicubic")
        throw std::invalid_argument("--baseline supports only 'bicubic'");
    const bool needs_model = !a.oracle_identity && a.baseline.empty();
    std::optional<GeneratorWeights> gen;
    idx scale = 2;
    if (needs_model) {
        if (a.checkpoint.empty()) throw std::invalid_argument("--checkpoint is required unless a baseline mode is used");
        if (!fs::exists(a.checkpoint + "/generator.hdr"))
            throw std::invalid_argument("checkpoint not found: " + a.checkpoint);
        gen = load_generator(a.checkpoint + "/generator");
        scale = gen->config.scale;
    }
    const auto ds = build_dataset(a.data, scale);
    auto ids = ds.indices(SplitTag::test);
    if (ids.empty()) ids = ds.indices(SplitTag::train);
    if (ids.empty()) throw std::invalid_argument("eval: dataset is empty");
    if (a.limit > 0 && static_cast<idx>(ids.size()) > a.limit) ids.resize(static_cast<size_t>(a.limit));

    fs::create_directories(a.out);
    std::ofstream pairs_csv(a.out + "/per_pair.csv");
    pairs_csv << "pair,psnr,psnr_infinite,ssim,sam,sre\n";
    std::vector<MetricReport> reports;
    for (idx i : ids) {
        const auto& p = ds.pairs[static_cast<size_t>(i)];
        HSICube sr;
        if (a.oracle_identity)
            sr = p.hr;
        else if (!a.baseline.empty())
            sr = bicubic_resize(p.lr, p.hr.height, p.hr.width);
        else {
            sr = generator_forward(*gen, std::span<const HSICube>(&p.lr, 1)).front();
            for (auto& v : sr.data) v = std::clamp(v, 0.0f, 255.0f);
        }
        const auto rep = evaluate_fidelity(p.hr, sr);
        pairs_csv << i << "," << detail::format_double(rep.psnr) << "," << (rep.psnr_infinite ? 1 : 0) << ","
                  << detail::format_double(rep.ssim) << "," << detail::format_double(rep.sam) << ","
                  << detail::format_double(rep.sre) << "\n";
        reports.push_back(rep);
    }
    pairs_csv.close();
    if (!pairs_csv) throw std::runtime_error("eval: write failed for per_pair.csv");

    const size_t n = reports.size();
    const idx bands = static_cast<idx>(reports.front().band_psnr.size());
    double psnr_sum = 0.0, ssim_sum = 0.0, sam_sum = 0.0, sre_sum = 0.0;
    idx infinite = 0, finite_psnr = 0;
    std::vector<double> band_psnr(static_cast<size_t>(bands), 0.0), band_sre(static_cast<size_t>(bands), 0.0);
    idx band_psnr_rows = 0;
    for (const auto& r : reports) {
        if (r.psnr_infinite) {
            ++infinite;
        } else {
            psnr_sum += r.psnr;
            ++finite_psnr;
        }
        ssim_sum += r.ssim;
        sam_sum += r.sam;
        sre_sum += r.sre;
        bool bands_finite = true;
        for (double v : r.band_psnr) bands_finite = bands_finite && std::isfinite(v);
        if (bands_finite) {
            ++band_psnr_rows;
            for (idx b = 0; b < bands; ++b) band_psnr[static_cast<size_t>(b)] += r.band_psnr[static_cast<size_t>(b)];
        }
        for (idx b = 0; b < bands; ++b) band_sre[static_cast<size_t>(b)] += r.band_sre[static_cast<size_t>(b)];
    }

    std::ofstream band_csv(a.out + "/per_band.csv");
    band_csv << "band,psnr,sre\n";
    for (idx b = 0; b < bands; ++b) {
        band_csv << b << ",";
        if (band_psnr_rows > 0) band_csv << detail::format_double(band_psnr[static_cast<size_t>(b)] / band_psnr_rows);
        band_csv << "," << detail::format_double(band_sre[static_cast<size_t>(b)] / static_cast<double>(n)) << "\n";
    }
    band_csv.close();
    if (!band_csv) throw std::runtime_error("eval: write failed for per_band.csv");

    std::ofstream rep(a.out + "/report.txt");
    rep << "pairs = " << n << "\n";
    rep << "mode = " << (a.oracle_identity ? "oracle_identity" : (!a.baseline.empty() ? "baseline_bicubic" : "model"))
        << "\n";
    rep << "psnr_infinite_pairs = " << infinite << "\n";
    if (finite_psnr > 0) rep << "psnr = " << detail::format_double(psnr_sum / finite_psnr) << "\n";
    rep << "ssim = " << detail::format_double(ssim_sum / static_cast<double>(n)) << "\n";
    rep << "sam = " << detail::format_double(sam_sum / static_cast<double>(n)) << "\n";
    rep << "sre = " << detail::format_double(sre_sum / static_cast<double>(n)) << "\n";
    rep.close();
    if (!rep) throw std::runtime_error("eval: write failed for report.txt");

    if (!a.checkpoint.empty()) man.config.emplace_back("checkpoint", a.checkpoint);
    man.add_artifact(a.out + "/report.txt");
    man.add_artifact(a.out + "/per_pair.csv");
    man.add_artifact(a.out + "/per_band.csv");
    man.write(a.out + "/manifest.txt");
    std::cout << "evaluated " << n << " pairs into " << a.out << "\n";
    return 0;
}

// ---- diagnose ---------------------------------------------------------------

struct DiagnoseArgs {
    std::string run, out, compare;
    DataArgs data;
    bool have_data = false;
    idx samples = 64;
};

std::string find_latest_checkpoint(const std::string& run_dir) {
    idx best = -1;
    std::string best_path;
    if (!fs::exists(run_dir)) return "";
    for (const auto& e : fs::directory_iterator(run_dir)) {
        if (!e.is_directory()) continue;
        const std::string name = e.path().filename().string();
        if (name.rfind("ckpt-", 0) != 0) continue;
        try {
            const idx it = std::stoll(name.substr(5));
            if (it > best) {
                best = it;
                best_path = e.path().string();
            }
        } catch (const std::exception&) {
        }
    }
    return best_path;
}

int run_diagnose(const DiagnoseArgs& a, RunManifest man) {
    if (!fs::exists(a.run + "/curves.csv")) throw std::invalid_argument("missing curves.csv in " + a.run);
    const auto curves = read_curves_csv(a.run + "/curves.csv");
    fs::create_directories(a.out);

    std::vector<std::pair<std::string, std::vector<CurveRow>>> runs{{a.run, curves}};
    if (!a.compare.empty()) {
        if (!fs::exists(a.compare + "/curves.csv")) throw std::invalid_argument("missing curves.csv in " + a.compare);
        runs.emplace_back(a.compare, read_curves_csv(a.compare + "/curves.csv"));
    }

    std::ofstream table(a.out + "/is_fid.csv");
    table << "run,iter,is,fid\n";
    std::vector<plot::Series> is_series, fid_series;
    for (size_t r = 0; r < runs.size(); ++r) {
        plot::Series si, sf;
        for (const auto& row : runs[r].second) {
            if (!std::isfinite(row.is_score) && !std::isfinite(row.fid)) continue;
            table << runs[r].first << "," << row.iter << ",";
            if (std::isfinite(row.is_score)) table << detail::format_double(row.is_score);
            table << ",";
            if (std::isfinite(row.fid)) table << detail::format_double(row.fid);
            table << "\n";
            if (std::isfinite(row.is_score)) {
                si.x.push_back(static_cast<double>(row.iter));
                si.y.push_back(row.is_score);
            }
            if (std::isfinite(row.fid)) {
                sf.x.push_back(static_cast<double>(row.iter));
                sf.y.push_back(row.fid);
            }
        }
        is_series.push_back(std::move(si));
        fid_series.push_back(std::move(sf));
    }
    table.close();
    if (!table) throw std::runtime_error("diagnose: write failed for is_fid.csv");
    if (is_series.front().x.empty()) throw std::invalid_argument("diagnose: no logged evaluation rows in curves.csv");
    plot::save_bmp(plot::line_chart(is_series), a.out + "/is_curve.bmp");
    plot::save_bmp(plot::line_chart(fid_series), a.out + "/fid_curve.bmp");
    man.add_artifact(a.out + "/is_fid.csv");
    man.add_artifact(a.out + "/is_curve.bmp");
    man.add_artifact(a.out + "/fid_curve.bmp");

    if (a.have_data && a.compare.empty()) {
        const std::string ckpt = find_latest_checkpoint(a.run);
        if (ckpt.empty()) throw std::invalid_argument("diagnose: no checkpoint directory under " + a.run);
        TrainState st = restore_checkpoint(ckpt);
        const auto ds = build_dataset(a.data, st.config.scale);
        const auto diag = collapse_diagnostics(st, ds, a.samples);

        std::ofstream density(a.out + "/density.csv");
        density << "bin_center,real,generated\n";
        const double bin = (diag.hist_hi - diag.hist_lo) / static_cast<double>(diag.real_hist.size());
        std::vector<plot::Series> dens(2);
        for (size_t b = 0; b < diag.real_hist.size(); ++b) {
            const double center = diag.hist_lo + (static_cast<double>(b) + 0.5) * (bin > 0.0 ? bin : 1.0);
            density << detail::format_double(center) << "," << detail::format_double(diag.real_hist[b]) << ","
                    << detail::format_double(diag.gen_hist[b]) << "\n";
            dens[0].x.push_back(center);
            dens[0].y.push_back(diag.real_hist[b]);
            dens[1].x.push_back(center);
            dens[1].y.push_back(diag.gen_hist[b]);
        }
        density.close();
        if (!density) throw std::runtime_error("diagnose: write failed for density.csv");
        plot::save_bmp(plot::line_chart(dens), a.out + "/score_density.bmp");
        std::ofstream(a.out + "/diagnostics.txt") << format_diagnostics(diag);

        // singular-value spectrum of the generated batch, a flat spectrum
        // meaning diverse outputs
        auto ids = ds.indices(SplitTag::test);
        if (ids.empty()) ids = ds.indices(SplitTag::train);
        if (static_cast<idx>(ids.size()) > 16) ids.resize(16);
        std::vector<HSICube> lr;
        for (idx i : ids) lr.push_back(ds.pairs[static_cast<size_t>(i)].lr);
        const auto sr = generator_forward(st.gen, to_batch(std::span<const HSICube>(lr)));
        const auto spectrum = svd_mode_spectrum(sr);
        std::ofstream spec_csv(a.out + "/spectrum.csv");
        spec_csv << "mode,singular_value\n";
        std::vector<double> normalized;
        for (size_t i = 0; i < spectrum.values.size(); ++i) {
            spec_csv << i << "," << detail::format_double(spectrum.values[i]) << "\n";
            normalized.push_back(spectrum.degenerate ? 0.0 : spectrum.values[i] / spectrum.values.front());
        }
        spec_csv.close();
        if (!spec_csv) throw std::runtime_error("diagnose: write failed for spectrum.csv");
        plot::save_bmp(plot::bar_chart(normalized), a.out + "/mode_spectrum.bmp");

        std::cout << "score_overlap = " << detail::format_double(diag.score_overlap) << "\n";
        man.add_artifact(a.out + "/density.csv");
        man.add_artifact(a.out + "/score_density.bmp");
        man.add_artifact(a.out + "/diagnostics.txt");
        man.add_artifact(a.out + "/spectrum.csv");
        man.add_artifact(a.out + "/mode_spectrum.bmp");
        man.config.emplace_back("checkpoint", ckpt);
    }

    man.config.emplace_back("run", a.run);
    if (!a.compare.empty()) man.config.emplace_back("compare", a.compare);
    man.write(a.out + "/manifest.txt");
    return 0;
}

// ---- ablate -----------------------------------------------------------------

struct AblateArgs {
    std::string config_path, out;
    DataArgs data;
    std::optional<std::uint64_t> seed;
    std::optional<idx> pretrain_iters, joint_iters;
    idx eval_limit = 0;
};

int run_ablate(const AblateArgs& a, RunManifest man) {
    TrainConfig base = read_train_config(a.config_path);
    if (a.seed) base.seed = *a.seed;
    if (a.pretrain_iters) base.pretrain_iters = *a.pretrain_iters;
    if (a.joint_iters) base.joint_iters = *a.joint_iters;
    if (const auto env = env_seed_override()) base.seed = *env;
    base.validate();
    const auto ds = build_dataset(a.data, base.scale);

    fs::create_directories(a.out);
    std::ofstream csv(a.out + "/ablation.csv");
    csv << "model,psnr,ssim,sam,sre\n";
    std::ostringstream txt;
    for (int m = 1; m <= 5; ++m) {
        TrainConfig cfg = base;
        cfg.ablation_model = m;
        const std::string run_dir = a.out + "/model-" + std::to_string(m);
        TrainState st = init_train_state(cfg);
        pretrain(st, ds);
        joint_train(st, ds, run_dir);
        std::ofstream(run_dir + "/setup.txt") << resolve_setup(cfg).describe();
        const auto ev = mean_fidelity(st.gen, ds, SplitTag::test, a.eval_limit);
        csv << m << "," << detail::format_double(ev.psnr) << "," << detail::format_double(ev.ssim) << ","
            << detail::format_double(ev.sam) << "," << detail::format_double(ev.sre) << "\n";
        txt << "model " << m << ": psnr " << ev.psnr << " dB, ssim " << ev.ssim << ", sam " << ev.sam << " deg, sre "
            << ev.sre << "\n";
        man.add_artifact(run_dir + "/curves.csv");
        man.add_artifact(run_dir + "/setup.txt");
        std::cout << "model " << m << " done: psnr " << ev.psnr << " dB\n";
    }
    csv.close();
    if (!csv) throw std::runtime_error("ablate: write failed for ablation.csv");
    std::ofstream(a.out + "/table.txt") << txt.str();

    man.seeds.emplace_back("train", base.seed);
    man.config = {{"file", a.config_path}, {"joint_iters", std::to_string(base.joint_iters)}};
    man.add_artifact(a.out + "/ablation.csv");
    man.add_artifact(a.out + "/table.txt");
    man.write(a.out + "/manifest.txt");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hyperspectral single-image super-resolution toolkit"};
    app.require_subcommand(1);

    SynthArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic hyperspectral cube");
    synth_cmd->add_option("--width", synth_args.width);
    synth_cmd->add_option("--height", synth_args.height);
    synth_cmd->add_option("--bands", synth_args.bands);
    synth_cmd->add_option("--endmembers", synth_args.endmembers);
    synth_cmd->add_option("--smoothness", synth_args.smoothness);
    synth_cmd->add_option("--seed", synth_args.seed);
    synth_cmd->add_option("--out", synth_args.out, "output base path (.hdr/.raw)")->required();

    DegradeArgs degrade_args;
    auto* degrade_cmd = app.add_subcommand("degrade", "bicubic-downsample a cube, optionally adding band noise");
    degrade_cmd->add_option("--in", degrade_args.in, "input cube base path")->required();
    degrade_cmd->add_option("--out", degrade_args.out, "output base path")->required();
    degrade_cmd->add_option("--scale", degrade_args.scale, "downsampling factor")
        ->check(CLI::IsMember({2, 4, 8}));
    degrade_cmd->add_option("--snr", degrade_args.snr, "per-band SNR in dB, or 'inf' for noiseless");
    degrade_cmd->add_option("--seed", degrade_args.seed, "noise seed");

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "pretrain and jointly train a model into a run directory");
    train_cmd->add_option("--config", train_args.config_path, "training configuration file")->required();
    train_cmd->add_option("--out", train_args.out, "run directory")->required();
    add_data_options(train_cmd, train_args.data);
    train_cmd->add_option("--ablation", train_args.ablation, "ablation rung 1..5 (overrides config)");
    train_cmd->add_option("--loss", train_args.loss, "loss variant: ssrp, wasserstein_plain, js (overrides config)");
    train_cmd->add_option("--seed", train_args.seed, "training seed (overrides config)");
    train_cmd->add_option("--pretrain-iters", train_args.pretrain_iters, "override pretraining iterations");
    train_cmd->add_option("--joint-iters", train_args.joint_iters, "override joint iterations");
    train_cmd->add_option("--checkpoint-period", train_args.checkpoint_period, "override checkpoint period");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "super-resolve the test split and report quality metrics");
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "checkpoint directory (holds generator.hdr)");
    eval_cmd->add_option("--out", eval_args.out, "report directory")->required();
    add_data_options(eval_cmd, eval_args.data);
    eval_cmd->add_flag("--oracle-identity", eval_args.oracle_identity, "score the reference against itself");
    eval_cmd->add_option("--baseline", eval_args.baseline, "baseline mode instead of a model: bicubic");
    eval_cmd->add_option("--limit", eval_args.limit, "evaluate at most this many pairs");

    DiagnoseArgs diag_args;
    auto* diag_cmd = app.add_subcommand("diagnose", "render metric curves, score densities and mode spectra");
    diag_cmd->add_option("--run", diag_args.run, "run directory with curves.csv")->required();
    diag_cmd->add_option("--out", diag_args.out, "output directory (default <run>/diag)");
    diag_cmd->add_option("--compare", diag_args.compare, "second run directory for overlaid curves");
    auto* diag_data = diag_cmd->add_option("--data", diag_args.data.cubes, "cube file(s) for score diagnostics")
                          ->expected(-1);
    diag_cmd->add_option("--hr-patch", diag_args.data.hr_patch);
    diag_cmd->add_option("--stride", diag_args.data.stride);
    diag_cmd->add_option("--train-ratio", diag_args.data.train_ratio);
    diag_cmd->add_option("--split-seed", diag_args.data.split_seed);
    diag_cmd->add_option("--samples", diag_args.samples, "score samples per side");

    AblateArgs ablate_args;
    auto* ablate_cmd = app.add_subcommand("ablate", "train ablation rungs 1..5 and tabulate their quality");
    ablate_cmd->add_option("--config", ablate_args.config_path, "training configuration file")->required();
    ablate_cmd->add_option("--out", ablate_args.out, "output directory")->required();
    add_data_options(ablate_cmd, ablate_args.data);
    ablate_cmd->add_option("--seed", ablate_args.seed, "training seed (overrides config)");
    ablate_cmd->add_option("--pretrain-iters", ablate_args.pretrain_iters, "override pretraining iterations");
    ablate_cmd->add_option("--joint-iters", ablate_args.joint_iters, "override joint iterations");
    ablate_cmd->add_option("--eval-limit", ablate_args.eval_limit, "test pairs per model evaluation");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    RunManifest man;
    man.command = joined_args(argc, argv);
    try {
        if (synth_cmd->parsed()) return run_synth(synth_args, std::move(man));
        if (degrade_cmd->parsed()) return run_degrade(degrade_args, std::move(man));
        if (train_cmd->parsed()) return run_train(train_args, std::move(man));
        if (eval_cmd->parsed()) return run_eval(eval_args, std::move(man));
        if (diag_cmd->parsed()) {
            diag_args.have_data = diag_data->count() > 0;
            if (diag_args.out.empty()) diag_args.out = diag_args.run + "/diag";
            return run_diagnose(diag_args, std::move(man));
        }
        if (ablate_cmd->parsed()) return run_ablate(ablate_args, std::move(man));
    } catch (const DivergenceError& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
