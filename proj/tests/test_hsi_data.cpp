// Cube I/O, synthesis and degradation pipeline tests. The oracles here are
// deliberately independent re-implementations: a direct (non-separable)
// 16-tap bicubic resampler, a Lawson-Hanson non-negative least squares
// unmixer, and empirical SNR measured from the injected residual.

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <Eigen/Dense>

#include "legan/hsi/cube_io.hpp"
#include "legan/hsi/dataset.hpp"
#include "legan/hsi/synth.hpp"
#include "support/test_util.hpp"

using namespace legan;
using testutil::close;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    auto p = fs::temp_directory_path() / "legan_hsi_test";
    fs::create_directories(p);
    return p;
}

HSICube random_cube(idx h, idx w, idx b, std::uint64_t seed) {
    HSICube c(h, w, b);
    Rng rng(seed);
    for (auto& v : c.data) v = static_cast<float>(rng.uniform(0.0, 255.0));
    return c;
}

// direct 2-d bicubic oracle: same kernel and alignment conventions, but the
// full 4x4 tap tensor product per output pixel instead of separable passes
double oracle_bicubic_sample(const std::vector<double>& img, idx h, idx w, double sy, double sx) {
    auto cm = [](double f) {
        double af = std::abs(f);
        if (af <= 1.0) return 1.5 * af * af * af - 2.5 * af * af + 1.0;
        if (af < 2.0) return -0.5 * af * af * af + 2.5 * af * af - 4.0 * af + 2.0;
        return 0.0;
    };
    auto reflect = [](idx i, idx n) {
        if (n == 1) return idx{0};
        const idx period = 2 * (n - 1);
        idx m = i % period;
        if (m < 0) m += period;
        return m < n ? m : period - m;
    };
    const idx iy = static_cast<idx>(std::floor(sy));
    const idx ix = static_cast<idx>(std::floor(sx));
    double acc = 0.0;
    for (idx dy = -1; dy <= 2; ++dy)
        for (idx dx = -1; dx <= 2; ++dx) {
            const double wgt = cm(sy - static_cast<double>(iy + dy)) * cm(sx - static_cast<double>(ix + dx));
            acc += wgt * img[static_cast<size_t>(reflect(iy + dy, h) * w + reflect(ix + dx, w))];
        }
    return acc;
}

std::vector<double> oracle_bicubic_resize(const std::vector<double>& img, idx h, idx w, idx oh, idx ow) {
    std::vector<double> out(static_cast<size_t>(oh * ow));
    for (idx y = 0; y < oh; ++y)
        for (idx x = 0; x < ow; ++x) {
            const double sy = (static_cast<double>(y) + 0.5) * static_cast<double>(h) / static_cast<double>(oh) - 0.5;
            const double sx = (static_cast<double>(x) + 0.5) * static_cast<double>(w) / static_cast<double>(ow) - 0.5;
            out[static_cast<size_t>(y * ow + x)] = oracle_bicubic_sample(img, h, w, sy, sx);
        }
    return out;
}

// Lawson-Hanson NNLS: min ||E a - y||_2 subject to a >= 0
Eigen::VectorXd nnls(const Eigen::MatrixXd& E, const Eigen::VectorXd& y) {
    const int n = static_cast<int>(E.cols());
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    std::vector<bool> passive(static_cast<size_t>(n), false);
    const double tol = 1e-10 * E.norm();
    for (int outer = 0; outer < 8 * n; ++outer) {
        Eigen::VectorXd wv = E.transpose() * (y - E * a);
        int j = -1;
        double best = tol;
        for (int i = 0; i < n; ++i)
            if (!passive[static_cast<size_t>(i)] && wv(i) > best) {
                best = wv(i);
                j = i;
            }
        if (j < 0) break;
        passive[static_cast<size_t>(j)] = true;
        for (int inner = 0; inner < 8 * n; ++inner) {
            std::vector<int> idxs;
            for (int i = 0; i < n; ++i)
                if (passive[static_cast<size_t>(i)]) idxs.push_back(i);
            Eigen::MatrixXd Ep(E.rows(), static_cast<int>(idxs.size()));
            for (size_t k = 0; k < idxs.size(); ++k) Ep.col(static_cast<int>(k)) = E.col(idxs[k]);
            Eigen::VectorXd zp = Ep.colPivHouseholderQr().solve(y);
            Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
            for (size_t k = 0; k < idxs.size(); ++k) z(idxs[k]) = zp(static_cast<int>(k));
            bool all_pos = true;
            for (int i : idxs)
                if (z(i) <= 0.0) all_pos = false;
            if (all_pos) {
                a = z;
                break;
            }
            double alpha = 1e300;
            for (int i : idxs)
                if (z(i) <= 0.0) alpha = std::min(alpha, a(i) / (a(i) - z(i)));
            a += alpha * (z - a);
            for (int i : idxs)
                if (a(i) <= 1e-12) {
                    passive[static_cast<size_t>(i)] = false;
                    a(i) = 0.0;
                }
        }
    }
    return a;
}

} // namespace

TEST_CASE("cube save/load round trip is bit-exact") {
    auto dir = temp_dir();
    auto c = random_cube(4, 4, 3, 77);
    c.wavelengths = {412.5, 433.25, 1001.125};
    save_cube(c, (dir / "rt").string());
    auto back = load_cube((dir / "rt").string());
    REQUIRE(back.identical(c));
    // a second save of the loaded cube produces identical files
    save_cube(back, (dir / "rt2").string());
    std::ifstream f1(dir / "rt.raw", std::ios::binary), f2(dir / "rt2.raw", std::ios::binary);
    std::vector<char> b1((std::istreambuf_iterator<char>(f1)), {});
    std::vector<char> b2((std::istreambuf_iterator<char>(f2)), {});
    REQUIRE(b1 == b2);
}

TEST_CASE("header parsing: case-insensitive keys, unknown keys ignored, .hdr/.raw/base paths accepted") {
    auto dir = temp_dir();
    auto c = random_cube(3, 5, 2, 78);
    save_cube(c, (dir / "hdrcase").string());
    // rewrite the header with scrambled case and an extra key
    {
        std::ofstream h(dir / "hdrcase.hdr");
        h << "HeIgHt = 3\nWIDTH = 5\nBands = 2\nDTYPE = F32LE\ninterleave = BSQ\n";
        h << "wavelengths = 1, 2\n";
        h << "sensor_note = synthetic rig, ignore me\n";
    }
    for (const char* suffix : {"hdrcase", "hdrcase.hdr", "hdrcase.raw"}) {
        auto back = load_cube((dir / suffix).string());
        REQUIRE(back.height == 3);
        REQUIRE(back.width == 5);
        REQUIRE(back.bands == 2);
        REQUIRE(back.data == c.data);
    }
}

TEST_CASE("cube I/O error cases") {
    auto dir = temp_dir();
    REQUIRE_THROWS(load_cube((dir / "does_not_exist").string()));

    // header declares 16 bands, payload holds 15
    HSICube c16 = random_cube(4, 4, 16, 79);
    save_cube(c16, (dir / "short").string());
    fs::resize_file(dir / "short.raw", 4 * 4 * 15 * sizeof(float));
    REQUIRE_THROWS_WITH(load_cube((dir / "short").string()), Catch::Matchers::ContainsSubstring("bytes"));

    // non-increasing wavelengths
    auto c = random_cube(2, 2, 3, 80);
    save_cube(c, (dir / "wl").string());
    {
        std::ofstream h(dir / "wl.hdr");
        h << "height = 2\nwidth = 2\nbands = 3\ndtype = f32le\ninterleave = bsq\nwavelengths = 500, 500, 600\n";
    }
    REQUIRE_THROWS_WITH(load_cube((dir / "wl").string()), Catch::Matchers::ContainsSubstring("increasing"));

    // wavelength count mismatch
    {
        std::ofstream h(dir / "wl.hdr");
        h << "height = 2\nwidth = 2\nbands = 3\ndtype = f32le\ninterleave = bsq\nwavelengths = 500, 600\n";
    }
    REQUIRE_THROWS(load_cube((dir / "wl").string()));

    // unsupported dtype / interleave
    {
        std::ofstream h(dir / "wl.hdr");
        h << "height = 2\nwidth = 2\nbands = 3\ndtype = f64le\ninterleave = bsq\nwavelengths = 500, 600, 700\n";
    }
    REQUIRE_THROWS_WITH(load_cube((dir / "wl").string()), Catch::Matchers::ContainsSubstring("dtype"));

    // missing required key
    {
        std::ofstream h(dir / "wl.hdr");
        h << "height = 2\nwidth = 2\ndtype = f32le\ninterleave = bsq\nwavelengths = 500, 600, 700\n";
    }
    REQUIRE_THROWS_WITH(load_cube((dir / "wl").string()), Catch::Matchers::ContainsSubstring("bands"));

    // NaN cube rejected before write
    auto bad = random_cube(2, 2, 2, 81);
    bad.data[3] = std::numeric_limits<float>::quiet_NaN();
    REQUIRE_THROWS(save_cube(bad, (dir / "nan").string()));
    REQUIRE(!fs::exists(dir / "nan.hdr"));
}

TEST_CASE("220-band cube accepted; payload size arithmetic") {
    auto dir = temp_dir();
    HSICube c(6, 6, 220);
    for (idx b = 0; b < 220; ++b) c.wavelengths[static_cast<size_t>(b)] = 450.0 + (950.0 - 450.0) * static_cast<double>(b) / 219.0;
    save_cube(c, (dir / "b220").string());
    auto back = load_cube((dir / "b220").string());
    REQUIRE(back.bands == 220);

    HSICube big(384, 384, 16);
    save_cube(big, (dir / "big").string());
    REQUIRE(fs::file_size(dir / "big.raw") == 384u * 384u * 16u * 4u);
}

TEST_CASE("synth_cube: determinism, range, validation") {
    SynthSpec spec;
    spec.seed = 7;
    auto a = synth_cube(spec);
    auto b = synth_cube(spec);
    REQUIRE(a.identical(b));
    spec.seed = 8;
    auto c = synth_cube(spec);
    REQUIRE(!a.identical(c));

    for (float v : a.data) {
        REQUIRE(v >= 0.0f);
        REQUIRE(v <= 255.0f);
    }
    REQUIRE_NOTHROW(a.validate());

    SynthSpec bad = spec;
    bad.n_endmembers = 1;
    REQUIRE_THROWS(synth_cube(bad));
    bad = spec;
    bad.smoothness = 0.0;
    REQUIRE_THROWS(synth_cube(bad));
}

TEST_CASE("synth_cube pixels are convex endmember mixtures (NNLS recovery)") {
    SynthSpec spec{64, 64, 16, 4, 8.0, 7};
    auto scene = synth_scene(spec);
    Eigen::MatrixXd E(16, 4);
    for (int e = 0; e < 4; ++e)
        for (int b = 0; b < 16; ++b) E(b, e) = scene.endmembers[static_cast<size_t>(e)][static_cast<size_t>(b)];

    double worst_sum_err = 0.0, worst_rec = 0.0;
    for (idx p = 0; p < 64 * 64; ++p) {
        Eigen::VectorXd y(16);
        for (idx b = 0; b < 16; ++b) y(b) = scene.cube.data[static_cast<size_t>(b * 64 * 64 + p)];
        Eigen::VectorXd a = nnls(E, y);
        worst_sum_err = std::max(worst_sum_err, std::abs(a.sum() - 1.0));
        for (int e = 0; e < 4; ++e)
            worst_rec = std::max(worst_rec, std::abs(a(e) - scene.abundances[static_cast<size_t>(e)][static_cast<size_t>(p)]));
    }
    INFO("worst abundance-sum error " << worst_sum_err << ", worst recovery error " << worst_rec);
    REQUIRE(worst_sum_err < 1e-6);
    REQUIRE(worst_rec < 1e-4); // recovered abundances match the stored ones
}

TEST_CASE("bicubic_downsample: shape law and constants") {
    HSICube big(384, 384, 2);
    big.wavelengths = {500, 600};
    for (auto& v : big.data) v = 100.0f;
    auto down = bicubic_downsample(big, 2);
    REQUIRE(down.height == 192);
    REQUIRE(down.width == 192);
    REQUIRE(down.bands == 2);

    // spatially constant cube stays constant
    for (float v : down.data) REQUIRE(close(v, 100.0, 1e-9, 0.0));

    REQUIRE_THROWS(bicubic_downsample(big, 3));
    HSICube odd(9, 9, 1);
    REQUIRE_THROWS(bicubic_downsample(odd, 2));
}

TEST_CASE("bicubic_downsample matches the direct 16-tap oracle on a ramp (and noise)") {
    // 48x48 linear ramp
    HSICube ramp(48, 48, 1);
    for (idx y = 0; y < 48; ++y)
        for (idx x = 0; x < 48; ++x) ramp.at(0, y, x) = static_cast<float>(2.0 * x + 0.5 * y);
    auto down = bicubic_downsample(ramp, 2);
    std::vector<double> src(48 * 48);
    for (size_t i = 0; i < src.size(); ++i) src[i] = ramp.data[i];
    auto want = oracle_bicubic_resize(src, 48, 48, 24, 24);
    for (idx i = 0; i < 24 * 24; ++i) {
        INFO("pixel " << i);
        REQUIRE(close(down.data[static_cast<size_t>(i)], want[static_cast<size_t>(i)], 1e-4, 0.0));
    }

    // and on textured data, scales 2 and 4, including upsampling
    auto cube = synth_cube(SynthSpec{32, 32, 3, 3, 3.0, 21});
    for (idx scale : {2, 4}) {
        auto d = bicubic_downsample(cube, scale);
        for (idx b = 0; b < 3; ++b) {
            std::vector<double> plane(32 * 32);
            for (idx i = 0; i < 32 * 32; ++i) plane[static_cast<size_t>(i)] = cube.band_ptr(b)[i];
            auto w = oracle_bicubic_resize(plane, 32, 32, 32 / scale, 32 / scale);
            for (idx i = 0; i < (32 / scale) * (32 / scale); ++i)
                REQUIRE(close(d.band_ptr(b)[i], w[static_cast<size_t>(i)], 1e-4, 0.0));
        }
    }
    auto up = bicubic_upsample(cube, 2);
    REQUIRE(up.height == 64);
    std::vector<double> plane(32 * 32);
    for (idx i = 0; i < 32 * 32; ++i) plane[static_cast<size_t>(i)] = cube.band_ptr(1)[i];
    auto w = oracle_bicubic_resize(plane, 32, 32, 64, 64);
    for (idx i = 0; i < 64 * 64; ++i) REQUIRE(close(up.band_ptr(1)[i], w[static_cast<size_t>(i)], 1e-4, 0.0));
}

TEST_CASE("degradation commutes with band selection") {
    auto cube = synth_cube(SynthSpec{32, 32, 5, 3, 4.0, 33});
    auto down_then_pick = select_band(bicubic_downsample(cube, 2), 3);
    auto pick_then_down = bicubic_downsample(select_band(cube, 3), 2);
    REQUIRE(down_then_pick.data == pick_then_down.data);
}

TEST_CASE("add_noise_snr: identity, target SNR, monotonicity, zero-mean") {
    auto cube = synth_cube(SynthSpec{64, 64, 16, 4, 8.0, 5});

    auto same = add_noise_snr(cube, std::numeric_limits<double>::infinity(), 3);
    REQUIRE(same.identical(cube));

    auto n40 = add_noise_snr(cube, 40.0, 3);
    auto n40b = add_noise_snr(cube, 40.0, 3);
    REQUIRE(n40.identical(n40b)); // deterministic per seed

    const idx plane = 64 * 64;
    double mean_abs_40 = 0.0;
    for (idx b = 0; b < 16; ++b) {
        double ps = 0.0, pn = 0.0, mean = 0.0;
        for (idx i = 0; i < plane; ++i) {
            const double s = cube.band_ptr(b)[i];
            const double d = static_cast<double>(n40.band_ptr(b)[i]) - s;
            ps += s * s;
            pn += d * d;
            mean += d;
            mean_abs_40 += std::abs(d);
        }
        const double snr = 10.0 * std::log10(ps / pn);
        INFO("band " << b << " empirical snr " << snr);
        REQUIRE(close(snr, 40.0, 0.5, 0.0));
        // sample mean of the injected noise within 3 sigma / sqrt(N)
        const double sigma = std::sqrt(pn / plane);
        REQUIRE(std::abs(mean / plane) <= 3.0 * sigma / std::sqrt(static_cast<double>(plane)));
    }

    auto n80 = add_noise_snr(cube, 80.0, 3);
    double mean_abs_80 = 0.0;
    for (size_t i = 0; i < cube.data.size(); ++i)
        mean_abs_80 += std::abs(static_cast<double>(n80.data[i]) - cube.data[i]);
    REQUIRE(mean_abs_80 < mean_abs_40);

    REQUIRE_THROWS(add_noise_snr(cube, 0.0, 3));
    REQUIRE_THROWS(add_noise_snr(cube, -5.0, 3));
    REQUIRE_THROWS(add_noise_snr(cube, 250.0, 3));
}

TEST_CASE("crop_pairs: tiling arithmetic and constructive LR identity") {
    {
        HSICube hr(384, 384, 1);
        for (idx i = 0; i < hr.numel(); ++i) hr.data[static_cast<size_t>(i)] = static_cast<float>(i % 251);
        auto ds = crop_pairs(hr, 8, 384, 384);
        REQUIRE(ds.pairs.size() == 1);
        REQUIRE(ds.pairs[0].lr.height == 48);
        REQUIRE(ds.pairs[0].lr.width == 48);
    }
    auto hr = synth_cube(SynthSpec{128, 128, 3, 3, 6.0, 13});
    auto ds = crop_pairs(hr, 2, 64, 64);
    REQUIRE(ds.pairs.size() == 4);
    for (const auto& p : ds.pairs) {
        REQUIRE(p.lr.height == 32);
        REQUIRE(p.lr.width == 32);
        REQUIRE(p.hr.height == p.lr.height * p.scale);
        REQUIRE(p.hr.width == p.lr.width * p.scale);
        REQUIRE(p.hr.bands == p.lr.bands);
        auto redo = bicubic_downsample(p.hr, p.scale);
        REQUIRE(redo.data == p.lr.data); // bit-exact
        REQUIRE(!p.source_id.empty());
    }

    REQUIRE_THROWS(crop_pairs(hr, 2, 256, 64));  // patch larger than cube
    REQUIRE_THROWS(crop_pairs(hr, 2, 63, 64));   // patch not divisible by scale
}

TEST_CASE("split_dataset: deterministic, counts follow floor(n*ratio)") {
    PatchPairDataset ds;
    ds.pairs.resize(196);
    ds.split.assign(196, SplitTag::train);
    auto s1 = split_dataset(ds, 0.7, 42);
    REQUIRE(s1.count(SplitTag::train) == 137);
    REQUIRE(s1.count(SplitTag::test) == 59);

    auto s2 = split_dataset(ds, 0.7, 42);
    REQUIRE(s1.split == s2.split);
    auto s3 = split_dataset(ds, 0.7, 43);
    REQUIRE(s1.split != s3.split);

    PatchPairDataset ten;
    ten.pairs.resize(10);
    ten.split.assign(10, SplitTag::train);
    auto s4 = split_dataset(ten, 0.5, 1);
    REQUIRE(s4.count(SplitTag::train) == 5);
    REQUIRE(s4.count(SplitTag::test) == 5);

    REQUIRE_THROWS(split_dataset(ten, 0.0, 1));
    REQUIRE_THROWS(split_dataset(ten, 1.0, 1));
}
