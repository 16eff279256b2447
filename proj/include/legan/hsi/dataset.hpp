#pragma once

// Patch extraction and the train/test split. LR patches are produced by
// downsampling each HR patch, so bicubic_downsample(pair.hr) == pair.lr holds
// bit-exactly by construction.

#include <string>

#include "legan/hsi/degrade.hpp"

namespace legan {

struct PatchPair {
    HSICube lr;
    HSICube hr;
    idx scale = 2;
    std::string source_id; // provenance: which scene / tile this came from
};

enum class SplitTag { train, test };

struct PatchPairDataset {
    std::vector<PatchPair> pairs;
    std::vector<SplitTag> split; // one tag per pair
    std::uint64_t seed = 0;      // seed of the most recent split_dataset call

    idx count(SplitTag tag) const {
        idx n = 0;
        for (auto t : split)
            if (t == tag) ++n;
        return n;
    }
    std::vector<idx> indices(SplitTag tag) const {
        std::vector<idx> out;
        for (size_t i = 0; i < split.size(); ++i)
            if (split[i] == tag) out.push_back(static_cast<idx>(i));
        return out;
    }
};

inline PatchPairDataset crop_pairs(const HSICube& hr, idx scale, idx hr_patch, idx stride,
                                   const std::string& source_tag = "") {
    hr.validate();
    check_scale(scale);
    if (hr_patch <= 0 || hr_patch % scale != 0)
        throw std::invalid_argument("crop_pairs: hr_patch must be a positive multiple of scale");
    if (stride <= 0) throw std::invalid_argument("crop_pairs: stride must be positive");
    if (hr_patch > hr.height || hr_patch > hr.width)
        throw std::invalid_argument("crop_pairs: patch " + std::to_string(hr_patch) + " larger than cube " +
                                    std::to_string(hr.height) + "x" + std::to_string(hr.width));
    PatchPairDataset ds;
    for (idx y = 0; y + hr_patch <= hr.height; y += stride) {
        for (idx x = 0; x + hr_patch <= hr.width; x += stride) {
            PatchPair p;
            p.hr = crop_cube(hr, y, x, hr_patch, hr_patch);
            p.lr = bicubic_downsample(p.hr, scale);
            p.scale = scale;
            p.source_id = (source_tag.empty() ? "tile" : source_tag) + "_y" + std::to_string(y) + "_x" + std::to_string(x);
            ds.pairs.push_back(std::move(p));
        }
    }
    ds.split.assign(ds.pairs.size(), SplitTag::train);
    return ds;
}

inline PatchPairDataset concat_datasets(PatchPairDataset a, const PatchPairDataset& b) {
    for (const auto& p : b.pairs) a.pairs.push_back(p);
    a.split.assign(a.pairs.size(), SplitTag::train);
    return a;
}

// Deterministic Fisher-Yates permutation by seed; the first floor(n*ratio)
// positions of the permutation become the training set.
inline PatchPairDataset split_dataset(PatchPairDataset ds, double train_ratio, std::uint64_t seed) {
    if (!(train_ratio > 0.0 && train_ratio < 1.0))
        throw std::invalid_argument("split_dataset: train_ratio must lie strictly between 0 and 1");
    const idx n = static_cast<idx>(ds.pairs.size());
    std::vector<idx> perm(static_cast<size_t>(n));
    for (idx i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
    Rng rng(seed);
    for (idx i = n - 1; i > 0; --i)
        std::swap(perm[static_cast<size_t>(i)], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
    const idx n_train = static_cast<idx>(std::floor(static_cast<double>(n) * train_ratio));
    ds.split.assign(static_cast<size_t>(n), SplitTag::test);
    for (idx i = 0; i < n_train; ++i) ds.split[static_cast<size_t>(perm[static_cast<size_t>(i)])] = SplitTag::train;
    ds.seed = seed;
    return ds;
}

} // namespace legan
