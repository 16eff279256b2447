// Network hyper-parameter records. Defaults reproduce the full-size setup;
// desk-scale presets shrink them without changing any structural rule.
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "legan/core/tensor.hpp"

namespace legan {

struct GeneratorConfig {
    idx bands = 16;
    idx n_resblocks = 34;
    idx feature_width = 32;  // trunk channels; the upscale path widens to feature_width * bands
    idx first_kernel = 16;   // spatial extent of the band-spanning input conv
    double residual_scale = 0.1;
    idx scale = 2;                    // upscaling factor, one of 2 / 4 / 8
    bool single_stage_upscale = false; // one k^2 shuffle instead of a cascade of x2 stages
    bool bicubic_skip = true;          // add the bicubic-upsampled input to the network output
    bool progressive_resize = false;   // resize-convolution x2 stages instead of sub-pixel shuffles

    void validate() const {
        if (bands < 1) throw std::invalid_argument("generator config: bands must be positive");
        if (n_resblocks < 1) throw std::invalid_argument("generator config: n_resblocks must be >= 1");
        if (feature_width < 1) throw std::invalid_argument("generator config: feature_width must be positive");
        if (first_kernel < 1) throw std::invalid_argument("generator config: first_kernel must be positive");
        if (!(residual_scale > 0.0 && residual_scale <= 1.0))
            throw std::invalid_argument("generator config: residual_scale must be in (0, 1]");
        if (scale != 2 && scale != 4 && scale != 8)
            throw std::invalid_argument("generator config: scale must be 2, 4 or 8");
        if (progressive_resize && single_stage_upscale)
            throw std::invalid_argument("generator config: progressive resize upscales in x2 stages only");
    }
};

struct DiscriminatorConfig {
    idx bands = 16;
    idx n_maxpool_blocks = 8;
    idx base_channels = 64;
    idx dense_width = 1024;
    idx input_size = 64;         // training patch edge; fixes the flatten width of the dense head
    bool sigmoid_output = false; // bound the score to (0, 1); the full model keeps raw scores

    void validate() const {
        if (bands < 1) throw std::invalid_argument("discriminator config: bands must be positive");
        if (n_maxpool_blocks < 1) throw std::invalid_argument("discriminator config: n_maxpool_blocks must be >= 1");
        if (base_channels < 1) throw std::invalid_argument("discriminator config: base_channels must be positive");
        if (dense_width < 1) throw std::invalid_argument("discriminator config: dense_width must be positive");
        if (input_size < 1) throw std::invalid_argument("discriminator config: input_size must be positive");
    }

    // channel width of block i: doubles every second block, capped at 8x base
    idx block_channels(idx i) const {
        idx factor = 1;
        for (idx d = 0; d < i / 2 && factor < 8; ++d) factor *= 2;
        return base_channels * factor;
    }
    // stride-2 on every second block (the downsampling half of each channel pair)
    idx block_stride(idx i) const { return (i % 2 == 1) ? 2 : 1; }

    // spatial edge after all blocks, with ceil division per stride-2 block
    idx final_spatial() const {
        idx s = input_size;
        for (idx i = 0; i < n_maxpool_blocks; ++i)
            if (block_stride(i) == 2) s = (s + 1) / 2;
        return s;
    }
    idx flatten_width() const { return block_channels(n_maxpool_blocks - 1) * final_spatial() * final_spatial(); }
};

struct EncoderConfig {
    idx bands = 16;
    std::vector<idx> channel_schedule = {64, 64, 128, 128, 256, 256, 512, 512};
    idx latent_dim = 1024;

    void validate() const {
        if (bands < 1) throw std::invalid_argument("encoder config: bands must be positive");
        if (latent_dim < 1) throw std::invalid_argument("encoder config: latent_dim must be positive");
        if (channel_schedule.size() != 8)
            throw std::invalid_argument("encoder config: channel_schedule must have 8 entries");
        for (size_t i = 0; i < channel_schedule.size(); ++i) {
            if (channel_schedule[i] < 1) throw std::invalid_argument("encoder config: channel counts must be positive");
            if (i > 0 && channel_schedule[i] < channel_schedule[i - 1])
                throw std::invalid_argument("encoder config: channel_schedule must be non-decreasing");
        }
        if (channel_schedule.back() != 8 * channel_schedule.front())
            throw std::invalid_argument("encoder config: last channel count must be 8x the first");
    }

    // a conv strides by 2 exactly where the schedule steps up
    idx conv_stride(size_t i) const {
        return (i > 0 && channel_schedule[i] > channel_schedule[i - 1]) ? 2 : 1;
    }
};

} // namespace legan
