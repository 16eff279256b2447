// Network checkpoint archives. Each archive is a text header plus a raw
// little-endian float32 payload, in the same two-file key = value grammar as
// cube storage: <base>.hdr lists the config and a tensor manifest (name,
// shape, role, byte offset, byte count), <base>.raw holds the payloads
// back to back. Round-trips are bit-exact.
#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "legan/hsi/cube_io.hpp"
#include "legan/models/discriminator.hpp"
#include "legan/models/encoder.hpp"
#include "legan/models/generator.hpp"

namespace legan {

struct TensorArchive {
    std::string kind;
    std::map<std::string, std::string> meta; // extra header entries, keys lowercase
    ParamStore tensors;
    std::uint64_t init_seed = 0;
};

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string shape_csv(const Shape& s) {
    std::string out;
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out;
}

inline Shape parse_shape_csv(const std::string& s, const std::string& who) {
    Shape out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            out.push_back(std::stoll(trim(tok)));
        } catch (const std::exception&) {
            throw std::runtime_error(who + ": bad shape entry '" + tok + "'");
        }
    }
    if (out.empty()) throw std::runtime_error(who + ": empty shape");
    return out;
}

inline std::map<std::string, std::string> read_kv_header(const std::string& hdr_path) {
    std::ifstream in(hdr_path);
    if (!in) throw std::runtime_error("archive: cannot open header " + hdr_path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[lower(trim(line.substr(0, eq)))] = trim(line.substr(eq + 1));
    }
    return kv;
}

inline const std::string& kv_need(const std::map<std::string, std::string>& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error("archive: missing header key '" + key + "'");
    return it->second;
}

} // namespace detail

inline void save_archive(const TensorArchive& a, const std::string& path) {
    const std::string base = detail::base_path(path);
    std::int64_t total = 0;
    for (const auto& t : a.tensors.items) total += t.value.numel() * static_cast<idx>(sizeof(float));

    std::ofstream hdr(base + ".hdr");
    if (!hdr) throw std::runtime_error("archive: cannot write header " + base + ".hdr");
    hdr << "kind = " << a.kind << "\n";
    hdr << "version = 1\n";
    hdr << "dtype = f32le\n";
    hdr << "init_seed = " << a.init_seed << "\n";
    for (const auto& [k, v] : a.meta) hdr << k << " = " << v << "\n";
    hdr << "tensor_count = " << a.tensors.items.size() << "\n";
    std::int64_t offset = 0;
    for (size_t i = 0; i < a.tensors.items.size(); ++i) {
        const auto& t = a.tensors.items[i];
        const std::int64_t nbytes = t.value.numel() * static_cast<idx>(sizeof(float));
        const std::string p = "tensor." + std::to_string(i) + ".";
        hdr << p << "name = " << t.name << "\n";
        hdr << p << "shape = " << detail::shape_csv(t.value.shape) << "\n";
        hdr << p << "role = " << (t.buffer ? "buffer" : (t.trainable ? "trainable" : "frozen")) << "\n";
        hdr << p << "offset = " << offset << "\n";
        hdr << p << "nbytes = " << nbytes << "\n";
        offset += nbytes;
    }
    hdr << "payload_nbytes = " << total << "\n";
    hdr.close();
    if (!hdr) throw std::runtime_error("archive: failed writing header " + base + ".hdr");

    std::ofstream raw(base + ".raw", std::ios::binary);
    if (!raw) throw std::runtime_error("archive: cannot write payload " + base + ".raw");
    for (const auto& t : a.tensors.items)
        raw.write(reinterpret_cast<const char*>(t.value.ptr()),
                  static_cast<std::streamsize>(t.value.numel() * sizeof(float)));
    raw.close();
    if (!raw) throw std::runtime_error("archive: failed writing payload " + base + ".raw");
}

inline TensorArchive load_archive(const std::string& path) {
    const std::string base = detail::base_path(path);
    auto kv = detail::read_kv_header(base + ".hdr");
    TensorArchive a;
    a.kind = detail::kv_need(kv, "kind");
    if (detail::lower(detail::kv_need(kv, "dtype")) != "f32le")
        throw std::runtime_error("archive: unsupported dtype " + kv.at("dtype"));
    a.init_seed = std::stoull(detail::kv_need(kv, "init_seed"));

    const size_t count = std::stoull(detail::kv_need(kv, "tensor_count"));
    const std::int64_t payload = std::stoll(detail::kv_need(kv, "payload_nbytes"));

    std::ifstream raw(base + ".raw", std::ios::binary);
    if (!raw) throw std::runtime_error("archive: cannot open payload " + base + ".raw");
    raw.seekg(0, std::ios::end);
    if (raw.tellg() != payload)
        throw std::runtime_error("archive: payload holds " + std::to_string(raw.tellg()) + " bytes, header declares " +
                                 std::to_string(payload));

    std::int64_t expected_offset = 0;
    for (size_t i = 0; i < count; ++i) {
        const std::string p = "tensor." + std::to_string(i) + ".";
        const std::string name = detail::kv_need(kv, p + "name");
        const Shape shape = detail::parse_shape_csv(detail::kv_need(kv, p + "shape"), "archive tensor " + name);
        const std::string role = detail::lower(detail::kv_need(kv, p + "role"));
        const std::int64_t offset = std::stoll(detail::kv_need(kv, p + "offset"));
        const std::int64_t nbytes = std::stoll(detail::kv_need(kv, p + "nbytes"));
        if (offset != expected_offset || nbytes != shape_numel(shape) * static_cast<idx>(sizeof(float)))
            throw std::runtime_error("archive: manifest layout inconsistent at tensor " + name);
        expected_offset = offset + nbytes;

        Tensor<float> t(shape);
        raw.seekg(offset);
        raw.read(reinterpret_cast<char*>(t.ptr()), nbytes);
        if (raw.gcount() != nbytes) throw std::runtime_error("archive: short read for tensor " + name);
        a.tensors.add(name, std::move(t), role == "trainable", role == "buffer");
    }
    if (expected_offset != payload) throw std::runtime_error("archive: manifest does not cover the payload");

    for (const auto& [k, v] : kv)
        if (k.rfind("config.", 0) == 0) a.meta[k] = v;
    return a;
}

namespace detail {

// adopt archive tensors after checking they structurally match a reference
// store freshly built from the config
inline void adopt_tensors(ParamStore& reference, const TensorArchive& a, const std::string& what) {
    if (reference.items.size() != a.tensors.items.size())
        throw std::runtime_error("archive: " + what + " tensor count mismatch");
    for (size_t i = 0; i < reference.items.size(); ++i) {
        auto& ref = reference.items[i];
        const auto& got = a.tensors.items[i];
        if (ref.name != got.name || ref.trainable != got.trainable || ref.buffer != got.buffer ||
            !ref.value.same_shape(got.value))
            throw std::runtime_error("archive: " + what + " layout mismatch at tensor " + got.name);
        ref.value = got.value;
    }
}

inline const std::string& meta_need(const TensorArchive& a, const std::string& key) {
    auto it = a.meta.find(key);
    if (it == a.meta.end()) throw std::runtime_error("archive: missing config key '" + key + "'");
    return it->second;
}

} // namespace detail

inline void save_network(const GeneratorWeights& w, const std::string& path) {
    TensorArchive a;
    a.kind = "generator";
    a.init_seed = w.init_seed;
    a.tensors = w.params;
    const auto& c = w.config;
    a.meta["config.bands"] = std::to_string(c.bands);
    a.meta["config.n_resblocks"] = std::to_string(c.n_resblocks);
    a.meta["config.feature_width"] = std::to_string(c.feature_width);
    a.meta["config.first_kernel"] = std::to_string(c.first_kernel);
    a.meta["config.residual_scale"] = detail::format_double(c.residual_scale);
    a.meta["config.scale"] = std::to_string(c.scale);
    a.meta["config.single_stage_upscale"] = c.single_stage_upscale ? "1" : "0";
    a.meta["config.bicubic_skip"] = c.bicubic_skip ? "1" : "0";
    a.meta["config.progressive_resize"] = c.progressive_resize ? "1" : "0";
    save_archive(a, path);
}

inline void save_network(const DiscriminatorWeights& w, const std::string& path) {
    TensorArchive a;
    a.kind = "discriminator";
    a.init_seed = w.init_seed;
    a.tensors = w.params;
    const auto& c = w.config;
    a.meta["config.bands"] = std::to_string(c.bands);
    a.meta["config.n_maxpool_blocks"] = std::to_string(c.n_maxpool_blocks);
    a.meta["config.base_channels"] = std::to_string(c.base_channels);
    a.meta["config.dense_width"] = std::to_string(c.dense_width);
    a.meta["config.input_size"] = std::to_string(c.input_size);
    a.meta["config.sigmoid_output"] = c.sigmoid_output ? "1" : "0";
    save_archive(a, path);
}

inline void save_network(const EncoderWeights& w, const std::string& path) {
    TensorArchive a;
    a.kind = "encoder";
    a.init_seed = w.init_seed;
    a.tensors = w.params;
    const auto& c = w.config;
    a.meta["config.bands"] = std::to_string(c.bands);
    a.meta["config.channel_schedule"] = detail::shape_csv(c.channel_schedule);
    a.meta["config.latent_dim"] = std::to_string(c.latent_dim);
    save_archive(a, path);
}

inline GeneratorWeights load_generator(const std::string& path) {
    auto a = load_archive(path);
    if (a.kind != "generator") throw std::runtime_error("archive: expected a generator, found " + a.kind);
    GeneratorConfig c;
    c.bands = std::stoll(detail::meta_need(a, "config.bands"));
    c.n_resblocks = std::stoll(detail::meta_need(a, "config.n_resblocks"));
    c.feature_width = std::stoll(detail::meta_need(a, "config.feature_width"));
    c.first_kernel = std::stoll(detail::meta_need(a, "config.first_kernel"));
    c.residual_scale = std::stod(detail::meta_need(a, "config.residual_scale"));
    c.scale = std::stoll(detail::meta_need(a, "config.scale"));
    c.single_stage_upscale = detail::meta_need(a, "config.single_stage_upscale") == "1";
    c.bicubic_skip = detail::meta_need(a, "config.bicubic_skip") == "1";
    c.progressive_resize = detail::meta_need(a, "config.progressive_resize") == "1";
    GeneratorWeights w = init_weights(c, a.init_seed);
    detail::adopt_tensors(w.params, a, "generator");
    return w;
}

inline DiscriminatorWeights load_discriminator(const std::string& path) {
    auto a = load_archive(path);
    if (a.kind != "discriminator") throw std::runtime_error("archive: expected a discriminator, found " + a.kind);
    DiscriminatorConfig c;
    c.bands = std::stoll(detail::meta_need(a, "config.bands"));
    c.n_maxpool_blocks = std::stoll(detail::meta_need(a, "config.n_maxpool_blocks"));
    c.base_channels = std::stoll(detail::meta_need(a, "config.base_channels"));
    c.dense_width = std::stoll(detail::meta_need(a, "config.dense_width"));
    c.input_size = std::stoll(detail::meta_need(a, "config.input_size"));
    c.sigmoid_output = detail::meta_need(a, "config.sigmoid_output") == "1";
    DiscriminatorWeights w = init_weights(c, a.init_seed);
    detail::adopt_tensors(w.params, a, "discriminator");
    return w;
}

inline EncoderWeights load_encoder(const std::string& path) {
    auto a = load_archive(path);
    if (a.kind != "encoder") throw std::runtime_error("archive: expected an encoder, found " + a.kind);
    EncoderConfig c;
    c.bands = std::stoll(detail::meta_need(a, "config.bands"));
    c.channel_schedule = detail::parse_shape_csv(detail::meta_need(a, "config.channel_schedule"), "encoder schedule");
    c.latent_dim = std::stoll(detail::meta_need(a, "config.latent_dim"));
    EncoderWeights w = init_weights(c, a.init_seed);
    detail::adopt_tensors(w.params, a, "encoder");
    return w;
}

} // namespace legan
