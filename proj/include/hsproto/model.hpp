#ifndef HSPROTO_MODEL_HPP
#define HSPROTO_MODEL_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "hsproto/error.hpp"
#include "hsproto/rng.hpp"

namespace hsproto {

// Architecture and init hyperparameters. `digest()` fingerprints every field,
// and checkpoints / prototype banks carry it so mismatched artifacts are
// rejected at load time instead of producing silently wrong numbers.
struct ModelConfig {
    int channels = 0;  // spectral channels entering the network
    int c_out = 3;     // spectral downsampler output width
    int reduction_ratio = 16;
    std::vector<int> stage_widths{32, 64};
    int blocks_per_stage = 2;
    bool residual = true;
    bool attention = true;
    uint64_t init_seed = 0;

    int embed_dim() const { return stage_widths.empty() ? 0 : stage_widths.back(); }
    int reduced_width() const { return std::max(channels / reduction_ratio, 1); }

    void validate() const {
        if (channels < 1) throw ArgumentError("model: channels must be >= 1");
        if (c_out < 1) throw ArgumentError("model: c_out must be >= 1");
        if (reduction_ratio < 1) throw ArgumentError("model: reduction_ratio must be >= 1");
        if (stage_widths.empty()) throw ArgumentError("model: no backbone stages");
        for (int w : stage_widths)
            if (w < 1) throw ArgumentError("model: stage width must be >= 1");
        if (embed_dim() < 2) throw ArgumentError("model: embedding dim must be >= 2");
        if (blocks_per_stage < 1) throw ArgumentError("model: blocks_per_stage must be >= 1");
    }

    nlohmann::json to_json() const {
        return {{"channels", channels},
                {"c_out", c_out},
                {"reduction_ratio", reduction_ratio},
                {"stage_widths", stage_widths},
                {"blocks_per_stage", blocks_per_stage},
                {"residual", residual},
                {"attention", attention},
                {"init_seed", init_seed}};
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.channels = j.at("channels").get<int>();
        c.c_out = j.at("c_out").get<int>();
        c.reduction_ratio = j.at("reduction_ratio").get<int>();
        c.stage_widths = j.at("stage_widths").get<std::vector<int>>();
        c.blocks_per_stage = j.at("blocks_per_stage").get<int>();
        c.residual = j.at("residual").get<bool>();
        c.attention = j.at("attention").get<bool>();
        c.init_seed = j.at("init_seed").get<uint64_t>();
        return c;
    }

    // FNV-1a over the canonical JSON dump (nlohmann keeps object keys sorted).
    uint64_t digest() const {
        const std::string s = to_json().dump();
        uint64_t h = 0xcbf29ce484222325ull;
        for (unsigned char ch : s) {
            h ^= ch;
            h *= 0x100000001b3ull;
        }
        return h;
    }
};

namespace detail {
template <typename T>
void he_uniform(std::vector<T>& w, size_t fan_in, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& x : w) x = static_cast<T>(uniform_range(rng, -limit, limit));
}
}  // namespace detail

// Square convolution, zero padding ksize/2, weights [ky][kx][cin][cout].
template <typename T>
struct ConvLayer {
    int cin = 0, cout = 0, ksize = 1, stride = 1;
    std::vector<T> w, b;

    void allocate(int cin_, int cout_, int ksize_, int stride_) {
        cin = cin_;
        cout = cout_;
        ksize = ksize_;
        stride = stride_;
        w.assign(static_cast<size_t>(ksize) * ksize * cin * cout, T(0));
        b.assign(static_cast<size_t>(cout), T(0));
    }
    void init(uint64_t seed) {
        Rng rng(seed);
        detail::he_uniform(w, static_cast<size_t>(ksize) * ksize * cin, rng);
    }
};

// conv1 -> relu -> conv2, optional identity/projection shortcut, relu.
// The 1x1 projection is present whenever the shortcut changes shape.
template <typename T>
struct ResBlock {
    ConvLayer<T> c1, c2, proj;
    bool has_proj = false;
};

// Channel attention: z -> fc1 -> relu -> fc2 -> logistic.
// fc1 is reduced x C, fc2 is C x reduced, both row-major with bias.
template <typename T>
struct SEBlock {
    int channels = 0, reduced = 0;
    std::vector<T> w1, b1, w2, b2;

    void allocate(int channels_, int reduction_ratio) {
        channels = channels_;
        reduced = std::max(channels / reduction_ratio, 1);
        w1.assign(static_cast<size_t>(reduced) * channels, T(0));
        b1.assign(static_cast<size_t>(reduced), T(0));
        w2.assign(static_cast<size_t>(channels) * reduced, T(0));
        b2.assign(static_cast<size_t>(channels), T(0));
    }
};

template <typename T>
struct EmbedModel {
    ModelConfig cfg;
    SEBlock<T> se;     // allocated only when cfg.attention
    ConvLayer<T> down; // 1x1, channels -> c_out
    std::vector<std::vector<ResBlock<T>>> stages;

    // Visits every learnable tensor in a fixed order with a stable name.
    // The name doubles as the checkpoint key and the per-tensor init salt.
    template <typename F>
    void for_each_tensor(F&& f) {
        if (cfg.attention) {
            f("se.fc1.w", se.w1);
            f("se.fc1.b", se.b1);
            f("se.fc2.w", se.w2);
            f("se.fc2.b", se.b2);
        }
        f("down.w", down.w);
        f("down.b", down.b);
        for (size_t s = 0; s < stages.size(); ++s)
            for (size_t b = 0; b < stages[s].size(); ++b) {
                const std::string p =
                    "stage" + std::to_string(s) + ".block" + std::to_string(b) + ".";
                auto& blk = stages[s][b];
                f(p + "conv1.w", blk.c1.w);
                f(p + "conv1.b", blk.c1.b);
                f(p + "conv2.w", blk.c2.w);
                f(p + "conv2.b", blk.c2.b);
                if (blk.has_proj) {
                    f(p + "proj.w", blk.proj.w);
                    f(p + "proj.b", blk.proj.b);
                }
            }
    }
    template <typename F>
    void for_each_tensor(F&& f) const {
        const_cast<EmbedModel<T>*>(this)->for_each_tensor(
            [&](const std::string& name, std::vector<T>& v) {
                f(name, const_cast<const std::vector<T>&>(v));
            });
    }

    size_t num_params() const {
        size_t n = 0;
        for_each_tensor([&](const std::string&, const std::vector<T>& v) { n += v.size(); });
        return n;
    }

    // Pointers to every scalar parameter, in tensor visit order.
    std::vector<T*> param_ptrs() {
        std::vector<T*> out;
        out.reserve(num_params());
        for_each_tensor([&](const std::string&, std::vector<T>& v) {
            for (auto& x : v) out.push_back(&x);
        });
        return out;
    }

    void zero_tensors() {
        for_each_tensor([](const std::string&, std::vector<T>& v) {
            std::fill(v.begin(), v.end(), T(0));
        });
    }

    template <typename U>
    EmbedModel<U> cast() const {
        EmbedModel<U> out = EmbedModel<U>::build(cfg);
        out.zero_tensors();
        std::vector<const std::vector<T>*> src;
        for_each_tensor([&](const std::string&, const std::vector<T>& v) { src.push_back(&v); });
        size_t i = 0;
        out.for_each_tensor([&](const std::string&, std::vector<U>& v) {
            const auto& s = *src[i++];
            for (size_t k = 0; k < v.size(); ++k) v[k] = static_cast<U>(s[k]);
        });
        return out;
    }

    // Allocates all tensors for `cfg` and applies He-uniform init (biases
    // zero). Each tensor draws from its own stream salted with the tensor
    // name, so toggling attention leaves the backbone init untouched.
    static EmbedModel<T> build(const ModelConfig& cfg) {
        cfg.validate();
        EmbedModel<T> m;
        m.cfg = cfg;
        if (cfg.attention) m.se.allocate(cfg.channels, cfg.reduction_ratio);
        m.down.allocate(cfg.channels, cfg.c_out, 1, 1);
        m.stages.resize(cfg.stage_widths.size());
        int prev = cfg.c_out;
        for (size_t s = 0; s < cfg.stage_widths.size(); ++s) {
            const int width = cfg.stage_widths[s];
            m.stages[s].resize(static_cast<size_t>(cfg.blocks_per_stage));
            for (int b = 0; b < cfg.blocks_per_stage; ++b) {
                auto& blk = m.stages[s][static_cast<size_t>(b)];
                const int cin = b == 0 ? prev : width;
                const int stride = (b == 0 && s > 0) ? 2 : 1;
                blk.c1.allocate(cin, width, 3, stride);
                blk.c2.allocate(width, width, 3, 1);
                blk.has_proj = cfg.residual && (stride != 1 || cin != width);
                if (blk.has_proj) blk.proj.allocate(cin, width, 1, stride);
            }
            prev = width;
        }
        m.init_weights();
        return m;
    }

    void init_weights() {
        for_each_tensor([&](const std::string& name, std::vector<T>& v) {
            if (name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0) {
                std::fill(v.begin(), v.end(), T(0));
                return;
            }
            Rng rng(mix_seed(cfg.init_seed, name));
            size_t fan_in = 0;
            if (name == "se.fc1.w") fan_in = static_cast<size_t>(se.channels);
            else if (name == "se.fc2.w") fan_in = static_cast<size_t>(se.reduced);
            else if (name == "down.w") fan_in = static_cast<size_t>(down.cin);
            else {
                // conv tensors: recover fan_in from the layer the name addresses
                fan_in = conv_fan_in(name);
            }
            detail::he_uniform(v, fan_in, rng);
        });
    }

  private:
    size_t conv_fan_in(const std::string& name) const {
        for (size_t s = 0; s < stages.size(); ++s)
            for (size_t b = 0; b < stages[s].size(); ++b) {
                const std::string p =
                    "stage" + std::to_string(s) + ".block" + std::to_string(b) + ".";
                const auto& blk = stages[s][b];
                if (name == p + "conv1.w")
                    return static_cast<size_t>(blk.c1.ksize) * blk.c1.ksize * blk.c1.cin;
                if (name == p + "conv2.w")
                    return static_cast<size_t>(blk.c2.ksize) * blk.c2.ksize * blk.c2.cin;
                if (name == p + "proj.w") return static_cast<size_t>(blk.proj.cin);
            }
        throw ArgumentError("model: unknown tensor '" + name + "'");
    }
};

}  // namespace hsproto

#endif
