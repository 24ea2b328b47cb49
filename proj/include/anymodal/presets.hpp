#ifndef ANYMODAL_PRESETS_HPP
#define ANYMODAL_PRESETS_HPP

// Named run presets. The *-toy presets scale the published pre-training
// table down to desk size while keeping its ratios (projection variant,
// depth, token budget, relative batch/LR/steps); the *-mini presets are
// small enough for CI and the acceptance suite.

#include "anymodal/lm.hpp"
#include "anymodal/projector.hpp"
#include "anymodal/tokenizer.hpp"

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace anymodal {

struct Preset {
    std::string name;
    std::string mode = "align"; // "align" | "instruct"
    Modality kind = Modality::image;
    LmConfig lm;
    ProjectorVariant variant = ProjectorVariant::resampler;
    int tokens = 64;
    int depth = 2;
    int batch_size = 32;
    double lr = 2e-4;
    int steps = 5000;
    int lora_rank = 64;
    double lora_alpha = 16.0;
};

inline LmConfig toy_lm_config() {
    LmConfig c;
    c.layers = 4;
    c.model_dim = 128;
    c.heads = 4;
    c.mlp_dim = 512;
    c.max_seq_len = 512;
    return c;
}

inline LmConfig mini_lm_config() {
    LmConfig c;
    c.layers = 2;
    c.model_dim = 64;
    c.heads = 4;
    c.mlp_dim = 256;
    c.max_seq_len = 256;
    return c;
}

inline LmConfig micro_lm_config() {
    LmConfig c;
    c.layers = 1;
    c.model_dim = 8;
    c.heads = 2;
    c.mlp_dim = 16;
    c.max_seq_len = 64;
    c.vocab_size = 263;
    return c;
}

inline const std::map<std::string, Preset>& presets() {
    static const std::map<std::string, Preset> table = [] {
        std::map<std::string, Preset> m;
        auto add = [&m](Preset p) { m[p.name] = std::move(p); };

        // table row "Image: 2048 / 2e-4 / 100k / 64 / Resampler (6)"
        Preset img;
        img.name = "image-align-toy";
        img.kind = Modality::image;
        img.lm = toy_lm_config();
        img.variant = ProjectorVariant::resampler;
        img.tokens = 64;
        img.depth = 6;
        img.batch_size = 32;
        img.lr = 2e-4;
        img.steps = 5000;
        add(img);

        // table row "Audio: 128 / 1e-4 / 1k / 32 / Linear (1)"
        Preset aud;
        aud.name = "audio-align-toy";
        aud.kind = Modality::audio;
        aud.lm = toy_lm_config();
        aud.variant = ProjectorVariant::linear;
        aud.tokens = 32;
        aud.depth = 1;
        aud.batch_size = 8;
        aud.lr = 1e-4;
        aud.steps = 500;
        add(aud);

        // table row "Video: 1024 / 1e-4 / 20k / 32 / Resampler (4)"
        Preset vid;
        vid.name = "video-align-toy";
        vid.kind = Modality::video;
        vid.lm = toy_lm_config();
        vid.variant = ProjectorVariant::resampler;
        vid.tokens = 32;
        vid.depth = 4;
        vid.batch_size = 16;
        vid.lr = 1e-4;
        vid.steps = 1000;
        add(vid);

        // table row "IMU: 256 / 1e-4 / 2k / 32 / Linear (1)"
        Preset imu;
        imu.name = "imu-align-toy";
        imu.kind = Modality::imu;
        imu.lm = toy_lm_config();
        imu.variant = ProjectorVariant::linear;
        imu.tokens = 32;
        imu.depth = 1;
        imu.batch_size = 8;
        imu.lr = 1e-4;
        imu.steps = 800;
        add(imu);

        // finetuning defaults: LoRA r=64 alpha=16, LR 1e-5, batch 128, 3k steps
        Preset it;
        it.name = "instruct-toy";
        it.mode = "instruct";
        it.kind = Modality::image;
        it.lm = toy_lm_config();
        it.variant = ProjectorVariant::resampler;
        it.tokens = 64;
        it.depth = 6;
        it.batch_size = 128;
        it.lr = 1e-5;
        it.steps = 3000;
        it.lora_rank = 64;
        it.lora_alpha = 16.0;
        add(it);

        // CI / acceptance scale
        Preset mini;
        mini.name = "image-align-mini";
        mini.kind = Modality::image;
        mini.lm = mini_lm_config();
        mini.variant = ProjectorVariant::resampler;
        mini.tokens = 32;
        mini.depth = 2;
        mini.batch_size = 8;
        mini.lr = 1e-3;
        mini.steps = 2000;
        add(mini);

        Preset imini;
        imini.name = "instruct-mini";
        imini.mode = "instruct";
        imini.kind = Modality::image;
        imini.lm = mini_lm_config();
        imini.variant = ProjectorVariant::resampler;
        imini.tokens = 32;
        imini.depth = 2;
        imini.batch_size = 8;
        imini.lr = 1e-3;
        imini.steps = 500;
        imini.lora_rank = 8;
        imini.lora_alpha = 16.0;
        add(imini);
        return m;
    }();
    return table;
}

inline const Preset& get_preset(const std::string& name) {
    auto it = presets().find(name);
    if (it == presets().end()) {
        std::string avail;
        for (auto& [k, v] : presets()) avail += (avail.empty() ? "" : ", ") + k;
        throw std::out_of_range("unknown preset '" + name + "'; available: " + avail);
    }
    return it->second;
}

} // namespace anymodal

#endif
