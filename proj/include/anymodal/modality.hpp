#ifndef ANYMODAL_MODALITY_HPP
#define ANYMODAL_MODALITY_HPP

// Modality signals plus the committed synthetic encoders. Encoders are
// frozen pure functions (seeded random projections) and carry no trainable
// parameters; they stand in for the pretrained encoder zoo.

#include "anymodal/autograd.hpp"
#include "anymodal/tokenizer.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace anymodal {

struct ImagePayload {
    int h = 0, w = 0, c = 3;
    std::vector<double> data; // row-major [y][x][channel], values in [0,1]

    double at(int y, int x, int ch) const {
        return data[static_cast<size_t>((y * w + x) * c + ch)];
    }
    double& at(int y, int x, int ch) {
        return data[static_cast<size_t>((y * w + x) * c + ch)];
    }
};

struct ModalitySignal {
    Modality kind = Modality::image;
    ImagePayload image;               // kind == image
    std::vector<double> audio;        // kind == audio
    std::vector<ImagePayload> video;  // kind == video
    Mat imu;                          // kind == imu, T x 6

    void validate() const {
        auto check_image = [](const ImagePayload& im) {
            if (im.h < 1 || im.w < 1 || im.c != 3 ||
                im.data.size() != static_cast<size_t>(im.h * im.w * im.c))
                throw std::invalid_argument("malformed image payload");
            for (double v : im.data)
                if (!std::isfinite(v)) throw std::invalid_argument("non-finite image value");
        };
        switch (kind) {
            case Modality::image:
                check_image(image);
                break;
            case Modality::audio:
                if (audio.empty()) throw std::invalid_argument("empty audio payload");
                for (double v : audio)
                    if (!std::isfinite(v)) throw std::invalid_argument("non-finite audio value");
                break;
            case Modality::video:
                if (video.empty()) throw std::invalid_argument("empty video payload");
                for (const auto& f : video) check_image(f);
                break;
            case Modality::imu:
                if (imu.rows() < 1 || imu.cols() != 6)
                    throw std::invalid_argument("malformed imu payload (want T x 6)");
                if (!imu.allFinite()) throw std::invalid_argument("non-finite imu value");
                break;
        }
    }
};

// FeatureSequence: n x enc_dim, n >= 1.
using FeatureSequence = Mat;

struct Encoder {
    std::string name;
    Modality kind;
    int enc_dim;
    std::function<FeatureSequence(const ModalitySignal&)> encode;
};

namespace detail {

inline Mat seeded_projection(std::uint64_t seed, int in_dim, int out_dim) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, 1.0 / std::sqrt(static_cast<double>(in_dim)));
    Mat p(in_dim, out_dim);
    for (Eigen::Index c = 0; c < p.cols(); ++c)
        for (Eigen::Index r = 0; r < p.rows(); ++r) p(r, c) = d(rng);
    return p;
}

// 4x4 patch grid; per-patch feature = [mean_r, mean_g, mean_b, cx, cy].
inline Mat image_patch_features(const ImagePayload& im) {
    constexpr int grid = 4;
    Mat feats(grid * grid, 5);
    const int ph = std::max(1, im.h / grid);
    const int pw = std::max(1, im.w / grid);
    for (int gy = 0; gy < grid; ++gy) {
        for (int gx = 0; gx < grid; ++gx) {
            double sum[3] = {0, 0, 0};
            int cnt = 0;
            for (int y = gy * ph; y < std::min(im.h, (gy + 1) * ph); ++y)
                for (int x = gx * pw; x < std::min(im.w, (gx + 1) * pw); ++x) {
                    for (int ch = 0; ch < 3; ++ch) sum[ch] += im.at(y, x, ch);
                    ++cnt;
                }
            Eigen::Index row = gy * grid + gx;
            for (int ch = 0; ch < 3; ++ch) feats(row, ch) = cnt ? sum[ch] / cnt : 0.0;
            feats(row, 3) = (gx + 0.5) / grid;
            feats(row, 4) = (gy + 0.5) / grid;
        }
    }
    return feats;
}

} // namespace detail

inline constexpr int kSynthEncDim = 16;

// Registry of the committed synthetic encoders (v1, fixed seeds).
class EncoderRegistry {
public:
    EncoderRegistry() {
        const std::uint64_t base = 0xA11CEULL;

        encoders_["synth-image-v1"] = Encoder{
            "synth-image-v1", Modality::image, kSynthEncDim,
            [P = detail::seeded_projection(base + 1, 5, kSynthEncDim)](const ModalitySignal& s) {
                Mat f = detail::image_patch_features(s.image);
                return Mat(f * P);
            }};

        encoders_["synth-audio-v1"] = Encoder{
            "synth-audio-v1", Modality::audio, kSynthEncDim,
            [P = detail::seeded_projection(base + 2, 32, kSynthEncDim)](const ModalitySignal& s) {
                const auto& a = s.audio;
                const int win = 32;
                const int n = static_cast<int>((a.size() + win - 1) / win);
                Mat f = Mat::Zero(n, win);
                for (size_t i = 0; i < a.size(); ++i)
                    f(static_cast<Eigen::Index>(i / win), static_cast<Eigen::Index>(i % win)) = a[i];
                return Mat(f * P);
            }};

        encoders_["synth-imu-v1"] = Encoder{
            "synth-imu-v1", Modality::imu, kSynthEncDim,
            [P = detail::seeded_projection(base + 3, 48, kSynthEncDim)](const ModalitySignal& s) {
                const int win = 8;
                const int n = static_cast<int>((s.imu.rows() + win - 1) / win);
                Mat f = Mat::Zero(n, 48);
                for (Eigen::Index t = 0; t < s.imu.rows(); ++t)
                    for (Eigen::Index ch = 0; ch < 6; ++ch)
                        f(t / win, (t % win) * 6 + ch) = s.imu(t, ch);
                return Mat(f * P);
            }};

        encoders_["synth-video-v1"] = Encoder{
            "synth-video-v1", Modality::video, kSynthEncDim,
            [P = detail::seeded_projection(base + 1, 5, kSynthEncDim),
             Q = detail::seeded_projection(base + 4, 2, kSynthEncDim)](const ModalitySignal& s) {
                const int F = static_cast<int>(s.video.size());
                Mat out(F, kSynthEncDim);
                for (int t = 0; t < F; ++t) {
                    ModalitySignal frame;
                    frame.kind = Modality::image;
                    frame.image = s.video[static_cast<size_t>(t)];
                    Mat feats = detail::image_patch_features(frame.image) * P;
                    Eigen::RowVector2d phase(std::sin(2 * M_PI * t / F),
                                             std::cos(2 * M_PI * t / F));
                    out.row(t) = feats.colwise().mean() + phase * Q;
                }
                return out;
            }};
    }

    const Encoder& get(const std::string& name) const {
        auto it = encoders_.find(name);
        if (it == encoders_.end()) throw std::out_of_range("no encoder: " + name);
        return it->second;
    }

    const Encoder& default_for(Modality m) const {
        switch (m) {
            case Modality::image: return get("synth-image-v1");
            case Modality::audio: return get("synth-audio-v1");
            case Modality::video: return get("synth-video-v1");
            case Modality::imu: return get("synth-imu-v1");
        }
        throw std::invalid_argument("unknown modality");
    }

private:
    std::map<std::string, Encoder> encoders_;
};

inline const EncoderRegistry& encoder_registry() {
    static const EncoderRegistry r;
    return r;
}

inline FeatureSequence encode_modality(const ModalitySignal& signal, const Encoder& enc) {
    if (signal.kind != enc.kind)
        throw std::invalid_argument("encoder kind mismatch: signal is " +
                                    std::string(modality_name(signal.kind)) + ", encoder wants " +
                                    modality_name(enc.kind));
    signal.validate();
    FeatureSequence f = enc.encode(signal);
    if (f.rows() < 1) throw std::runtime_error("encoder produced empty feature sequence");
    return f;
}

inline FeatureSequence encode_modality(const ModalitySignal& signal) {
    return encode_modality(signal, encoder_registry().default_for(signal.kind));
}

} // namespace anymodal

#endif
