#ifndef ANYMODAL_TRAIN_HPP
#define ANYMODAL_TRAIN_HPP

// Alignment pre-training and multimodal instruction tuning: AdamW over the
// trainable partition (warmup + cosine schedule, global-norm clipping),
// frozen-set checksum guard, loss-curve CSV, checkpoint emission.

#include "anymodal/data.hpp"
#include "anymodal/model.hpp"
#include "anymodal/presets.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace anymodal {

struct PartitionViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NanLossError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainRunConfig {
    std::string mode = "align"; // "align" | "instruct"
    PartitionMode partition = PartitionMode::projector_only;
    std::string preset;
    Modality kind = Modality::image;
    LmConfig lm;
    ProjectorVariant variant = ProjectorVariant::resampler;
    int tokens = 64;
    int depth = 2;
    int batch_size = 32;
    double lr = 2e-4;
    int steps = 5000;
    std::uint64_t seed = 0;
    std::optional<int> quantize_bits;
    int lora_rank = 64;
    double lora_alpha = 16.0;
    int warmup_steps = 100;
    double weight_decay = 0.1;
    double clip_norm = 1.0;
    int val_every = 100;
    int val_max_items = 64;

    void validate() const {
        if (mode != "align" && mode != "instruct")
            throw std::invalid_argument("TrainRunConfig: mode must be align or instruct");
        if (mode == "align" && partition != PartitionMode::projector_only)
            throw std::invalid_argument("TrainRunConfig: align mode forces projector_only");
        if (!(lr > 0)) throw std::invalid_argument("TrainRunConfig: lr must be > 0");
        if (steps < 1) throw std::invalid_argument("TrainRunConfig: steps must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("TrainRunConfig: batch_size >= 1");
        if (quantize_bits && *quantize_bits != 4 && *quantize_bits != 8)
            throw std::invalid_argument("TrainRunConfig: quantize_bits must be 4 or 8");
    }

    static TrainRunConfig from_preset(const Preset& p) {
        TrainRunConfig c;
        c.mode = p.mode;
        c.preset = p.name;
        c.kind = p.kind;
        c.lm = p.lm;
        c.variant = p.variant;
        c.tokens = p.tokens;
        c.depth = p.depth;
        c.batch_size = p.batch_size;
        c.lr = p.lr;
        c.steps = p.steps;
        c.lora_rank = p.lora_rank;
        c.lora_alpha = p.lora_alpha;
        return c;
    }

    ModelSpec model_spec() const {
        ModelSpec s;
        s.lm = lm;
        ProjectorConfig pc;
        pc.kind = kind;
        pc.variant = variant;
        pc.tokens = tokens;
        pc.depth = depth;
        pc.enc_dim = kSynthEncDim;
        pc.model_dim = lm.model_dim;
        s.projectors.push_back(pc);
        s.seed = seed;
        return s;
    }

    json to_json() const {
        json j;
        j["mode"] = mode;
        j["partition"] = partition_mode_name(partition);
        j["preset"] = preset;
        j["kind"] = modality_name(kind);
        j["lm"] = lm.to_json();
        j["variant"] = projector_variant_name(variant);
        j["tokens"] = tokens;
        j["depth"] = depth;
        j["batch_size"] = batch_size;
        j["lr"] = lr;
        j["steps"] = steps;
        j["seed"] = seed;
        j["quantize_bits"] = quantize_bits ? json(*quantize_bits) : json(nullptr);
        j["lora_rank"] = lora_rank;
        j["lora_alpha"] = lora_alpha;
        j["warmup_steps"] = warmup_steps;
        j["weight_decay"] = weight_decay;
        j["clip_norm"] = clip_norm;
        return j;
    }
};

// Decoupled-weight-decay adaptive-moment optimizer, betas (0.9, 0.95).
class AdamW {
public:
    AdamW(double weight_decay, double clip_norm)
        : wd_(weight_decay), clip_(clip_norm) {}

    void step(ParamStore& store, double lr) {
        ++t_;
        // global-norm clip over the trainable set
        double norm2 = 0.0;
        auto trainables = store.trainable_names();
        for (const auto& n : trainables) norm2 += store.get(n).grad.squaredNorm();
        double scale = 1.0;
        double norm = std::sqrt(norm2);
        if (clip_ > 0 && norm > clip_) scale = clip_ / norm;

        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (const auto& n : trainables) {
            Param& p = store.get(n);
            Mat g = p.grad * scale;
            auto& [m, v] = moments_[n];
            if (m.size() == 0) {
                m = Mat::Zero(g.rows(), g.cols());
                v = Mat::Zero(g.rows(), g.cols());
            }
            m = beta1_ * m + (1.0 - beta1_) * g;
            v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
            Mat mhat = m / bc1;
            Mat vhat = v / bc2;
            p.value -= lr * (mhat.array() / (vhat.array().sqrt() + eps_)).matrix();
            p.value -= lr * wd_ * p.value; // decoupled decay
        }
    }

private:
    double wd_;
    double clip_;
    double beta1_ = 0.9, beta2_ = 0.95, eps_ = 1e-8;
    long t_ = 0;
    std::map<std::string, std::pair<Mat, Mat>> moments_;
};

// Linear warmup then cosine decay to zero.
inline double lr_at(const TrainRunConfig& cfg, int step /*1-based*/) {
    if (step <= cfg.warmup_steps)
        return cfg.lr * static_cast<double>(step) / cfg.warmup_steps;
    if (cfg.steps <= cfg.warmup_steps) return cfg.lr;
    double progress =
        static_cast<double>(step - cfg.warmup_steps) / (cfg.steps - cfg.warmup_steps);
    return cfg.lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

struct LossCurvePoint {
    int step;
    std::string split; // "train" | "val"
    double loss;
};

// Mean loss over one batch; gradients accumulate into the trainable set.
inline double train_batch(MultimodalModel& model,
                          const std::vector<const DatasetRecord*>& batch) {
    double total = 0.0;
    for (const DatasetRecord* rec : batch) {
        if (rec->task == "caption" && rec->caption.empty())
            throw std::invalid_argument("empty-mask: record '" + rec->id +
                                        "' has a zero-length caption");
        Tape t;
        Var loss = model.record_loss(t, *rec);
        t.backward(loss);
        total += t.val(loss)(0, 0);
    }
    // scale accumulated gradients to the batch mean
    for (const auto& n : model.store().trainable_names())
        model.store().get(n).grad /= static_cast<double>(batch.size());
    return total / static_cast<double>(batch.size());
}

// Forward-only mean loss. With shuffle_signals, each record is paired with
// the modality payloads of the next record (cyclic), breaking conditioning.
inline double eval_mean_loss(MultimodalModel& model, const Dataset& ds, size_t max_items,
                             bool shuffle_signals = false) {
    const size_t n = std::min(max_items, ds.size());
    if (n == 0) throw std::invalid_argument("eval_mean_loss: empty dataset");
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const DatasetRecord& rec = ds.at(i);
        Tape t;
        Var loss;
        if (shuffle_signals) {
            const DatasetRecord& other = ds.at((i + 1) % n);
            std::vector<const ModalitySignal*> subst;
            for (const auto& m : other.modalities) subst.push_back(&m);
            loss = model.record_loss(t, rec, &subst);
        } else {
            loss = model.record_loss(t, rec);
        }
        total += t.val(loss)(0, 0);
    }
    return total / static_cast<double>(n);
}

struct TrainResult {
    std::vector<LossCurvePoint> curve;
    double final_train_loss = 0.0;
    std::filesystem::path checkpoint_dir;
    std::filesystem::path init_checkpoint_dir;
    std::filesystem::path losses_csv;
};

inline void write_loss_curve(const std::filesystem::path& path,
                             const std::vector<LossCurvePoint>& curve) {
    std::ofstream f(path, std::ios::trunc);
    f << "step,split,loss\n";
    char buf[64];
    for (const auto& p : curve) {
        std::snprintf(buf, sizeof(buf), "%.12g", p.loss);
        f << p.step << "," << p.split << "," << buf << "\n";
    }
}

// One full training run. The model must already match cfg.model_spec()
// (fresh for align, loaded from a checkpoint for instruct tuning).
inline TrainResult train(const TrainRunConfig& cfg, MultimodalModel& model,
                         const Dataset& train_ds, const Dataset& val_ds,
                         const std::filesystem::path& out_dir) {
    cfg.validate();
    if (train_ds.empty()) throw std::invalid_argument("train: dataset is empty");
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    if (cfg.partition == PartitionMode::projector_plus_lora && !model.lm().lora_attached())
        model.attach_lora(cfg.lora_rank, cfg.lora_alpha);
    model.apply_partition(cfg.partition);
    if (cfg.quantize_bits) {
        model.lm().quantize_weights(*cfg.quantize_bits);
        model.lm().set_quantized_forward(true);
    }

    json meta;
    meta["train_config"] = cfg.to_json();
    TrainResult res;
    res.init_checkpoint_dir = out_dir / "checkpoint_init";
    res.checkpoint_dir = out_dir / "checkpoint";
    res.losses_csv = out_dir / "losses.csv";
    model.save(res.init_checkpoint_dir, meta);

    const std::uint64_t guard = model.store().frozen_checksum();
    auto check_guard = [&](int step) {
        if (model.store().frozen_checksum() != guard)
            throw PartitionViolation("frozen parameter modified by step " +
                                     std::to_string(step));
    };

    AdamW opt(cfg.weight_decay, cfg.clip_norm);
    std::vector<size_t> order;
    size_t cursor = 0;
    int epoch = 0;
    double last_loss = 0.0;
    for (int step = 1; step <= cfg.steps; ++step) {
        std::vector<const DatasetRecord*> batch;
        while (batch.size() < static_cast<size_t>(cfg.batch_size)) {
            if (cursor >= order.size()) {
                order = train_ds.shuffled_indices(cfg.seed + 0x9E3779B97F4A7C15ULL * epoch);
                ++epoch;
                cursor = 0;
            }
            batch.push_back(&train_ds.at(order[cursor++]));
        }
        model.store().zero_grads();
        double loss = train_batch(model, batch);
        if (!std::isfinite(loss))
            throw NanLossError("non-finite loss at step " + std::to_string(step) + " (lr " +
                               std::to_string(lr_at(cfg, step)) + ")");
        opt.step(model.store(), lr_at(cfg, step));
        last_loss = loss;
        res.curve.push_back({step, "train", loss});

        if (cfg.val_every > 0 && !val_ds.empty() &&
            (step % cfg.val_every == 0 || step == cfg.steps)) {
            double vl = eval_mean_loss(model, val_ds,
                                       static_cast<size_t>(cfg.val_max_items));
            res.curve.push_back({step, "val", vl});
        }
        if (step % 100 == 0) check_guard(step);
    }
    check_guard(cfg.steps);
    res.final_train_loss = last_loss;

    if (cfg.quantize_bits) model.lm().set_quantized_forward(false); // full precision at inference
    model.save(res.checkpoint_dir, meta);
    write_loss_curve(res.losses_csv, res.curve);
    return res;
}

} // namespace anymodal

#endif
