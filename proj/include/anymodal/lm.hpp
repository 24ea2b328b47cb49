#ifndef ANYMODAL_LM_HPP
#define ANYMODAL_LM_HPP

// Decoder-only causal transformer (pre-norm, learned absolute positions)
// with optional LoRA adapters on every attention/MLP linear map and
// optional quantized-weight forward for the frozen backbone.

#include "anymodal/autograd.hpp"
#include "anymodal/params.hpp"
#include "anymodal/quant.hpp"

#include <json.hpp>

#include <cmath>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace anymodal {

struct LmConfig {
    int layers = 4;
    int model_dim = 128;
    int heads = 4;
    int mlp_dim = 512;
    int max_seq_len = 512;
    int vocab_size = 263;

    void validate() const {
        if (layers < 1 || model_dim < 1 || heads < 1 || mlp_dim < 1 ||
            max_seq_len < 1 || vocab_size < 1)
            throw std::invalid_argument("LmConfig: all counts must be >= 1");
        if (model_dim % heads != 0)
            throw std::invalid_argument("LmConfig: model_dim not divisible by heads");
    }

    json to_json() const {
        return json{{"layers", layers},       {"model_dim", model_dim},
                    {"heads", heads},         {"mlp_dim", mlp_dim},
                    {"max_seq_len", max_seq_len}, {"vocab_size", vocab_size}};
    }
    static LmConfig from_json(const json& j) {
        LmConfig c;
        c.layers = j.at("layers");
        c.model_dim = j.at("model_dim");
        c.heads = j.at("heads");
        c.mlp_dim = j.at("mlp_dim");
        c.max_seq_len = j.at("max_seq_len");
        c.vocab_size = j.at("vocab_size");
        c.validate();
        return c;
    }
};

class LmModel {
public:
    LmModel(const LmConfig& cfg, ParamStore& store, std::mt19937_64& rng)
        : cfg_(cfg), store_(&store) {
        cfg_.validate();
        auto w = [&](const std::string& name, Eigen::Index r, Eigen::Index c) -> Param& {
            Param& p = store.create(name, r, c);
            store.init_normal(p, rng, kInitStd);
            return p;
        };
        auto zeros = [&](const std::string& name, Eigen::Index r, Eigen::Index c) -> Param& {
            return store.create(name, r, c); // created zero-initialized
        };
        auto ones = [&](const std::string& name, Eigen::Index r, Eigen::Index c) -> Param& {
            Param& p = store.create(name, r, c);
            p.value.setOnes();
            return p;
        };
        const int d = cfg_.model_dim;
        w("lm.embed", cfg_.vocab_size, d);
        w("lm.pos", cfg_.max_seq_len, d);
        for (int i = 0; i < cfg_.layers; ++i) {
            const std::string L = "lm.layer" + std::to_string(i) + ".";
            ones(L + "ln1.g", 1, d);
            zeros(L + "ln1.b", 1, d);
            w(L + "attn.wq", d, d);
            w(L + "attn.wk", d, d);
            w(L + "attn.wv", d, d);
            w(L + "attn.wo", d, d);
            ones(L + "ln2.g", 1, d);
            zeros(L + "ln2.b", 1, d);
            w(L + "mlp.w1", d, cfg_.mlp_dim);
            zeros(L + "mlp.b1", 1, cfg_.mlp_dim);
            w(L + "mlp.w2", cfg_.mlp_dim, d);
            zeros(L + "mlp.b2", 1, d);
        }
        ones("lm.final.g", 1, d);
        zeros("lm.final.b", 1, d);
        w("lm.head", d, cfg_.vocab_size);
    }

    const LmConfig& config() const { return cfg_; }
    ParamStore& store() { return *store_; }

    // Token embedding lookup, one model_dim row per id.
    Var embed(Tape& t, const std::vector<int>& ids) {
        for (int id : ids)
            if (id < 0 || id >= cfg_.vocab_size)
                throw std::out_of_range("embed: invalid token id " + std::to_string(id));
        return t.gather_rows(t.leaf(store_->get("lm.embed")), ids);
    }

    // x: N x model_dim input embeddings (positions added here). Returns
    // N x vocab_size logits.
    Var forward(Tape& t, Var x) {
        const Eigen::Index n = t.val(x).rows();
        if (n > cfg_.max_seq_len)
            throw std::invalid_argument("forward: sequence length " + std::to_string(n) +
                                        " exceeds max_seq_len");
        if (t.val(x).cols() != cfg_.model_dim)
            throw std::invalid_argument("forward: embedding dim mismatch");
        std::vector<int> pos(static_cast<size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) pos[static_cast<size_t>(i)] = static_cast<int>(i);
        x = t.add(x, t.gather_rows(t.leaf(store_->get("lm.pos")), pos));

        const int d = cfg_.model_dim;
        const int dh = d / cfg_.heads;
        const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
        for (int i = 0; i < cfg_.layers; ++i) {
            const std::string L = "lm.layer" + std::to_string(i) + ".";
            Var h = t.layernorm(x, t.leaf(store_->get(L + "ln1.g")),
                                t.leaf(store_->get(L + "ln1.b")));
            Var q = linear(t, h, L + "attn.wq");
            Var k = linear(t, h, L + "attn.wk");
            Var v = linear(t, h, L + "attn.wv");
            std::vector<Var> heads;
            for (int hd = 0; hd < cfg_.heads; ++hd) {
                Var qh = t.slice_cols(q, hd * dh, dh);
                Var kh = t.slice_cols(k, hd * dh, dh);
                Var vh = t.slice_cols(v, hd * dh, dh);
                Var scores = t.scale(t.matmul_nt(qh, kh), inv_sqrt_dh);
                Var p = t.softmax_rows(scores, /*causal=*/true);
                heads.push_back(t.matmul(p, vh));
            }
            Var attn = linear(t, t.concat_cols(heads), L + "attn.wo");
            x = t.add(x, attn);

            Var h2 = t.layernorm(x, t.leaf(store_->get(L + "ln2.g")),
                                 t.leaf(store_->get(L + "ln2.b")));
            Var m = t.add_row(linear(t, h2, L + "mlp.w1"),
                              t.leaf(store_->get(L + "mlp.b1")));
            m = t.gelu(m);
            m = t.add_row(linear(t, m, L + "mlp.w2"),
                          t.leaf(store_->get(L + "mlp.b2")));
            x = t.add(x, m);
        }
        x = t.layernorm(x, t.leaf(store_->get("lm.final.g")),
                        t.leaf(store_->get("lm.final.b")));
        return linear(t, x, "lm.head");
    }

    Var next_token_loss(Tape& t, Var logits, const std::vector<int>& targets,
                        const std::vector<bool>& mask) {
        return t.next_token_nll(logits, targets, mask);
    }

    // --- LoRA ------------------------------------------------------------

    bool lora_attached() const { return lora_rank_ > 0; }
    int lora_rank() const { return lora_rank_; }
    double lora_alpha() const { return lora_alpha_; }
    double lora_scale() const { return lora_alpha_ / lora_rank_; } // alpha/r

    std::vector<std::string> lora_targets() const {
        std::vector<std::string> out;
        for (int i = 0; i < cfg_.layers; ++i) {
            const std::string L = "lm.layer" + std::to_string(i) + ".";
            for (const char* s : {"attn.wq", "attn.wk", "attn.wv", "attn.wo",
                                  "mlp.w1", "mlp.w2"})
                out.push_back(L + s);
        }
        return out;
    }

    // B starts at zero, so forward output is unchanged at attach time.
    void attach_lora(int rank, double alpha, std::mt19937_64& rng) {
        if (lora_attached()) throw std::logic_error("attach_lora: adapters already attached");
        if (rank < 1) throw std::invalid_argument("attach_lora: rank must be >= 1");
        for (const auto& target : lora_targets()) {
            const Param& base = store_->get(target);
            Param& a = store_->create("lora." + target + ".A", base.value.rows(), rank);
            store_->init_normal(a, rng, kInitStd);
            store_->create("lora." + target + ".B", rank, base.value.cols());
        }
        lora_rank_ = rank;
        lora_alpha_ = alpha;
    }

    // --- Quantization ------------------------------------------------------

    bool quantized() const { return quant_bits_ != 0; }
    int quant_bits() const { return quant_bits_; }
    bool quantized_forward_enabled() const { return use_quantized_; }

    // Quantizes the frozen backbone linears; requires every lm.* param frozen.
    void quantize_weights(int bits) {
        for (const auto& name : quant_targets())
            if (store_->get(name).trainable)
                throw std::logic_error("quantize_weights: param still trainable: " + name);
        dequant_cache_.clear();
        for (const auto& name : quant_targets()) {
            QuantizedTensor q = quantize(store_->get(name).value, bits);
            dequant_cache_[name] = q.dequantize();
        }
        quant_bits_ = bits;
        use_quantized_ = true;
    }

    // Inference path restores the original full-precision weights.
    void set_quantized_forward(bool on) {
        if (on && !quantized()) throw std::logic_error("no quantized weights available");
        use_quantized_ = on;
    }

    std::vector<std::string> quant_targets() const {
        auto out = lora_targets();
        out.push_back("lm.head");
        return out;
    }

private:
    Var weight_var(Tape& t, const std::string& name) {
        if (use_quantized_) {
            auto it = dequant_cache_.find(name);
            if (it != dequant_cache_.end()) return t.constant(it->second);
        }
        return t.leaf(store_->get(name));
    }

    Var linear(Tape& t, Var x, const std::string& name) {
        Var out = t.matmul(x, weight_var(t, name));
        if (lora_attached() && store_->has("lora." + name + ".A")) {
            Var a = t.leaf(store_->get("lora." + name + ".A"));
            Var b = t.leaf(store_->get("lora." + name + ".B"));
            out = t.add(out, t.scale(t.matmul(t.matmul(x, a), b), lora_scale()));
        }
        return out;
    }

    LmConfig cfg_;
    ParamStore* store_;
    int lora_rank_ = 0;
    double lora_alpha_ = 0.0;
    int quant_bits_ = 0;
    bool use_quantized_ = false;
    std::map<std::string, Mat> dequant_cache_;
};

} // namespace anymodal

#endif
