#ifndef ANYMODAL_PROJECTOR_HPP
#define ANYMODAL_PROJECTOR_HPP

// Trainable projection adapters mapping encoder features into the LM
// embedding space as a fixed-count block of modality tokens. Two variants:
// a perceiver-style resampler (latent queries cross-attend to features)
// and a single affine map with contiguous chunk-mean pooling.

#include "anymodal/autograd.hpp"
#include "anymodal/modality.hpp"
#include "anymodal/params.hpp"
#include "anymodal/tokenizer.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace anymodal {

enum class ProjectorVariant { resampler, linear };

inline const char* projector_variant_name(ProjectorVariant v) {
    return v == ProjectorVariant::resampler ? "resampler" : "linear";
}
inline ProjectorVariant projector_variant_from_name(const std::string& s) {
    if (s == "resampler") return ProjectorVariant::resampler;
    if (s == "linear") return ProjectorVariant::linear;
    throw std::invalid_argument("unknown projector variant: " + s);
}

struct ProjectorConfig {
    Modality kind = Modality::image;
    ProjectorVariant variant = ProjectorVariant::resampler;
    int tokens = 64;   // k: modality token budget
    int depth = 2;     // resampler only
    int heads = 4;     // resampler only
    int enc_dim = 16;
    int model_dim = 128;

    void validate() const {
        if (tokens < 1) throw std::invalid_argument("projector: tokens must be >= 1");
        if (variant == ProjectorVariant::resampler) {
            if (depth < 1) throw std::invalid_argument("resampler: depth must be >= 1");
            if (model_dim % heads != 0)
                throw std::invalid_argument("resampler: model_dim not divisible by heads");
        }
        if (enc_dim < 1 || model_dim < 1)
            throw std::invalid_argument("projector: dims must be >= 1");
    }

    json to_json() const {
        return json{{"kind", modality_name(kind)},
                    {"variant", projector_variant_name(variant)},
                    {"tokens", tokens}, {"depth", depth}, {"heads", heads},
                    {"enc_dim", enc_dim}, {"model_dim", model_dim}};
    }
    static ProjectorConfig from_json(const json& j) {
        ProjectorConfig c;
        c.kind = modality_from_name(j.at("kind"));
        c.variant = projector_variant_from_name(j.at("variant"));
        c.tokens = j.at("tokens");
        c.depth = j.at("depth");
        c.heads = j.at("heads");
        c.enc_dim = j.at("enc_dim");
        c.model_dim = j.at("model_dim");
        c.validate();
        return c;
    }
};

class Projector {
public:
    Projector(const ProjectorConfig& cfg, ParamStore& store, std::mt19937_64& rng)
        : cfg_(cfg), store_(&store),
          prefix_("proj." + std::string(modality_name(cfg.kind)) + ".") {
        cfg_.validate();
        const int d = cfg_.model_dim;
        auto w = [&](const std::string& name, Eigen::Index r, Eigen::Index c) {
            Param& p = store.create(prefix_ + name, r, c);
            store.init_normal(p, rng, kInitStd);
        };
        auto zeros = [&](const std::string& name, Eigen::Index r, Eigen::Index c) {
            store.create(prefix_ + name, r, c);
        };
        auto ones = [&](const std::string& name, Eigen::Index r, Eigen::Index c) {
            store.create(prefix_ + name, r, c).value.setOnes();
        };
        if (cfg_.variant == ProjectorVariant::linear) {
            w("w", cfg_.enc_dim, d);
            zeros("b", 1, d);
            return;
        }
        w("latents", cfg_.tokens, d);
        w("in.w", cfg_.enc_dim, d);
        zeros("in.b", 1, d);
        const int mlp = 4 * d;
        for (int i = 0; i < cfg_.depth; ++i) {
            const std::string B = "block" + std::to_string(i) + ".";
            ones(B + "ln_q.g", 1, d);
            zeros(B + "ln_q.b", 1, d);
            ones(B + "ln_kv.g", 1, d);
            zeros(B + "ln_kv.b", 1, d);
            w(B + "wq", d, d);
            w(B + "wk", d, d);
            w(B + "wv", d, d);
            w(B + "wo", d, d);
            ones(B + "ln_m.g", 1, d);
            zeros(B + "ln_m.b", 1, d);
            w(B + "mlp.w1", d, mlp);
            zeros(B + "mlp.b1", 1, mlp);
            w(B + "mlp.w2", mlp, d);
            zeros(B + "mlp.b2", 1, d);
        }
    }

    const ProjectorConfig& config() const { return cfg_; }
    const std::string& prefix() const { return prefix_; }

    // features: n x enc_dim -> exactly cfg.tokens x model_dim.
    Var project(Tape& t, const FeatureSequence& features) {
        if (features.rows() < 1) throw std::invalid_argument("project: empty feature sequence");
        if (features.cols() != cfg_.enc_dim)
            throw std::invalid_argument("project: enc_dim mismatch (" +
                                        std::to_string(features.cols()) + " vs " +
                                        std::to_string(cfg_.enc_dim) + ")");
        Var f = t.constant(features);
        return cfg_.variant == ProjectorVariant::linear ? project_linear(t, f)
                                                        : project_resampler(t, f);
    }

private:
    Param& p(const std::string& name) { return store_->get(prefix_ + name); }

    // Affine map per feature row, then mean over k contiguous chunks; the
    // final chunk is padded by repeating the last row.
    Var project_linear(Tape& t, Var f) {
        const Eigen::Index n = t.val(f).rows();
        const Eigen::Index k = cfg_.tokens;
        const Eigen::Index m = (n + k - 1) / k; // chunk size
        if (m * k > n) {
            std::vector<int> idx;
            idx.reserve(static_cast<size_t>(m * k));
            for (Eigen::Index i = 0; i < n; ++i) idx.push_back(static_cast<int>(i));
            for (Eigen::Index i = n; i < m * k; ++i) idx.push_back(static_cast<int>(n - 1));
            f = t.gather_rows(f, idx);
        }
        Var x = t.add_row(t.matmul(f, t.leaf(p("w"))), t.leaf(p("b")));
        std::vector<Eigen::Index> bounds;
        for (Eigen::Index j = 0; j <= k; ++j) bounds.push_back(j * m);
        return t.chunk_mean_rows(x, bounds);
    }

    Var project_resampler(Tape& t, Var f) {
        const int d = cfg_.model_dim;
        const int dh = d / cfg_.heads;
        const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
        Var fm = t.add_row(t.matmul(f, t.leaf(p("in.w"))), t.leaf(p("in.b")));
        Var lat = t.leaf(p("latents"));
        for (int i = 0; i < cfg_.depth; ++i) {
            const std::string B = "block" + std::to_string(i) + ".";
            Var q_in = t.layernorm(lat, t.leaf(p(B + "ln_q.g")), t.leaf(p(B + "ln_q.b")));
            Var kv_in = t.layernorm(t.concat_rows({fm, lat}), t.leaf(p(B + "ln_kv.g")),
                                    t.leaf(p(B + "ln_kv.b")));
            Var q = t.matmul(q_in, t.leaf(p(B + "wq")));
            Var kk = t.matmul(kv_in, t.leaf(p(B + "wk")));
            Var v = t.matmul(kv_in, t.leaf(p(B + "wv")));
            std::vector<Var> heads;
            for (int hd = 0; hd < cfg_.heads; ++hd) {
                Var qh = t.slice_cols(q, hd * dh, dh);
                Var kh = t.slice_cols(kk, hd * dh, dh);
                Var vh = t.slice_cols(v, hd * dh, dh);
                Var scores = t.scale(t.matmul_nt(qh, kh), inv_sqrt_dh);
                heads.push_back(t.matmul(t.softmax_rows(scores, /*causal=*/false), vh));
            }
            lat = t.add(lat, t.matmul(t.concat_cols(heads), t.leaf(p(B + "wo"))));
            Var h = t.layernorm(lat, t.leaf(p(B + "ln_m.g")), t.leaf(p(B + "ln_m.b")));
            Var m = t.add_row(t.matmul(h, t.leaf(p(B + "mlp.w1"))), t.leaf(p(B + "mlp.b1")));
            m = t.gelu(m);
            m = t.add_row(t.matmul(m, t.leaf(p(B + "mlp.w2"))), t.leaf(p(B + "mlp.b2")));
            lat = t.add(lat, m);
        }
        return lat; // no final norm: zeroed output weights leave latents intact
    }

    ProjectorConfig cfg_;
    ParamStore* store_;
    std::string prefix_;
};

} // namespace anymodal

#endif
