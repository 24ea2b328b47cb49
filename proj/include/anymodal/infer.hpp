#ifndef ANYMODAL_INFER_HPP
#define ANYMODAL_INFER_HPP

// Autoregressive decoding over an assembled (possibly interleaved) context.
// Greedy breaks exact logit ties toward the lowest token id so outputs are
// bit-reproducible; top-p is deterministic per seed.

#include "anymodal/model.hpp"

#include <algorithm>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace anymodal {

struct DecodeParams {
    enum class Strategy { greedy, top_p };
    Strategy strategy = Strategy::greedy;
    int max_new_tokens = 64;
    double top_p = 1.0;       // ignored by greedy
    double temperature = 1.0; // ignored by greedy
    std::uint64_t seed = 0;   // ignored by greedy

    void validate() const {
        if (max_new_tokens < 1)
            throw std::invalid_argument("DecodeParams: max_new_tokens must be >= 1");
        if (strategy == Strategy::top_p) {
            if (!(top_p > 0.0 && top_p <= 1.0))
                throw std::invalid_argument("DecodeParams: top_p must be in (0,1]");
            if (!(temperature > 0.0))
                throw std::invalid_argument("DecodeParams: temperature must be positive");
        }
    }
};

struct GenerationResult {
    std::string text;
    TokenSequence ids; // emitted tokens, eos excluded
    bool hit_eos = false;
};

namespace detail {

inline int argmax_lowest_id(const Eigen::RowVectorXd& logits) {
    int best = 0;
    for (int i = 1; i < logits.size(); ++i)
        if (logits(i) > logits(best)) best = i; // strict: ties keep lowest id
    return best;
}

inline int sample_top_p(const Eigen::RowVectorXd& logits, double top_p, double temperature,
                        std::mt19937_64& rng) {
    Eigen::ArrayXd scaled = logits.transpose().array() / temperature;
    double mx = scaled.maxCoeff();
    Eigen::ArrayXd probs = (scaled - mx).exp();
    probs /= probs.sum();
    std::vector<int> order(static_cast<size_t>(probs.size()));
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return probs(a) > probs(b); }); // ties: lowest id first
    double cum = 0.0;
    size_t keep = 0;
    while (keep < order.size()) {
        cum += probs(order[keep]);
        ++keep;
        if (cum >= top_p) break;
    }
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double r = u(rng) * cum;
    double acc = 0.0;
    for (size_t i = 0; i < keep; ++i) {
        acc += probs(order[i]);
        if (r <= acc) return order[i];
    }
    return order[keep - 1];
}

} // namespace detail

// ctx must be generation-ready (no supervised positions). Blocks are the
// projected modality token matrices in slot order.
inline GenerationResult generate(MultimodalModel& model, const AssembledContext& ctx,
                                 const std::vector<Mat>& blocks, const DecodeParams& params) {
    params.validate();
    if (!ctx.generation_ready())
        throw std::invalid_argument("generate: context has supervised positions");
    const int max_seq = model.spec().lm.max_seq_len;
    if (ctx.length + params.max_new_tokens > max_seq)
        throw std::invalid_argument("generate: context length " + std::to_string(ctx.length) +
                                    " + max_new_tokens exceeds max_seq_len");

    std::mt19937_64 rng(params.seed);
    GenerationResult out;
    TokenSequence emitted;
    for (int step = 0; step < params.max_new_tokens; ++step) {
        Tape t;
        std::vector<Var> block_vars;
        for (const Mat& b : blocks) block_vars.push_back(t.constant(b));
        AssembledContext cur = ctx;
        if (!emitted.empty()) {
            AssembledContext::Segment s;
            s.ids = emitted;
            cur.segments.push_back(s);
            for (int id : emitted) {
                cur.ids.push_back(id);
                cur.targets.push_back(id);
                cur.loss_mask.push_back(false);
            }
            cur.length += static_cast<int>(emitted.size());
        }
        Var x = embed_context(t, model.lm(), cur, block_vars);
        Var logits = model.lm().forward(t, x);
        Eigen::RowVectorXd last = t.val(logits).row(t.val(logits).rows() - 1);
        int next = params.strategy == DecodeParams::Strategy::greedy
                       ? detail::argmax_lowest_id(last)
                       : detail::sample_top_p(last, params.top_p, params.temperature, rng);
        if (next == Vocab::eos_id) {
            out.hit_eos = true;
            break;
        }
        emitted.push_back(next);
    }
    out.ids = emitted;
    out.text = model.vocab().decode(emitted);
    return out;
}

// Renders a template, projects each signal in order, and decodes; equal to
// generate(assemble(render(...)), ...) by construction.
inline GenerationResult generate_interleaved(MultimodalModel& model,
                                             const std::string& template_name,
                                             const std::map<std::string, std::string>& fields,
                                             const std::vector<ModalitySignal>& signals,
                                             const DecodeParams& params) {
    std::vector<Modality> kinds;
    for (const auto& s : signals) kinds.push_back(s.kind);
    RenderedPrompt rp = model.templates().render(template_name, fields, kinds);
    std::vector<int> block_sizes;
    std::vector<Mat> blocks;
    for (const auto& s : signals) {
        if (!model.has_projector(s.kind))
            throw std::out_of_range(std::string("missing adapter for modality ") +
                                    modality_name(s.kind));
        Tape t;
        Var b = model.project_signal(t, s);
        blocks.push_back(t.val(b));
        block_sizes.push_back(static_cast<int>(t.val(b).rows()));
    }
    AssembledContext ctx =
        assemble(model.vocab(), rp, std::nullopt, block_sizes, model.spec().lm.max_seq_len);
    return generate(model, ctx, blocks, params);
}

} // namespace anymodal

#endif
