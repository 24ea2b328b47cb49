#ifndef ANYMODAL_MODEL_HPP
#define ANYMODAL_MODEL_HPP

// The full multimodal bundle: frozen(able) LM, per-modality projection
// adapters, vocab, templates, parameter partition, checkpoint round-trip.

#include "anymodal/data.hpp"
#include "anymodal/lm.hpp"
#include "anymodal/modality.hpp"
#include "anymodal/params.hpp"
#include "anymodal/projector.hpp"
#include "anymodal/prompt.hpp"
#include "anymodal/tokenizer.hpp"

#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace anymodal {

enum class PartitionMode { projector_only, projector_plus_lora };

inline const char* partition_mode_name(PartitionMode m) {
    return m == PartitionMode::projector_only ? "projector_only" : "projector_plus_lora";
}
inline PartitionMode partition_mode_from_name(const std::string& s) {
    if (s == "projector_only") return PartitionMode::projector_only;
    if (s == "projector_plus_lora") return PartitionMode::projector_plus_lora;
    throw std::invalid_argument("unknown partition mode: " + s);
}

struct ModelSpec {
    LmConfig lm;
    std::vector<ProjectorConfig> projectors; // one per attached modality
    std::uint64_t seed = 0;

    json to_json() const {
        json j;
        j["lm"] = lm.to_json();
        json ps = json::array();
        for (const auto& p : projectors) ps.push_back(p.to_json());
        j["projectors"] = ps;
        j["seed"] = seed;
        return j;
    }
    static ModelSpec from_json(const json& j) {
        ModelSpec s;
        s.lm = LmConfig::from_json(j.at("lm"));
        for (const auto& p : j.at("projectors"))
            s.projectors.push_back(ProjectorConfig::from_json(p));
        s.seed = j.at("seed");
        return s;
    }
};

class MultimodalModel {
public:
    explicit MultimodalModel(const ModelSpec& spec) : spec_(spec) {
        spec_.lm.vocab_size = vocab_.size();
        std::mt19937_64 rng(spec_.seed);
        lm_ = std::make_unique<LmModel>(spec_.lm, store_, rng);
        for (auto pc : spec_.projectors) {
            pc.model_dim = spec_.lm.model_dim;
            projectors_.emplace(pc.kind, std::make_unique<Projector>(pc, store_, rng));
        }
        apply_partition(PartitionMode::projector_only);
    }

    const ModelSpec& spec() const { return spec_; }
    const Vocab& vocab() const { return vocab_; }
    ParamStore& store() { return store_; }
    LmModel& lm() { return *lm_; }
    const TemplateLibrary& templates() const { return templates_; }
    void set_templates(TemplateLibrary lib) { templates_ = std::move(lib); }

    Projector& projector(Modality m) {
        auto it = projectors_.find(m);
        if (it == projectors_.end())
            throw std::out_of_range(std::string("no adapter loaded for modality ") +
                                    modality_name(m));
        return *it->second;
    }
    bool has_projector(Modality m) const { return projectors_.count(m) != 0; }

    PartitionMode partition_mode() const { return partition_; }

    void apply_partition(PartitionMode mode) {
        std::vector<std::string> prefixes = {"proj."};
        if (mode == PartitionMode::projector_plus_lora) prefixes.push_back("lora.");
        store_.set_trainable_by_prefix(prefixes);
        partition_ = mode;
    }

    void attach_lora(int rank, double alpha) {
        std::mt19937_64 rng(spec_.seed ^ 0x10aaULL);
        lm_->attach_lora(rank, alpha, rng);
        apply_partition(partition_);
    }

    // Projects a signal through its (matching) encoder and adapter.
    Var project_signal(Tape& t, const ModalitySignal& sig) {
        FeatureSequence f = encode_modality(sig);
        return projector(sig.kind).project(t, f);
    }

    // Builds the assembled context for a dataset record (caption records use
    // the per-modality alignment template).
    AssembledContext context_for(const DatasetRecord& rec,
                                 const std::optional<std::string>& response_override =
                                     std::nullopt) const {
        std::vector<Modality> kinds;
        for (const auto& m : rec.modalities) kinds.push_back(m.kind);
        RenderedPrompt rp;
        std::optional<std::string> response;
        if (rec.task == "caption") {
            rp = templates_.render(align_template_for(rec.modalities.at(0).kind), {}, kinds);
            response = rec.caption;
        } else {
            rp = templates_.render(rec.template_name, rec.fields, kinds);
            response = rec.response;
        }
        if (response_override) response = response_override;
        std::vector<int> block_sizes;
        for (Modality k : kinds) {
            auto it = projectors_.find(k);
            if (it == projectors_.end())
                throw std::out_of_range(std::string("no adapter loaded for modality ") +
                                        modality_name(k));
            block_sizes.push_back(it->second->config().tokens);
        }
        return assemble(vocab_, rp, response, block_sizes, spec_.lm.max_seq_len);
    }

    // Full loss graph for one record: encode -> project -> assemble ->
    // forward -> masked next-token NLL.
    Var record_loss(Tape& t, const DatasetRecord& rec,
                    const std::vector<const ModalitySignal*>* signal_override = nullptr) {
        AssembledContext ctx = context_for(rec);
        std::vector<Var> blocks;
        for (size_t i = 0; i < rec.modalities.size(); ++i) {
            const ModalitySignal& sig =
                signal_override ? *(*signal_override)[i] : rec.modalities[i];
            blocks.push_back(project_signal(t, sig));
        }
        Var x = embed_context(t, *lm_, ctx, blocks);
        Var logits = lm_->forward(t, x);
        return lm_->next_token_loss(t, logits, ctx.targets, ctx.loss_mask);
    }

    // --- checkpointing -----------------------------------------------------

    void save(const std::filesystem::path& dir, const json& extra_meta = json::object()) const {
        json meta;
        meta["model_spec"] = spec_.to_json();
        meta["vocab"] = vocab_.manifest();
        meta["partition_mode"] = partition_mode_name(partition_);
        meta["lora"] = lm_->lora_attached()
                           ? json{{"rank", lm_->lora_rank()}, {"alpha", lm_->lora_alpha()}}
                           : json(nullptr);
        meta["quantize_bits"] = lm_->quantized() ? json(lm_->quant_bits()) : json(nullptr);
        meta["extra"] = extra_meta;
        save_checkpoint(dir, store_, meta);
    }

    static std::unique_ptr<MultimodalModel> load(const std::filesystem::path& dir) {
        Checkpoint ck = load_checkpoint(dir);
        ModelSpec spec = ModelSpec::from_json(ck.meta.at("model_spec"));
        auto model = std::make_unique<MultimodalModel>(spec);
        if (!ck.meta.at("lora").is_null())
            model->attach_lora(ck.meta.at("lora").at("rank"), ck.meta.at("lora").at("alpha"));
        restore_params(model->store_, ck);
        model->apply_partition(
            partition_mode_from_name(ck.meta.at("partition_mode").get<std::string>()));
        if (!ck.meta.at("quantize_bits").is_null()) {
            // quantization state is reconstructed from the restored weights
            model->apply_partition(PartitionMode::projector_only);
            model->lm_->quantize_weights(ck.meta.at("quantize_bits").get<int>());
            model->lm_->set_quantized_forward(false); // inference default: full precision
            model->apply_partition(
                partition_mode_from_name(ck.meta.at("partition_mode").get<std::string>()));
        }
        return model;
    }

private:
    ModelSpec spec_;
    Vocab vocab_;
    ParamStore store_;
    std::unique_ptr<LmModel> lm_;
    std::map<Modality, std::unique_ptr<Projector>> projectors_;
    TemplateLibrary templates_ = TemplateLibrary::builtin();
    PartitionMode partition_ = PartitionMode::projector_only;
};

} // namespace anymodal

#endif
