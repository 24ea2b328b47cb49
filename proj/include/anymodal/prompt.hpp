#ifndef ANYMODAL_PROMPT_HPP
#define ANYMODAL_PROMPT_HPP

// Task templates (data, not code), placeholder substitution, and context
// assembly: text runs interleaved with fixed-size modality token blocks,
// plus loss mask and shifted targets.

#include "anymodal/autograd.hpp"
#include "anymodal/lm.hpp"
#include "anymodal/tokenizer.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace anymodal {

struct PromptTemplate {
    std::string name;
    std::string system;
    std::string user;
    std::vector<Modality> modality_slots; // textual order
};

struct RenderedPrompt {
    std::string text;
    std::vector<std::pair<size_t, Modality>> slots; // byte offset of each marker
};

namespace detail {

inline std::string substitute_fields(const std::string& tpl,
                                     const std::map<std::string, std::string>& fields,
                                     const std::string& tpl_name) {
    std::string out;
    size_t i = 0;
    while (i < tpl.size()) {
        if (tpl[i] == '{' && i + 1 < tpl.size() && tpl[i + 1] == '{') {
            out.push_back('{');
            i += 2;
        } else if (tpl[i] == '}' && i + 1 < tpl.size() && tpl[i + 1] == '}') {
            out.push_back('}');
            i += 2;
        } else if (tpl[i] == '{') {
            size_t close = tpl.find('}', i);
            if (close == std::string::npos) throw std::invalid_argument(
                "template " + tpl_name + ": unbalanced '{'");
            std::string key = tpl.substr(i + 1, close - i - 1);
            auto it = fields.find(key);
            if (it == fields.end())
                throw std::invalid_argument("template " + tpl_name + ": missing field '" +
                                            key + "'");
            out += it->second;
            i = close + 1;
        } else {
            out.push_back(tpl[i++]);
        }
    }
    return out;
}

} // namespace detail

class TemplateLibrary {
public:
    void add(PromptTemplate t) { templates_[t.name] = std::move(t); }

    bool has(const std::string& name) const { return templates_.count(name) != 0; }

    const PromptTemplate& get(const std::string& name) const {
        auto it = templates_.find(name);
        if (it == templates_.end()) throw std::out_of_range("unknown template: " + name);
        return it->second;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (auto& [k, v] : templates_) out.push_back(k);
        return out;
    }

    RenderedPrompt render(const std::string& name,
                          const std::map<std::string, std::string>& fields,
                          const std::vector<Modality>& modalities) const {
        const PromptTemplate& t = get(name);
        if (modalities != t.modality_slots)
            throw std::invalid_argument("template " + name + ": modality slot mismatch");
        std::string sys = detail::substitute_fields(t.system, fields, name);
        std::string usr = detail::substitute_fields(t.user, fields, name);
        RenderedPrompt r;
        r.text = sys.empty() ? usr : sys + "\n" + usr;
        // record marker offsets in textual order and check they match slots
        size_t pos = 0;
        while (true) {
            size_t best = std::string::npos;
            Modality best_m = Modality::image;
            size_t best_len = 0;
            for (Modality m : all_modalities()) {
                const std::string mk = modality_marker(m);
                size_t at = r.text.find(mk, pos);
                if (at != std::string::npos && at < best) {
                    best = at;
                    best_m = m;
                    best_len = mk.size();
                }
            }
            if (best == std::string::npos) break;
            r.slots.emplace_back(best, best_m);
            pos = best + best_len;
        }
        if (r.slots.size() != t.modality_slots.size())
            throw std::invalid_argument("template " + name + ": placeholder count mismatch");
        for (size_t i = 0; i < r.slots.size(); ++i)
            if (r.slots[i].second != t.modality_slots[i])
                throw std::invalid_argument("template " + name + ": placeholder order mismatch");
        return r;
    }

    static TemplateLibrary builtin();
    static TemplateLibrary load(const std::string& path);
    static TemplateLibrary from_json(const json& j);

private:
    std::map<std::string, PromptTemplate> templates_;
};

inline TemplateLibrary TemplateLibrary::from_json(const json& j) {
    TemplateLibrary lib;
    for (const auto& e : j.at("templates")) {
        PromptTemplate t;
        t.name = e.at("name");
        t.system = e.at("system");
        t.user = e.at("user");
        for (const auto& m : e.at("modalities"))
            t.modality_slots.push_back(modality_from_name(m.get<std::string>()));
        lib.add(std::move(t));
    }
    return lib;
}

inline TemplateLibrary TemplateLibrary::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read template file: " + path);
    return from_json(json::parse(f));
}

// ---------------------------------------------------------------------------

struct AssembledContext {
    struct Segment {
        bool is_block = false;
        TokenSequence ids;    // text segment
        int block_index = -1; // modality segment
        int block_len = 0;
        Modality kind = Modality::image;
    };
    std::vector<Segment> segments;
    std::vector<int> ids;        // flat; placeholder id on modality rows
    std::vector<int> targets;    // token at each position (-1 on modality rows)
    std::vector<bool> loss_mask; // true exactly on response + eos rows
    int length = 0;

    int n_blocks() const {
        int n = 0;
        for (const auto& s : segments) n += s.is_block ? 1 : 0;
        return n;
    }
    bool generation_ready() const {
        for (bool b : loss_mask)
            if (b) return false;
        return true;
    }
};

// Each placeholder marker is consumed and replaced by its k-row block.
// Layout: [bos] text/block segments ... [response tokens] [eos].
inline AssembledContext assemble(const Vocab& vocab, const RenderedPrompt& prompt,
                                 const std::optional<std::string>& response,
                                 const std::vector<int>& block_sizes, int max_seq_len) {
    if (block_sizes.size() != prompt.slots.size())
        throw std::invalid_argument("assemble: block count " +
                                    std::to_string(block_sizes.size()) + " != placeholder count " +
                                    std::to_string(prompt.slots.size()));
    AssembledContext ctx;
    auto push_text = [&](const TokenSequence& ids, bool supervised) {
        if (ids.empty()) return;
        AssembledContext::Segment s;
        s.ids = ids;
        ctx.segments.push_back(s);
        for (int id : ids) {
            ctx.ids.push_back(id);
            ctx.targets.push_back(id);
            ctx.loss_mask.push_back(supervised);
        }
    };

    push_text({Vocab::bos_id}, false);
    size_t cursor = 0;
    for (size_t i = 0; i < prompt.slots.size(); ++i) {
        auto [off, kind] = prompt.slots[i];
        push_text(vocab.encode(prompt.text.substr(cursor, off - cursor)), false);
        AssembledContext::Segment s;
        s.is_block = true;
        s.block_index = static_cast<int>(i);
        s.block_len = block_sizes[i];
        s.kind = kind;
        ctx.segments.push_back(s);
        for (int r = 0; r < block_sizes[i]; ++r) {
            ctx.ids.push_back(vocab.placeholder_id(kind));
            ctx.targets.push_back(-1);
            ctx.loss_mask.push_back(false);
        }
        cursor = off + std::string(modality_marker(kind)).size();
    }
    push_text(vocab.encode(prompt.text.substr(cursor)), false);

    if (response) {
        TokenSequence resp = vocab.encode(*response);
        resp.push_back(Vocab::eos_id);
        push_text(resp, true); // supervision covers response tokens and eos
    }
    ctx.length = static_cast<int>(ctx.ids.size());
    if (ctx.length > max_seq_len)
        throw std::invalid_argument("assemble: context length " + std::to_string(ctx.length) +
                                    " exceeds max_seq_len " + std::to_string(max_seq_len));
    return ctx;
}

// Builds the N x model_dim input matrix: text rows from the LM embedding
// table, block rows from the supplied projector outputs (graph-connected).
inline Var embed_context(Tape& t, LmModel& lm, const AssembledContext& ctx,
                         const std::vector<Var>& blocks) {
    if (static_cast<int>(blocks.size()) != ctx.n_blocks())
        throw std::invalid_argument("embed_context: block count mismatch");
    std::vector<Var> parts;
    for (const auto& seg : ctx.segments) {
        if (seg.is_block) {
            Var b = blocks[static_cast<size_t>(seg.block_index)];
            if (t.val(b).rows() != seg.block_len)
                throw std::invalid_argument("embed_context: block row count mismatch");
            parts.push_back(b);
        } else {
            parts.push_back(lm.embed(t, seg.ids));
        }
    }
    return t.concat_rows(parts);
}

// ---------------------------------------------------------------------------
// Synthetic-augmentation prompt (caption + bounding boxes -> Q/A generation
// request for a pluggable text generator).

struct Box {
    std::string label;
    double x1, y1, x2, y2;
};

struct AugmentationPrompt {
    std::vector<std::string> captions;
    std::vector<Box> boxes;
    std::string rendered;
};

namespace detail {

inline std::string format_box(const Box& b) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s: [%.3f, %.3f, %.3f, %.3f]", b.label.c_str(), b.x1,
                  b.y1, b.x2, b.y2);
    return buf;
}

inline const char* augmentation_system_preamble() {
    return
        "You are an AI visual assistant that can analyze a single image. You receive "
        "five sentences, each describing the same image you are observing. In addition, "
        "specific object locations within the image are given, along with detailed "
        "coordinates. These coordinates are in the form of bounding boxes, represented "
        "as (x1, y1, x2, y2) with floating numbers ranging from 0 to 1. These values "
        "correspond to the top left x, top left y, bottom right x, and bottom right y.\n\n"
        "The task is to use the provided caption and bounding box information, create a "
        "plausible question about the image, and provide the answer in detail.\n\n"
        "Create complex questions beyond describing the scene. To answer such questions, "
        "one should require first understanding the visual content, then based on the "
        "background knowledge or reasoning, either explain why the things are happening "
        "that way, or provide guides and help to user's request. Make the question "
        "challenging by not including the visual content details in the question so that "
        "the user needs to reason about that first.\n\n"
        "Instead of directly mentioning the bounding box coordinates, utilize this data "
        "to explain the scene using natural language. Include details like object counts, "
        "position of the objects, relative position between the objects.\n\n"
        "When using the information from the caption and coordinates, directly explain "
        "the scene, and do not mention that the information source is the caption or the "
        "bounding box. Always answer as if you are directly looking at the image.";
}

inline const char* augmentation_exemplar() {
    return
        "[INST]\n"
        "A red fire hydrant is deep in the snow.    "
        "fire hydrant: [0.326, 0.612, 0.426, 0.72]\n"
        "[/INST]\n"
        "Question:  What challenges might this city face?  ===  Answer:  The city faces "
        "challenges due to the harsh winter conditions and heavy snowfall. In the image, "
        "a red fire hydrant is almost buried deep in the snow, which indicates the "
        "significant amount of snow the city has experienced.\n";
}

} // namespace detail

inline AugmentationPrompt build_augmentation_prompt(const std::vector<std::string>& captions,
                                                    const std::vector<Box>& boxes) {
    if (captions.empty())
        throw std::invalid_argument("build_augmentation_prompt: need at least one caption");
    for (const Box& b : boxes) {
        bool in_range = b.x1 >= 0 && b.y1 >= 0 && b.x2 <= 1 && b.y2 <= 1;
        if (!in_range || !(b.x1 < b.x2) || !(b.y1 < b.y2))
            throw std::invalid_argument("build_augmentation_prompt: invalid box for label '" +
                                        b.label + "'");
    }
    AugmentationPrompt out;
    out.captions = captions;
    out.boxes = boxes;
    std::string block;
    for (size_t i = 0; i < captions.size(); ++i) {
        if (i) block += "  ";
        block += captions[i];
    }
    for (const Box& b : boxes) block += "    " + detail::format_box(b);
    out.rendered = std::string("<s> [INST] <<SYS>>\n") + detail::augmentation_system_preamble() +
                   "\n<</SYS>>\n" + detail::augmentation_exemplar() + "\n[INST]\n" + block +
                   "\n[/INST]\n";
    return out;
}

// ---------------------------------------------------------------------------
// Built-in template set (also shipped as data/templates.json).

inline TemplateLibrary TemplateLibrary::builtin() {
    TemplateLibrary lib;
    auto add = [&lib](std::string name, std::string system, std::string user,
                      std::vector<Modality> slots) {
        lib.add(PromptTemplate{std::move(name), std::move(system), std::move(user),
                               std::move(slots)});
    };
    add("mm-it",
        "You are a multimodal assistant, designed to provide helpful answers to users' "
        "image-related questions. \n\n Here is the image: <img>",
        "{question}", {Modality::image});
    add("vqa",
        "You are a multimodal assistant, designed to provide direct answers to users' "
        "image-related questions. Reply directly with only one phrase. *Do not* start "
        "your answer with 'Sure ...'. \n\n Here is the image: <img>",
        "In the image, {question} Reply in one word.", {Modality::image});
    add("vizwiz",
        "Answer the questions based on the image when possible, otherwise say "
        "'unanswerable'. \n\n Here is the image: <img>",
        "In the image, {question} Reply in one prahse/word or say 'unanswerable'",
        {Modality::image});
    add("hateful-meme",
        "You are a social media content moderator, designed to detect hateful memes. "
        "\n\n Here is the meme: <img>\n This meme contains text: '{ocr}'",
        "Is this a hateful meme? Answer yes or no.", {Modality::image});
    add("coco-caption",
        "You are a multimodal assistant, designed to provide direct and concise answers "
        "to users' image-related requests. \n\n Here is the image: <img>",
        "Describe the image with one *generic* sentence using json format. Here are two "
        "examples:\n Specific: {{\"caption\": \"Body-Solid (Best Fitness) Inversion "
        "Table-2\"}} \n Generic: {{\"caption\": \"A man laying on top of an exercise "
        "table.\"}}.",
        {Modality::image});
    add("scienceqa",
        "Given the image, choose the correct option for the following question. Your "
        "response must be just a single letter that corresponds to the correct option "
        "(e.g. A, B) \n\n Here is the image: <img>",
        "{context} Question: {question} \n\n Options: {choices} \n\n Reply in a single "
        "letter.",
        {Modality::image});
    add("audiocap",
        "You are a multimodal assistant. Designed to provide direct answers to users' "
        "audio-related questions. Here is the audio: <audio>",
        "Describe the sound.", {Modality::audio});
    add("videoqa",
        "You are a multimodal assistant. Designed to provide direct answers to users' "
        "video-related questions. \n\n Here is the video: <video>.",
        "{question} Select exactly one option from the following: [{options}].",
        {Modality::video});
    add("imu-ego4d",
        "You are a multimodal assistant, designed to provide helpful, concise and direct "
        "answers to users' questions, based on the user's motion sensor signals reading "
        "from a head-mounted IMU device. The signals may indicate that a user may be "
        "running, walking, biking, driving, looking around, etc. Always answer under 30 "
        "words. \n\n Here are the user's predicted motions: <IMU>",
        "Describe this motion.", {Modality::imu});
    add("vqa-short", "Answer briefly. Here is the image: <img>", "{question}",
        {Modality::image});
    // caption-only alignment contexts: the rendered prompt is just the marker
    add("align-image", "", "<img>", {Modality::image});
    add("align-audio", "", "<audio>", {Modality::audio});
    add("align-video", "", "<video>", {Modality::video});
    add("align-imu", "", "<IMU>", {Modality::imu});
    return lib;
}

inline const char* align_template_for(Modality m) {
    switch (m) {
        case Modality::image: return "align-image";
        case Modality::audio: return "align-audio";
        case Modality::video: return "align-video";
        case Modality::imu: return "align-imu";
    }
    throw std::invalid_argument("unknown modality");
}

} // namespace anymodal

#endif
