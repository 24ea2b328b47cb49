#ifndef ANYMODAL_SAFETY_HPP
#define ANYMODAL_SAFETY_HPP

// Four-stage integrity filter chain around inference: (1) input image,
// (2) input text, (3) output text per sentence, (4) multimodal association.
// Default filters are transparent rules; any filter error fails closed.

#include "anymodal/modality.hpp"

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace anymodal {

enum class FilterStage { input_image, input_text, output_text, multimodal_association };

inline const char* filter_stage_name(FilterStage s) {
    switch (s) {
        case FilterStage::input_image: return "input_image";
        case FilterStage::input_text: return "input_text";
        case FilterStage::output_text: return "output_text";
        case FilterStage::multimodal_association: return "multimodal_association";
    }
    throw std::invalid_argument("unknown filter stage");
}

inline FilterStage filter_stage_from_name(const std::string& s) {
    for (FilterStage st : {FilterStage::input_image, FilterStage::input_text,
                           FilterStage::output_text, FilterStage::multimodal_association})
        if (s == filter_stage_name(st)) return st;
    throw std::invalid_argument("unknown filter stage: " + s);
}

struct FilterVerdict {
    FilterStage stage = FilterStage::input_text;
    bool allow = true;
    std::string reason; // non-empty on reject

    static FilterVerdict allowed(FilterStage s) { return {s, true, ""}; }
    static FilterVerdict rejected(FilterStage s, std::string why) {
        return {s, false, std::move(why)};
    }
};

// Inputs a stage filter may look at; unused members are empty.
struct FilterInput {
    const ModalitySignal* signal = nullptr; // image stages
    std::string prompt;
    std::string output_text; // stages 3-4
};

// A filter scores an input; score > threshold means violation.
struct FilterHandle {
    std::function<double(const FilterInput&)> score;
    double threshold = 0.5;
    std::string reason = "filter rule fired";
};

inline std::vector<std::string> split_sentences(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (size_t i = 0; i < text.size(); ++i) {
        cur.push_back(text[i]);
        char c = text[i];
        if ((c == '.' || c == '!' || c == '?') &&
            (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])))) {
            out.push_back(cur);
            cur.clear();
            while (i + 1 < text.size() && std::isspace(static_cast<unsigned char>(text[i + 1])))
                cur.push_back(text[++i]);
            if (!cur.empty()) {
                out.back() += cur;
                cur.clear();
            }
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

namespace detail {

inline std::string lowercase(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline bool contains_term(const std::string& text, const std::set<std::string>& terms) {
    std::string lo = lowercase(text);
    for (const auto& t : terms)
        if (!t.empty() && lo.find(t) != std::string::npos) return true;
    return false;
}

// Saturated-red flood statistic in [0,1]: mean(R) - mean((G+B)/2), clamped.
inline double red_flood_score(const ModalitySignal& s) {
    if (s.kind != Modality::image) return 0.0;
    const ImagePayload& im = s.image;
    double r = 0, gb = 0;
    const int n = im.h * im.w;
    for (int y = 0; y < im.h; ++y)
        for (int x = 0; x < im.w; ++x) {
            r += im.at(y, x, 0);
            gb += (im.at(y, x, 1) + im.at(y, x, 2)) / 2.0;
        }
    return std::max(0.0, r / n - gb / n);
}

} // namespace detail

struct SafetyConfig {
    std::map<FilterStage, bool> enabled = {
        {FilterStage::input_image, true},
        {FilterStage::input_text, true},
        {FilterStage::output_text, true},
        {FilterStage::multimodal_association, true},
    };
    std::set<std::string> blocklist = {"violence", "weapon", "hate speech"};
    std::set<std::string> association_terms = {"attack", "target"};
    double image_threshold = 0.5;
    double association_image_threshold = 0.3;
};

class SafetyPipeline {
public:
    explicit SafetyPipeline(SafetyConfig cfg = {}) : cfg_(std::move(cfg)) {
        install_defaults();
    }

    const SafetyConfig& config() const { return cfg_; }

    void set_enabled(FilterStage stage, bool on) { cfg_.enabled[stage] = on; }

    void disable_all() {
        for (auto& [k, v] : cfg_.enabled) v = false;
    }

    // Replaces the filter for a stage.
    void register_filter(FilterStage stage, FilterHandle handle) {
        filters_[stage] = std::move(handle);
    }

    // Stages (1) image then (2) input text; first reject wins.
    FilterVerdict check_input(const ModalitySignal* signal, const std::string& prompt) const {
        if (signal && cfg_.enabled.at(FilterStage::input_image)) {
            FilterInput in;
            in.signal = signal;
            in.prompt = prompt;
            FilterVerdict v = run_stage(FilterStage::input_image, in);
            if (!v.allow) return v;
        }
        if (cfg_.enabled.at(FilterStage::input_text)) {
            FilterInput in;
            in.prompt = prompt;
            FilterVerdict v = run_stage(FilterStage::input_text, in);
            if (!v.allow) return v;
        }
        return FilterVerdict::allowed(FilterStage::input_text);
    }

    // Per-sentence verdicts in generation order, stage (3) then (4); a
    // reject stops evaluation (the stream is truncated at that sentence).
    std::vector<FilterVerdict> check_output(const std::string& prompt,
                                            const std::vector<std::string>& sentences,
                                            const ModalitySignal* signal = nullptr) const {
        std::vector<FilterVerdict> out;
        for (const auto& sent : sentences) {
            FilterInput in;
            in.prompt = prompt;
            in.output_text = sent;
            in.signal = signal;
            if (cfg_.enabled.at(FilterStage::output_text)) {
                FilterVerdict v = run_stage(FilterStage::output_text, in);
                if (!v.allow) {
                    out.push_back(v);
                    return out;
                }
            }
            if (signal && cfg_.enabled.at(FilterStage::multimodal_association)) {
                FilterVerdict v = run_stage(FilterStage::multimodal_association, in);
                if (!v.allow) {
                    out.push_back(v);
                    return out;
                }
            }
            out.push_back(FilterVerdict::allowed(FilterStage::output_text));
        }
        return out;
    }

    struct ModeratedOutput {
        std::string text; // surviving prefix
        bool rejected = false;
        FilterVerdict verdict = FilterVerdict::allowed(FilterStage::output_text);
    };

    // Streams sentences of `generated` through stages 3-4, truncating at the
    // first rejection.
    ModeratedOutput moderate_output(const std::string& prompt, const std::string& generated,
                                    const ModalitySignal* signal = nullptr) const {
        ModeratedOutput mo;
        auto sentences = split_sentences(generated);
        auto verdicts = check_output(prompt, sentences, signal);
        for (size_t i = 0; i < verdicts.size(); ++i) {
            if (!verdicts[i].allow) {
                mo.rejected = true;
                mo.verdict = verdicts[i];
                return mo;
            }
            mo.text += sentences[i];
        }
        return mo;
    }

private:
    // Any exception inside a filter maps to reject (fail closed).
    FilterVerdict run_stage(FilterStage stage, const FilterInput& in) const {
        const FilterHandle& h = filters_.at(stage);
        try {
            double s = h.score(in);
            if (s > h.threshold) return FilterVerdict::rejected(stage, h.reason);
            return FilterVerdict::allowed(stage);
        } catch (...) {
            return FilterVerdict::rejected(stage, "filter-error");
        }
    }

    void install_defaults() {
        filters_[FilterStage::input_image] = FilterHandle{
            [](const FilterInput& in) {
                return in.signal ? detail::red_flood_score(*in.signal) : 0.0;
            },
            cfg_.image_threshold, "image pixel-statistic rule fired"};
        filters_[FilterStage::input_text] = FilterHandle{
            [bl = cfg_.blocklist](const FilterInput& in) {
                return detail::contains_term(in.prompt, bl) ? 1.0 : 0.0;
            },
            0.5, "prompt contains a blocklisted term"};
        filters_[FilterStage::output_text] = FilterHandle{
            [bl = cfg_.blocklist](const FilterInput& in) {
                return detail::contains_term(in.output_text, bl) ? 1.0 : 0.0;
            },
            0.5, "output contains a blocklisted term"};
        filters_[FilterStage::multimodal_association] = FilterHandle{
            [terms = cfg_.association_terms,
             thr = cfg_.association_image_threshold](const FilterInput& in) {
                if (!in.signal) return 0.0;
                bool image_suspicious = detail::red_flood_score(*in.signal) > thr;
                return image_suspicious && detail::contains_term(in.output_text, terms) ? 1.0
                                                                                        : 0.0;
            },
            0.5, "image/output association rule fired"};
    }

    SafetyConfig cfg_;
    std::map<FilterStage, FilterHandle> filters_;
};

} // namespace anymodal

#endif
