#ifndef ANYMODAL_DATA_HPP
#define ANYMODAL_DATA_HPP

// Synthetic learnable corpora (attribute grammar -> payload + caption) and
// JSONL dataset ingestion with schema validation. Payloads are inline
// arrays so every flow is hermetic.

#include "anymodal/modality.hpp"
#include "anymodal/prompt.hpp"
#include "anymodal/tokenizer.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace anymodal {

// --- payload (de)serialization ---------------------------------------------

inline json payload_to_json(const ModalitySignal& s) {
    json j;
    switch (s.kind) {
        case Modality::image: {
            j["h"] = s.image.h;
            j["w"] = s.image.w;
            j["c"] = s.image.c;
            j["data"] = s.image.data;
            break;
        }
        case Modality::audio:
            j["samples"] = s.audio;
            break;
        case Modality::video: {
            json frames = json::array();
            for (const auto& f : s.video)
                frames.push_back(json{{"h", f.h}, {"w", f.w}, {"c", f.c}, {"data", f.data}});
            j["frames"] = frames;
            break;
        }
        case Modality::imu: {
            json rows = json::array();
            for (Eigen::Index r = 0; r < s.imu.rows(); ++r) {
                json row = json::array();
                for (Eigen::Index c = 0; c < 6; ++c) row.push_back(s.imu(r, c));
                rows.push_back(row);
            }
            j["data"] = rows;
            break;
        }
    }
    return j;
}

inline ModalitySignal payload_from_json(Modality kind, const json& j) {
    ModalitySignal s;
    s.kind = kind;
    switch (kind) {
        case Modality::image:
            s.image.h = j.at("h");
            s.image.w = j.at("w");
            s.image.c = j.at("c");
            s.image.data = j.at("data").get<std::vector<double>>();
            break;
        case Modality::audio:
            s.audio = j.at("samples").get<std::vector<double>>();
            break;
        case Modality::video:
            for (const auto& f : j.at("frames")) {
                ImagePayload im;
                im.h = f.at("h");
                im.w = f.at("w");
                im.c = f.at("c");
                im.data = f.at("data").get<std::vector<double>>();
                s.video.push_back(std::move(im));
            }
            break;
        case Modality::imu: {
            const auto& rows = j.at("data");
            s.imu = Mat(rows.size(), 6);
            for (size_t r = 0; r < rows.size(); ++r)
                for (size_t c = 0; c < 6; ++c)
                    s.imu(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                        rows[r][c].get<double>();
            break;
        }
    }
    s.validate();
    return s;
}

// --- dataset records --------------------------------------------------------

struct DatasetRecord {
    std::string id;
    std::string task; // "caption" | "instruct"
    std::vector<ModalitySignal> modalities;
    std::string caption;                        // caption task
    std::string template_name;                  // instruct task
    std::map<std::string, std::string> fields;  // instruct task
    std::string response;                       // instruct task
};

inline json record_to_json(const DatasetRecord& r) {
    json j;
    j["id"] = r.id;
    j["task"] = r.task;
    json mods = json::array();
    for (const auto& m : r.modalities)
        mods.push_back(json{{"kind", modality_name(m.kind)}, {"payload", payload_to_json(m)}});
    j["modality"] = mods;
    if (r.task == "caption") {
        j["caption"] = r.caption;
    } else {
        j["template"] = r.template_name;
        j["fields"] = r.fields;
        j["response"] = r.response;
    }
    return j;
}

inline DatasetRecord record_from_json(const json& j, int line_no) {
    auto fail = [line_no](const std::string& msg) {
        throw std::runtime_error("line " + std::to_string(line_no) + ": " + msg);
    };
    DatasetRecord r;
    if (!j.contains("id")) fail("missing field 'id'");
    r.id = j.at("id");
    if (!j.contains("task")) fail("missing field 'task'");
    r.task = j.at("task");
    if (r.task != "caption" && r.task != "instruct") fail("unknown task '" + r.task + "'");
    if (!j.contains("modality") || !j.at("modality").is_array() || j.at("modality").empty())
        fail("missing or empty 'modality' array");
    for (const auto& m : j.at("modality")) {
        Modality kind = modality_from_name(m.at("kind").get<std::string>());
        try {
            r.modalities.push_back(payload_from_json(kind, m.at("payload")));
        } catch (const std::exception& e) {
            fail(std::string("bad payload: ") + e.what());
        }
    }
    if (r.task == "caption") {
        if (r.modalities.size() != 1) fail("caption record must have exactly one modality");
        if (!j.contains("caption")) fail("missing field 'caption'");
        r.caption = j.at("caption");
    } else {
        if (!j.contains("template")) fail("missing field 'template'");
        r.template_name = j.at("template");
        if (j.contains("fields"))
            for (auto& [k, v] : j.at("fields").items()) r.fields[k] = v.get<std::string>();
        if (!j.contains("response")) fail("missing field 'response'");
        r.response = j.at("response");
    }
    return r;
}

class Dataset {
public:
    explicit Dataset(std::vector<DatasetRecord> records) : records_(std::move(records)) {}

    size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    const DatasetRecord& at(size_t i) const { return records_.at(i); }

    // Seed-determined visit order.
    std::vector<size_t> shuffled_indices(std::uint64_t seed) const {
        std::vector<size_t> idx(records_.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::mt19937_64 rng(seed);
        for (size_t i = idx.size(); i > 1; --i) {
            size_t j = rng() % i;
            std::swap(idx[i - 1], idx[j]);
        }
        return idx;
    }

private:
    std::vector<DatasetRecord> records_;
};

inline Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open dataset: " + path.string());
    std::vector<DatasetRecord> records;
    std::map<std::string, int> seen;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": malformed JSON: " + e.what());
        }
        DatasetRecord r = record_from_json(j, line_no);
        auto [it, inserted] = seen.emplace(r.id, line_no);
        if (!inserted)
            throw std::runtime_error("line " + std::to_string(line_no) + ": duplicate id '" +
                                     r.id + "' (first at line " + std::to_string(it->second) +
                                     ")");
        records.push_back(std::move(r));
    }
    return Dataset(std::move(records));
}

// --- split rule -------------------------------------------------------------

inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t seed) {
    std::uint64_t h = 1469598103934665603ULL ^ seed;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Membership is a pure function of (id, seed): ~10% validation.
inline bool is_validation_id(const std::string& id, std::uint64_t seed) {
    return fnv1a64(id, seed) % 10 == 9;
}

// --- synthetic corpora -------------------------------------------------------

struct SynthSpec {
    Modality kind = Modality::image;
    std::string task = "caption"; // or "instruct"
    int n_items = 1000;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_items < 1) throw std::invalid_argument("SynthSpec: n_items must be >= 1");
        if (task != "caption" && task != "instruct")
            throw std::invalid_argument("SynthSpec: task must be caption or instruct");
    }

    json to_json() const {
        return json{{"kind", modality_name(kind)}, {"task", task},
                    {"n_items", n_items}, {"seed", seed}};
    }
    static SynthSpec from_json(const json& j) {
        SynthSpec s;
        s.kind = modality_from_name(j.at("kind"));
        if (j.contains("task")) s.task = j.at("task");
        s.n_items = j.at("n_items");
        if (j.contains("seed")) s.seed = j.at("seed");
        s.validate();
        return s;
    }
};

namespace grammar {

struct Rgb { double r, g, b; };

inline const std::vector<std::pair<std::string, Rgb>>& colors() {
    static const std::vector<std::pair<std::string, Rgb>> v = {
        {"red", {1.0, 0.0, 0.0}},
        {"green", {0.0, 1.0, 0.0}},
        {"blue", {0.0, 0.0, 1.0}},
        {"yellow", {1.0, 1.0, 0.0}},
    };
    return v;
}
inline const std::vector<std::string>& shapes() {
    static const std::vector<std::string> v = {"circle", "square", "triangle"};
    return v;
}
inline const std::vector<std::string>& positions() {
    static const std::vector<std::string> v = {"top left", "top right", "bottom left",
                                               "bottom right"};
    return v;
}
inline const std::vector<std::string>& tones() {
    static const std::vector<std::string> v = {"low", "mid", "high"};
    return v;
}
inline const std::vector<std::string>& tone_patterns() {
    static const std::vector<std::string> v = {"steady", "rising", "pulsing"};
    return v;
}
inline const std::vector<std::string>& motions() {
    static const std::vector<std::string> v = {"walking", "running", "biking", "driving",
                                               "standing"};
    return v;
}
inline const std::vector<std::string>& directions() {
    static const std::vector<std::string> v = {"left", "right", "up", "down"};
    return v;
}

inline std::string image_caption(int color, int shape, int pos) {
    return "a " + colors()[color].first + " " + shapes()[shape] + " in the " + positions()[pos];
}
inline std::string audio_caption(int tone, int pattern) {
    return "a " + tones()[tone] + " " + tone_patterns()[pattern] + " tone";
}
inline std::string imu_caption(int motion) { return "the user is " + motions()[motion]; }
inline std::string video_caption(int color, int dir) {
    return "a " + colors()[color].first + " shape moving " + directions()[dir];
}

// All caption surface forms a spec can generate.
inline std::vector<std::string> surface_forms(Modality kind) {
    std::vector<std::string> out;
    switch (kind) {
        case Modality::image:
            for (size_t c = 0; c < colors().size(); ++c)
                for (size_t s = 0; s < shapes().size(); ++s)
                    for (size_t p = 0; p < positions().size(); ++p)
                        out.push_back(image_caption((int)c, (int)s, (int)p));
            break;
        case Modality::audio:
            for (size_t t = 0; t < tones().size(); ++t)
                for (size_t p = 0; p < tone_patterns().size(); ++p)
                    out.push_back(audio_caption((int)t, (int)p));
            break;
        case Modality::imu:
            for (size_t m = 0; m < motions().size(); ++m) out.push_back(imu_caption((int)m));
            break;
        case Modality::video:
            for (size_t c = 0; c < colors().size(); ++c)
                for (size_t d = 0; d < directions().size(); ++d)
                    out.push_back(video_caption((int)c, (int)d));
            break;
    }
    return out;
}

} // namespace grammar

namespace detail {

inline double quantize3(double v) { return std::round(v * 1000.0) / 1000.0; }

inline ImagePayload draw_shape_image(int color, int shape, int pos, std::mt19937_64& rng,
                                     int hw = 16) {
    std::uniform_real_distribution<double> noise(-0.02, 0.02);
    ImagePayload im;
    im.h = im.w = hw;
    im.c = 3;
    im.data.assign(static_cast<size_t>(hw * hw * 3), 0.0);
    const auto rgb = grammar::colors()[static_cast<size_t>(color)].second;
    const int q = hw / 2;
    const int oy = (pos / 2) * q, ox = (pos % 2) * q;
    for (int y = 0; y < hw; ++y)
        for (int x = 0; x < hw; ++x) {
            bool inside = false;
            if (y >= oy && y < oy + q && x >= ox && x < ox + q) {
                const double ly = y - oy - (q - 1) / 2.0, lx = x - ox - (q - 1) / 2.0;
                const int iy = y - oy, ix = x - ox;
                switch (shape) {
                    case 0: inside = ly * ly + lx * lx <= (q * 0.38) * (q * 0.38); break;
                    case 1: inside = iy >= 1 && iy < q - 1 && ix >= 1 && ix < q - 1; break;
                    case 2: inside = iy >= 1 && iy < q - 1 && ix >= 1 && ix <= iy; break;
                }
            }
            double base[3] = {0.1, 0.1, 0.1};
            if (inside) {
                base[0] = rgb.r;
                base[1] = rgb.g;
                base[2] = rgb.b;
            }
            for (int ch = 0; ch < 3; ++ch)
                im.at(y, x, ch) = quantize3(std::clamp(base[ch] + noise(rng), 0.0, 1.0));
        }
    return im;
}

inline std::vector<double> synth_audio(int tone, int pattern, std::mt19937_64& rng,
                                       int T = 256) {
    std::uniform_real_distribution<double> noise(-0.01, 0.01);
    const double freq = tone == 0 ? 2.0 : tone == 1 ? 6.0 : 12.0;
    std::vector<double> out(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) {
        double amp = 1.0;
        if (pattern == 1) amp = static_cast<double>(t) / T;
        if (pattern == 2) amp = std::abs(std::sin(2.0 * M_PI * 4.0 * t / T));
        out[static_cast<size_t>(t)] =
            quantize3(amp * std::sin(2.0 * M_PI * freq * t / T) + noise(rng));
    }
    return out;
}

inline Mat synth_imu(int motion, std::mt19937_64& rng, int T = 64) {
    std::uniform_real_distribution<double> noise(-0.02, 0.02);
    Mat out(T, 6);
    const double amp = 0.2 + 0.2 * motion;
    const double freq = 1.0 + motion;
    for (int t = 0; t < T; ++t)
        for (int ch = 0; ch < 6; ++ch)
            out(t, ch) = quantize3(amp * std::sin(2.0 * M_PI * freq * t / T + ch) + noise(rng));
    return out;
}

inline std::vector<ImagePayload> synth_video(int color, int dir, std::mt19937_64& rng,
                                             int frames = 4, int hw = 8) {
    std::uniform_real_distribution<double> noise(-0.02, 0.02);
    const auto rgb = grammar::colors()[static_cast<size_t>(color)].second;
    std::vector<ImagePayload> out;
    for (int f = 0; f < frames; ++f) {
        ImagePayload im;
        im.h = im.w = hw;
        im.c = 3;
        im.data.assign(static_cast<size_t>(hw * hw * 3), 0.0);
        const int span = hw - 2;
        int cy = hw / 2, cx = hw / 2;
        const int step = f * span / frames;
        switch (dir) {
            case 0: cx = hw - 2 - step; break; // left
            case 1: cx = 1 + step; break;      // right
            case 2: cy = hw - 2 - step; break; // up
            case 3: cy = 1 + step; break;      // down
        }
        for (int y = 0; y < hw; ++y)
            for (int x = 0; x < hw; ++x) {
                bool inside = std::abs(y - cy) <= 1 && std::abs(x - cx) <= 1;
                double base[3] = {0.1, 0.1, 0.1};
                if (inside) {
                    base[0] = rgb.r;
                    base[1] = rgb.g;
                    base[2] = rgb.b;
                }
                for (int ch = 0; ch < 3; ++ch)
                    im.at(y, x, ch) = quantize3(std::clamp(base[ch] + noise(rng), 0.0, 1.0));
            }
        out.push_back(std::move(im));
    }
    return out;
}

} // namespace detail

// Instruct-task question grammar over the image attributes.
inline std::vector<std::pair<std::string, int>> instruct_questions() {
    // question text, attribute axis (0=color, 1=shape, 2=position)
    return {{"What color is the shape?", 0},
            {"What shape is in the image?", 1},
            {"Where is the shape located?", 2}};
}

struct SynthResult {
    int n_train = 0;
    int n_val = 0;
    std::filesystem::path train_path, val_path, manifest_path;
};

inline SynthResult synth_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir) {
    spec.validate();
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::mt19937_64 rng(spec.seed);
    auto pick = [&rng](size_t n) { return static_cast<int>(rng() % n); };

    SynthResult res;
    res.train_path = out_dir / "train.jsonl";
    res.val_path = out_dir / "val.jsonl";
    res.manifest_path = out_dir / "manifest.json";
    std::ofstream train(res.train_path, std::ios::trunc);
    std::ofstream val(res.val_path, std::ios::trunc);
    if (!train || !val) throw std::runtime_error("cannot write corpus to " + out_dir.string());

    for (int i = 0; i < spec.n_items; ++i) {
        DatasetRecord r;
        char idbuf[64];
        std::snprintf(idbuf, sizeof(idbuf), "%s-%06d", modality_name(spec.kind), i);
        r.id = idbuf;

        ModalitySignal sig;
        sig.kind = spec.kind;
        int color = 0, shape = 0, pos = 0;
        std::string caption;
        switch (spec.kind) {
            case Modality::image: {
                color = pick(grammar::colors().size());
                shape = pick(grammar::shapes().size());
                pos = pick(grammar::positions().size());
                sig.image = detail::draw_shape_image(color, shape, pos, rng);
                caption = grammar::image_caption(color, shape, pos);
                break;
            }
            case Modality::audio: {
                int tone = pick(grammar::tones().size());
                int pat = pick(grammar::tone_patterns().size());
                sig.audio = detail::synth_audio(tone, pat, rng);
                caption = grammar::audio_caption(tone, pat);
                break;
            }
            case Modality::imu: {
                int motion = pick(grammar::motions().size());
                sig.imu = detail::synth_imu(motion, rng);
                caption = grammar::imu_caption(motion);
                break;
            }
            case Modality::video: {
                color = pick(grammar::colors().size());
                int dir = pick(grammar::directions().size());
                sig.video = detail::synth_video(color, dir, rng);
                caption = grammar::video_caption(color, dir);
                break;
            }
        }
        r.modalities.push_back(std::move(sig));

        if (spec.task == "caption") {
            r.task = "caption";
            r.caption = caption;
        } else {
            if (spec.kind != Modality::image)
                throw std::invalid_argument("instruct synthesis supports images only");
            r.task = "instruct";
            r.template_name = "vqa-short";
            auto qs = instruct_questions();
            auto [q, axis] = qs[static_cast<size_t>(pick(qs.size()))];
            r.fields["question"] = q;
            r.response = axis == 0   ? grammar::colors()[static_cast<size_t>(color)].first
                         : axis == 1 ? grammar::shapes()[static_cast<size_t>(shape)]
                                     : grammar::positions()[static_cast<size_t>(pos)];
        }

        std::ofstream& sink = is_validation_id(r.id, spec.seed) ? val : train;
        sink << record_to_json(r).dump() << "\n";
        if (is_validation_id(r.id, spec.seed))
            ++res.n_val;
        else
            ++res.n_train;
    }

    json manifest;
    manifest["spec"] = spec.to_json();
    manifest["n_train"] = res.n_train;
    manifest["n_val"] = res.n_val;
    manifest["split_rule"] = "fnv1a64(id, seed) % 10 == 9 -> val";
    manifest["surface_forms"] = grammar::surface_forms(spec.kind);
    std::ofstream mf(res.manifest_path, std::ios::trunc);
    mf << manifest.dump(2) << "\n";
    return res;
}

// --- synthetic augmentation --------------------------------------------------

// Parses "Question: ... === Answer: ..." (the exact exemplar layout).
inline std::optional<std::pair<std::string, std::string>> parse_question_answer(
    const std::string& text) {
    auto trim = [](std::string s) {
        const char* ws = " \t\r\n";
        size_t b = s.find_first_not_of(ws);
        size_t e = s.find_last_not_of(ws);
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    size_t delim = text.find("===");
    if (delim == std::string::npos) return std::nullopt;
    std::string q = trim(text.substr(0, delim));
    std::string a = trim(text.substr(delim + 3));
    if (q.rfind("Question:", 0) != 0 || a.rfind("Answer:", 0) != 0) return std::nullopt;
    q = trim(q.substr(9));
    a = trim(a.substr(7));
    if (q.empty() || a.empty()) return std::nullopt;
    return std::make_pair(q, a);
}

struct AugmentationStats {
    int emitted = 0;
    int dropped = 0;
    int failed = 0;
};

// Source rows: {"id", "captions": [...], "boxes": [{label,x1,y1,x2,y2}],
// optional "modality"}. Generator failures are surfaced per row; the run
// continues with the remaining rows.
inline AugmentationStats build_augmented_records(
    const std::filesystem::path& source_path,
    const std::function<std::string(const std::string&)>& generate,
    const std::filesystem::path& out_path,
    std::vector<std::string>* row_errors = nullptr) {
    std::ifstream in(source_path);
    if (!in) throw std::runtime_error("cannot open source: " + source_path.string());
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write: " + out_path.string());

    AugmentationStats stats;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line);
        std::vector<std::string> captions = j.at("captions").get<std::vector<std::string>>();
        std::vector<Box> boxes;
        if (j.contains("boxes"))
            for (const auto& b : j.at("boxes"))
                boxes.push_back(Box{b.at("label"), b.at("x1"), b.at("y1"), b.at("x2"),
                                    b.at("y2")});
        AugmentationPrompt prompt = build_augmentation_prompt(captions, boxes);
        std::string generated;
        try {
            generated = generate(prompt.rendered);
        } catch (const std::exception& e) {
            ++stats.failed;
            if (row_errors)
                row_errors->push_back("line " + std::to_string(line_no) + ": " + e.what());
            continue;
        }
        auto qa = parse_question_answer(generated);
        if (!qa) {
            ++stats.dropped;
            continue;
        }
        DatasetRecord r;
        r.id = j.at("id").get<std::string>() + "-aug";
        r.task = "instruct";
        r.template_name = "mm-it";
        r.fields["question"] = qa->first;
        r.response = qa->second;
        if (j.contains("modality")) {
            for (const auto& m : j.at("modality"))
                r.modalities.push_back(
                    payload_from_json(modality_from_name(m.at("kind")), m.at("payload")));
        } else {
            // no pixels available for caption-only sources: neutral gray image
            ModalitySignal s;
            s.kind = Modality::image;
            s.image.h = s.image.w = 16;
            s.image.c = 3;
            s.image.data.assign(16 * 16 * 3, 0.5);
            r.modalities.push_back(std::move(s));
        }
        out << record_to_json(r).dump() << "\n";
        ++stats.emitted;
    }
    return stats;
}

} // namespace anymodal

#endif
