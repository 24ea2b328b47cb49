#ifndef ANYMODAL_TOKENIZER_HPP
#define ANYMODAL_TOKENIZER_HPP

// Byte-level vocabulary: a reserved specials block at ids 0..6 followed by
// the 256 raw byte ids. Exactly reversible on placeholder-free text.

#include <json.hpp>

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace anymodal {

enum class Modality { image, audio, video, imu };

inline const char* modality_name(Modality m) {
    switch (m) {
        case Modality::image: return "image";
        case Modality::audio: return "audio";
        case Modality::video: return "video";
        case Modality::imu: return "imu";
    }
    throw std::invalid_argument("unknown modality");
}

inline Modality modality_from_name(const std::string& s) {
    if (s == "image") return Modality::image;
    if (s == "audio") return Modality::audio;
    if (s == "video") return Modality::video;
    if (s == "imu") return Modality::imu;
    throw std::invalid_argument("unknown modality: " + s);
}

// Literal marker text each placeholder renders as.
inline const char* modality_marker(Modality m) {
    switch (m) {
        case Modality::image: return "<img>";
        case Modality::audio: return "<audio>";
        case Modality::video: return "<video>";
        case Modality::imu: return "<IMU>";
    }
    throw std::invalid_argument("unknown modality");
}

inline const std::array<Modality, 4>& all_modalities() {
    static const std::array<Modality, 4> ms = {Modality::image, Modality::audio,
                                               Modality::video, Modality::imu};
    return ms;
}

using TokenSequence = std::vector<int>;

class Vocab {
public:
    static constexpr int pad_id = 0;
    static constexpr int bos_id = 1;
    static constexpr int eos_id = 2;

    Vocab() {
        reserved_[Modality::image] = 3;
        reserved_[Modality::audio] = 4;
        reserved_[Modality::video] = 5;
        reserved_[Modality::imu] = 6;
    }

    int byte_offset() const { return 7; }
    int size() const { return byte_offset() + 256; }

    int placeholder_id(Modality m) const { return reserved_.at(m); }

    bool is_placeholder(int id) const {
        return id >= 3 && id < byte_offset();
    }

    TokenSequence encode(const std::string& text) const {
        TokenSequence out;
        out.reserve(text.size());
        for (unsigned char b : text) out.push_back(byte_offset() + b);
        return out;
    }

    std::string decode(const TokenSequence& ids) const {
        std::string out;
        for (int id : ids) {
            if (id < 0 || id >= size())
                throw std::out_of_range("decode: invalid token id " + std::to_string(id));
            if (id >= byte_offset()) {
                out.push_back(static_cast<char>(id - byte_offset()));
            } else if (id == pad_id) {
                // pad renders as nothing
            } else if (id == bos_id || id == eos_id) {
                // structural markers render as nothing
            } else {
                for (Modality m : all_modalities())
                    if (reserved_.at(m) == id) { out += modality_marker(m); break; }
            }
        }
        return out;
    }

    nlohmann::ordered_json manifest() const {
        nlohmann::ordered_json j;
        j["size"] = size();
        j["byte_offset"] = byte_offset();
        j["pad"] = pad_id;
        j["bos"] = bos_id;
        j["eos"] = eos_id;
        nlohmann::ordered_json r;
        for (Modality m : all_modalities()) r[modality_name(m)] = placeholder_id(m);
        j["reserved"] = r;
        return j;
    }

    // Checkpoints carry the manifest; loading verifies it describes this
    // fixed layout rather than silently accepting a different vocabulary.
    static Vocab from_manifest(const nlohmann::json& j) {
        Vocab v;
        if (j.at("byte_offset").get<int>() != v.byte_offset() ||
            j.at("size").get<int>() != v.size())
            throw std::invalid_argument("vocab manifest: incompatible layout");
        for (Modality m : all_modalities())
            if (j.at("reserved").at(modality_name(m)).get<int>() != v.placeholder_id(m))
                throw std::invalid_argument("vocab manifest: incompatible reserved ids");
        return v;
    }

private:
    std::map<Modality, int> reserved_;
};

} // namespace anymodal

#endif
