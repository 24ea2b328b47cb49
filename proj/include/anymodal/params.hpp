#ifndef ANYMODAL_PARAMS_HPP
#define ANYMODAL_PARAMS_HPP

// Named parameter registry with train/frozen partition, checksum guard and
// checkpoint round-trip (manifest.json + tensors.bin, little-endian doubles).

#include "anymodal/autograd.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace anymodal {

// Weights draw from normal(0, 0.02) where 0.02 is the variance (std ~0.141).
// At desk-scale widths this keeps attention logits and head logits O(1); the
// usual 0.02-std convention only reaches O(1) at multi-thousand dims.
inline const double kInitStd = std::sqrt(0.02);


using json = nlohmann::ordered_json;

class ParamStore {
public:
    Param& create(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
        if (params_.count(name)) throw std::invalid_argument("param exists: " + name);
        auto p = std::make_unique<Param>();
        p->name = name;
        p->value = Mat::Zero(rows, cols);
        p->zero_grad();
        Param& ref = *p;
        params_[name] = std::move(p);
        return ref;
    }

    Param& get(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::out_of_range("no param: " + name);
        return *it->second;
    }
    const Param& get(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::out_of_range("no param: " + name);
        return *it->second;
    }
    bool has(const std::string& name) const { return params_.count(name) != 0; }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (auto& [k, v] : params_) out.push_back(k);
        return out;
    }

    std::vector<std::string> trainable_names() const {
        std::vector<std::string> out;
        for (auto& [k, v] : params_)
            if (v->trainable) out.push_back(k);
        return out;
    }

    std::vector<std::string> frozen_names() const {
        std::vector<std::string> out;
        for (auto& [k, v] : params_)
            if (!v->trainable) out.push_back(k);
        return out;
    }

    void zero_grads() {
        for (auto& [k, v] : params_) v->zero_grad();
    }

    // Marks trainable exactly the params matching any of the prefixes.
    void set_trainable_by_prefix(const std::vector<std::string>& prefixes) {
        for (auto& [k, v] : params_) {
            bool t = false;
            for (const auto& pre : prefixes)
                if (k.rfind(pre, 0) == 0) { t = true; break; }
            v->trainable = t;
        }
    }

    void init_normal(Param& p, std::mt19937_64& rng, double stddev) {
        std::normal_distribution<double> d(0.0, stddev);
        for (Eigen::Index c = 0; c < p.value.cols(); ++c)
            for (Eigen::Index r = 0; r < p.value.rows(); ++r)
                p.value(r, c) = d(rng);
    }

    // FNV-1a over the raw bytes of the frozen tensors, in name order.
    std::uint64_t frozen_checksum() const {
        std::uint64_t h = 1469598103934665603ULL;
        auto mix = [&h](const void* data, size_t n) {
            const auto* b = static_cast<const unsigned char*>(data);
            for (size_t i = 0; i < n; ++i) {
                h ^= b[i];
                h *= 1099511628211ULL;
            }
        };
        for (auto& [k, v] : params_) {
            if (v->trainable) continue;
            mix(k.data(), k.size());
            mix(v->value.data(), sizeof(double) * static_cast<size_t>(v->value.size()));
        }
        return h;
    }

private:
    std::map<std::string, std::unique_ptr<Param>> params_;
};

// ---------------------------------------------------------------------------
// Checkpoint layout: <dir>/manifest.json + <dir>/tensors.bin
// manifest carries tensor index (name, rows, cols, byte offset) plus an
// opaque "meta" object supplied by the caller (config, seed, vocab, ...).

inline void save_checkpoint(const std::filesystem::path& dir, const ParamStore& store,
                            const json& meta) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    json manifest;
    manifest["format_version"] = 1;
    manifest["meta"] = meta;
    json tensors = json::array();

    std::ofstream bin(dir / "tensors.bin", std::ios::binary | std::ios::trunc);
    if (!bin) throw std::runtime_error("cannot write " + (dir / "tensors.bin").string());
    std::uint64_t offset = 0;
    // names() is sorted, so the blob layout is deterministic
    for (const auto& name : const_cast<ParamStore&>(store).names()) {
        const Param& p = store.get(name);
        json t;
        t["name"] = name;
        t["rows"] = p.value.rows();
        t["cols"] = p.value.cols();
        t["offset"] = offset;
        t["trainable"] = p.trainable;
        tensors.push_back(t);
        bin.write(reinterpret_cast<const char*>(p.value.data()),
                  static_cast<std::streamsize>(sizeof(double) * p.value.size()));
        offset += sizeof(double) * static_cast<std::uint64_t>(p.value.size());
    }
    manifest["tensors"] = tensors;

    std::ofstream mf(dir / "manifest.json", std::ios::trunc);
    mf << manifest.dump(2) << "\n";
}

struct Checkpoint {
    json meta;
    std::map<std::string, Mat> tensors;
    std::set<std::string> trainable;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw std::runtime_error("cannot read " + (dir / "manifest.json").string());
    json manifest = json::parse(mf);
    Checkpoint ck;
    ck.meta = manifest.at("meta");

    std::ifstream bin(dir / "tensors.bin", std::ios::binary);
    if (!bin) throw std::runtime_error("cannot read " + (dir / "tensors.bin").string());
    for (const auto& t : manifest.at("tensors")) {
        std::string name = t.at("name");
        Eigen::Index rows = t.at("rows");
        Eigen::Index cols = t.at("cols");
        Mat m(rows, cols);
        bin.seekg(static_cast<std::streamoff>(t.at("offset").get<std::uint64_t>()));
        bin.read(reinterpret_cast<char*>(m.data()),
                 static_cast<std::streamsize>(sizeof(double) * m.size()));
        if (!bin) throw std::runtime_error("truncated tensors.bin at " + name);
        ck.tensors[name] = std::move(m);
        if (t.at("trainable").get<bool>()) ck.trainable.insert(name);
    }
    return ck;
}

// Restores tensor values into an already-built store (shapes must match).
inline void restore_params(ParamStore& store, const Checkpoint& ck) {
    for (const auto& [name, m] : ck.tensors) {
        Param& p = store.get(name);
        if (p.value.rows() != m.rows() || p.value.cols() != m.cols())
            throw std::runtime_error("checkpoint shape mismatch: " + name);
        p.value = m;
    }
}

struct FrozenReport {
    bool ok = true;
    std::map<std::string, double> max_abs_delta; // per frozen tensor
    std::string first_violation;
};

// Compares the frozen tensors of two checkpoints of the same architecture.
inline FrozenReport verify_frozen(const Checkpoint& before, const Checkpoint& after) {
    FrozenReport rep;
    if (before.tensors.size() != after.tensors.size())
        throw std::runtime_error("architecture mismatch: tensor count differs");
    for (const auto& [name, b] : before.tensors) {
        auto it = after.tensors.find(name);
        if (it == after.tensors.end())
            throw std::runtime_error("architecture mismatch: missing " + name);
        if (b.rows() != it->second.rows() || b.cols() != it->second.cols())
            throw std::runtime_error("architecture mismatch: shape of " + name);
        if (after.trainable.count(name)) continue;
        double d = b.size() ? (b - it->second).cwiseAbs().maxCoeff() : 0.0;
        rep.max_abs_delta[name] = d;
        if (d != 0.0 && rep.ok) {
            rep.ok = false;
            rep.first_violation = name;
        } else if (d != 0.0) {
            rep.ok = false;
        }
    }
    return rep;
}

} // namespace anymodal

#endif
