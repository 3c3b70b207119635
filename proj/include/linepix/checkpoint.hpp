#pragma once

// Checkpoint file, version 1:
//   "LPXM" | version u16 | D u16 | parameter tensors as row-major
//   little-endian 32-bit floats, in the fixed order conv1_w, conv1_b,
//   conv2_w, conv2_b, fc_w, fc_b, out_w, out_b.
//
// A JSON sidecar next to the checkpoint records the training provenance.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "linepix/adam.hpp"
#include "linepix/bitgrid.hpp"
#include "linepix/cnn.hpp"
#include "linepix/dataset_io.hpp"

namespace linepix {

constexpr std::uint16_t kCheckpointFormatVersion = 1;

class CheckpointIoError : public std::runtime_error {
public:
    CheckpointIoError(IoError code, const std::string& what)
        : std::runtime_error(what), code_(code) {}
    IoError code() const { return code_; }

private:
    IoError code_;
};

inline std::vector<std::uint8_t> serialize_checkpoint(const ModelParams<float>& params) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + 4 * (params.conv1_w.size() + params.conv1_b.size() + params.conv2_w.size() +
                         params.conv2_b.size() + params.fc_w.size() + params.fc_b.size() +
                         params.out_w.size() + params.out_b.size()));
    for (char m : {'L', 'P', 'X', 'M'}) out.push_back(static_cast<std::uint8_t>(m));
    detail::put_u16(out, kCheckpointFormatVersion);
    detail::put_u16(out, static_cast<std::uint16_t>(params.dim));
    for (const Tensor<float>* t : params.tensors())
        for (float v : t->data) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

inline std::uint64_t write_checkpoint(const ModelParams<float>& params,
                                      const std::filesystem::path& path) {
    auto bytes = serialize_checkpoint(params);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("write_checkpoint: cannot open " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("write_checkpoint: short write");
    }
    std::filesystem::rename(tmp, path);
    return fnv1a64(bytes.data(), bytes.size());
}

inline ModelParams<float> read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_checkpoint: cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    detail::ByteReader r(bytes.data(), bytes.size());
    try {
        auto magic = r.bytes(4);
        if (!(magic[0] == 'L' && magic[1] == 'P' && magic[2] == 'X' && magic[3] == 'M'))
            throw CheckpointIoError(IoError::BadMagic, "checkpoint: bad magic");
        std::uint16_t version = r.u16();
        if (version != kCheckpointFormatVersion)
            throw CheckpointIoError(IoError::VersionMismatch,
                                    "checkpoint: unsupported version " + std::to_string(version));
        int dim = r.u16();
        ModelParams<float> params = zero_params<float>(dim);
        for (Tensor<float>* t : params.tensors())
            for (float& v : t->data) v = std::bit_cast<float>(r.u32());
        if (!r.exhausted())
            throw CheckpointIoError(IoError::Malformed, "checkpoint: trailing bytes");
        return params;
    } catch (const DatasetIoError& e) {
        throw CheckpointIoError(e.code(), std::string("checkpoint: ") + e.what());
    }
}

struct CheckpointMeta {
    TrainConfig config;
    int dim = 0;
    int epochs = 0;
    bool converged = false;
    double final_accuracy = 0.0;
    std::uint64_t dataset_digest = 0;
};

inline nlohmann::json config_to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate}, {"beta1", c.beta1},
            {"beta2", c.beta2},                 {"adam_epsilon", c.adam_epsilon},
            {"dropout_p", c.dropout_p},         {"batch_size", c.batch_size},
            {"max_epochs", c.max_epochs},       {"seed", c.seed}};
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.learning_rate = j.at("learning_rate").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.adam_epsilon = j.at("adam_epsilon").get<double>();
    c.dropout_p = j.at("dropout_p").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.max_epochs = j.at("max_epochs").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

inline void write_checkpoint_sidecar(const CheckpointMeta& meta,
                                     const std::filesystem::path& path) {
    nlohmann::json j{{"format", "lpxm-sidecar/1"},
                     {"dim", meta.dim},
                     {"config", config_to_json(meta.config)},
                     {"epochs", meta.epochs},
                     {"converged", meta.converged},
                     {"final_accuracy", meta.final_accuracy},
                     {"dataset_digest", format_digest(meta.dataset_digest)}};
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw std::runtime_error("write sidecar: cannot open " + tmp.string());
        out << j.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

inline CheckpointMeta read_checkpoint_sidecar(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read sidecar: cannot open " + path.string());
    nlohmann::json j = nlohmann::json::parse(in);
    CheckpointMeta meta;
    meta.config = config_from_json(j.at("config"));
    meta.dim = j.at("dim").get<int>();
    meta.epochs = j.at("epochs").get<int>();
    meta.converged = j.at("converged").get<bool>();
    meta.final_accuracy = j.at("final_accuracy").get<double>();
    meta.dataset_digest = std::stoull(j.at("dataset_digest").get<std::string>(), nullptr, 16);
    return meta;
}

}  // namespace linepix
