#pragma once

// Checkpoints are directories: one raw little-endian float32 file per named
// parameter plus a text manifest recording name, shape, dtype, network config
// and the EMA pairing. EMA shadows live next to the live arrays.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "recongen/nn/networks.hpp"
#include "recongen/serialize.hpp"

namespace recongen::nn {

struct Checkpoint {
    std::string kind;  // recon | eps | controller
    std::map<std::string, std::string> config;
    std::map<std::string, Tensor> params;
    std::map<std::string, Tensor> ema;  // empty when no EMA was saved
    std::map<std::string, Tensor> buffers;

    bool has_ema() const { return !ema.empty(); }

    int config_int(const std::string& key) const { return std::stoi(config.at(key)); }
    std::string config_str(const std::string& key) const { return config.at(key); }
};

namespace detail {

inline std::string file_stem(const std::string& name) {
    std::string s = name;
    for (char& c : s)
        if (c == '.' || c == '/') c = '_';
    return s;
}

inline std::string shape_csv(const Tensor& t) {
    std::string s;
    for (int i = 0; i < t.ndim(); ++i) {
        if (i) s += ",";
        s += std::to_string(t.dim(i));
    }
    return s;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& dir, const std::string& kind,
                            const std::map<std::string, std::string>& config,
                            std::vector<NamedParam> params,
                            const std::map<std::string, Tensor>* ema = nullptr,
                            std::vector<NamedParam> buffers = {}) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.txt");
    if (!manifest) throw std::runtime_error("save_checkpoint: cannot open manifest in " + dir.string());
    manifest << "format = recongen-checkpoint-v1\n";
    manifest << "kind = " << kind << "\n";
    for (const auto& [k, v] : config) manifest << "config." << k << " = " << v << "\n";
    for (const auto& p : params) {
        std::string stem = detail::file_stem(p.name);
        write_tensor_file(dir / (stem + ".rgt"), *p.value);
        std::string ema_file = "-";
        if (ema != nullptr) {
            auto it = ema->find(p.name);
            if (it != ema->end()) {
                ema_file = stem + ".ema.rgt";
                write_tensor_file(dir / ema_file, it->second);
            }
        }
        manifest << "param = " << p.name << " " << detail::shape_csv(*p.value) << " f32 "
                 << stem + ".rgt" << " " << ema_file << "\n";
    }
    for (const auto& b : buffers) {
        std::string stem = detail::file_stem(b.name);
        write_tensor_file(dir / (stem + ".rgt"), *b.value);
        manifest << "buffer = " << b.name << " " << detail::shape_csv(*b.value) << " f32 "
                 << stem + ".rgt" << "\n";
    }
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "manifest.txt");
    if (!manifest) {
        throw std::runtime_error("load_checkpoint: missing manifest in " + dir.string());
    }
    Checkpoint ck;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string key, eq;
        if (!(ls >> key >> eq) || eq != "=") continue;
        if (key == "kind") {
            ls >> ck.kind;
        } else if (key.rfind("config.", 0) == 0) {
            std::string value;
            std::getline(ls, value);
            size_t start = value.find_first_not_of(' ');
            ck.config[key.substr(7)] = start == std::string::npos ? "" : value.substr(start);
        } else if (key == "param") {
            std::string name, shape, dtype, file, ema_file;
            if (!(ls >> name >> shape >> dtype >> file >> ema_file)) {
                throw std::runtime_error("load_checkpoint: corrupt param line: " + line);
            }
            ck.params[name] = read_tensor_file(dir / file);
            if (ema_file != "-") ck.ema[name] = read_tensor_file(dir / ema_file);
        } else if (key == "buffer") {
            std::string name, shape, dtype, file;
            if (!(ls >> name >> shape >> dtype >> file)) {
                throw std::runtime_error("load_checkpoint: corrupt buffer line: " + line);
            }
            ck.buffers[name] = read_tensor_file(dir / file);
        }
    }
    if (ck.kind.empty()) throw std::runtime_error("load_checkpoint: manifest lacks kind in " + dir.string());
    return ck;
}

namespace detail {

inline void fill_params(std::vector<NamedParam> dst, const std::map<std::string, Tensor>& src,
                        const std::string& what) {
    for (auto& p : dst) {
        auto it = src.find(p.name);
        if (it == src.end()) throw std::runtime_error("checkpoint missing " + what + " " + p.name);
        if (!p.value->same_shape(it->second)) {
            throw std::runtime_error("checkpoint shape mismatch for " + p.name);
        }
        *p.value = it->second;
    }
}

}  // namespace detail

// --- network-specific helpers ---------------------------------------------------

inline std::map<std::string, std::string> recon_config_map(const ReconNetConfig& cfg) {
    return {{"channels", std::to_string(cfg.channels)},
            {"depth", std::to_string(cfg.depth)},
            {"base_channels", std::to_string(cfg.base_channels)},
            {"block_kind", to_string(cfg.block_kind)}};
}

inline ReconNetConfig recon_config_from(const Checkpoint& ck) {
    ReconNetConfig cfg;
    cfg.channels = ck.config_int("channels");
    cfg.depth = ck.config_int("depth");
    cfg.base_channels = ck.config_int("base_channels");
    cfg.block_kind = block_kind_from_string(ck.config_str("block_kind"));
    return cfg;
}

// use_ema: load the EMA shadows (evaluation weights) instead of live ones.
inline ReconNet recon_from_checkpoint(const Checkpoint& ck, bool use_ema) {
    if (ck.kind != "recon") throw std::runtime_error("expected recon checkpoint, got " + ck.kind);
    ReconNet net(recon_config_from(ck));
    detail::fill_params(net.named_params(), use_ema && ck.has_ema() ? ck.ema : ck.params, "param");
    return net;
}

inline std::map<std::string, std::string> eps_config_map(const EpsNetConfig& cfg) {
    char scale[64];
    std::snprintf(scale, sizeof scale, "%.17g", cfg.residual_scale);
    return {{"d_channels", std::to_string(cfg.d_channels)},
            {"condition_channels", std::to_string(cfg.condition_channels)},
            {"depth", std::to_string(cfg.depth)},
            {"base_channels", std::to_string(cfg.base_channels)},
            {"gamma_embedding_dim", std::to_string(cfg.gamma_embedding_dim)},
            {"block_kind", to_string(cfg.block_kind)},
            {"residual_scale", scale}};
}

inline EpsNetConfig eps_config_from(const Checkpoint& ck) {
    EpsNetConfig cfg;
    cfg.d_channels = ck.config_int("d_channels");
    cfg.condition_channels = ck.config_int("condition_channels");
    cfg.depth = ck.config_int("depth");
    cfg.base_channels = ck.config_int("base_channels");
    cfg.gamma_embedding_dim = ck.config_int("gamma_embedding_dim");
    cfg.block_kind = block_kind_from_string(ck.config_str("block_kind"));
    if (ck.config.count("residual_scale")) {
        cfg.residual_scale = std::stod(ck.config_str("residual_scale"));
    }
    return cfg;
}

inline EpsNet eps_from_checkpoint(const Checkpoint& ck, bool use_ema) {
    if (ck.kind != "eps") throw std::runtime_error("expected eps checkpoint, got " + ck.kind);
    EpsNet net(eps_config_from(ck));
    detail::fill_params(net.named_params(), use_ema && ck.has_ema() ? ck.ema : ck.params, "param");
    return net;
}

inline std::map<std::string, std::string> controller_config_map(const ControllerNetConfig& cfg) {
    return {{"input_size", std::to_string(cfg.input_size)},
            {"in_ch", std::to_string(cfg.in_ch)},
            {"base_channels", std::to_string(cfg.base_channels)},
            {"num_classes", std::to_string(cfg.num_classes)}};
}

inline ControllerNetConfig controller_config_from(const Checkpoint& ck) {
    ControllerNetConfig cfg;
    cfg.input_size = ck.config_int("input_size");
    cfg.in_ch = ck.config_int("in_ch");
    cfg.base_channels = ck.config_int("base_channels");
    cfg.num_classes = ck.config_int("num_classes");
    return cfg;
}

inline ControllerNet controller_from_checkpoint(const Checkpoint& ck, bool use_ema) {
    if (ck.kind != "controller") throw std::runtime_error("expected controller checkpoint, got " + ck.kind);
    ControllerNet net(controller_config_from(ck));
    detail::fill_params(net.named_params(), use_ema && ck.has_ema() ? ck.ema : ck.params, "param");
    detail::fill_params(net.named_buffers(), ck.buffers, "buffer");
    return net;
}

}  // namespace recongen::nn
