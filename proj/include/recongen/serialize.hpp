#pragma once

// Raw tensor files: one text header line, then little-endian float32 data.
// Used for noisy images (which exceed [0,1] and must not be quantized) and
// for checkpoint parameter arrays.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "recongen/tensor.hpp"

namespace recongen {

namespace detail {

inline uint32_t to_le(uint32_t v) {
    if constexpr (std::endian::native == std::endian::little) return v;
    return __builtin_bswap32(v);
}

}  // namespace detail

// Round every element through float32, the precision tensor files carry.
// Generated noisy tensors are snapped once so the in-memory data is
// bit-identical to its persisted form.
inline Tensor snap_to_f32(Tensor t) {
    for (size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(static_cast<float>(t[i]));
    return t;
}

inline void write_tensor_file(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_tensor_file: cannot open " + path.string());
    os << "RGT1";
    for (int i = 0; i < t.ndim(); ++i) os << " " << t.dim(i);
    os << " f32\n";
    std::vector<uint32_t> buf(t.size());
    for (size_t i = 0; i < t.size(); ++i) {
        float f = static_cast<float>(t[i]);
        uint32_t u;
        std::memcpy(&u, &f, 4);
        buf[i] = detail::to_le(u);
    }
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    if (!os) throw std::runtime_error("write_tensor_file: short write to " + path.string());
}

inline Tensor read_tensor_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_tensor_file: cannot open " + path.string());
    std::string header;
    if (!std::getline(is, header)) throw std::runtime_error("read_tensor_file: missing header in " + path.string());
    std::istringstream hs(header);
    std::string magic;
    hs >> magic;
    if (magic != "RGT1") throw std::runtime_error("read_tensor_file: bad magic in " + path.string());
    std::vector<int> shape;
    std::string tok;
    std::string dtype;
    while (hs >> tok) {
        if (tok == "f32") {
            dtype = tok;
            break;
        }
        shape.push_back(std::stoi(tok));
    }
    if (dtype != "f32" || shape.empty()) {
        throw std::runtime_error("read_tensor_file: corrupt header in " + path.string());
    }
    Tensor t(shape);
    std::vector<uint32_t> buf(t.size());
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    if (static_cast<size_t>(is.gcount()) != buf.size() * 4) {
        throw std::runtime_error("read_tensor_file: truncated data in " + path.string());
    }
    for (size_t i = 0; i < t.size(); ++i) {
        uint32_t u = detail::to_le(buf[i]);
        float f;
        std::memcpy(&f, &u, 4);
        t[i] = static_cast<double>(f);
    }
    return t;
}

}  // namespace recongen
