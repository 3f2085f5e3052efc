#include "fmkt/harness/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace fmkt::harness {

namespace {

void write_u32(std::ofstream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ofstream& out, uint64_t v) {
    write_u32(out, static_cast<uint32_t>(v & 0xffffffffULL));
    write_u32(out, static_cast<uint32_t>(v >> 32));
}

void write_f32(std::ofstream& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(out, bits);
}

uint32_t read_u32(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw io_error("truncated checkpoint: " + path);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint64_t read_u64(std::ifstream& in, const std::string& path) {
    uint64_t lo = read_u32(in, path);
    uint64_t hi = read_u32(in, path);
    return lo | (hi << 32);
}

float read_f32(std::ifstream& in, const std::string& path) {
    uint32_t bits = read_u32(in, path);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write checkpoint: " + path);
    out.write("FKTC", 4);
    write_u32(out, static_cast<uint32_t>(ckpt.format_version));
    write_u32(out, static_cast<uint32_t>(ckpt.config_json.size()));
    out.write(ckpt.config_json.data(), static_cast<std::streamsize>(ckpt.config_json.size()));
    write_u32(out, static_cast<uint32_t>(ckpt.epoch));
    write_u64(out, ckpt.rng_state);
    write_u32(out, static_cast<uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        write_u32(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(out, static_cast<uint32_t>(t.shape.size()));
        for (int d : t.shape) write_u32(out, static_cast<uint32_t>(d));
        for (double v : t.data) write_f32(out, static_cast<float>(v));
    }
    if (!out) throw io_error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("checkpoint not found: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "FKTC", 4) != 0) throw io_error("not a checkpoint file: " + path);
    Checkpoint ckpt;
    ckpt.format_version = static_cast<int>(read_u32(in, path));
    if (ckpt.format_version != kCheckpointVersion)
        throw io_error("checkpoint version mismatch in " + path + ": have " +
                       std::to_string(ckpt.format_version) + ", want " +
                       std::to_string(kCheckpointVersion));
    uint32_t cfg_len = read_u32(in, path);
    ckpt.config_json.resize(cfg_len);
    in.read(ckpt.config_json.data(), cfg_len);
    if (!in) throw io_error("truncated checkpoint: " + path);
    ckpt.epoch = static_cast<int>(read_u32(in, path));
    ckpt.rng_state = read_u64(in, path);
    uint32_t count = read_u32(in, path);
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = read_u32(in, path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw io_error("truncated checkpoint: " + path);
        uint32_t rank = read_u32(in, path);
        std::vector<int> shape(rank);
        for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int>(read_u32(in, path));
        Tensor t = Tensor::zeros(shape);
        for (double& v : t.data) v = static_cast<double>(read_f32(in, path));
        ckpt.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ckpt;
}

void assign_parameters(const Checkpoint& ckpt, const std::vector<nn::NamedParam>& params) {
    for (const auto& p : params) {
        const Tensor* t = ckpt.find(p.name);
        if (!t) throw io_error("checkpoint is missing tensor: " + p.name);
        if (t->shape != p.var.value().shape)
            throw io_error("checkpoint tensor shape mismatch for " + p.name);
        autograd::Var handle = p.var;  // shared node; assigning through the copy updates the param
        handle.mutable_value() = *t;
    }
}

void append_parameters(Checkpoint& ckpt, const std::vector<nn::NamedParam>& params) {
    for (const auto& p : params) ckpt.tensors.emplace_back(p.name, p.var.value());
}

}  // namespace fmkt::harness
