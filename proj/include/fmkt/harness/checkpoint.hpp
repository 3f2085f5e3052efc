#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fmkt/nn.hpp"
#include "fmkt/tensor.hpp"

namespace fmkt::harness {

inline constexpr int kCheckpointVersion = 1;

// Single-file archive: magic "FKTC", u32 version, config JSON snapshot,
// u32 epoch, u64 rng state, then named tensors (name, shape, f32 LE data).
// Parameters live on the f32 grid, so the encoding round-trips bit-exactly.
struct Checkpoint {
    int format_version = kCheckpointVersion;
    std::string config_json;
    int epoch = 0;
    uint64_t rng_state = 0;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint tensors into an already-built parameter set; every
// parameter must be present with a matching shape.
void assign_parameters(const Checkpoint& ckpt, const std::vector<nn::NamedParam>& params);

void append_parameters(Checkpoint& ckpt, const std::vector<nn::NamedParam>& params);

}  // namespace fmkt::harness
