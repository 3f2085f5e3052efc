#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <vector>

#include "fmkt/nn.hpp"

namespace fmkt::encoders {

using autograd::Var;

enum class Arch { mlp, cnn, attention };
// Batch-statistics normalization is structurally unrepresentable here; the
// parser rejects "batch_norm" outright (BatchNorm collapses multi-step
// inference because inputs differ across time points).
enum class Norm { group_norm, layer_norm, none };

Arch parse_arch(const std::string& s);
Norm parse_norm(const std::string& s);
std::string to_string(Arch a);
std::string to_string(Norm n);

struct EncoderSpec {
    Arch arch = Arch::mlp;
    int depth = 2;   // block count; MLP logit recipe uses 2, feature recipe 1
    int width = 64;  // hidden dim (mlp/attention ffn) or conv channels
    int heads = 4;
    Norm norm = Norm::group_norm;
};

// Learned affine embedding of the scalar time: e = t*w + b, one row per sample.
class TimeEmbed : public nn::Module {
public:
    TimeEmbed() = default;
    TimeEmbed(int dim, Rng& rng);
    Var forward(const std::vector<double>& t) const { return autograd::affine_time(t, w, b); }
    void collect(const std::string& prefix, std::vector<nn::NamedParam>& out) const override;
    Var w, b;
    int dim = 0;
};

Var time_embed(const TimeEmbed& embed, const std::vector<double>& t);

// Velocity estimator g(Z_t, t). The time embedding is added to the state
// before the core network runs. Forward invocations are counted so tests can
// assert the zero-overhead inference contract.
class MetaEncoder {
public:
    virtual ~MetaEncoder() = default;

    Var operator()(const Var& z, const std::vector<double>& t) {
        forward_calls_.fetch_add(1, std::memory_order_relaxed);
        return forward(z, t);
    }
    virtual bool uses_batch_statistics() const { return false; }
    virtual void collect(const std::string& /*prefix*/, std::vector<nn::NamedParam>& /*out*/) const {}
    std::vector<nn::NamedParam> named_parameters(const std::string& prefix = "") const {
        std::vector<nn::NamedParam> out;
        collect(prefix, out);
        return out;
    }
    std::vector<Var> parameters() const {
        std::vector<Var> out;
        for (auto& p : named_parameters()) out.push_back(p.var);
        return out;
    }
    long forward_calls() const { return forward_calls_.load(std::memory_order_relaxed); }
    void reset_forward_calls() { forward_calls_.store(0, std::memory_order_relaxed); }

protected:
    virtual Var forward(const Var& z, const std::vector<double>& t) = 0;

private:
    std::atomic<long> forward_calls_{0};
};

// input_shape excludes the batch dimension: [D] for mlp, [C,H,W] for
// cnn/attention. Output shape always equals input shape.
std::unique_ptr<MetaEncoder> build_encoder(const EncoderSpec& spec, const std::vector<int>& input_shape,
                                           Rng& rng);

// Shape transform T mapping flow states to the comparison space.
enum class TransformMode { identity, conv_projection, pool_linear };

TransformMode parse_transform_mode(const std::string& s);

class ShapeTransform : public nn::Module {
public:
    ShapeTransform() = default;

    static ShapeTransform identity();
    // aligns channels: 1x1 conv for spatial features, affine map for flat ones
    static ShapeTransform conv_projection(int in_dim, int out_dim, bool spatial, Rng& rng);
    // global average pool over spatial dims then affine map to output_dim;
    // this is the classification layer for logit-based distillation
    static ShapeTransform pool_linear(int in_channels, int output_dim, Rng& rng);

    Var apply(const Var& x) const;
    void collect(const std::string& prefix, std::vector<nn::NamedParam>& out) const override;

    TransformMode mode = TransformMode::identity;
    int output_dim = 0;
    bool spatial = false;
    nn::Conv2d conv;
    nn::Linear lin;
};

Var apply_transform(const ShapeTransform& t, const Var& x);

}  // namespace fmkt::encoders
