#include "fmkt/encoders.hpp"

#include <algorithm>

namespace fmkt::encoders {

Arch parse_arch(const std::string& s) {
    if (s == "mlp") return Arch::mlp;
    if (s == "cnn") return Arch::cnn;
    if (s == "attention") return Arch::attention;
    throw config_error("unknown encoder arch: " + s);
}

Norm parse_norm(const std::string& s) {
    if (s == "group_norm") return Norm::group_norm;
    if (s == "layer_norm") return Norm::layer_norm;
    if (s == "none") return Norm::none;
    if (s == "batch_norm")
        throw config_error("batch_norm is forbidden in meta-encoders (batch statistics break "
                           "multi-step inference); use group_norm or layer_norm");
    throw config_error("unknown norm: " + s);
}

std::string to_string(Arch a) {
    switch (a) {
        case Arch::mlp: return "mlp";
        case Arch::cnn: return "cnn";
        case Arch::attention: return "attention";
    }
    return "?";
}

std::string to_string(Norm n) {
    switch (n) {
        case Norm::group_norm: return "group_norm";
        case Norm::layer_norm: return "layer_norm";
        case Norm::none: return "none";
    }
    return "?";
}

TimeEmbed::TimeEmbed(int dim_, Rng& rng) : dim(dim_) {
    w = nn::init_weight({dim_}, 1, rng);
    b = nn::init_zeros({dim_});
}

void TimeEmbed::collect(const std::string& prefix, std::vector<nn::NamedParam>& out) const {
    out.push_back({prefix + "time_w", w});
    out.push_back({prefix + "time_b", b});
}

Var time_embed(const TimeEmbed& embed, const std::vector<double>& t) { return embed.forward(t); }

namespace {

// two (or `depth`) chained [Linear-ReLU-Linear] blocks over flat features
class MlpEncoder : public MetaEncoder {
public:
    MlpEncoder(const EncoderSpec& spec, int dim, Rng& rng) : embed_(dim, rng) {
        for (int d = 0; d < spec.depth; ++d) {
            fc1_.emplace_back(dim, spec.width, rng);
            fc2_.emplace_back(spec.width, dim, rng);
        }
    }
    void collect(const std::string& prefix, std::vector<nn::NamedParam>& out) const override {
        embed_.collect(prefix, out);
        for (size_t d = 0; d < fc1_.size(); ++d) {
            fc1_[d].collect(prefix + "block" + std::to_string(d) + ".fc1.", out);
            fc2_[d].collect(prefix + "block" + std::to_string(d) + ".fc2.", out);
        }
    }

protected:
    Var forward(const Var& z, const std::vector<double>& t) override {
        Var h = autograd::add(z, embed_.forward(t));
        for (size_t d = 0; d < fc1_.size(); ++d)
            h = fc2_[d].forward(autograd::relu(fc1_[d].forward(h)));
        return h;
    }

private:
    TimeEmbed embed_;
    std::vector<nn::Linear> fc1_, fc2_;
};

// [SiLU-Conv3x3-GroupNorm-SiLU-Conv1x1] blocks, channel-preserving
class CnnEncoder : public MetaEncoder {
public:
    CnnEncoder(const EncoderSpec& spec, int channels, Rng& rng)
        : norm_kind_(spec.norm), embed_(channels, rng) {
        for (int d = 0; d < spec.depth; ++d) {
            conv1_.emplace_back(channels, spec.width, 3, 1, rng);
            conv2_.emplace_back(spec.width, channels, 1, 0, rng);
            if (spec.norm == Norm::group_norm)
                gn_.emplace_back(spec.width, std::min(8, spec.width));
            else if (spec.norm == Norm::layer_norm)
                ln_.emplace_back(spec.width);
        }
    }
    void collect(const std::string& prefix, std::vector<nn::NamedParam>& out) const override {
        embed_.collect(prefix, out);
        for (size_t d = 0; d < conv1_.size(); ++d) {
            std::string bp = prefix + "block" + std::to_string(d) + ".";
            conv1_[d].collect(bp + "conv1.", out);
            conv2_[d].collect(bp + "conv2.", out);
            if (norm_kind_ == Norm::group_norm) gn_[d].collect(bp + "gn.", out);
            if (norm_kind_ == Norm::layer_norm) ln_[d].collect(bp + "ln.", out);
        }
    }

protected:
    Var forward(const Var& z, const std::vector<double>& t) override {
        Var h = autograd::add_channel_bias(z, embed_.forward(t));
        for (size_t d = 0; d < conv1_.size(); ++d) {
            h = conv1_[d].forward(autograd::silu(h));
            if (norm_kind_ == Norm::group_norm) h = gn_[d].forward(h);
            if (norm_kind_ == Norm::layer_norm) h = ln_[d].forward(h);
            h = conv2_[d].forward(autograd::silu(h));
        }
        return h;
    }

private:
    Norm norm_kind_;
    TimeEmbed embed_;
    std::vector<nn::Conv2d> conv1_, conv2_;
    std::vector<nn::GroupNorm> gn_;
    std::vector<nn::LayerNorm> ln_;
};

// [Attention-Linear-ReLU-Linear] over spatial tokens. Full attention with a
// learned additive position bias stands in for the shifted-window variant at
// desk-scale feature maps.
class AttentionEncoder : public MetaEncoder {
public:
    AttentionEncoder(const EncoderSpec& spec, int channels, int h, int w, Rng& rng)
        : norm_kind_(spec.norm), heads_(spec.heads), embed_(channels, rng) {
        int tokens = h * w;
        for (int d = 0; d < spec.depth; ++d) {
            Block blk;
            blk.wq = nn::init_weight({channels, channels}, channels, rng);
            blk.bq = nn::init_zeros({channels});
            blk.wk = nn::init_weight({channels, channels}, channels, rng);
            blk.bk = nn::init_zeros({channels});
            blk.wv = nn::init_weight({channels, channels}, channels, rng);
            blk.bv = nn::init_zeros({channels});
            blk.wo = nn::init_weight({channels, channels}, channels, rng);
            blk.bo = nn::init_zeros({channels});
            blk.pos = nn::init_zeros({spec.heads, tokens, tokens});
            blk.fc1 = nn::Conv2d(channels, spec.width, 1, 0, rng);
            blk.fc2 = nn::Conv2d(spec.width, channels, 1, 0, rng);
            if (spec.norm != Norm::none) blk.ln = nn::LayerNorm(channels);
            blocks_.push_back(std::move(blk));
        }
    }
    void collect(const std::string& prefix, std::vector<nn::NamedParam>& out) const override {
        embed_.collect(prefix, out);
        for (size_t d = 0; d < blocks_.size(); ++d) {
            std::string bp = prefix + "block" + std::to_string(d) + ".";
            const Block& blk = blocks_[d];
            out.push_back({bp + "wq", blk.wq});
            out.push_back({bp + "bq", blk.bq});
            out.push_back({bp + "wk", blk.wk});
            out.push_back({bp + "bk", blk.bk});
            out.push_back({bp + "wv", blk.wv});
            out.push_back({bp + "bv", blk.bv});
            out.push_back({bp + "wo", blk.wo});
            out.push_back({bp + "bo", blk.bo});
            out.push_back({bp + "pos", blk.pos});
            blk.fc1.collect(bp + "fc1.", out);
            blk.fc2.collect(bp + "fc2.", out);
            if (norm_kind_ != Norm::none) blk.ln.collect(bp + "ln.", out);
        }
    }

protected:
    Var forward(const Var& z, const std::vector<double>& t) override {
        Var h = autograd::add_channel_bias(z, embed_.forward(t));
        for (const Block& blk : blocks_) {
            Var a = h;
            if (norm_kind_ != Norm::none) a = blk.ln.forward(a);
            a = autograd::attention_full(a, blk.wq, blk.bq, blk.wk, blk.bk, blk.wv, blk.bv,
                                         blk.wo, blk.bo, blk.pos, heads_);
            h = blk.fc2.forward(autograd::relu(blk.fc1.forward(a)));
        }
        return h;
    }

private:
    struct Block {
        Var wq, bq, wk, bk, wv, bv, wo, bo, pos;
        nn::Conv2d fc1, fc2;
        nn::LayerNorm ln;
    };
    Norm norm_kind_;
    int heads_;
    TimeEmbed embed_;
    std::vector<Block> blocks_;
};

}  // namespace

std::unique_ptr<MetaEncoder> build_encoder(const EncoderSpec& spec, const std::vector<int>& input_shape,
                                           Rng& rng) {
    if (spec.depth <= 0 || spec.width <= 0) throw config_error("encoder depth/width must be positive");
    switch (spec.arch) {
        case Arch::mlp: {
            if (input_shape.size() != 1)
                throw config_error("mlp encoder wants flat input [D]; flatten spatial features first");
            return std::make_unique<MlpEncoder>(spec, input_shape[0], rng);
        }
        case Arch::cnn: {
            if (input_shape.size() != 3)
                throw config_error("cnn encoder wants spatial input [C,H,W]");
            return std::make_unique<CnnEncoder>(spec, input_shape[0], rng);
        }
        case Arch::attention: {
            if (input_shape.size() != 3)
                throw config_error("attention encoder wants spatial input [C,H,W]");
            if (spec.heads <= 0 || input_shape[0] % spec.heads != 0)
                throw config_error("attention heads must divide channels");
            return std::make_unique<AttentionEncoder>(spec, input_shape[0], input_shape[1],
                                                      input_shape[2], rng);
        }
    }
    throw config_error("unreachable encoder arch");
}

TransformMode parse_transform_mode(const std::string& s) {
    if (s == "identity") return TransformMode::identity;
    if (s == "conv_projection") return TransformMode::conv_projection;
    if (s == "pool_linear") return TransformMode::pool_linear;
    throw config_error("unknown transform mode: " + s);
}

ShapeTransform ShapeTransform::identity() {
    ShapeTransform t;
    t.mode = TransformMode::identity;
    return t;
}

ShapeTransform ShapeTransform::conv_projection(int in_dim, int out_dim, bool spatial, Rng& rng) {
    ShapeTransform t;
    t.mode = TransformMode::conv_projection;
    t.output_dim = out_dim;
    t.spatial = spatial;
    if (spatial)
        t.conv = nn::Conv2d(in_dim, out_dim, 1, 0, rng);
    else
        t.lin = nn::Linear(in_dim, out_dim, rng);
    return t;
}

ShapeTransform ShapeTransform::pool_linear(int in_channels, int output_dim, Rng& rng) {
    ShapeTransform t;
    t.mode = TransformMode::pool_linear;
    t.output_dim = output_dim;
    t.lin = nn::Linear(in_channels, output_dim, rng);
    return t;
}

Var ShapeTransform::apply(const Var& x) const {
    switch (mode) {
        case TransformMode::identity: return x;
        case TransformMode::conv_projection:
            if (x.value().rank() == 4) {
                if (!spatial) throw shape_error("conv_projection built for flat input, got spatial");
                return conv.forward(x);
            }
            if (spatial) throw shape_error("conv_projection built for spatial input, got flat");
            return lin.forward(x);
        case TransformMode::pool_linear: return lin.forward(autograd::global_avg_pool(x));
    }
    throw config_error("unreachable transform mode");
}

void ShapeTransform::collect(const std::string& prefix, std::vector<nn::NamedParam>& out) const {
    if (mode == TransformMode::conv_projection) {
        if (spatial)
            conv.collect(prefix + "conv.", out);
        else
            lin.collect(prefix + "lin.", out);
    } else if (mode == TransformMode::pool_linear) {
        lin.collect(prefix + "lin.", out);
    }
}

Var apply_transform(const ShapeTransform& t, const Var& x) { return t.apply(x); }

}  // namespace fmkt::encoders
