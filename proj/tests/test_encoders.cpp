#include <doctest.h>

#include "fmkt/encoders.hpp"
#include "test_util.hpp"

using namespace fmkt;
using namespace fmkt_test;
using namespace fmkt::encoders;
namespace ag = fmkt::autograd;

namespace {

std::vector<double> times(int b, double t) { return std::vector<double>(static_cast<size_t>(b), t); }

}  // namespace

TEST_CASE("mlp encoder: depth 2 builds two [Linear-ReLU-Linear] blocks, shape preserved") {
    Rng rng(1);
    EncoderSpec spec;
    spec.arch = Arch::mlp;
    spec.depth = 2;
    spec.width = 32;
    auto enc = build_encoder(spec, {100}, rng);
    auto params = enc->named_parameters();
    int affine_layers = 0;
    for (auto& p : params)
        if (p.name.find(".fc") != std::string::npos && p.name.back() == 'w') ++affine_layers;
    CHECK(affine_layers == 4);  // two blocks of two affine maps each
    Rng drng(2);
    ag::Var z(random_tensor({3, 100}, drng));
    ag::Var v = (*enc)(z, times(3, 0.5));
    CHECK(v.value().shape == std::vector<int>({3, 100}));
}

TEST_CASE("cnn encoder: 3x3 then 1x1 kernels, output shape equals input shape") {
    Rng rng(3);
    EncoderSpec spec;
    spec.arch = Arch::cnn;
    spec.depth = 1;
    spec.width = 12;
    spec.norm = Norm::group_norm;
    auto enc = build_encoder(spec, {16, 8, 8}, rng);
    bool saw3 = false, saw1 = false;
    for (auto& p : enc->named_parameters()) {
        if (p.name == "block0.conv1.w") {
            CHECK(p.var.value().shape == std::vector<int>({12, 16, 3, 3}));
            saw3 = true;
        }
        if (p.name == "block0.conv2.w") {
            CHECK(p.var.value().shape == std::vector<int>({16, 12, 1, 1}));
            saw1 = true;
        }
    }
    CHECK(saw3);
    CHECK(saw1);
    Rng drng(4);
    ag::Var z(random_tensor({2, 16, 8, 8}, drng));
    CHECK((*enc)(z, times(2, 0.25)).value().shape == std::vector<int>({2, 16, 8, 8}));
}

TEST_CASE("attention encoder preserves shape and needs heads dividing channels") {
    Rng rng(5);
    EncoderSpec spec;
    spec.arch = Arch::attention;
    spec.depth = 1;
    spec.width = 16;
    spec.heads = 4;
    spec.norm = Norm::layer_norm;
    auto enc = build_encoder(spec, {8, 4, 4}, rng);
    Rng drng(6);
    ag::Var z(random_tensor({2, 8, 4, 4}, drng));
    CHECK((*enc)(z, times(2, 1.0)).value().shape == std::vector<int>({2, 8, 4, 4}));

    spec.heads = 3;
    Rng rng2(7);
    CHECK_THROWS_AS(build_encoder(spec, {8, 4, 4}, rng2), config_error);
}

TEST_CASE("batch-statistics normalization is structurally rejected") {
    CHECK_THROWS_AS(parse_norm("batch_norm"), config_error);
    CHECK_THROWS_AS(parse_norm("sync_batch_norm"), config_error);
}

TEST_CASE("shape/arch mismatches are configuration errors") {
    Rng rng(9);
    EncoderSpec mlp_spec;
    mlp_spec.arch = Arch::mlp;
    CHECK_THROWS_AS(build_encoder(mlp_spec, {8, 4, 4}, rng), config_error);
    EncoderSpec cnn_spec;
    cnn_spec.arch = Arch::cnn;
    CHECK_THROWS_AS(build_encoder(cnn_spec, {64}, rng), config_error);
}

TEST_CASE("time embedding: zero bias at t=0, distinct embeddings after a training step") {
    Rng rng(11);
    TimeEmbed embed(6, rng);
    Tensor e0 = embed.forward({0.0}).value();
    for (double v : e0.data) CHECK(v == 0.0);  // bias is zero-initialized

    // one SGD step on a synthetic objective moves the bias off zero
    std::vector<nn::NamedParam> named;
    embed.collect("", named);
    std::vector<ag::Var> params;
    for (auto& p : named) params.push_back(p.var);
    nn::Sgd opt(params, 0.1, 0.0);
    ag::Var target(Tensor({2, 6}, std::vector<double>(12, 1.0)));
    ag::Var diff = ag::sub(embed.forward({0.3, 0.9}), target);
    ag::Var loss = ag::mean_all(ag::mul(diff, diff));
    ag::backward(loss);
    opt.step();

    Tensor a = embed.forward({0.25}).value();
    Tensor b = embed.forward({0.75}).value();
    CHECK(t_max_abs_diff(a, b) > 1e-8);

    // row i of a batched embedding depends only on t_i
    Tensor batch = embed.forward({0.25, 0.75}).value();
    for (int j = 0; j < 6; ++j) {
        CHECK(batch.data[static_cast<size_t>(j)] == a.data[static_cast<size_t>(j)]);
        CHECK(batch.data[6 + static_cast<size_t>(j)] == b.data[static_cast<size_t>(j)]);
    }
}

TEST_CASE("builds are deterministic under a fixed seed") {
    EncoderSpec spec;
    spec.arch = Arch::mlp;
    spec.depth = 2;
    spec.width = 16;
    Rng a(123), b(123);
    auto ea = build_encoder(spec, {10}, a);
    auto eb = build_encoder(spec, {10}, b);
    auto pa = ea->named_parameters(), pb = eb->named_parameters();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].name == pb[i].name);
        CHECK(t_bit_equal(pa[i].var.value(), pb[i].var.value()));
    }
}

TEST_CASE("no batch coupling: replacing other rows leaves a sample's velocity unchanged") {
    Rng rng(13);
    for (Arch arch : {Arch::mlp, Arch::cnn, Arch::attention}) {
        EncoderSpec spec;
        spec.arch = arch;
        spec.depth = 1;
        spec.width = 8;
        spec.heads = 2;
        spec.norm = arch == Arch::cnn ? Norm::group_norm : Norm::layer_norm;
        std::vector<int> shape = arch == Arch::mlp ? std::vector<int>{6} : std::vector<int>{4, 3, 3};
        Rng build_rng(100 + static_cast<int>(arch));
        auto enc = build_encoder(spec, shape, build_rng);

        std::vector<int> batch_shape = {3};
        batch_shape.insert(batch_shape.end(), shape.begin(), shape.end());
        Tensor x1 = random_tensor(batch_shape, rng);
        Tensor x2 = x1;
        // perturb rows 1..2, keep row 0
        size_t row = static_cast<size_t>(x1.size() / 3);
        for (size_t i = row; i < x2.data.size(); ++i) x2.data[i] += 1.0 + 0.1 * (i % 5);

        Tensor v1 = (*enc)(ag::Var(x1), times(3, 0.5)).value();
        Tensor v2 = (*enc)(ag::Var(x2), times(3, 0.5)).value();
        for (size_t k = 0; k < row; ++k) CHECK(v1.data[k] == v2.data[k]);
    }
}

TEST_CASE("shape transforms") {
    Rng rng(17);
    ag::Var flat(random_tensor({3, 16}, rng));
    ag::Var spatial(random_tensor({2, 16, 8, 8}, rng));

    ShapeTransform id = ShapeTransform::identity();
    CHECK(t_bit_equal(apply_transform(id, flat).value(), flat.value()));

    ShapeTransform proj = ShapeTransform::conv_projection(16, 32, /*spatial=*/true, rng);
    CHECK(apply_transform(proj, spatial).value().shape == std::vector<int>({2, 32, 8, 8}));

    ShapeTransform pl = ShapeTransform::pool_linear(16, 4, rng);
    CHECK(apply_transform(pl, spatial).value().shape == std::vector<int>({2, 4}));
    CHECK(apply_transform(pl, flat).value().shape == std::vector<int>({3, 4}));

    // zero weights leave only the bias
    ShapeTransform zero = ShapeTransform::pool_linear(16, 4, rng);
    ag::Var w = zero.lin.w;
    for (double& v : w.mutable_value().data) v = 0.0;
    ag::Var b = zero.lin.b;
    for (size_t i = 0; i < b.value().data.size(); ++i)
        b.mutable_value().data[i] = 0.5 * static_cast<double>(i + 1);
    Tensor out = apply_transform(zero, ag::Var(Tensor::full({2, 16}, 7.0))).value();
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 4; ++c)
            CHECK(out.data[static_cast<size_t>(r) * 4 + c] == doctest::Approx(0.5 * (c + 1)));
}

TEST_CASE("forward-call instrumentation counts invocations") {
    Rng rng(19);
    EncoderSpec spec;
    spec.arch = Arch::mlp;
    spec.depth = 1;
    spec.width = 4;
    auto enc = build_encoder(spec, {5}, rng);
    CHECK(enc->forward_calls() == 0);
    Rng drng(20);
    ag::Var z(random_tensor({2, 5}, drng));
    (*enc)(z, times(2, 0.5));
    (*enc)(z, times(2, 1.0));
    CHECK(enc->forward_calls() == 2);
    enc->reset_forward_calls();
    CHECK(enc->forward_calls() == 0);
}
