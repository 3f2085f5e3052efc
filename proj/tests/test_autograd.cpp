#include <doctest.h>

#include "fmkt/autograd.hpp"
#include "test_util.hpp"

using namespace fmkt;
using namespace fmkt_test;
namespace ag = fmkt::autograd;

namespace {

// runs loss_fn twice: once returning value (no backward), once with backward
void check_op(const std::function<ag::Var()>& loss_fn, std::vector<ag::Var> leaves,
              double tol = 5e-6) {
    auto forward_only = [&] { return loss_fn().value().item(); };
    auto forward_backward = [&] {
        ag::Var loss = loss_fn();
        ag::backward(loss);
        return loss.value().item();
    };
    gradcheck(forward_backward, forward_only, std::move(leaves), 1e-6, tol);
}

}  // namespace

TEST_CASE("elementwise ops and reductions differentiate correctly") {
    Rng rng(42);
    ag::Var a(random_tensor({3, 4}, rng), true);
    ag::Var b(random_tensor({3, 4}, rng), true);
    check_op([&] { return ag::sum_all(ag::mul(ag::add(a, b), ag::sub(a, b))); }, {a, b});
    check_op([&] { return ag::mean_all(ag::mul(a, a)); }, {a});
    check_op([&] { return ag::sum_all(ag::mul_scalar(ag::add_scalar(a, 0.7), -1.3)); }, {a});
    check_op([&] { return ag::sum_all(ag::silu(a)); }, {a});
    check_op([&] { return ag::sum_all(ag::relu(ag::add_scalar(a, 0.05))); }, {a});
    check_op([&] { return ag::sum_all(ag::sqrt_v(ag::add_scalar(ag::mul(a, a), 0.5))); }, {a});
    check_op([&] { return ag::sum_all(ag::log_v(ag::add_scalar(ag::mul(a, a), 0.5))); }, {a});
}

TEST_CASE("linear layer matches finite differences") {
    Rng rng(7);
    ag::Var x(random_tensor({4, 5}, rng), true);
    ag::Var w(random_tensor({3, 5}, rng), true);
    ag::Var b(random_tensor({3}, rng), true);
    check_op([&] { return ag::mean_all(ag::mul(ag::linear(x, w, b), ag::linear(x, w, b))); },
             {x, w, b});
}

TEST_CASE("conv2d 3x3 and 1x1 match finite differences") {
    Rng rng(11);
    ag::Var x(random_tensor({2, 3, 4, 4}, rng), true);
    ag::Var w3(random_tensor({2, 3, 3, 3}, rng), true);
    ag::Var b3(random_tensor({2}, rng), true);
    check_op([&] { return ag::mean_all(ag::silu(ag::conv2d(x, w3, b3, 1))); }, {x, w3, b3});
    ag::Var w1(random_tensor({4, 3, 1, 1}, rng), true);
    ag::Var b1(random_tensor({4}, rng), true);
    check_op([&] { return ag::mean_all(ag::mul(ag::conv2d(x, w1, b1, 0), ag::conv2d(x, w1, b1, 0))); },
             {x, w1, b1});
}

TEST_CASE("softmax family matches finite differences") {
    Rng rng(13);
    ag::Var x(random_tensor({3, 5}, rng), true);
    ag::Var q(random_tensor({3, 5}, rng), true);
    check_op([&] { return ag::sum_all(ag::mul(ag::softmax_rows(x), q)); }, {x, q});
    check_op([&] { return ag::sum_all(ag::mul(ag::log_softmax_rows(x), q)); }, {x, q});
    std::vector<int> labels = {1, 0, 4};
    check_op([&] { return ag::cross_entropy(x, labels); }, {x});
    check_op([&] { return ag::sum_all(ag::mul(ag::select_class(x, labels), ag::select_class(q, labels))); },
             {x, q});
}

TEST_CASE("normalization ops match finite differences") {
    Rng rng(17);
    ag::Var x(random_tensor({2, 4, 3, 3}, rng), true);
    ag::Var gamma(random_tensor({4}, rng), true);
    ag::Var beta(random_tensor({4}, rng), true);
    ag::Var probe(random_tensor({2, 4, 3, 3}, rng), true);
    check_op([&] { return ag::sum_all(ag::mul(ag::group_norm(x, gamma, beta, 2, 1e-5), probe)); },
             {x, gamma, beta}, 2e-5);
    check_op([&] { return ag::sum_all(ag::mul(ag::layer_norm_channels(x, gamma, beta, 1e-5), probe)); },
             {x, gamma, beta}, 2e-5);
    check_op([&] { return ag::sum_all(ag::mul(ag::standardize_per_channel(x, 1e-6), probe)); }, {x},
             2e-5);
}

TEST_CASE("pearson means match finite differences and self-correlation is 1") {
    Rng rng(19);
    ag::Var u(random_tensor({4, 6}, rng), true);
    ag::Var v(random_tensor({4, 6}, rng), true);
    check_op([&] { return ag::pearson_mean_rows(u, v, 1e-12); }, {u, v}, 2e-5);
    check_op([&] { return ag::pearson_mean_cols(u, v, 1e-12); }, {u, v}, 2e-5);
    CHECK(ag::pearson_mean_rows(u, u, 1e-12).value().item() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(ag::pearson_mean_cols(u, u, 1e-12).value().item() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("time embedding, channel bias, pooling differentiate correctly") {
    Rng rng(23);
    std::vector<double> t = {0.25, 0.5, 1.0};
    ag::Var w(random_tensor({4}, rng), true);
    ag::Var b(random_tensor({4}, rng), true);
    ag::Var probe(random_tensor({3, 4}, rng), true);
    check_op([&] { return ag::sum_all(ag::mul(ag::affine_time(t, w, b), probe)); }, {w, b});

    ag::Var x(random_tensor({3, 4, 2, 2}, rng), true);
    ag::Var e(random_tensor({3, 4}, rng), true);
    check_op([&] { return ag::mean_all(ag::mul(ag::add_channel_bias(x, e), ag::add_channel_bias(x, e))); },
             {x, e});
    check_op([&] { return ag::sum_all(ag::mul(ag::global_avg_pool(x), e)); }, {x});
}

TEST_CASE("full attention matches finite differences") {
    Rng rng(29);
    int C = 4, H = 2, W = 2, heads = 2, T = H * W;
    ag::Var x(random_tensor({2, C, H, W}, rng), true);
    ag::Var wq(random_tensor({C, C}, rng, 0.5), true), bq(random_tensor({C}, rng, 0.1), true);
    ag::Var wk(random_tensor({C, C}, rng, 0.5), true), bk(random_tensor({C}, rng, 0.1), true);
    ag::Var wv(random_tensor({C, C}, rng, 0.5), true), bv(random_tensor({C}, rng, 0.1), true);
    ag::Var wo(random_tensor({C, C}, rng, 0.5), true), bo(random_tensor({C}, rng, 0.1), true);
    ag::Var pos(random_tensor({heads, T, T}, rng, 0.2), true);
    ag::Var probe(random_tensor({2, C, H, W}, rng), true);
    check_op(
        [&] {
            return ag::sum_all(ag::mul(
                ag::attention_full(x, wq, bq, wk, bk, wv, bv, wo, bo, pos, heads), probe));
        },
        {x, wq, bq, wk, bk, wv, bv, wo, bo, pos}, 5e-5);
}

TEST_CASE("backward accumulates through shared nodes and detach blocks gradients") {
    ag::Var x(Tensor::scalar(3.0), true);
    ag::Var y = ag::mul(x, x);  // x^2
    ag::Var z = ag::add(y, ag::mul_scalar(x, 2.0));
    ag::backward(z);
    CHECK(x.grad().item() == doctest::Approx(8.0));  // 2x + 2

    ag::Var a(Tensor::scalar(2.0), true);
    ag::Var blocked = ag::mul(ag::detach(ag::mul(a, a)), a);  // const(4) * a
    ag::backward(blocked);
    CHECK(a.grad().item() == doctest::Approx(4.0));
}

TEST_CASE("NoGradGuard suppresses graph construction") {
    ag::Var x(Tensor::scalar(3.0), true);
    ag::NoGradGuard guard;
    ag::Var y = ag::mul(x, x);
    CHECK_FALSE(y.requires_grad());
}
