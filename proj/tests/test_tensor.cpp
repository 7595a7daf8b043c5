#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "vlogdesk/checkpoint.hpp"
#include "vlogdesk/errors.hpp"
#include "vlogdesk/optim.hpp"
#include "vlogdesk/tensor.hpp"

using namespace vlogdesk;

namespace {

// Builds a scalar probe from an op output: mean(out * random_constant), so
// the cotangent reaching the op is nondegenerate.
Tensor probe(const Tensor& out, uint64_t seed) {
    Rng rng(seed);
    Tensor w = Tensor::uniform(out.shape(), rng, 0.5, 1.5);
    return mean(mul(out, w));
}

void check_op_gradients(const char* label,
                        const std::function<Tensor(std::vector<Tensor>&)>& op,
                        const std::function<std::vector<Tensor>(Rng&)>& make_inputs,
                        int points = 10, double tol = 1e-4) {
    for (int p = 0; p < points; ++p) {
        Rng rng(1000 + 77 * p);
        std::vector<Tensor> inputs = make_inputs(rng);
        auto fn = [&]() { return probe(op(inputs), 42 + p); };
        GradcheckReport rep = gradcheck(fn, inputs, 1e-5);
        INFO(label << " point " << p << " worst " << rep.worst);
        CHECK(rep.max_rel_err < tol);
    }
}

}  // namespace

TEST_CASE("matmul identity") {
    Rng rng(7);
    Tensor a = Tensor::randn({2, 2}, rng);
    Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor out = matmul(eye, a);
    for (int i = 0; i < 4; ++i) CHECK(out.data()[i] == doctest::Approx(a.data()[i]).epsilon(1e-12));
}

TEST_CASE("softmax symmetry") {
    Tensor x = Tensor::zeros({4});
    Tensor y = softmax(x);
    for (int i = 0; i < 4; ++i) CHECK(y.data()[i] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("conv1d identity kernel reproduces the signal") {
    Rng rng(3);
    Tensor s = Tensor::randn({1, 1, 9}, rng);
    Tensor k = Tensor::from_data({1, 1, 3}, {0, 1, 0});
    Tensor out = conv1d(s, k, Tensor(), 1, 1);
    REQUIRE(out.shape() == std::vector<int>{1, 1, 9});
    for (int i = 0; i < 9; ++i) CHECK(out.data()[i] == s.data()[i]);
}

TEST_CASE("backward basics") {
    SUBCASE("f(x)=x^2 at 3") {
        Tensor x = Tensor::param({1}, {3.0}, "x");
        Tensor loss = square(x);
        backward(loss);
        CHECK(x.grad()[0] == doctest::Approx(6.0));
    }
    SUBCASE("f(x,y)=x*y") {
        Tensor x = Tensor::param({1}, {2.0}, "x");
        Tensor y = Tensor::param({1}, {5.0}, "y");
        backward(mul(x, y));
        CHECK(x.grad()[0] == doctest::Approx(5.0));
        CHECK(y.grad()[0] == doctest::Approx(2.0));
    }
    SUBCASE("non-scalar loss rejected") {
        Tensor x = Tensor::param({2}, {1.0, 2.0}, "x");
        CHECK_THROWS_AS(backward(square(x)), Error);
    }
    SUBCASE("leaf used twice accumulates") {
        Tensor x = Tensor::param({1}, {3.0}, "x");
        backward(add(square(x), mul_scalar(x, 2.0)));  // d/dx (x^2 + 2x) = 2x+2
        CHECK(x.grad()[0] == doctest::Approx(8.0));
    }
}

TEST_CASE("gradcheck of sum of squares is tiny") {
    Tensor x = Tensor::param({3}, {1.0, 2.0, 3.0}, "x");
    auto rep = gradcheck([&]() { return sum(square(x)); }, {x}, 1e-5);
    CHECK(rep.max_rel_err < 1e-8);
}

TEST_CASE("gradcheck across the op library") {
    check_op_gradients(
        "add", [](std::vector<Tensor>& in) { return add(in[0], in[1]); },
        [](Rng& r) {
            return std::vector<Tensor>{Tensor::randn({2, 3}, r), Tensor::randn({3}, r)};
        });
    check_op_gradients(
        "sub", [](std::vector<Tensor>& in) { return sub(in[0], in[1]); },
        [](Rng& r) {
            return std::vector<Tensor>{Tensor::randn({2, 3}, r), Tensor::randn({2, 3}, r)};
        });
    check_op_gradients(
        "mul", [](std::vector<Tensor>& in) { return mul(in[0], in[1]); },
        [](Rng& r) {
            return std::vector<Tensor>{Tensor::randn({2, 3}, r), Tensor::randn({3}, r)};
        });
    check_op_gradients(
        "div", [](std::vector<Tensor>& in) { return div(in[0], in[1]); },
        [](Rng& r) {
            return std::vector<Tensor>{Tensor::randn({2, 3}, r),
                                       Tensor::uniform({3}, r, 0.5, 2.0)};
        });
    check_op_gradients(
        "matmul2d", [](std::vector<Tensor>& in) { return matmul(in[0], in[1]); },
        [](Rng& r) {
            return std::vector<Tensor>{Tensor::randn({3, 4}, r), Tensor::randn({4, 2}, r)};
        });
    check_op_gradients(
        "matmul batched", [](std::vector<Tensor>& in) { return matmul(in[0], in[1]); },
        [](Rng& r) {
            return std::vector<Tensor>{Tensor::randn({2, 3, 4}, r), Tensor::randn({2, 4, 2}, r)};
        });
    check_op_gradients(
        "matmul shared rhs", [](std::vector<Tensor>& in) { return matmul(in[0], in[1]); },
        [](Rng& r) {
            return std::vector<Tensor>{Tensor::randn({2, 3, 4}, r), Tensor::randn({4, 2}, r)};
        });
    check_op_gradients(
        "conv1d", [](std::vector<Tensor>& in) { return conv1d(in[0], in[1], in[2], 1, 1); },
        [](Rng& r) {
            return std::vector<Tensor>{Tensor::randn({2, 3, 7}, r), Tensor::randn({4, 3, 3}, r),
                                       Tensor::randn({4}, r)};
        });
    check_op_gradients(
        "conv2d", [](std::vector<Tensor>& in) { return conv2d(in[0], in[1], in[2], 1, 1); },
        [](Rng& r) {
            return std::vector<Tensor>{Tensor::randn({2, 3, 6, 5}, r), Tensor::randn({4, 3, 3, 3}, r),
                                       Tensor::randn({4}, r)};
        });
    check_op_gradients(
        "conv2d stride2", [](std::vector<Tensor>& in) { return conv2d(in[0], in[1], in[2], 2, 1); },
        [](Rng& r) {
            return std::vector<Tensor>{Tensor::randn({1, 2, 8, 8}, r), Tensor::randn({3, 2, 3, 3}, r),
                                       Tensor::randn({3}, r)};
        });
    check_op_gradients(
        "temporal_conv1d",
        [](std::vector<Tensor>& in) { return temporal_conv1d(in[0], in[1], in[2]); },
        [](Rng& r) {
            return std::vector<Tensor>{Tensor::randn({4, 3, 2, 2}, r), Tensor::randn({3, 3, 3}, r),
                                       Tensor::randn({3}, r)};
        });
    check_op_gradients(
        "conv_transpose2d",
        [](std::vector<Tensor>& in) { return conv_transpose2d(in[0], in[1], in[2], 2, 1); },
        [](Rng& r) {
            return std::vector<Tensor>{Tensor::randn({1, 3, 4, 4}, r), Tensor::randn({3, 2, 4, 4}, r),
                                       Tensor::randn({2}, r)};
        });
    check_op_gradients(
        "group_norm",
        [](std::vector<Tensor>& in) { return group_norm(in[0], 2, in[1], in[2]); },
        [](Rng& r) {
            return std::vector<Tensor>{Tensor::randn({2, 4, 3, 3}, r), Tensor::randn({4}, r),
                                       Tensor::uniform({4}, r, 0.5, 1.5)};
        });
    check_op_gradients(
        "layer_norm",
        [](std::vector<Tensor>& in) { return layer_norm(in[0], in[1], in[2]); },
        [](Rng& r) {
            return std::vector<Tensor>{Tensor::randn({3, 5}, r), Tensor::uniform({5}, r, 0.5, 1.5),
                                       Tensor::randn({5}, r)};
        });
    check_op_gradients(
        "softmax", [](std::vector<Tensor>& in) { return softmax(in[0]); },
        [](Rng& r) { return std::vector<Tensor>{Tensor::randn({3, 5}, r)}; });
    check_op_gradients(
        "attention causal",
        [](std::vector<Tensor>& in) { return attention(in[0], in[1], in[2], causal_mask(4), 2); },
        [](Rng& r) {
            return std::vector<Tensor>{Tensor::randn({4, 6}, r), Tensor::randn({4, 6}, r),
                                       Tensor::randn({4, 6}, r)};
        });
    check_op_gradients(
        "silu", [](std::vector<Tensor>& in) { return silu(in[0]); },
        [](Rng& r) { return std::vector<Tensor>{Tensor::randn({2, 5}, r)}; });
    check_op_gradients(
        "gelu", [](std::vector<Tensor>& in) { return gelu(in[0]); },
        [](Rng& r) { return std::vector<Tensor>{Tensor::randn({2, 5}, r)}; });
    check_op_gradients(
        "sin", [](std::vector<Tensor>& in) { return sin_op(in[0]); },
        [](Rng& r) { return std::vector<Tensor>{Tensor::randn({7}, r)}; });
    check_op_gradients(
        "cos", [](std::vector<Tensor>& in) { return cos_op(in[0]); },
        [](Rng& r) { return std::vector<Tensor>{Tensor::randn({7}, r)}; });
    check_op_gradients(
        "sqrt", [](std::vector<Tensor>& in) { return sqrt_op(in[0]); },
        [](Rng& r) { return std::vector<Tensor>{Tensor::uniform({7}, r, 0.5, 3.0)}; });
    check_op_gradients(
        "exp", [](std::vector<Tensor>& in) { return exp_op(in[0]); },
        [](Rng& r) { return std::vector<Tensor>{Tensor::randn({7}, r)}; });
    check_op_gradients(
        "log", [](std::vector<Tensor>& in) { return log_op(in[0]); },
        [](Rng& r) { return std::vector<Tensor>{Tensor::uniform({7}, r, 0.5, 3.0)}; });
    check_op_gradients(
        "mean", [](std::vector<Tensor>& in) { return mean(in[0]); },
        [](Rng& r) { return std::vector<Tensor>{Tensor::randn({3, 4}, r)}; });
    check_op_gradients(
        "reshape+permute",
        [](std::vector<Tensor>& in) { return permute(reshape(in[0], {3, 2, 2}), {2, 0, 1}); },
        [](Rng& r) { return std::vector<Tensor>{Tensor::randn({12}, r)}; });
    check_op_gradients(
        "concat+slice",
        [](std::vector<Tensor>& in) {
            return slice(concat({in[0], in[1]}, 1), 1, 1, 3);
        },
        [](Rng& r) {
            return std::vector<Tensor>{Tensor::randn({2, 2}, r), Tensor::randn({2, 3}, r)};
        });
    check_op_gradients(
        "spread", [](std::vector<Tensor>& in) { return spread(in[0], {2, 3}); },
        [](Rng& r) { return std::vector<Tensor>{Tensor::randn({4}, r)}; });
    check_op_gradients(
        "linear", [](std::vector<Tensor>& in) { return linear(in[0], in[1], in[2]); },
        [](Rng& r) {
            return std::vector<Tensor>{Tensor::randn({2, 3, 4}, r), Tensor::randn({4, 5}, r),
                                       Tensor::randn({5}, r)};
        });
}

TEST_CASE("attention with causal mask ignores the future exactly") {
    Rng rng(11);
    const int n = 6, c = 8;
    Tensor q = Tensor::randn({n, c}, rng);
    Tensor k = Tensor::randn({n, c}, rng);
    Tensor v = Tensor::randn({n, c}, rng);
    Tensor base = attention(q, k, v, causal_mask(n), 2);

    for (int trial = 0; trial < 5; ++trial) {
        Rng prng(500 + trial);
        const int i = 2;  // compare frames 0..i
        Tensor q2 = q.detach(), k2 = k.detach(), v2 = v.detach();
        for (int f = i + 1; f < n; ++f)
            for (int ch = 0; ch < c; ++ch) {
                q2.data()[f * c + ch] += prng.normal() * 10.0;
                k2.data()[f * c + ch] += prng.normal() * 10.0;
                v2.data()[f * c + ch] += prng.normal() * 10.0;
            }
        Tensor out = attention(q2, k2, v2, causal_mask(n), 2);
        for (int f = 0; f <= i; ++f)
            for (int ch = 0; ch < c; ++ch)
                CHECK(out.data()[f * c + ch] == base.data()[f * c + ch]);
    }
}

TEST_CASE("forward determinism for identical seeds") {
    auto run = [](uint64_t seed) {
        Rng rng(seed);
        Tensor x = Tensor::randn({4, 6}, rng);
        Tensor w = Tensor::randn({6, 6}, rng);
        Tensor b = Tensor::randn({6}, rng);
        return silu(linear(x, w, b));
    };
    Tensor a = run(99), b = run(99);
    REQUIRE(a.size() == b.size());
    for (int64_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("shape errors carry both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4});
    try {
        add(a, b);
        FAIL("expected a shape error");
    } catch (const Error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("(2,3)") != std::string::npos);
        CHECK(msg.find("(4)") != std::string::npos);
    }
    CHECK_THROWS_AS(group_norm(Tensor::zeros({1, 6, 2, 2}), 4, Tensor::zeros({6}), Tensor::zeros({6})),
                    Error);
}

TEST_CASE("adam") {
    SUBCASE("zero gradient leaves parameters unchanged") {
        ParamSet ps;
        Tensor x = ps.add("x", Tensor::from_data({3}, {1.0, -2.0, 0.5}));
        x.grad();  // allocate zero grads
        Adam adam(0.1);
        adam.step(ps);
        CHECK(x.data()[0] == 1.0);
        CHECK(x.data()[1] == -2.0);
        CHECK(x.data()[2] == 0.5);
    }
    SUBCASE("constant gradient descends monotonically") {
        ParamSet ps;
        Tensor x = ps.add("x", Tensor::from_data({1}, {0.0}));
        Adam adam(0.01);
        double prev = 0.0;
        for (int i = 0; i < 50; ++i) {
            x.zero_grad();
            x.grad()[0] = 0.5;
            adam.step(ps);
            CHECK(x.data()[0] < prev);
            prev = x.data()[0];
        }
    }
    SUBCASE("quadratic bowl matches the scalar recurrence oracle") {
        ParamSet ps;
        Tensor x = ps.add("x", Tensor::from_data({1}, {1.0}));
        Adam adam(0.1);

        // Independent scalar recurrence of the same update rule.
        double ox = 1.0, om = 0.0, ov = 0.0;
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.1;
        for (int t = 1; t <= 500; ++t) {
            ps.zero_grad();
            Tensor loss = square(x);
            backward(loss);
            adam.step(ps);

            const double g = 2.0 * ox;
            om = b1 * om + (1 - b1) * g;
            ov = b2 * ov + (1 - b2) * g * g;
            ox -= lr * (om / (1 - std::pow(b1, t))) / (std::sqrt(ov / (1 - std::pow(b2, t))) + eps);
            REQUIRE(x.data()[0] == doctest::Approx(ox).epsilon(1e-12));
        }
        CHECK(std::abs(x.data()[0]) < 1e-3);
        CHECK(std::abs(ox) < 1e-3);
    }
    SUBCASE("non-finite gradient names the parameter") {
        ParamSet ps;
        Tensor x = ps.add("spine_weight", Tensor::from_data({1}, {0.0}));
        x.grad()[0] = std::nan("");
        Adam adam(0.1);
        try {
            adam.step(ps);
            FAIL("expected numeric error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("spine_weight") != std::string::npos);
            CHECK(e.kind() == ErrKind::Numeric);
        }
    }
}

TEST_CASE("checkpoint round trip") {
    ParamSet ps;
    Rng rng(5);
    ps.add("enc.w", Tensor::randn({3, 4}, rng));
    ps.add("enc.b", Tensor::randn({4}, rng));
    nlohmann::json meta = {{"step", 123}, {"width", 64}};
    const std::string path = "test_ckpt.bin";
    save_checkpoint(path, ps, meta);
    Checkpoint ck = load_checkpoint(path);
    REQUIRE(ck.params.size() == 2);
    CHECK(ck.params.items[0].first == "enc.w");
    CHECK(ck.params.items[0].second.shape() == std::vector<int>{3, 4});
    for (int i = 0; i < 12; ++i)
        CHECK(ck.params.items[0].second.data()[i] == ps.items[0].second.data()[i]);
    CHECK(ck.meta.at("step") == 123);
    CHECK(file_hash(path) != 0);
    std::remove(path.c_str());
}

TEST_CASE("graph visits each node once and frees intermediate grads") {
    Tensor x = Tensor::param({2}, {1.0, 2.0}, "x");
    Tensor h = silu(x);
    Tensor loss = mean(square(h));
    ComputeGraph g = ComputeGraph::from(loss);
    CHECK(g.node_count() >= 3);
    g.backward();
    CHECK(x.has_grad());
    CHECK_FALSE(h.has_grad());  // non-leaf grads are dropped after use
}
