#include <doctest.h>

#include <cmath>
#include <cstring>

#include "rip/error.hpp"
#include "rip/grad_check.hpp"
#include "rip/ops.hpp"
#include "rip/rng.hpp"
#include "rip/tensor.hpp"

using namespace rip;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = rng.normal() * scale;
    return t;
}

}  // namespace

TEST_CASE("matmul identity and scalar cases") {
    Tensor id(Shape{2, 2}, {1, 0, 0, 1});
    Tensor b(Shape{2, 1}, {3, 4});
    Tensor c = matmul(id, b);
    CHECK(c.shape() == Shape{2, 1});
    CHECK(c.at({0, 0}) == 3.0);
    CHECK(c.at({1, 0}) == 4.0);

    Tensor s = matmul(Tensor(Shape{1, 1}, {2.0}), Tensor(Shape{1, 1}, {5.0}));
    CHECK(s.value() == 10.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
    Rng rng(11);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    Tensor c = matmul(a, b);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < 4; ++k) acc += a.at({i, k}) * b.at({k, j});
            CHECK(c.at({i, j}) == doctest::Approx(acc).epsilon(1e-12));
        }
    }
}

TEST_CASE("matmul identity is bit-exact") {
    Rng rng(3);
    Tensor x = random_tensor({5, 5}, rng);
    Tensor id(Shape{5, 5});
    for (std::size_t i = 0; i < 5; ++i) id.values()[i * 5 + i] = 1.0;
    Tensor y = matmul(id, x);
    CHECK(std::memcmp(y.data(), x.data(), sizeof(double) * x.size()) == 0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tensor a(Shape{2, 3});
    Tensor b(Shape{4, 2});
    try {
        matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[4x2]") != std::string::npos);
    }
}

TEST_CASE("causal_conv1d delta kernel is identity") {
    Rng rng(5);
    Tensor x = random_tensor({6, 3}, rng);
    Tensor w(Shape{4, 3});  // last tap 1
    for (std::size_t c = 0; c < 3; ++c) w.values()[3 * 3 + c] = 1.0;
    Tensor bias(Shape{3});
    Tensor y = causal_conv1d(x, w, bias);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == doctest::Approx(x.data()[i]));
}

TEST_CASE("causal_conv1d zero input yields bias rows") {
    Tensor x(Shape{4, 2});
    Tensor w(Shape{3, 2}, {0.5, -1, 2, 0.25, -3, 1});
    Tensor bias(Shape{2}, {7.0, -2.0});
    Tensor y = causal_conv1d(x, w, bias);
    for (std::size_t t = 0; t < 4; ++t) {
        CHECK(y.at({t, 0}) == 7.0);
        CHECK(y.at({t, 1}) == -2.0);
    }
}

TEST_CASE("causal_conv1d hand example") {
    Tensor x(Shape{3, 1}, {1, 2, 3});
    Tensor w(Shape{2, 1}, {1, 1});
    Tensor bias(Shape{1});
    Tensor y = causal_conv1d(x, w, bias);
    CHECK(y.at({0, 0}) == 1.0);
    CHECK(y.at({1, 0}) == 3.0);
    CHECK(y.at({2, 0}) == 5.0);
}

TEST_CASE("causal_conv1d channel mismatch") {
    Tensor x(Shape{3, 2});
    Tensor w(Shape{2, 3});
    Tensor bias(Shape{3});
    CHECK_THROWS_AS(causal_conv1d(x, w, bias), ShapeError);
}

TEST_CASE("silu values") {
    Tensor x(Shape{3}, {0.0, 20.0, -20.0});
    Tensor y = silu(x);
    CHECK(y.data()[0] == 0.0);
    CHECK(y.data()[1] == doctest::Approx(20.0 / (1.0 + std::exp(-20.0))).epsilon(1e-9));
    CHECK(std::fabs(y.data()[1] - 20.0) < 1e-7);
    CHECK(std::fabs(y.data()[2]) < 1e-7);
}

TEST_CASE("layer_norm constant row maps to beta") {
    Tensor x(Shape{2, 4}, 3.5);
    Tensor gamma(Shape{4}, 2.0);
    Tensor beta(Shape{4}, {1, -1, 0.5, 4});
    Tensor y = layer_norm(x, gamma, beta);
    for (std::size_t r = 0; r < 2; ++r) {
        CHECK(y.at({r, 0}) == doctest::Approx(1.0));
        CHECK(y.at({r, 1}) == doctest::Approx(-1.0));
        CHECK(y.at({r, 2}) == doctest::Approx(0.5));
        CHECK(y.at({r, 3}) == doctest::Approx(4.0));
    }
}

TEST_CASE("layer_norm standardizes rows") {
    Rng rng(17);
    Tensor x = random_tensor({3, 16}, rng, 3.0);
    Tensor gamma(Shape{16}, 1.0);
    Tensor beta(Shape{16}, 0.0);
    Tensor y = layer_norm(x, gamma, beta);
    for (std::size_t r = 0; r < 3; ++r) {
        double mean = 0.0, var = 0.0;
        for (std::size_t j = 0; j < 16; ++j) mean += y.at({r, j});
        mean /= 16.0;
        for (std::size_t j = 0; j < 16; ++j) {
            const double c = y.at({r, j}) - mean;
            var += c * c;
        }
        var /= 16.0;
        CHECK(std::fabs(mean) < 1e-9);
        CHECK(std::fabs(var - 1.0) < 1e-3);
    }
}

TEST_CASE("layer_norm hand example with eps 0") {
    Tensor x(Shape{1, 2}, {1, 3});
    Tensor gamma(Shape{2}, 1.0);
    Tensor beta(Shape{2}, 0.0);
    Tensor y = layer_norm(x, gamma, beta, 0.0);
    CHECK(y.at({0, 0}) == doctest::Approx(-1.0));
    CHECK(y.at({0, 1}) == doctest::Approx(1.0));
}

TEST_CASE("masked_mean_pool") {
    SUBCASE("single row") {
        Tensor x(Shape{1, 3}, {1, 2, 3});
        Tensor y = masked_mean_pool(x, 1);
        CHECK(y.at({0}) == 1.0);
        CHECK(y.at({1}) == 2.0);
        CHECK(y.at({2}) == 3.0);
    }
    SUBCASE("padding ignored") {
        Tensor x(Shape{3, 2}, {5, -1, 0, 0, 0, 0});
        Tensor y = masked_mean_pool(x, 1);
        CHECK(y.at({0}) == 5.0);
        CHECK(y.at({1}) == -1.0);
    }
    SUBCASE("hand mean") {
        Tensor x(Shape{2, 2}, {1, 2, 3, 4});
        Tensor y = masked_mean_pool(x, 2);
        CHECK(y.at({0}) == doctest::Approx(2.0));
        CHECK(y.at({1}) == doctest::Approx(3.0));
    }
    SUBCASE("zero valid_len rejected") {
        Tensor x(Shape{2, 2});
        CHECK_THROWS_AS(masked_mean_pool(x, 0), ShapeError);
    }
}

TEST_CASE("softmax properties and values") {
    SUBCASE("uniform row") {
        Tensor x(Shape{1, 6}, 0.7);
        Tensor y = softmax(x);
        for (std::size_t j = 0; j < 6; ++j) CHECK(y.at({0, j}) == doctest::Approx(1.0 / 6.0));
    }
    SUBCASE("shift invariance") {
        Rng rng(9);
        Tensor x = random_tensor({2, 5}, rng);
        Tensor shifted(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) shifted.values()[i] = x.data()[i] + 123.25;
        Tensor a = softmax(x);
        Tensor b = softmax(shifted);
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-12));
    }
    SUBCASE("closed form") {
        Tensor x(Shape{1, 2}, {0.0, std::log(3.0)});
        Tensor y = softmax(x);
        CHECK(y.at({0, 0}) == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(y.at({0, 1}) == doctest::Approx(0.75).epsilon(1e-12));
    }
    SUBCASE("stable at magnitude 1e3") {
        Rng rng(13);
        for (int rep = 0; rep < 20; ++rep) {
            Tensor x = random_tensor({1, 8}, rng, 1e3);
            Tensor y = softmax(x);
            double s = 0.0;
            for (std::size_t j = 0; j < 8; ++j) {
                CHECK(y.at({0, j}) >= 0.0);
                s += y.at({0, j});
            }
            CHECK(std::fabs(s - 1.0) <= 1e-9);
        }
    }
}

TEST_CASE("backward product rule") {
    Tensor x = Tensor::scalar(2.0, true);
    Tensor y = Tensor::scalar(3.0, true);
    Tensor loss = mul(x, y);
    loss.backward();
    CHECK(x.grad()[0] == 3.0);
    CHECK(y.grad()[0] == 2.0);
}

TEST_CASE("backward of sum(silu) at zero") {
    Tensor x(Shape{1}, {0.0}, true);
    Tensor loss = sum(silu(x));
    loss.backward();
    CHECK(x.grad()[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("backward fan-out accumulates") {
    Tensor x = Tensor::scalar(1.5, true);
    Tensor loss = add(x, x);
    loss.backward();
    CHECK(x.grad()[0] == 2.0);
}

TEST_CASE("backward rejects non-scalar loss and double invocation") {
    Tensor x(Shape{2}, {1, 2}, true);
    CHECK_THROWS_AS(add(x, x).backward(), ShapeError);
    Tensor loss = sum(add(x, x));
    loss.backward();
    CHECK_THROWS_AS(loss.backward(), Error);
}

TEST_CASE("grad_check on sum of squares") {
    Rng rng(21);
    Tensor x = random_tensor({4}, rng);
    double err = grad_check([](const std::vector<Tensor>& in) { return sum(square(in[0])); }, {x});
    CHECK(err < 1e-6);
}

TEST_CASE("grad_check on cross-entropy of projected input") {
    Rng rng(22);
    Tensor x = random_tensor({3, 4}, rng);
    Tensor w = random_tensor({4, 6}, rng);
    std::vector<int> targets{0, 3, 5};
    double err = grad_check(
        [&](const std::vector<Tensor>& in) {
            return cross_entropy_logits(matmul(in[0], in[1]), targets);
        },
        {x, w});
    CHECK(err < 1e-4);
}

TEST_CASE("grad_check flags a corrupted backward rule") {
    // scale-by-2 op whose backward deliberately claims a factor of 3
    auto bad_double = [](const Tensor& x) {
        std::vector<double> out(x.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = 2.0 * x.data()[i];
        Tensor y = detail::op_result(x.shape(), std::move(out));
        auto xn = x.impl().get();
        detail::op_record(y, {x}, [xn](detail::Node& self) {
            xn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += 3.0 * self.grad[i];
        });
        return y;
    };
    Rng rng(23);
    Tensor x = random_tensor({3}, rng);
    double err =
        grad_check([&](const std::vector<Tensor>& in) { return sum(bad_double(in[0])); }, {x});
    CHECK(err > 1e-2);
}

TEST_CASE("grad_check across differentiable ops over 10 seeds") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed);
        {
            Tensor a = random_tensor({3, 4}, rng);
            Tensor b = random_tensor({4, 2}, rng);
            CHECK(grad_check([](const std::vector<Tensor>& in) {
                      return sum(matmul(in[0], in[1]));
                  },
                  {a, b}) < 1e-4);
        }
        {
            Tensor x = random_tensor({5, 3}, rng);
            Tensor w = random_tensor({3, 3}, rng);
            Tensor bias = random_tensor({3}, rng);
            CHECK(grad_check([](const std::vector<Tensor>& in) {
                      return sum(causal_conv1d(in[0], in[1], in[2]));
                  },
                  {x, w, bias}) < 1e-4);
        }
        {
            Tensor x = random_tensor({6}, rng);
            CHECK(grad_check([](const std::vector<Tensor>& in) {
                      return sum(silu(in[0]));
                  },
                  {x}) < 1e-4);
            CHECK(grad_check([](const std::vector<Tensor>& in) {
                      return sum(softplus(in[0]));
                  },
                  {x}) < 1e-4);
            CHECK(grad_check([](const std::vector<Tensor>& in) {
                      return sum(tanh_op(in[0]));
                  },
                  {x}) < 1e-4);
            CHECK(grad_check([](const std::vector<Tensor>& in) {
                      return sum(sigmoid(in[0]));
                  },
                  {x}) < 1e-4);
            CHECK(grad_check([](const std::vector<Tensor>& in) {
                      return sum(square(leaky_relu(in[0], 0.01)));
                  },
                  {x}) < 1e-4);
        }
        {
            Tensor x = random_tensor({2, 5}, rng);
            Tensor g = random_tensor({5}, rng);
            Tensor b = random_tensor({5}, rng);
            CHECK(grad_check([](const std::vector<Tensor>& in) {
                      return sum(square(layer_norm(in[0], in[1], in[2])));
                  },
                  {x, g, b}) < 1e-4);
            CHECK(grad_check([](const std::vector<Tensor>& in) {
                      return sum(square(softmax(in[0])));
                  },
                  {x}) < 1e-4);
        }
        {
            Tensor x = random_tensor({2, 4, 3}, rng);
            std::vector<int> lengths{3, 4};
            CHECK(grad_check([&](const std::vector<Tensor>& in) {
                      return sum(square(masked_mean_pool(in[0], lengths)));
                  },
                  {x}) < 1e-4);
            CHECK(grad_check([&](const std::vector<Tensor>& in) {
                      return sum(square(gather_last(in[0], lengths)));
                  },
                  {x}) < 1e-4);
        }
        {
            Tensor x = random_tensor({4, 3}, rng);
            Tensor b = random_tensor({3}, rng);
            Tensor w = random_tensor({2}, rng);
            Tensor x2 = random_tensor({4, 3}, rng);
            CHECK(grad_check([](const std::vector<Tensor>& in) {
                      return sum(square(add_rowwise(in[0], in[1])));
                  },
                  {x, b}) < 1e-4);
            CHECK(grad_check([&](const std::vector<Tensor>& in) {
                      return sum(square(weighted_sum({in[0], in[1]}, in[2])));
                  },
                  {x, x2, w}) < 1e-4);
            CHECK(grad_check([](const std::vector<Tensor>& in) {
                      return sum(square(concat_cols({in[0], in[1]})));
                  },
                  {x, x2}) < 1e-4);
            CHECK(grad_check([](const std::vector<Tensor>& in) {
                      return sum(square(col_slice(in[0], 1, 3)));
                  },
                  {x}) < 1e-4);
        }
    }
}
