#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "bgslf/tensor.hpp"

using namespace bgslf;

TEST_CASE("matmul identity") {
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor i2 = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor r = matmul(a, i2);
    CHECK(r.values() == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("sigmoid at zero") {
    Tensor r = sigmoid(Tensor::scalar(0.0));
    CHECK(r.item() == 0.5);
}

TEST_CASE("sum over all axes") {
    CHECK(sum_all(Tensor::from({2, 2}, {1, 2, 3, 4})).item() == 10.0);
}

TEST_CASE("shape mismatch names both shapes and the op") {
    Tensor a = Tensor::from({2, 3}, std::vector<double>(6, 0.0));
    Tensor b = Tensor::from({2, 2}, std::vector<double>(4, 0.0));
    CHECK_THROWS_WITH(add(a, b), Catch::Matchers::ContainsSubstring("add") &&
                                     Catch::Matchers::ContainsSubstring("(2,3)") &&
                                     Catch::Matchers::ContainsSubstring("(2,2)"));
    CHECK_THROWS_WITH(matmul(a, b), Catch::Matchers::ContainsSubstring("matmul"));
}

TEST_CASE("backward of sum(w*x) gives x") {
    Tape tape;
    Tensor w = tape.leaf({3}, {1, 2, 3});
    Tensor x = Tensor::from({3}, {4, 5, 6});
    tape.backward(sum_all(mul(w, x)));
    CHECK(tape.grad(w) == std::vector<double>{4, 5, 6});
}

TEST_CASE("backward of sum(sigmoid(x)) at zero is 0.25") {
    Tape tape;
    Tensor x = tape.leaf({4}, {0, 0, 0, 0});
    tape.backward(sum_all(sigmoid(x)));
    for (double g : tape.grad(x)) CHECK(g == 0.25);
}

TEST_CASE("backward requires scalar loss") {
    Tape tape;
    Tensor x = tape.leaf({2}, {1, 2});
    Tensor y = mul(x, x);
    CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
}

TEST_CASE("fan-out accumulates additively") {
    Tape tape;
    Tensor x = tape.leaf({3}, {1, 2, 3});
    Tensor loss = add(sum_all(x), sum_all(x));
    tape.backward(loss);
    for (double g : tape.grad(x)) CHECK(g == 2.0);
}

TEST_CASE("detached tensor never receives gradient") {
    Tape tape;
    Tensor x = tape.leaf({2}, {1, 2});
    Tensor c = Tensor::from({2}, {3, 4});
    tape.backward(sum_all(mul(x, c)));
    CHECK_FALSE(c.on_tape());
    CHECK(tape.grad(x) == std::vector<double>{3, 4});
}

TEST_CASE("custom_unary identity with unit gradient") {
    Tape tape;
    Tensor x = tape.leaf({3}, {1, -2, 3});
    Tensor y = custom_unary(x, [](double v) { return v; }, [](double) { return 1.0; });
    CHECK(y.values() == x.values());
    tape.backward(sum_all(y));
    for (double g : tape.grad(x)) CHECK(g == 1.0);
}

TEST_CASE("custom_unary square with zero gradient") {
    Tape tape;
    Tensor x = tape.leaf({2}, {3, 4});
    Tensor y = custom_unary(x, [](double v) { return v * v; }, [](double) { return 0.0; });
    CHECK(y.values() == std::vector<double>{9, 16});
    tape.backward(sum_all(y));
    for (double g : tape.grad(x)) CHECK(g == 0.0);
}

TEST_CASE("random op chain matches finite differences") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> unif(0.2, 1.5);
    Tensor x = Tensor::zeros({2, 3});
    for (double& v : x.values()) v = unif(rng);
    double err = finite_diff_check(
        [](Tape&, const Tensor& v) { return sum_all(mul(sigmoid(v), bgslf::tanh(bgslf::exp(v)))); }, x);
    CHECK(err < 1e-6);
}

TEST_CASE("finite_diff_check closed-form sum of squares") {
    Tensor x = Tensor::from({4}, {0.3, -1.2, 2.5, 0.7});
    double err = finite_diff_check([](Tape&, const Tensor& v) { return sum_all(mul(v, v)); }, x);
    CHECK(err < 1e-8);
}

TEST_CASE("finite_diff_check flags a redefined gradient zone") {
    Tensor x = Tensor::from({2}, {0.4, 0.6});
    double err = finite_diff_check(
        [](Tape&, const Tensor& v) {
            return sum_all(custom_unary(v, [](double a) { return a * a; }, [](double) { return 1.0; }));
        },
        x);
    CHECK(err > 1e-2);  // analytic 2x != 1 is knowingly reported
}

TEST_CASE("finite_diff_check on a constant is zero") {
    Tensor x = Tensor::from({3}, {1, 2, 3});
    double err = finite_diff_check(
        [](Tape&, const Tensor& v) { return sum_all(mul(v, Tensor::from({3}, {0, 0, 0}))); }, x);
    CHECK(err == 0.0);
}

TEST_CASE("broadcast add over leading axes") {
    Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b = Tensor::from({3}, {10, 20, 30});
    CHECK(add(a, b).values() == std::vector<double>{11, 22, 33, 14, 25, 36});
    Tape tape;
    Tensor bt = tape.leaf(b);
    tape.backward(sum_all(add(a, bt)));
    CHECK(tape.grad(bt) == std::vector<double>{2, 2, 2});
}

TEST_CASE("conv2d gradients match finite differences on small shapes") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Tensor img = Tensor::zeros({3, 5, 6});
    Tensor ker = Tensor::zeros({2, 3, 3, 3});
    Tensor bias = Tensor::zeros({2});
    for (double& v : img.values()) v = unif(rng);
    for (double& v : ker.values()) v = unif(rng);
    for (double& v : bias.values()) v = unif(rng);
    double e1 = finite_diff_check(
        [&](Tape& t, const Tensor& v) {
            Tensor p = conv2d(v, t.leaf(ker), t.leaf(bias));
            return sum_all(mul(p, p));
        },
        img);
    double e2 = finite_diff_check(
        [&](Tape& t, const Tensor& v) {
            Tensor p = conv2d(t.leaf(img), v, t.leaf(bias));
            return sum_all(mul(p, p));
        },
        ker);
    CHECK(e1 < 1e-5);
    CHECK(e2 < 1e-5);
}

TEST_CASE("tape replay determinism") {
    auto run = [] {
        Tape tape;
        Tensor x = tape.leaf({4}, {0.1, 0.2, 0.3, 0.4});
        Tensor w = tape.leaf({4}, {1.5, -0.5, 2.0, 0.25});
        Tensor loss = sum_all(sigmoid(mul(x, w)));
        tape.backward(loss);
        auto g = tape.grad(x);
        g.push_back(loss.item());
        return g;
    };
    CHECK(run() == run());
}

TEST_CASE("row_normalize zero-degree guard") {
    Tensor a = Tensor::from({2, 2}, {0, 0, 1, 3});
    Tensor r = row_normalize(a);
    CHECK(r.values() == std::vector<double>{0, 0, 0.25, 0.75});
}
