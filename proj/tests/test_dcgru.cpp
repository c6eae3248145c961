#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "bgslf/dcgru.hpp"

using namespace bgslf;

namespace {

GateTensors random_gate(int64_t in, int64_t out, std::mt19937_64& rng, double scale = 0.5) {
    std::uniform_real_distribution<double> unif(-scale, scale);
    GateTensors g;
    g.w0 = Tensor::zeros({in, out});
    g.w1 = Tensor::zeros({in, out});
    g.w2 = Tensor::zeros({in, out});
    g.b = Tensor::zeros({out});
    for (Tensor* t : {&g.w0, &g.w1, &g.w2, &g.b})
        for (double& v : t->values()) v = unif(rng);
    return g;
}

GateTensors zero_gate(int64_t in, int64_t out) {
    GateTensors g;
    g.w0 = Tensor::zeros({in, out});
    g.w1 = Tensor::zeros({in, out});
    g.w2 = Tensor::zeros({in, out});
    g.b = Tensor::zeros({out});
    return g;
}

}  // namespace

TEST_CASE("identity graph normalizes to identity") {
    Tensor a = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    DegreeNormPair p = degree_normalize(a);
    CHECK(p.out_norm.values() == a.values());
    CHECK(p.in_norm.values() == a.values());
}

TEST_CASE("asymmetric graph out- and in-degree views") {
    Tensor a = Tensor::from({2, 2}, {0, 2, 0, 0});
    DegreeNormPair p = degree_normalize(a);
    CHECK(p.out_norm.values() == std::vector<double>{0, 1, 0, 0});
    CHECK(p.in_norm.values() == std::vector<double>{0, 0, 1, 0});
}

TEST_CASE("zero graph is guarded, negative entries are rejected") {
    DegreeNormPair p = degree_normalize(Tensor::zeros({3, 3}));
    for (double v : p.out_norm.values()) CHECK(v == 0.0);
    for (double v : p.in_norm.values()) CHECK(v == 0.0);
    CHECK_THROWS_AS(degree_normalize(Tensor::from({2, 2}, {1, -0.1, 0, 1})), std::invalid_argument);
}

TEST_CASE("nonzero rows of the normalized graph sum to 1") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Tensor a = Tensor::zeros({5, 5});
    for (double& v : a.values()) v = unif(rng) < 0.4 ? unif(rng) : 0.0;
    DegreeNormPair p = degree_normalize(a);
    for (int64_t i = 0; i < 5; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < 5; ++j) s += p.out_norm.values()[static_cast<size_t>(i * 5 + j)];
        CHECK((s == 0.0 || std::fabs(s - 1.0) < 1e-9));
    }
}

TEST_CASE("diffusion conv with identity graph collapses the weights") {
    std::mt19937_64 rng(3);
    const int64_t N = 3, Fin = 2, Fout = 4;
    GateTensors g = random_gate(Fin, Fout, rng);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Tensor x = Tensor::zeros({N, Fin});
    for (double& v : x.values()) v = unif(rng);
    Tensor id = Tensor::from({N, N}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor out = diffusion_conv(x, degree_normalize(id), g);
    Tensor wsum = add(add(g.w0, g.w1), g.w2);
    Tensor oracle = add(matmul(x, wsum), g.b);
    for (size_t i = 0; i < out.values().size(); ++i)
        CHECK(out.values()[i] == Catch::Approx(oracle.values()[i]).margin(1e-12));
}

TEST_CASE("zero graph weights reduce to a plain linear map") {
    std::mt19937_64 rng(8);
    const int64_t N = 4, Fin = 3, Fout = 2;
    GateTensors g = random_gate(Fin, Fout, rng);
    for (double& v : g.w1.values()) v = 0.0;
    for (double& v : g.w2.values()) v = 0.0;
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Tensor x = Tensor::zeros({N, Fin});
    for (double& v : x.values()) v = unif(rng);
    Tensor a = Tensor::zeros({N, N});
    for (double& v : a.values()) v = 0.3;
    Tensor out = diffusion_conv(x, degree_normalize(a), g);
    Tensor oracle = add(matmul(x, g.w0), g.b);
    for (size_t i = 0; i < out.values().size(); ++i)
        CHECK(out.values()[i] == Catch::Approx(oracle.values()[i]).margin(1e-12));
}

TEST_CASE("diffusion conv matches a brute-force triple loop") {
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_real_distribution<double> sunif(-1.0, 1.0);
    const int64_t N = 3, Fin = 2, Fout = 3;
    GateTensors g = random_gate(Fin, Fout, rng);
    Tensor x = Tensor::zeros({N, Fin});
    for (double& v : x.values()) v = sunif(rng);
    Tensor a = Tensor::zeros({N, N});
    for (double& v : a.values()) v = unif(rng);
    DegreeNormPair p = degree_normalize(a);
    Tensor out = diffusion_conv(x, p, g);

    for (int64_t i = 0; i < N; ++i)
        for (int64_t f = 0; f < Fout; ++f) {
            double acc = g.b.values()[static_cast<size_t>(f)];
            for (int64_t k = 0; k < Fin; ++k) {
                acc += x.values()[static_cast<size_t>(i * Fin + k)] * g.w0.values()[static_cast<size_t>(k * Fout + f)];
                for (int64_t j = 0; j < N; ++j) {
                    acc += p.out_norm.values()[static_cast<size_t>(i * N + j)] *
                           x.values()[static_cast<size_t>(j * Fin + k)] *
                           g.w1.values()[static_cast<size_t>(k * Fout + f)];
                    acc += p.in_norm.values()[static_cast<size_t>(i * N + j)] *
                           x.values()[static_cast<size_t>(j * Fin + k)] *
                           g.w2.values()[static_cast<size_t>(k * Fout + f)];
                }
            }
            CHECK(out.values()[static_cast<size_t>(i * Fout + f)] == Catch::Approx(acc).margin(1e-10));
        }
}

TEST_CASE("diffusion conv is linear in X") {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::uniform_real_distribution<double> pos(0.0, 1.0);
    const int64_t N = 4, Fin = 2, Fout = 3;
    GateTensors g = random_gate(Fin, Fout, rng);
    GateTensors g_nob = g;
    g_nob.b = Tensor::zeros({Fout});
    Tensor a = Tensor::zeros({N, N});
    for (double& v : a.values()) v = pos(rng);
    DegreeNormPair p = degree_normalize(a);
    Tensor x1 = Tensor::zeros({N, Fin}), x2 = Tensor::zeros({N, Fin});
    for (double& v : x1.values()) v = unif(rng);
    for (double& v : x2.values()) v = unif(rng);
    const double ca = 1.7, cb = -0.4;
    Tensor mixed = add(scale(x1, ca), scale(x2, cb));
    Tensor lhs = diffusion_conv(mixed, p, g_nob);
    Tensor rhs = add(scale(diffusion_conv(x1, p, g_nob), ca), scale(diffusion_conv(x2, p, g_nob), cb));
    for (size_t i = 0; i < lhs.values().size(); ++i)
        CHECK(lhs.values()[i] == Catch::Approx(rhs.values()[i]).margin(1e-10));
}

TEST_CASE("non-neighbor perturbation does not reach node output") {
    // node 0 connects only to node 1 (both directions); node 3 is isolated
    const int64_t N = 4, Fin = 1, Fout = 2;
    std::mt19937_64 rng(37);
    GateTensors g = random_gate(Fin, Fout, rng);
    Tensor a = Tensor::zeros({N, N});
    a.values()[0 * N + 1] = 1.0;
    a.values()[1 * N + 0] = 1.0;
    a.values()[2 * N + 2] = 1.0;
    a.values()[3 * N + 3] = 1.0;
    DegreeNormPair p = degree_normalize(a);
    Tensor x = Tensor::from({N, Fin}, {0.5, -0.2, 0.7, 0.1});
    Tensor base = diffusion_conv(x, p, g);
    Tensor xp = x.detached();
    xp.data = std::make_shared<std::vector<double>>(x.values());
    (*xp.data)[3] += 10.0;  // perturb isolated node 3
    Tensor pert = diffusion_conv(xp, p, g);
    for (int64_t f = 0; f < Fout; ++f) {
        CHECK(base.values()[static_cast<size_t>(0 * Fout + f)] == pert.values()[static_cast<size_t>(0 * Fout + f)]);
        CHECK(base.values()[static_cast<size_t>(1 * Fout + f)] == pert.values()[static_cast<size_t>(1 * Fout + f)]);
        CHECK(base.values()[static_cast<size_t>(2 * Fout + f)] == pert.values()[static_cast<size_t>(2 * Fout + f)]);
    }
}

TEST_CASE("zero-weight cell from zero state stays at zero") {
    const int64_t N = 3, D = 1, H = 4;
    DcgruCellTensors w{zero_gate(D + H, H), zero_gate(D + H, H), zero_gate(D + H, H)};
    Tensor x = Tensor::from({N, D}, {1, 2, 3});
    Tensor h0 = Tensor::zeros({N, H});
    Tensor a = Tensor::from({N, N}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor h1 = dcgru_cell(x, h0, degree_normalize(a), w);
    for (double v : h1.values()) CHECK(v == 0.0);  // U=0.5, C=tanh(0)=0
}

TEST_CASE("large update-gate bias carries the state through") {
    std::mt19937_64 rng(41);
    const int64_t N = 3, D = 1, H = 4;
    DcgruCellTensors w{random_gate(D + H, H, rng), random_gate(D + H, H, rng), random_gate(D + H, H, rng)};
    for (double& v : w.update.b.values()) v = 50.0;  // U -> 1
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Tensor x = Tensor::zeros({N, D});
    Tensor h0 = Tensor::zeros({N, H});
    for (double& v : x.values()) v = unif(rng);
    for (double& v : h0.values()) v = unif(rng);
    Tensor a = Tensor::from({N, N}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor h1 = dcgru_cell(x, h0, degree_normalize(a), w);
    for (size_t i = 0; i < h1.values().size(); ++i)
        CHECK(std::fabs(h1.values()[i] - h0.values()[i]) < 1e-8);
}

TEST_CASE("state stays in [-1,1] when the previous state does") {
    std::mt19937_64 rng(53);
    const int64_t N = 4, D = 1, H = 5;
    DcgruCellTensors w{random_gate(D + H, H, rng, 2.0), random_gate(D + H, H, rng, 2.0),
                       random_gate(D + H, H, rng, 2.0)};
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::uniform_real_distribution<double> pos(0.0, 1.0);
    Tensor a = Tensor::zeros({N, N});
    for (double& v : a.values()) v = pos(rng);
    DegreeNormPair p = degree_normalize(a);
    Tensor h = Tensor::zeros({N, H});
    for (double& v : h.values()) v = unif(rng);
    for (int step = 0; step < 10; ++step) {
        Tensor x = Tensor::zeros({N, D});
        for (double& v : x.values()) v = 3.0 * unif(rng);
        h = dcgru_cell(x, h, p, w);
        for (double v : h.values()) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
    }
}

namespace {

Seq2SeqTensors make_seq(int64_t D, int64_t H, std::mt19937_64& rng, double scale) {
    Seq2SeqTensors w;
    w.encoder = {random_gate(D + H, H, rng, scale), random_gate(D + H, H, rng, scale),
                 random_gate(D + H, H, rng, scale)};
    w.decoder = {random_gate(D + H, H, rng, scale), random_gate(D + H, H, rng, scale),
                 random_gate(D + H, H, rng, scale)};
    std::uniform_real_distribution<double> unif(-scale, scale);
    w.out_w = Tensor::zeros({H, D});
    w.out_b = Tensor::zeros({D});
    for (double& v : w.out_w.values()) v = unif(rng);
    for (double& v : w.out_b.values()) v = unif(rng);
    return w;
}

SampleBatch random_batch(int64_t B, int64_t T_in, int64_t T_out, int64_t N, int64_t D, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    SampleBatch b;
    b.B = B;
    b.T_in = T_in;
    b.T_out = T_out;
    b.N = N;
    b.D = D;
    b.inputs.resize(static_cast<size_t>(B * T_in * N * D));
    b.targets.resize(static_cast<size_t>(B * T_out * N * D));
    b.target_mask.assign(b.targets.size(), 1);
    for (double& v : b.inputs) v = unif(rng);
    for (double& v : b.targets) v = unif(rng);
    return b;
}

}  // namespace

TEST_CASE("seq2seq with all-zero weights predicts zeros of the target shape") {
    const int64_t B = 2, N = 3, D = 1, H = 4;
    Seq2SeqTensors w;
    w.encoder = {zero_gate(D + H, H), zero_gate(D + H, H), zero_gate(D + H, H)};
    w.decoder = {zero_gate(D + H, H), zero_gate(D + H, H), zero_gate(D + H, H)};
    w.out_w = Tensor::zeros({H, D});
    w.out_b = Tensor::zeros({D});
    std::mt19937_64 rng(61);
    SampleBatch batch = random_batch(B, 4, 3, N, D, rng);
    Tape tape;
    Tensor a = Tensor::from({N, N}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    std::vector<Tensor> preds = seq2seq_forward(tape, batch, a, w, H);
    REQUIRE(static_cast<int64_t>(preds.size()) == batch.T_out);
    for (const auto& p : preds) {
        CHECK(p.shape == Shape{B, N, D});
        for (double v : p.values()) CHECK(v == 0.0);
    }
}

TEST_CASE("without teacher forcing, targets never leak into predictions") {
    std::mt19937_64 rng(67);
    const int64_t B = 2, N = 3, D = 1, H = 4;
    Seq2SeqTensors w = make_seq(D, H, rng, 0.4);
    SampleBatch batch = random_batch(B, 4, 3, N, D, rng);
    Tensor a = Tensor::from({N, N}, {0.5, 0.5, 0, 0, 0.5, 0.5, 0.5, 0, 0.5});
    Tape t1, t2;
    std::vector<Tensor> p1 = seq2seq_forward(t1, batch, a, w, H);
    SampleBatch shuffled = batch;
    std::shuffle(shuffled.targets.begin(), shuffled.targets.end(), rng);
    std::vector<Tensor> p2 = seq2seq_forward(t2, shuffled, a, w, H);
    for (size_t i = 0; i < p1.size(); ++i) CHECK(p1[i].values() == p2[i].values());
}

TEST_CASE("teacher forcing ratio 1 feeds ground truth to the decoder") {
    std::mt19937_64 rng(71);
    const int64_t B = 1, N = 2, D = 1, H = 3;
    Seq2SeqTensors w = make_seq(D, H, rng, 0.4);
    SampleBatch batch = random_batch(B, 3, 3, N, D, rng);
    Tensor a = Tensor::from({N, N}, {1, 0, 0, 1});
    std::mt19937_64 tf1(5), tf2(5);
    Tape t1, t2;
    std::vector<Tensor> forced = seq2seq_forward(t1, batch, a, w, H, 1.0, &tf1);
    SampleBatch shuffled = batch;
    std::reverse(shuffled.targets.begin(), shuffled.targets.end());
    std::vector<Tensor> forced2 = seq2seq_forward(t2, shuffled, a, w, H, 1.0, &tf2);
    // with forcing active, changing targets must change later predictions
    bool differs = false;
    for (size_t t = 1; t < forced.size(); ++t)
        if (forced[t].values() != forced2[t].values()) differs = true;
    CHECK(differs);
}
