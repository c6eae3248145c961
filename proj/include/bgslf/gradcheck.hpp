#pragma once

// Finite-difference verification suite: tensor-engine ops, the SSU analytic
// branch, the redefined-gradient region, and a whole-model loss-to-parameters
// check on a micro configuration.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "bgslf/data.hpp"
#include "bgslf/dcgru.hpp"
#include "bgslf/metrics.hpp"
#include "bgslf/mgn.hpp"
#include "bgslf/model.hpp"
#include "bgslf/selection.hpp"
#include "bgslf/ssu.hpp"
#include "bgslf/synth.hpp"
#include "bgslf/tensor.hpp"
#include "bgslf/train.hpp"

namespace bgslf {

struct CheckReport {
    std::string name;
    double max_err = 0.0;
    double tol = 0.0;
    bool pass = false;
};

struct GradcheckReport {
    std::vector<CheckReport> checks;
    double sup = 0.0, inf = 0.0;  // SSU exclusion zone used
    bool all_pass = true;

    void add(std::string name, double err, double tol) {
        CheckReport c{std::move(name), err, tol, err < tol};
        all_pass = all_pass && c.pass;
        checks.push_back(std::move(c));
    }
};

namespace gradcheck_detail {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> unif(lo, hi);
    Tensor t = Tensor::zeros(shape);
    for (double& v : t.values()) v = unif(rng);
    return t;
}

}  // namespace gradcheck_detail

// (a) elementwise and structural ops against central differences
inline void check_tensor_ops(GradcheckReport& rep, double tol = 1e-6) {
    using gradcheck_detail::random_tensor;
    std::mt19937_64 rng(12345);
    const Shape sh{3, 4};
    Tensor x = random_tensor(sh, rng);
    // keep relu and abs away from their kinks
    for (double& v : x.values())
        if (std::fabs(v) < 1e-3) v += 0.5;
    Tensor other = random_tensor(sh, rng, 0.5, 1.5);

    auto check1 = [&](const std::string& name, const std::function<Tensor(Tape&, const Tensor&)>& f,
                      const Tensor& at) { rep.add(name, finite_diff_check(f, at), tol); };

    check1("add", [&](Tape& t, const Tensor& v) { return sum_all(add(v, t.leaf(other))); }, x);
    check1("sub", [&](Tape& t, const Tensor& v) { return sum_all(sub(v, t.leaf(other))); }, x);
    check1("mul", [&](Tape& t, const Tensor& v) { return sum_all(mul(v, t.leaf(other))); }, x);
    check1("div", [&](Tape& t, const Tensor& v) { return sum_all(div(v, t.leaf(other))); }, x);
    check1("sigmoid", [&](Tape&, const Tensor& v) { return sum_all(sigmoid(v)); }, x);
    check1("tanh", [&](Tape&, const Tensor& v) { return sum_all(bgslf::tanh(v)); }, x);
    check1("relu", [&](Tape&, const Tensor& v) { return sum_all(relu(v)); }, x);
    check1("exp", [&](Tape&, const Tensor& v) { return sum_all(bgslf::exp(v)); }, x);
    check1("abs", [&](Tape&, const Tensor& v) { return sum_all(bgslf::abs(v)); }, x);
    check1("mean", [&](Tape&, const Tensor& v) { return mean_all(mul(v, v)); }, x);
    check1("transpose", [&](Tape& t, const Tensor& v) { return sum_all(mul(transpose(v), t.leaf(transpose(other).detached()))); }, x);
    check1("concat", [&](Tape& t, const Tensor& v) {
        Tensor c = concat(v, t.leaf(other), 1);
        return sum_all(mul(c, c));
    }, x);
    check1("sum_axis", [&](Tape&, const Tensor& v) {
        Tensor s = sum_axis(v, 0);
        return sum_all(mul(s, s));
    }, x);

    Tensor w = random_tensor({4, 2}, rng);
    check1("matmul_lhs", [&](Tape& t, const Tensor& v) {
        Tensor p = matmul(v, t.leaf(w));
        return sum_all(mul(p, p));
    }, x);
    check1("matmul_rhs", [&](Tape& t, const Tensor& v) {
        Tensor p = matmul(t.leaf(x), v);
        return sum_all(mul(p, p));
    }, w);

    Tensor bias = random_tensor({2}, rng);
    check1("affine", [&](Tape& t, const Tensor& v) {
        Tensor p = affine(t.leaf(x), v, t.leaf(bias));
        return sum_all(mul(p, p));
    }, w);

    Tensor img = random_tensor({2, 5, 6}, rng);
    Tensor ker = random_tensor({3, 2, 3, 3}, rng);
    Tensor kb = random_tensor({3}, rng);
    check1("conv2d_input", [&](Tape& t, const Tensor& v) {
        Tensor p = conv2d(v, t.leaf(ker), t.leaf(kb));
        return sum_all(mul(p, p));
    }, img);
    check1("conv2d_kernel", [&](Tape& t, const Tensor& v) {
        Tensor p = conv2d(t.leaf(img), v, t.leaf(kb));
        return sum_all(mul(p, p));
    }, ker);

    Tensor adj = random_tensor({4, 4}, rng, 0.1, 1.0);
    check1("row_normalize", [&](Tape&, const Tensor& v) {
        Tensor p = row_normalize(v);
        return sum_all(mul(p, p));
    }, adj);
}

// (b) SSU analytic branch on [sup+1e-3, inf-1e-3]
inline void check_ssu_analytic(GradcheckReport& rep, double alpha = 1.0, double eps = 0.05, double tol = 1e-6) {
    const SsuThresholds th = ssu_thresholds(alpha, eps);
    rep.sup = th.sup;
    rep.inf = th.inf;
    double max_err = 0.0;
    const double lo = th.sup + 1e-3, hi = th.inf - 1e-3;
    const int n = 200;
    const double h = 1e-6;
    for (int i = 0; i <= n; ++i) {
        const double x = lo + (hi - lo) * static_cast<double>(i) / n;
        const double fd = (ssu_phi(x + h, alpha) - ssu_phi(x - h, alpha)) / (2.0 * h);
        const double err = std::fabs(ssu_phi_deriv(x, alpha) - fd) / std::max(1.0, std::fabs(fd));
        max_err = std::max(max_err, err);
    }
    rep.add("ssu_analytic_branch", max_err, tol);
}

// (d) redefined branch is exactly 1.0 on (0, sup) and (inf, 1)
inline void check_ssu_redefined(GradcheckReport& rep, double alpha = 1.0, double eps = 0.05) {
    const SsuThresholds th = ssu_thresholds(alpha, eps);
    double worst = 0.0;
    const int n = 500;
    for (int i = 1; i < n; ++i) {
        const double xl = th.sup * static_cast<double>(i) / n;
        const double xr = th.inf + (1.0 - th.inf) * static_cast<double>(i) / n;
        if (xl > 0.0 && xl < th.sup && ssu_grad(xl, alpha, th.sup, th.inf) != 1.0) worst = 1.0;
        if (xr > th.inf && xr < 1.0 && ssu_grad(xr, alpha, th.sup, th.inf) != 1.0) worst = 1.0;
    }
    // also outside (0,1) the gradient is exactly 0
    if (ssu_grad(-0.5, alpha, th.sup, th.inf) != 0.0 || ssu_grad(1.5, alpha, th.sup, th.inf) != 0.0) worst = 1.0;
    rep.add("ssu_redefined_branch", worst, 0.5);
}

// Micro configuration shared by (c) and the deliberate-corruption fixture.
struct MicroSetup {
    MtsDataset ds;
    SegmentTensor seg;
    Tensor segments;
    BgslfModel model;
    SampleBatch batch;
    int64_t selected = 0;
};

inline MicroSetup make_micro_setup() {
    MicroSetup s;
    SynthResult sr = synth_diffusion(4, 120, 99, 0.05);
    // shorten to keep the FD loop cheap
    sr.series.T = 120;
    s.ds = make_dataset(std::move(sr.series));
    s.seg = build_segment_tensor(s.ds, 4);
    s.segments = segment_as_tensor(s.seg);

    ModelConfig mc;
    mc.N = 4;
    mc.D = 1;
    mc.S = s.seg.S;
    mc.P = 4;
    mc.R = 2;
    mc.hidden = 5;
    mc.mgn_hidden = 4;
    mc.kw = 3;
    mc.alpha = 1.0;
    mc.eps = 0.05;
    s.model = BgslfModel::init(mc, 7);
    // center the graph logits inside the SSU analytic band
    for (double& v : s.model.param("mgn.fc2.w").value) v *= 0.05;
    for (double& v : s.model.param("mgn.fc2.b").value) v = 0.5 + 0.02 * v;

    std::vector<int64_t> starts = window_starts(s.ds, "train", 3, 3);
    starts.resize(4);
    s.batch = gather_batch(s.ds, starts, 3, 3);
    const auto graphs = current_graphs(s.model, s.segments);
    s.selected = select_graph(s.batch, graphs).index;
    return s;
}

// Loss as a function of the full parameter vector, with the graph choice
// frozen at the base point (selection itself is non-differentiated).
inline double micro_loss(const MicroSetup& s, const std::vector<double>& flat, Tape* tape,
                         std::vector<double>* grad_out) {
    BgslfModel model = s.model;
    size_t off = 0;
    for (auto& p : model.params) {
        std::copy(flat.begin() + static_cast<int64_t>(off), flat.begin() + static_cast<int64_t>(off + p.value.size()),
                  p.value.begin());
        off += p.value.size();
    }
    Tape local;
    Tape& t = tape ? *tape : local;
    TapedModel tm = model.make_taped(t);
    MgnOutput mgn = mgn_forward(s.segments, tm.mgn, model.cfg.R, model.activation(), model.ssu);
    const Tensor& a = mgn.graphs[static_cast<size_t>(s.selected)];
    std::vector<Tensor> preds = seq2seq_forward(t, s.batch, a, tm.seq, model.cfg.hidden);
    BatchLoss bl = masked_mae_loss(preds, s.batch);
    const double v = bl.loss.item();
    if (grad_out) {
        t.backward(bl.loss);
        grad_out->clear();
        for (const auto& tt : tm.all) {
            const auto& g = t.grad(tt);
            grad_out->insert(grad_out->end(), g.begin(), g.end());
        }
    }
    return v;
}

// (c) whole-model gradient vs central differences
inline void check_whole_model(GradcheckReport& rep, double tol = 1e-4, double h = 1e-5) {
    MicroSetup s = make_micro_setup();
    std::vector<double> flat;
    for (const auto& p : s.model.params) flat.insert(flat.end(), p.value.begin(), p.value.end());

    Tape tape;
    std::vector<double> analytic;
    micro_loss(s, flat, &tape, &analytic);

    double max_err = 0.0;
    for (size_t i = 0; i < flat.size(); ++i) {
        std::vector<double> v = flat;
        v[i] += h;
        const double fp = micro_loss(s, v, nullptr, nullptr);
        v[i] -= 2.0 * h;
        const double fm = micro_loss(s, v, nullptr, nullptr);
        const double fd = (fp - fm) / (2.0 * h);
        const double err = std::fabs(analytic[i] - fd) / std::max(1.0, std::fabs(fd));
        max_err = std::max(max_err, err);
    }
    rep.add("whole_model", max_err, tol);
}

// Harness sensitivity fixture: a wrong custom gradient must be flagged.
inline double corrupted_backward_error() {
    Tensor x = Tensor::from({4}, {0.3, -0.7, 1.2, 0.05});
    return finite_diff_check(
        [](Tape&, const Tensor& v) {
            // forward x^2 with a deliberately wrong derivative
            return sum_all(custom_unary(v, [](double a) { return a * a; }, [](double) { return 0.0; }));
        },
        x);
}

inline GradcheckReport run_gradcheck() {
    GradcheckReport rep;
    check_tensor_ops(rep);
    check_ssu_analytic(rep);
    check_ssu_redefined(rep);
    check_whole_model(rep);
    return rep;
}

}  // namespace bgslf
