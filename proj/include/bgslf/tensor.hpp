#pragma once

// Dense row-major tensors with reverse-mode automatic differentiation on a
// single-owner tape. All arithmetic is double precision; kernels are plain
// loops evaluated in a fixed sequential order, so identical leaf values give
// bit-identical forward values and gradients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bgslf {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

class Tape;

struct Tensor {
    Shape shape;
    std::shared_ptr<std::vector<double>> data;
    Tape* tape = nullptr;
    int node = -1;  // -1: detached, never receives gradient

    Tensor() = default;

    int64_t numel() const { return data ? static_cast<int64_t>(data->size()) : 0; }
    bool on_tape() const { return tape != nullptr && node >= 0; }
    const std::vector<double>& values() const { return *data; }
    std::vector<double>& values() { return *data; }
    double item() const {
        if (numel() != 1) throw std::invalid_argument("item(): tensor is not scalar, shape " + shape_str(shape));
        return (*data)[0];
    }
    Tensor detached() const {
        Tensor t;
        t.shape = shape;
        t.data = data;
        return t;
    }

    static Tensor from(Shape shape, std::vector<double> vals) {
        if (shape_numel(shape) != static_cast<int64_t>(vals.size()))
            throw std::invalid_argument("Tensor::from: shape " + shape_str(shape) + " does not match " +
                                        std::to_string(vals.size()) + " values");
        Tensor t;
        t.shape = std::move(shape);
        t.data = std::make_shared<std::vector<double>>(std::move(vals));
        return t;
    }
    static Tensor zeros(const Shape& shape) {
        return from(shape, std::vector<double>(static_cast<size_t>(shape_numel(shape)), 0.0));
    }
    static Tensor scalar(double v) { return from({1}, {v}); }
};

// Reverse-mode tape. Entry k's operands were produced by entries < k or are
// leaves; backward() walks entries in reverse, accumulating gradients
// additively across fan-out.
class Tape {
public:
    Tensor leaf(Shape shape, std::vector<double> vals) { return leaf(Tensor::from(std::move(shape), std::move(vals))); }
    Tensor leaf(const Tensor& detached) {
        Tensor t = detached;
        t.tape = this;
        t.node = new_node(t.numel());
        return t;
    }

    // Registers an op result; make_backward receives the result node id and
    // returns the pull-back (may be empty when no operand is taped).
    Tensor record(Tensor value, const std::function<std::function<void(Tape&)>(int)>& make_backward) {
        value.tape = this;
        value.node = new_node(value.numel());
        entries_[static_cast<size_t>(value.node)].backward = make_backward(value.node);
        return value;
    }

    void backward(const Tensor& loss) {
        if (loss.tape != this || loss.node < 0)
            throw std::invalid_argument("backward: loss is not recorded on this tape");
        if (loss.numel() != 1)
            throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss.shape));
        for (auto& e : entries_) std::fill(e.grad.begin(), e.grad.end(), 0.0);
        entries_[static_cast<size_t>(loss.node)].grad[0] = 1.0;
        for (int k = loss.node; k >= 0; --k) {
            auto& e = entries_[static_cast<size_t>(k)];
            if (e.backward) e.backward(*this);
        }
    }

    const std::vector<double>& grad(const Tensor& t) const {
        if (t.tape != this || t.node < 0)
            throw std::invalid_argument("grad: tensor is not recorded on this tape");
        return entries_[static_cast<size_t>(t.node)].grad;
    }
    std::vector<double>& grad_ref(int node) { return entries_[static_cast<size_t>(node)].grad; }

    size_t size() const { return entries_.size(); }

private:
    struct Entry {
        std::vector<double> grad;
        std::function<void(Tape&)> backward;
    };
    std::vector<Entry> entries_;

    int new_node(int64_t numel) {
        Entry e;
        e.grad.assign(static_cast<size_t>(numel), 0.0);
        entries_.push_back(std::move(e));
        return static_cast<int>(entries_.size()) - 1;
    }
};

namespace detail {

inline Tape* tape_of(const Tensor& a) { return a.on_tape() ? a.tape : nullptr; }
inline Tape* tape_of(const Tensor& a, const Tensor& b) {
    Tape* ta = tape_of(a);
    Tape* tb = tape_of(b);
    if (ta && tb && ta != tb) throw std::invalid_argument("operands recorded on different tapes");
    return ta ? ta : tb;
}

[[noreturn]] inline void shape_error(const std::string& op, const Shape& a, const Shape& b) {
    throw std::invalid_argument(op + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

// rhs may equal lhs shape, be scalar, or be a suffix of lhs shape
// (broadcast over leading axes).
inline int64_t broadcast_period(const std::string& op, const Shape& a, const Shape& b) {
    if (a == b) return shape_numel(a);
    int64_t nb = shape_numel(b);
    if (nb == 1) return 1;
    if (b.size() <= a.size()) {
        bool suffix = true;
        for (size_t i = 0; i < b.size(); ++i)
            if (a[a.size() - b.size() + i] != b[i]) suffix = false;
        if (suffix) return nb;
    }
    shape_error(op, a, b);
}

}  // namespace detail

// ----------------------------------------------------------------------
// elementwise binary ops, rhs broadcast over leading axes
// ----------------------------------------------------------------------

inline Tensor binary_op(const std::string& name, const Tensor& a, const Tensor& b,
                        double (*fwd)(double, double), double (*dfa)(double, double),
                        double (*dfb)(double, double)) {
    const size_t period = static_cast<size_t>(detail::broadcast_period(name, a.shape, b.shape));
    Tensor out = Tensor::zeros(a.shape);
    {
        const auto& av = a.values();
        const auto& bv = b.values();
        auto& ov = out.values();
        for (size_t i = 0; i < av.size(); ++i) ov[i] = fwd(av[i], bv[i % period]);
    }
    Tape* tp = detail::tape_of(a, b);
    if (!tp) return out;
    const int an = a.on_tape() ? a.node : -1;
    const int bn = b.on_tape() ? b.node : -1;
    auto ad = a.data, bd = b.data;
    return tp->record(std::move(out), [=](int on) -> std::function<void(Tape&)> {
        return [=](Tape& t) {
            const auto& go = t.grad_ref(on);
            if (an >= 0) {
                auto& ga = t.grad_ref(an);
                for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * dfa((*ad)[i], (*bd)[i % period]);
            }
            if (bn >= 0) {
                auto& gb = t.grad_ref(bn);
                for (size_t i = 0; i < go.size(); ++i) gb[i % period] += go[i] * dfb((*ad)[i], (*bd)[i % period]);
            }
        };
    });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}
inline Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(
        "div", a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

// ----------------------------------------------------------------------
// elementwise unary ops
// ----------------------------------------------------------------------

inline Tensor unary_op(const Tensor& x, const std::function<double(double)>& fwd,
                       const std::function<double(double)>& dfdx) {
    Tensor out = Tensor::zeros(x.shape);
    {
        const auto& xv = x.values();
        auto& ov = out.values();
        for (size_t i = 0; i < xv.size(); ++i) ov[i] = fwd(xv[i]);
    }
    if (!x.on_tape()) return out;
    const int xn = x.node;
    auto xd = x.data;
    return x.tape->record(std::move(out), [=](int on) -> std::function<void(Tape&)> {
        return [=](Tape& t) {
            const auto& go = t.grad_ref(on);
            auto& gx = t.grad_ref(xn);
            for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * dfdx((*xd)[i]);
        };
    });
}

// Elementwise map with a caller-supplied derivative that replaces analytic
// differentiation. The backward multiplies incoming gradient by grad_fn(x).
inline Tensor custom_unary(const Tensor& x, const std::function<double(double)>& forward_fn,
                           const std::function<double(double)>& grad_fn) {
    return unary_op(x, forward_fn, grad_fn);
}

inline Tensor sigmoid(const Tensor& x) {
    return unary_op(
        x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double v) {
            double s = 1.0 / (1.0 + std::exp(-v));
            return s * (1.0 - s);
        });
}
inline Tensor tanh(const Tensor& x) {
    return unary_op(x, [](double v) { return std::tanh(v); },
                    [](double v) {
                        double th = std::tanh(v);
                        return 1.0 - th * th;
                    });
}
inline Tensor relu(const Tensor& x) {
    return unary_op(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}
inline Tensor exp(const Tensor& x) {
    return unary_op(x, [](double v) { return std::exp(v); }, [](double v) { return std::exp(v); });
}
inline Tensor abs(const Tensor& x) {
    return unary_op(x, [](double v) { return std::fabs(v); },
                    [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}
inline Tensor neg(const Tensor& x) {
    return unary_op(x, [](double v) { return -v; }, [](double) { return -1.0; });
}
inline Tensor scale(const Tensor& x, double c) {
    return unary_op(x, [c](double v) { return c * v; }, [c](double) { return c; });
}
inline Tensor add_scalar(const Tensor& x, double c) {
    return unary_op(x, [c](double v) { return v + c; }, [](double) { return 1.0; });
}

// ----------------------------------------------------------------------
// reshape / transpose / concat / slice
// ----------------------------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape new_shape) {
    if (shape_numel(new_shape) != x.numel())
        detail::shape_error("reshape", x.shape, new_shape);
    Tensor out = Tensor::from(std::move(new_shape), x.values());
    if (!x.on_tape()) return out;
    const int xn = x.node;
    return x.tape->record(std::move(out), [=](int on) -> std::function<void(Tape&)> {
        return [=](Tape& t) {
            const auto& go = t.grad_ref(on);
            auto& gx = t.grad_ref(xn);
            for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
        };
    });
}

// swap the trailing two axes
inline Tensor transpose(const Tensor& x) {
    if (x.shape.size() < 2) throw std::invalid_argument("transpose: rank < 2, shape " + shape_str(x.shape));
    const int64_t r = x.shape[x.shape.size() - 2];
    const int64_t c = x.shape[x.shape.size() - 1];
    const int64_t batch = x.numel() / (r * c);
    Shape os = x.shape;
    std::swap(os[os.size() - 2], os[os.size() - 1]);
    Tensor out = Tensor::zeros(os);
    {
        const auto& xv = x.values();
        auto& ov = out.values();
        for (int64_t b = 0; b < batch; ++b)
            for (int64_t i = 0; i < r; ++i)
                for (int64_t j = 0; j < c; ++j) ov[(b * c + j) * r + i] = xv[(b * r + i) * c + j];
    }
    if (!x.on_tape()) return out;
    const int xn = x.node;
    return x.tape->record(std::move(out), [=](int on) -> std::function<void(Tape&)> {
        return [=](Tape& t) {
            const auto& go = t.grad_ref(on);
            auto& gx = t.grad_ref(xn);
            for (int64_t b = 0; b < batch; ++b)
                for (int64_t i = 0; i < r; ++i)
                    for (int64_t j = 0; j < c; ++j) gx[(b * r + i) * c + j] += go[(b * c + j) * r + i];
        };
    });
}

inline Tensor concat(const Tensor& a, const Tensor& b, int axis) {
    if (a.shape.size() != b.shape.size()) detail::shape_error("concat", a.shape, b.shape);
    const int rank = static_cast<int>(a.shape.size());
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) throw std::invalid_argument("concat: axis out of range");
    for (int i = 0; i < rank; ++i)
        if (i != axis && a.shape[i] != b.shape[i]) detail::shape_error("concat", a.shape, b.shape);
    Shape os = a.shape;
    os[axis] += b.shape[axis];
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= a.shape[i];
    for (int i = axis + 1; i < rank; ++i) inner *= a.shape[i];
    const int64_t wa = a.shape[axis] * inner, wb = b.shape[axis] * inner;
    Tensor out = Tensor::zeros(os);
    {
        const auto& av = a.values();
        const auto& bv = b.values();
        auto& ov = out.values();
        for (int64_t o = 0; o < outer; ++o) {
            std::copy(av.begin() + o * wa, av.begin() + (o + 1) * wa, ov.begin() + o * (wa + wb));
            std::copy(bv.begin() + o * wb, bv.begin() + (o + 1) * wb, ov.begin() + o * (wa + wb) + wa);
        }
    }
    Tape* tp = detail::tape_of(a, b);
    if (!tp) return out;
    const int an = a.on_tape() ? a.node : -1;
    const int bn = b.on_tape() ? b.node : -1;
    return tp->record(std::move(out), [=](int on) -> std::function<void(Tape&)> {
        return [=](Tape& t) {
            const auto& go = t.grad_ref(on);
            for (int64_t o = 0; o < outer; ++o) {
                if (an >= 0) {
                    auto& ga = t.grad_ref(an);
                    for (int64_t i = 0; i < wa; ++i) ga[o * wa + i] += go[o * (wa + wb) + i];
                }
                if (bn >= 0) {
                    auto& gb = t.grad_ref(bn);
                    for (int64_t i = 0; i < wb; ++i) gb[o * wb + i] += go[o * (wa + wb) + wa + i];
                }
            }
        };
    });
}

// select index i along axis 0
inline Tensor slice0(const Tensor& x, int64_t i) {
    if (x.shape.empty() || i < 0 || i >= x.shape[0])
        throw std::invalid_argument("slice0: index " + std::to_string(i) + " out of range for shape " +
                                    shape_str(x.shape));
    Shape os(x.shape.begin() + 1, x.shape.end());
    if (os.empty()) os = {1};
    const int64_t w = shape_numel(os);
    Tensor out = Tensor::from(os, std::vector<double>(x.values().begin() + i * w, x.values().begin() + (i + 1) * w));
    if (!x.on_tape()) return out;
    const int xn = x.node;
    return x.tape->record(std::move(out), [=](int on) -> std::function<void(Tape&)> {
        return [=](Tape& t) {
            const auto& go = t.grad_ref(on);
            auto& gx = t.grad_ref(xn);
            for (int64_t k = 0; k < w; ++k) gx[i * w + k] += go[k];
        };
    });
}

// ----------------------------------------------------------------------
// reductions
// ----------------------------------------------------------------------

inline Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    Tensor out = Tensor::scalar(s);
    if (!x.on_tape()) return out;
    const int xn = x.node;
    const int64_t n = x.numel();
    return x.tape->record(std::move(out), [=](int on) -> std::function<void(Tape&)> {
        return [=](Tape& t) {
            const double g = t.grad_ref(on)[0];
            auto& gx = t.grad_ref(xn);
            for (int64_t i = 0; i < n; ++i) gx[i] += g;
        };
    });
}

inline Tensor mean_all(const Tensor& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.numel())); }

inline Tensor sum_axis(const Tensor& x, int axis) {
    const int rank = static_cast<int>(x.shape.size());
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) throw std::invalid_argument("sum_axis: axis out of range");
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.shape[i];
    for (int i = axis + 1; i < rank; ++i) inner *= x.shape[i];
    const int64_t ax = x.shape[axis];
    Shape os;
    for (int i = 0; i < rank; ++i)
        if (i != axis) os.push_back(x.shape[i]);
    if (os.empty()) os = {1};
    Tensor out = Tensor::zeros(os);
    {
        const auto& xv = x.values();
        auto& ov = out.values();
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t a = 0; a < ax; ++a)
                for (int64_t i = 0; i < inner; ++i) ov[o * inner + i] += xv[(o * ax + a) * inner + i];
    }
    if (!x.on_tape()) return out;
    const int xn = x.node;
    return x.tape->record(std::move(out), [=](int on) -> std::function<void(Tape&)> {
        return [=](Tape& t) {
            const auto& go = t.grad_ref(on);
            auto& gx = t.grad_ref(xn);
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t a = 0; a < ax; ++a)
                    for (int64_t i = 0; i < inner; ++i) gx[(o * ax + a) * inner + i] += go[o * inner + i];
        };
    });
}

// ----------------------------------------------------------------------
// matmul on the trailing two axes; a 2-D operand broadcasts over the other
// side's leading batch axes
// ----------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape.size() < 2 || b.shape.size() < 2) detail::shape_error("matmul", a.shape, b.shape);
    const int64_t m = a.shape[a.shape.size() - 2];
    const int64_t k = a.shape[a.shape.size() - 1];
    const int64_t k2 = b.shape[b.shape.size() - 2];
    const int64_t n = b.shape[b.shape.size() - 1];
    if (k != k2) detail::shape_error("matmul", a.shape, b.shape);
    const int64_t ba = a.numel() / (m * k);
    const int64_t bb = b.numel() / (k * n);
    int64_t batch;
    Shape os;
    if (ba == bb) {
        batch = ba;
        os = a.shape;
        os[os.size() - 1] = n;
    } else if (ba == 1) {
        batch = bb;
        os = b.shape;
        os[os.size() - 2] = m;
        os[os.size() - 1] = n;
    } else if (bb == 1) {
        batch = ba;
        os = a.shape;
        os[os.size() - 1] = n;
    } else {
        detail::shape_error("matmul", a.shape, b.shape);
    }
    Tensor out = Tensor::zeros(os);
    const auto& av = a.values();
    const auto& bv = b.values();
    {
        auto& ov = out.values();
        for (int64_t s = 0; s < batch; ++s) {
            const double* ap = av.data() + (ba == 1 ? 0 : s * m * k);
            const double* bp = bv.data() + (bb == 1 ? 0 : s * k * n);
            double* op = ov.data() + s * m * n;
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < n; ++j) {
                    double acc = 0.0;
                    for (int64_t l = 0; l < k; ++l) acc += ap[i * k + l] * bp[l * n + j];
                    op[i * n + j] = acc;
                }
        }
    }
    Tape* tp = detail::tape_of(a, b);
    if (!tp) return out;
    const int an = a.on_tape() ? a.node : -1;
    const int bn = b.on_tape() ? b.node : -1;
    auto ad = a.data, bd = b.data;
    return tp->record(std::move(out), [=](int on) -> std::function<void(Tape&)> {
        return [=](Tape& t) {
            const auto& go = t.grad_ref(on);
            for (int64_t s = 0; s < batch; ++s) {
                const double* ap = ad->data() + (ba == 1 ? 0 : s * m * k);
                const double* bp = bd->data() + (bb == 1 ? 0 : s * k * n);
                const double* gp = go.data() + s * m * n;
                if (an >= 0) {
                    double* gap = t.grad_ref(an).data() + (ba == 1 ? 0 : s * m * k);
                    for (int64_t i = 0; i < m; ++i)
                        for (int64_t l = 0; l < k; ++l) {
                            double acc = 0.0;
                            for (int64_t j = 0; j < n; ++j) acc += gp[i * n + j] * bp[l * n + j];
                            gap[i * k + l] += acc;
                        }
                }
                if (bn >= 0) {
                    double* gbp = t.grad_ref(bn).data() + (bb == 1 ? 0 : s * k * n);
                    for (int64_t l = 0; l < k; ++l)
                        for (int64_t j = 0; j < n; ++j) {
                            double acc = 0.0;
                            for (int64_t i = 0; i < m; ++i) acc += ap[i * k + l] * gp[i * n + j];
                            gbp[l * n + j] += acc;
                        }
                }
            }
        };
    });
}

// x (.., in) · W (in, out) + b (out)
inline Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) { return add(matmul(x, w), b); }

// ----------------------------------------------------------------------
// 2-D convolution, channels-first, stride 1, zero "same" padding
// input (C_in, H, W), kernel (C_out, C_in, kh, kw), bias (C_out)
// ----------------------------------------------------------------------

inline Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
    if (input.shape.size() != 3 || kernel.shape.size() != 4) detail::shape_error("conv2d", input.shape, kernel.shape);
    const int64_t ci = input.shape[0], h = input.shape[1], w = input.shape[2];
    const int64_t co = kernel.shape[0], kh = kernel.shape[2], kw = kernel.shape[3];
    if (kernel.shape[1] != ci) detail::shape_error("conv2d", input.shape, kernel.shape);
    if (bias.numel() != co) detail::shape_error("conv2d bias", bias.shape, kernel.shape);
    const int64_t ph = kh / 2, pw = kw / 2;
    Tensor out = Tensor::zeros({co, h, w});
    const auto& iv = input.values();
    const auto& kv = kernel.values();
    const auto& bv = bias.values();
    {
        auto& ov = out.values();
        for (int64_t o = 0; o < co; ++o)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x) {
                    double acc = bv[o];
                    for (int64_t c = 0; c < ci; ++c)
                        for (int64_t u = 0; u < kh; ++u) {
                            const int64_t iy = y + u - ph;
                            if (iy < 0 || iy >= h) continue;
                            for (int64_t v = 0; v < kw; ++v) {
                                const int64_t ix = x + v - pw;
                                if (ix < 0 || ix >= w) continue;
                                acc += iv[(c * h + iy) * w + ix] * kv[((o * ci + c) * kh + u) * kw + v];
                            }
                        }
                    ov[(o * h + y) * w + x] = acc;
                }
    }
    Tape* tp = detail::tape_of(input, kernel);
    if (bias.on_tape()) {
        if (tp && tp != bias.tape) throw std::invalid_argument("conv2d: operands recorded on different tapes");
        tp = bias.tape;
    }
    if (!tp) return out;
    const int in_n = input.on_tape() ? input.node : -1;
    const int k_n = kernel.on_tape() ? kernel.node : -1;
    const int b_n = bias.on_tape() ? bias.node : -1;
    auto id = input.data, kd = kernel.data;
    return tp->record(std::move(out), [=](int on) -> std::function<void(Tape&)> {
        return [=](Tape& t) {
            const auto& go = t.grad_ref(on);
            for (int64_t o = 0; o < co; ++o)
                for (int64_t y = 0; y < h; ++y)
                    for (int64_t x = 0; x < w; ++x) {
                        const double g = go[(o * h + y) * w + x];
                        if (g == 0.0) continue;
                        if (b_n >= 0) t.grad_ref(b_n)[o] += g;
                        for (int64_t c = 0; c < ci; ++c)
                            for (int64_t u = 0; u < kh; ++u) {
                                const int64_t iy = y + u - ph;
                                if (iy < 0 || iy >= h) continue;
                                for (int64_t v = 0; v < kw; ++v) {
                                    const int64_t ix = x + v - pw;
                                    if (ix < 0 || ix >= w) continue;
                                    if (in_n >= 0)
                                        t.grad_ref(in_n)[(c * h + iy) * w + ix] +=
                                            g * (*kd)[((o * ci + c) * kh + u) * kw + v];
                                    if (k_n >= 0)
                                        t.grad_ref(k_n)[((o * ci + c) * kh + u) * kw + v] +=
                                            g * (*id)[(c * h + iy) * w + ix];
                                }
                            }
                    }
        };
    });
}

// ----------------------------------------------------------------------
// row normalization with zero-degree guard: out[i,:] = A[i,:]/rowsum(i),
// rows with rowsum < eps become all-zero
// ----------------------------------------------------------------------

inline Tensor row_normalize(const Tensor& a, double eps = 1e-8) {
    if (a.shape.size() != 2) throw std::invalid_argument("row_normalize: expected matrix, got " + shape_str(a.shape));
    const int64_t r = a.shape[0], c = a.shape[1];
    Tensor out = Tensor::zeros(a.shape);
    const auto& av = a.values();
    std::vector<double> deg(static_cast<size_t>(r), 0.0);
    {
        auto& ov = out.values();
        for (int64_t i = 0; i < r; ++i) {
            double d = 0.0;
            for (int64_t j = 0; j < c; ++j) d += av[i * c + j];
            deg[static_cast<size_t>(i)] = d;
            if (d >= eps)
                for (int64_t j = 0; j < c; ++j) ov[i * c + j] = av[i * c + j] / d;
        }
    }
    if (!a.on_tape()) return out;
    const int an = a.node;
    auto ad = a.data;
    return a.tape->record(std::move(out), [=](int on) -> std::function<void(Tape&)> {
        return [=](Tape& t) {
            const auto& go = t.grad_ref(on);
            auto& ga = t.grad_ref(an);
            for (int64_t i = 0; i < r; ++i) {
                const double d = deg[static_cast<size_t>(i)];
                if (d < eps) continue;
                double dot = 0.0;
                for (int64_t j = 0; j < c; ++j) dot += go[i * c + j] * (*ad)[i * c + j];
                for (int64_t j = 0; j < c; ++j) ga[i * c + j] += go[i * c + j] / d - dot / (d * d);
            }
        };
    });
}

// ----------------------------------------------------------------------
// finite-difference verification harness
// ----------------------------------------------------------------------

// f builds a scalar loss from a taped copy of x. Returns the max over
// coordinates of |analytic - central difference| / max(1, |central|).
inline double finite_diff_check(const std::function<Tensor(Tape&, const Tensor&)>& f, const Tensor& x,
                                double h = 1e-5) {
    Tape tape;
    Tensor xt = tape.leaf(x.shape, x.values());
    Tensor loss = f(tape, xt);
    tape.backward(loss);
    std::vector<double> analytic = tape.grad(xt);

    double max_err = 0.0;
    std::vector<double> base = x.values();
    for (size_t i = 0; i < base.size(); ++i) {
        double fp, fm;
        {
            Tape tp;
            std::vector<double> v = base;
            v[i] += h;
            fp = f(tp, tp.leaf(x.shape, v)).item();
        }
        {
            Tape tm;
            std::vector<double> v = base;
            v[i] -= h;
            fm = f(tm, tm.leaf(x.shape, v)).item();
        }
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("finite_diff_check: non-finite value at coordinate " + std::to_string(i));
        const double fd = (fp - fm) / (2.0 * h);
        const double err = std::fabs(analytic[i] - fd) / std::max(1.0, std::fabs(fd));
        max_err = std::max(max_err, err);
    }
    return max_err;
}

}  // namespace bgslf
