#include "paseg/tape.hpp"

#include <algorithm>
#include <cmath>

namespace paseg {

namespace {
// Normalization floor: keeps the backward pass finite if an embedding ever
// collapses while leaving healthy vectors untouched.
constexpr double kNormFloor = 1e-9;
}  // namespace

int Tape::push(Tensor value, std::function<void()> back) {
    nodes_.push_back(Node{std::move(value), Tensor{}, std::move(back), false});
    return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf(Tensor value) { return push(std::move(value), nullptr); }

Tensor& Tape::grad_mut(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.touched) {
        n.grad = Tensor(n.value.shape, 0.0);
        n.touched = true;
    }
    return n.grad;
}

const Tensor& Tape::grad(int id) { return grad_mut(id); }

void Tape::backward(int loss_id) {
    if (consumed_) throw TapeConsumedError("tape already consumed by a previous backward pass");
    Node& loss = nodes_[static_cast<size_t>(loss_id)];
    if (loss.value.size() != 1) throw ShapeError("backward expects a scalar loss node");
    if (!std::isfinite(loss.value.data[0])) throw NonFiniteError("loss value is not finite");
    consumed_ = true;
    grad_mut(loss_id).data[0] = 1.0;
    for (int i = loss_id; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (n.touched && n.back) n.back();
    }
}

const Tensor& Tape::check4d(int id, const char* what) const {
    const Tensor& t = val(id);
    if (t.ndim() != 4) throw ShapeError(std::string(what) + " expects a (B,C,H,W) tensor");
    return t;
}

// ---------------------------------------------------------------------
// convolution

namespace {

void conv_forward(const Tensor& x, const Tensor& w, const Tensor& bias, Tensor& y) {
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int O = w.dim(0), K = w.dim(2), pad = K / 2;
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < B; ++b) {
        for (int oc = 0; oc < O; ++oc) {
            double* yp = &y.data[((size_t(b) * O + oc) * H) * W];
            const double bv = bias.data[size_t(oc)];
            for (int i = 0; i < H * W; ++i) yp[i] = bv;
            for (int ic = 0; ic < C; ++ic) {
                const double* xp = &x.data[((size_t(b) * C + ic) * H) * W];
                for (int ky = 0; ky < K; ++ky) {
                    const int dy = ky - pad;
                    const int y_lo = std::max(0, -dy), y_hi = std::min(H, H - dy);
                    for (int kx = 0; kx < K; ++kx) {
                        const int dx = kx - pad;
                        const double wv = w.data[((size_t(oc) * C + ic) * K + ky) * K + kx];
                        const int x_lo = std::max(0, -dx), x_hi = std::min(W, W - dx);
                        for (int yy = y_lo; yy < y_hi; ++yy) {
                            const double* src = xp + size_t(yy + dy) * W + dx;
                            double* dst = yp + size_t(yy) * W;
                            for (int xx = x_lo; xx < x_hi; ++xx) dst[xx] += wv * src[xx];
                        }
                    }
                }
            }
        }
    }
}

void conv_backward_input(const Tensor& w, const Tensor& gy, Tensor& gx) {
    const int B = gx.dim(0), C = gx.dim(1), H = gx.dim(2), W = gx.dim(3);
    const int O = w.dim(0), K = w.dim(2), pad = K / 2;
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < B; ++b) {
        for (int ic = 0; ic < C; ++ic) {
            double* gxp = &gx.data[((size_t(b) * C + ic) * H) * W];
            for (int oc = 0; oc < O; ++oc) {
                const double* gyp = &gy.data[((size_t(b) * O + oc) * H) * W];
                for (int ky = 0; ky < K; ++ky) {
                    const int dy = ky - pad;
                    const int y_lo = std::max(0, -dy), y_hi = std::min(H, H - dy);
                    for (int kx = 0; kx < K; ++kx) {
                        const int dx = kx - pad;
                        const double wv = w.data[((size_t(oc) * C + ic) * K + ky) * K + kx];
                        const int x_lo = std::max(0, -dx), x_hi = std::min(W, W - dx);
                        for (int yy = y_lo; yy < y_hi; ++yy) {
                            double* dst = gxp + size_t(yy + dy) * W + dx;
                            const double* src = gyp + size_t(yy) * W;
                            for (int xx = x_lo; xx < x_hi; ++xx) dst[xx] += wv * src[xx];
                        }
                    }
                }
            }
        }
    }
}

void conv_backward_weights(const Tensor& x, const Tensor& gy, Tensor& gw, Tensor& gb) {
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int O = gw.dim(0), K = gw.dim(2), pad = K / 2;
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < O; ++oc) {
        double bsum = 0.0;
        for (int b = 0; b < B; ++b) {
            const double* gyp = &gy.data[((size_t(b) * O + oc) * H) * W];
            for (int i = 0; i < H * W; ++i) bsum += gyp[i];
        }
        gb.data[size_t(oc)] += bsum;
        for (int ic = 0; ic < C; ++ic) {
            for (int ky = 0; ky < K; ++ky) {
                const int dy = ky - pad;
                const int y_lo = std::max(0, -dy), y_hi = std::min(H, H - dy);
                for (int kx = 0; kx < K; ++kx) {
                    const int dx = kx - pad;
                    const int x_lo = std::max(0, -dx), x_hi = std::min(W, W - dx);
                    double acc = 0.0;
                    for (int b = 0; b < B; ++b) {
                        const double* xp = &x.data[((size_t(b) * C + ic) * H) * W];
                        const double* gyp = &gy.data[((size_t(b) * O + oc) * H) * W];
                        for (int yy = y_lo; yy < y_hi; ++yy) {
                            const double* srcx = xp + size_t(yy + dy) * W + dx;
                            const double* srcg = gyp + size_t(yy) * W;
                            for (int xx = x_lo; xx < x_hi; ++xx) acc += srcx[xx] * srcg[xx];
                        }
                    }
                    gw.data[((size_t(oc) * C + ic) * K + ky) * K + kx] += acc;
                }
            }
        }
    }
}

}  // namespace

int Tape::conv2d(int x, int w, int bias) {
    const Tensor& xt = check4d(x, "conv2d input");
    const Tensor& wt = val(w);
    const Tensor& bt = val(bias);
    if (wt.ndim() != 4 || wt.dim(2) != wt.dim(3) || (wt.dim(2) != 1 && wt.dim(2) != 3))
        throw ShapeError("conv2d expects (O,C,k,k) weights with k in {1,3}");
    if (wt.dim(1) != xt.dim(1)) throw ShapeError("conv2d channel mismatch");
    if (bt.ndim() != 1 || bt.dim(0) != wt.dim(0)) throw ShapeError("conv2d bias mismatch");

    Tensor y({xt.dim(0), wt.dim(0), xt.dim(2), xt.dim(3)});
    conv_forward(xt, wt, bt, y);
    return push(std::move(y), [this, x, w, bias, out = size()]() {
        const Tensor& gy = grad_mut(out);
        conv_backward_input(val(w), gy, grad_mut(x));
        conv_backward_weights(val(x), gy, grad_mut(w), grad_mut(bias));
    });
}

int Tape::relu(int x) {
    const Tensor& xt = val(x);
    Tensor y(xt.shape);
    for (int64_t i = 0; i < xt.size(); ++i) y.data[size_t(i)] = std::max(0.0, xt.data[size_t(i)]);
    return push(std::move(y), [this, x, out = size()]() {
        const Tensor& gy = grad_mut(out);
        const Tensor& xt = val(x);
        Tensor& gx = grad_mut(x);
        for (int64_t i = 0; i < xt.size(); ++i)
            if (xt.data[size_t(i)] > 0.0) gx.data[size_t(i)] += gy.data[size_t(i)];
    });
}

int Tape::sigmoid(int x) {
    const Tensor& xt = val(x);
    Tensor y(xt.shape);
    for (int64_t i = 0; i < xt.size(); ++i) {
        const double v = xt.data[size_t(i)];
        y.data[size_t(i)] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                     : std::exp(v) / (1.0 + std::exp(v));
    }
    return push(std::move(y), [this, x, out = size()]() {
        const Tensor& gy = grad_mut(out);
        const Tensor& yt = val(out);
        Tensor& gx = grad_mut(x);
        for (int64_t i = 0; i < yt.size(); ++i) {
            const double s = yt.data[size_t(i)];
            gx.data[size_t(i)] += gy.data[size_t(i)] * s * (1.0 - s);
        }
    });
}

int Tape::avgpool2(int x) {
    const Tensor& xt = check4d(x, "avgpool2");
    const int B = xt.dim(0), C = xt.dim(1), H = xt.dim(2), W = xt.dim(3);
    if (H % 2 != 0 || W % 2 != 0) throw ShapeError("avgpool2 requires even spatial dims");
    Tensor y({B, C, H / 2, W / 2});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int yo = 0; yo < H / 2; ++yo)
                for (int xo = 0; xo < W / 2; ++xo)
                    y.at4(b, c, yo, xo) =
                        0.25 * (xt.at4(b, c, 2 * yo, 2 * xo) + xt.at4(b, c, 2 * yo, 2 * xo + 1) +
                                xt.at4(b, c, 2 * yo + 1, 2 * xo) +
                                xt.at4(b, c, 2 * yo + 1, 2 * xo + 1));
    return push(std::move(y), [this, x, out = size()]() {
        const Tensor& gy = grad_mut(out);
        Tensor& gx = grad_mut(x);
        const int B = gy.dim(0), C = gy.dim(1), Ho = gy.dim(2), Wo = gy.dim(3);
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c)
                for (int yo = 0; yo < Ho; ++yo)
                    for (int xo = 0; xo < Wo; ++xo) {
                        const double g = 0.25 * gy.at4(b, c, yo, xo);
                        gx.at4(b, c, 2 * yo, 2 * xo) += g;
                        gx.at4(b, c, 2 * yo, 2 * xo + 1) += g;
                        gx.at4(b, c, 2 * yo + 1, 2 * xo) += g;
                        gx.at4(b, c, 2 * yo + 1, 2 * xo + 1) += g;
                    }
    });
}

int Tape::upsample_nearest2(int x) {
    const Tensor& xt = check4d(x, "upsample_nearest2");
    const int B = xt.dim(0), C = xt.dim(1), H = xt.dim(2), W = xt.dim(3);
    Tensor y({B, C, H * 2, W * 2});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int yo = 0; yo < H; ++yo)
                for (int xo = 0; xo < W; ++xo) {
                    const double v = xt.at4(b, c, yo, xo);
                    y.at4(b, c, 2 * yo, 2 * xo) = v;
                    y.at4(b, c, 2 * yo, 2 * xo + 1) = v;
                    y.at4(b, c, 2 * yo + 1, 2 * xo) = v;
                    y.at4(b, c, 2 * yo + 1, 2 * xo + 1) = v;
                }
    return push(std::move(y), [this, x, out = size()]() {
        const Tensor& gy = grad_mut(out);
        Tensor& gx = grad_mut(x);
        const int B = gx.dim(0), C = gx.dim(1), H = gx.dim(2), W = gx.dim(3);
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c)
                for (int yo = 0; yo < H; ++yo)
                    for (int xo = 0; xo < W; ++xo)
                        gx.at4(b, c, yo, xo) +=
                            gy.at4(b, c, 2 * yo, 2 * xo) + gy.at4(b, c, 2 * yo, 2 * xo + 1) +
                            gy.at4(b, c, 2 * yo + 1, 2 * xo) + gy.at4(b, c, 2 * yo + 1, 2 * xo + 1);
    });
}

int Tape::concat_channels(int a, int b) {
    const Tensor& at = check4d(a, "concat_channels");
    const Tensor& bt = check4d(b, "concat_channels");
    if (at.dim(0) != bt.dim(0) || at.dim(2) != bt.dim(2) || at.dim(3) != bt.dim(3))
        throw ShapeError("concat_channels requires matching batch and spatial dims");
    const int B = at.dim(0), Ca = at.dim(1), Cb = bt.dim(1), H = at.dim(2), W = at.dim(3);
    Tensor y({B, Ca + Cb, H, W});
    for (int bi = 0; bi < B; ++bi) {
        for (int c = 0; c < Ca; ++c)
            for (int yy = 0; yy < H; ++yy)
                for (int xx = 0; xx < W; ++xx) y.at4(bi, c, yy, xx) = at.at4(bi, c, yy, xx);
        for (int c = 0; c < Cb; ++c)
            for (int yy = 0; yy < H; ++yy)
                for (int xx = 0; xx < W; ++xx) y.at4(bi, Ca + c, yy, xx) = bt.at4(bi, c, yy, xx);
    }
    return push(std::move(y), [this, a, b, Ca, out = size()]() {
        const Tensor& gy = grad_mut(out);
        Tensor& ga = grad_mut(a);
        Tensor& gb = grad_mut(b);
        const int B = gy.dim(0), H = gy.dim(2), W = gy.dim(3);
        const int Cb = gy.dim(1) - Ca;
        for (int bi = 0; bi < B; ++bi) {
            for (int c = 0; c < Ca; ++c)
                for (int yy = 0; yy < H; ++yy)
                    for (int xx = 0; xx < W; ++xx) ga.at4(bi, c, yy, xx) += gy.at4(bi, c, yy, xx);
            for (int c = 0; c < Cb; ++c)
                for (int yy = 0; yy < H; ++yy)
                    for (int xx = 0; xx < W; ++xx)
                        gb.at4(bi, c, yy, xx) += gy.at4(bi, Ca + c, yy, xx);
        }
    });
}

int Tape::l2norm_channels(int x) {
    const Tensor& xt = check4d(x, "l2norm_channels");
    const int B = xt.dim(0), C = xt.dim(1), H = xt.dim(2), W = xt.dim(3);
    Tensor y(xt.shape);
    for (int b = 0; b < B; ++b)
        for (int yy = 0; yy < H; ++yy)
            for (int xx = 0; xx < W; ++xx) {
                double n2 = 0.0;
                for (int c = 0; c < C; ++c) {
                    const double v = xt.at4(b, c, yy, xx);
                    n2 += v * v;
                }
                const double d = std::max(std::sqrt(n2), kNormFloor);
                for (int c = 0; c < C; ++c) y.at4(b, c, yy, xx) = xt.at4(b, c, yy, xx) / d;
            }
    return push(std::move(y), [this, x, out = size()]() {
        const Tensor& gy = grad_mut(out);
        const Tensor& xt = val(x);
        const Tensor& yt = val(out);
        Tensor& gx = grad_mut(x);
        const int B = xt.dim(0), C = xt.dim(1), H = xt.dim(2), W = xt.dim(3);
        for (int b = 0; b < B; ++b)
            for (int yy = 0; yy < H; ++yy)
                for (int xx = 0; xx < W; ++xx) {
                    double n2 = 0.0, gdoty = 0.0;
                    for (int c = 0; c < C; ++c) {
                        const double v = xt.at4(b, c, yy, xx);
                        n2 += v * v;
                        gdoty += gy.at4(b, c, yy, xx) * yt.at4(b, c, yy, xx);
                    }
                    const double n = std::sqrt(n2);
                    if (n > kNormFloor) {
                        for (int c = 0; c < C; ++c)
                            gx.at4(b, c, yy, xx) +=
                                (gy.at4(b, c, yy, xx) - yt.at4(b, c, yy, xx) * gdoty) / n;
                    } else {
                        for (int c = 0; c < C; ++c)
                            gx.at4(b, c, yy, xx) += gy.at4(b, c, yy, xx) / kNormFloor;
                    }
                }
    });
}

int Tape::slice_plane(int x, int b, int c) {
    const Tensor& xt = check4d(x, "slice_plane");
    const int H = xt.dim(2), W = xt.dim(3);
    if (b < 0 || b >= xt.dim(0) || c < 0 || c >= xt.dim(1))
        throw ShapeError("slice_plane index out of range");
    Tensor y({H, W});
    for (int yy = 0; yy < H; ++yy)
        for (int xx = 0; xx < W; ++xx) y.data[size_t(yy) * W + xx] = xt.at4(b, c, yy, xx);
    return push(std::move(y), [this, x, b, c, out = size()]() {
        const Tensor& gy = grad_mut(out);
        Tensor& gx = grad_mut(x);
        const int H = gy.dim(0), W = gy.dim(1);
        for (int yy = 0; yy < H; ++yy)
            for (int xx = 0; xx < W; ++xx) gx.at4(b, c, yy, xx) += gy.data[size_t(yy) * W + xx];
    });
}

int Tape::soft_box(int p) {
    const Tensor& pt = val(p);
    if (pt.ndim() != 2) throw ShapeError("soft_box expects a (H,W) field");
    const int H = pt.dim(0), W = pt.dim(1);

    std::vector<double> row_max(static_cast<size_t>(H), 0.0), col_max(static_cast<size_t>(W), 0.0);
    std::vector<int> row_arg(static_cast<size_t>(H), 0), col_arg(static_cast<size_t>(W), 0);
    for (int y = 0; y < H; ++y) {
        double best = pt.data[size_t(y) * W];
        int arg = 0;
        for (int x = 1; x < W; ++x) {
            const double v = pt.data[size_t(y) * W + x];
            if (v > best) {
                best = v;
                arg = x;
            }
        }
        row_max[size_t(y)] = best;
        row_arg[size_t(y)] = arg;
    }
    for (int x = 0; x < W; ++x) {
        double best = pt.data[size_t(x)];
        int arg = 0;
        for (int y = 1; y < H; ++y) {
            const double v = pt.data[size_t(y) * W + x];
            if (v > best) {
                best = v;
                arg = y;
            }
        }
        col_max[size_t(x)] = best;
        col_arg[size_t(x)] = arg;
    }

    Tensor box({H, W});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            box.data[size_t(y) * W + x] = row_max[size_t(y)] * col_max[size_t(x)];

    return push(std::move(box), [this, p, row_max, col_max, row_arg, col_arg, out = size()]() {
        const Tensor& gy = grad_mut(out);
        Tensor& gp = grad_mut(p);
        const int H = gy.dim(0), W = gy.dim(1);
        for (int y = 0; y < H; ++y) {
            double gr = 0.0;
            for (int x = 0; x < W; ++x) gr += gy.data[size_t(y) * W + x] * col_max[size_t(x)];
            gp.data[size_t(y) * W + row_arg[size_t(y)]] += gr;
        }
        for (int x = 0; x < W; ++x) {
            double gc = 0.0;
            for (int y = 0; y < H; ++y) gc += gy.data[size_t(y) * W + x] * row_max[size_t(y)];
            gp.data[size_t(col_arg[size_t(x)]) * W + x] += gc;
        }
    });
}

int Tape::soft_dice_loss(int a, const BinaryMask& y, double eps) {
    const Tensor& at = val(a);
    if (at.ndim() != 2 || at.dim(0) != y.height() || at.dim(1) != y.width())
        throw DimensionMismatchError("soft_dice_loss field/mask dimensions differ");
    const int H = at.dim(0), W = at.dim(1);
    double inter = 0.0, sum_a = 0.0;
    int64_t sum_y = 0;
    for (int yy = 0; yy < H; ++yy)
        for (int xx = 0; xx < W; ++xx) {
            const double v = at.data[size_t(yy) * W + xx];
            sum_a += v;
            if (y.at(xx, yy)) {
                inter += v;
                ++sum_y;
            }
        }
    const double num = 2.0 * inter + eps;
    const double den = sum_a + double(sum_y) + eps;
    Tensor out({1});
    out.data[0] = 1.0 - num / den;
    // The mask is captured by value so the tape never outlives its labels.
    return push(std::move(out), [this, a, y, num, den, out_id = size()]() {
        const double g = grad_mut(out_id).data[0];
        const Tensor& at = val(a);
        Tensor& ga = grad_mut(a);
        const int H = at.dim(0), W = at.dim(1);
        for (int yy = 0; yy < H; ++yy)
            for (int xx = 0; xx < W; ++xx) {
                const double num_d = y.at(xx, yy) ? 2.0 : 0.0;
                // d(1 - num/den)/da = -(num_d*den - num) / den^2
                ga.data[size_t(yy) * W + xx] -= g * (num_d * den - num) / (den * den);
            }
    });
}

int Tape::gather_vec(int x, int b, int px, int py) {
    const Tensor& xt = check4d(x, "gather_vec");
    const int D = xt.dim(1);
    if (b < 0 || b >= xt.dim(0) || px < 0 || px >= xt.dim(3) || py < 0 || py >= xt.dim(2))
        throw ShapeError("gather_vec location out of range");
    Tensor v({D});
    for (int c = 0; c < D; ++c) v.data[size_t(c)] = xt.at4(b, c, py, px);
    return push(std::move(v), [this, x, b, px, py, out = size()]() {
        const Tensor& gy = grad_mut(out);
        Tensor& gx = grad_mut(x);
        const int D = gy.dim(0);
        for (int c = 0; c < D; ++c) gx.at4(b, c, py, px) += gy.data[size_t(c)];
    });
}

int Tape::gather_patch_mean(int x, int b, int cx, int cy) {
    const Tensor& xt = check4d(x, "gather_patch_mean");
    const int D = xt.dim(1);
    if (b < 0 || b >= xt.dim(0) || cx < 1 || cx >= xt.dim(3) - 1 || cy < 1 || cy >= xt.dim(2) - 1)
        throw ShapeError("gather_patch_mean window out of range");
    Tensor v({D});
    for (int c = 0; c < D; ++c) {
        double s = 0.0;
        for (int j = -1; j <= 1; ++j)
            for (int i = -1; i <= 1; ++i) s += xt.at4(b, c, cy + j, cx + i);
        v.data[size_t(c)] = s / 9.0;
    }
    return push(std::move(v), [this, x, b, cx, cy, out = size()]() {
        const Tensor& gy = grad_mut(out);
        Tensor& gx = grad_mut(x);
        const int D = gy.dim(0);
        for (int c = 0; c < D; ++c) {
            const double g = gy.data[size_t(c)] / 9.0;
            for (int j = -1; j <= 1; ++j)
                for (int i = -1; i <= 1; ++i) gx.at4(b, c, cy + j, cx + i) += g;
        }
    });
}

int Tape::l2norm_vec(int v) {
    const Tensor& vt = val(v);
    if (vt.ndim() != 1) throw ShapeError("l2norm_vec expects a vector");
    double n2 = 0.0;
    for (double x : vt.data) n2 += x * x;
    const double d = std::max(std::sqrt(n2), kNormFloor);
    Tensor y(vt.shape);
    for (size_t i = 0; i < vt.data.size(); ++i) y.data[i] = vt.data[i] / d;
    return push(std::move(y), [this, v, out = size()]() {
        const Tensor& gy = grad_mut(out);
        const Tensor& vt = val(v);
        const Tensor& yt = val(out);
        Tensor& gv = grad_mut(v);
        double n2 = 0.0, gdoty = 0.0;
        for (size_t i = 0; i < vt.data.size(); ++i) {
            n2 += vt.data[i] * vt.data[i];
            gdoty += gy.data[i] * yt.data[i];
        }
        const double n = std::sqrt(n2);
        if (n > kNormFloor) {
            for (size_t i = 0; i < vt.data.size(); ++i)
                gv.data[i] += (gy.data[i] - yt.data[i] * gdoty) / n;
        } else {
            for (size_t i = 0; i < vt.data.size(); ++i) gv.data[i] += gy.data[i] / kNormFloor;
        }
    });
}

int Tape::infonce(const std::vector<int>& anchors, const std::vector<int>& positives,
                  const std::vector<int>& negatives, double tau) {
    if (!(tau > 0.0)) throw InvalidParamError("tau must be positive");
    if (anchors.empty()) throw InsufficientSamplesError("anchor");
    if (positives.empty()) throw InsufficientSamplesError("positive");
    if (negatives.empty()) throw InsufficientSamplesError("negative");
    const int D = val(anchors[0]).dim(0);
    for (int id : anchors)
        if (val(id).ndim() != 1 || val(id).dim(0) != D) throw ShapeError("embedding dim mismatch");
    for (int id : positives)
        if (val(id).ndim() != 1 || val(id).dim(0) != D) throw ShapeError("embedding dim mismatch");
    for (int id : negatives)
        if (val(id).ndim() != 1 || val(id).dim(0) != D) throw ShapeError("embedding dim mismatch");

    const size_t A = anchors.size(), P = positives.size(), N = negatives.size();
    auto dot = [this, D](int u, int w) {
        const Tensor& ut = val(u);
        const Tensor& wt = val(w);
        double s = 0.0;
        for (int i = 0; i < D; ++i) s += ut.data[size_t(i)] * wt.data[size_t(i)];
        return s;
    };

    double loss = 0.0;
    for (size_t a = 0; a < A; ++a) {
        double neg_max = -1e300;
        std::vector<double> zn(N);
        for (size_t n = 0; n < N; ++n) {
            zn[n] = dot(anchors[a], negatives[n]) / tau;
            neg_max = std::max(neg_max, zn[n]);
        }
        for (size_t p = 0; p < P; ++p) {
            const double z = dot(anchors[a], positives[p]) / tau;
            const double m = std::max(z, neg_max);
            double denom = std::exp(z - m);
            for (size_t n = 0; n < N; ++n) denom += std::exp(zn[n] - m);
            loss += -(z - m - std::log(denom));
        }
    }
    const double pairs = double(A) * double(P);
    Tensor out({1});
    out.data[0] = loss / pairs;

    return push(std::move(out),
                [this, anchors, positives, negatives, tau, pairs, D, out_id = size()]() {
        const double g = grad_mut(out_id).data[0] / pairs;
        const size_t A = anchors.size(), P = positives.size(), N = negatives.size();
        auto vec = [this](int id) { return val(id).data.data(); };
        for (size_t a = 0; a < A; ++a) {
            const double* qa = vec(anchors[a]);
            double neg_max = -1e300;
            std::vector<double> zn(N);
            for (size_t n = 0; n < N; ++n) {
                const double* qn = vec(negatives[n]);
                double s = 0.0;
                for (int i = 0; i < D; ++i) s += qa[i] * qn[i];
                zn[n] = s / tau;
                neg_max = std::max(neg_max, zn[n]);
            }
            std::vector<double> gt_an(N, 0.0);  // dL/d(z_an), summed over positives
            double* ga = grad_mut(anchors[a]).data.data();
            for (size_t p = 0; p < P; ++p) {
                const double* qp = vec(positives[p]);
                double z = 0.0;
                for (int i = 0; i < D; ++i) z += qa[i] * qp[i];
                z /= tau;
                const double m = std::max(z, neg_max);
                double denom = std::exp(z - m);
                for (size_t n = 0; n < N; ++n) denom += std::exp(zn[n] - m);
                const double p_pos = std::exp(z - m) / denom;
                const double gz = g * (p_pos - 1.0) / tau;
                for (int i = 0; i < D; ++i) ga[i] += gz * qp[i];
                double* gp = grad_mut(positives[p]).data.data();
                for (int i = 0; i < D; ++i) gp[i] += gz * qa[i];
                for (size_t n = 0; n < N; ++n)
                    gt_an[n] += g * (std::exp(zn[n] - m) / denom) / tau;
            }
            for (size_t n = 0; n < N; ++n) {
                const double* qn = vec(negatives[n]);
                double* gn = grad_mut(negatives[n]).data.data();
                for (int i = 0; i < D; ++i) {
                    ga[i] += gt_an[n] * qn[i];
                    gn[i] += gt_an[n] * qa[i];
                }
            }
        }
    });
}

int Tape::add(int a, int b) {
    const Tensor& at = val(a);
    const Tensor& bt = val(b);
    if (!at.same_shape(bt)) throw ShapeError("add requires matching shapes");
    Tensor y(at.shape);
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] = at.data[i] + bt.data[i];
    return push(std::move(y), [this, a, b, out = size()]() {
        const Tensor& gy = grad_mut(out);
        Tensor& ga = grad_mut(a);
        Tensor& gb = grad_mut(b);
        for (size_t i = 0; i < gy.data.size(); ++i) {
            ga.data[i] += gy.data[i];
            gb.data[i] += gy.data[i];
        }
    });
}

int Tape::scale(int a, double k) {
    const Tensor& at = val(a);
    Tensor y(at.shape);
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] = k * at.data[i];
    return push(std::move(y), [this, a, k, out = size()]() {
        const Tensor& gy = grad_mut(out);
        Tensor& ga = grad_mut(a);
        for (size_t i = 0; i < gy.data.size(); ++i) ga.data[i] += k * gy.data[i];
    });
}

int Tape::sum_scalars(const std::vector<int>& ids) {
    if (ids.empty()) throw EmptyInputError("sum_scalars over no nodes");
    double s = 0.0;
    for (int id : ids) {
        if (val(id).size() != 1) throw ShapeError("sum_scalars expects scalar nodes");
        s += val(id).data[0];
    }
    Tensor out({1});
    out.data[0] = s;
    return push(std::move(out), [this, ids, out_id = size()]() {
        const double g = grad_mut(out_id).data[0];
        for (int id : ids) grad_mut(id).data[0] += g;
    });
}

int Tape::mean_scalars(const std::vector<int>& ids) {
    return scale(sum_scalars(ids), 1.0 / double(ids.size()));
}

int Tape::dot_const(int x, Tensor weights) {
    const Tensor& xt = val(x);
    if (!xt.same_shape(weights)) throw ShapeError("dot_const requires matching shapes");
    double s = 0.0;
    for (size_t i = 0; i < weights.data.size(); ++i) s += xt.data[i] * weights.data[i];
    Tensor out({1});
    out.data[0] = s;
    return push(std::move(out), [this, x, w = std::move(weights), out_id = size()]() {
        const double g = grad_mut(out_id).data[0];
        Tensor& gx = grad_mut(x);
        for (size_t i = 0; i < w.data.size(); ++i) gx.data[i] += g * w.data[i];
    });
}

}  // namespace paseg
