#pragma once
#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "exosim/rng.hpp"
#include "exosim/threads.hpp"

// Convolutional force regressor, implemented directly: 3x3 same-padding
// convolutions via im2col + GEMM, batch normalization, ReLU, 2x2 max pooling
// with argmax routing, dense layers, L1 loss, full backpropagation. The
// scalar type is a template parameter: training runs in float, gradient
// verification in double.

namespace exosim {

struct NetworkSpec {
    int input_size = 128;
    int input_channels = 1;
    std::vector<int> conv_filters{64, 64, 32, 32, 8}; // 3x3 kernels; BN+ReLU+pool
                                                      // after all but the last
    std::vector<int> dense_units{32, 32, 64};
    int outputs = 8;

    static NetworkSpec standard() { return NetworkSpec{}; }

    int conv_blocks() const { return int(conv_filters.size()); }
    bool block_has_pool(int i) const { return i + 1 < conv_blocks(); }

    // spatial size after block i (pooling halves, floor)
    int size_after(int i) const {
        int s = input_size;
        for (int k = 0; k <= i; ++k)
            if (block_has_pool(k)) s /= 2;
        return s;
    }
    int flatten_size() const {
        return conv_filters.back() * size_after(conv_blocks() - 1) * size_after(conv_blocks() - 1);
    }

    uint64_t hash() const {
        std::string s = std::to_string(input_size) + ":" + std::to_string(input_channels) + ":";
        for (int f : conv_filters) s += std::to_string(f) + ",";
        s += ":";
        for (int d : dense_units) s += std::to_string(d) + ",";
        s += ":" + std::to_string(outputs);
        return fnv1a(s.data(), s.size());
    }
};

// batched activation tensor, NCHW contiguous
template <typename T>
struct Batch {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> v;

    void resize(int n_, int c_, int h_, int w_, bool zero = false) {
        n = n_;
        c = c_;
        h = h_;
        w = w_;
        v.resize(size_t(n) * size_t(c) * size_t(h) * size_t(w));
        if (zero) std::fill(v.begin(), v.end(), T(0));
    }
    size_t sample_size() const { return size_t(c) * size_t(h) * size_t(w); }
    T* sample(int i) { return v.data() + size_t(i) * sample_size(); }
    const T* sample(int i) const { return v.data() + size_t(i) * sample_size(); }
};

namespace nn_detail {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

// 3x3 same-padding im2col. The buffer viewed as a column-major (h*w) x (c*9)
// matrix holds in row p the 3x3 neighborhood of output pixel p; each kernel
// offset writes one contiguous shifted copy of the image plane.
template <typename T>
void im2col3(const T* x, int c, int h, int w, T* cols) {
    const size_t hw = size_t(h) * size_t(w);
    for (int ci = 0; ci < c; ++ci) {
        const T* src = x + size_t(ci) * hw;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                T* dst = cols + (size_t(ci) * 9 + size_t(ky) * 3 + size_t(kx)) * hw;
                const int dy = ky - 1, dx = kx - 1;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + dy;
                    T* drow = dst + size_t(y) * size_t(w);
                    if (sy < 0 || sy >= h) {
                        std::fill(drow, drow + w, T(0));
                        continue;
                    }
                    const T* srow = src + size_t(sy) * size_t(w);
                    const int x0 = std::max(0, -dx);    // first valid output x
                    const int x1 = std::min(w, w - dx); // one past the last
                    if (x0 > 0) std::fill(drow, drow + x0, T(0));
                    if (x1 > x0)
                        std::memcpy(drow + x0, srow + x0 + dx, size_t(x1 - x0) * sizeof(T));
                    if (x1 < w) std::fill(drow + x1, drow + w, T(0));
                }
            }
        }
    }
}

// transpose scatter of im2col3: accumulate patch gradients back into an image
template <typename T>
void col2im3(const T* cols, int c, int h, int w, T* x) {
    const size_t hw = size_t(h) * size_t(w);
    for (int ci = 0; ci < c; ++ci) {
        T* dst = x + size_t(ci) * hw;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const T* src = cols + (size_t(ci) * 9 + size_t(ky) * 3 + size_t(kx)) * hw;
                const int dy = ky - 1, dx = kx - 1;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h) continue;
                    const T* srow = src + size_t(y) * size_t(w);
                    T* drow = dst + size_t(sy) * size_t(w);
                    const int x0 = std::max(0, -dx);
                    const int x1 = std::min(w, w - dx);
                    for (int xx = x0; xx < x1; ++xx) drow[xx + dx] += srow[xx];
                }
            }
        }
    }
}


// 2x2 stride-2 max pooling with argmax bookkeeping; ties keep the first
// maximum in scan order
template <typename T>
void max_pool2_forward(const Batch<T>& x, Batch<T>& y, std::vector<int>& argmax, int jobs) {
    const int c = x.c, h = x.h, w = x.w;
    const int oh = h / 2, ow = w / 2;
    y.resize(x.n, c, oh, ow);
    argmax.resize(size_t(x.n) * size_t(c) * size_t(oh) * size_t(ow));
    parallel_for(size_t(x.n), jobs, [&](size_t i) {
        const T* src = x.sample(int(i));
        T* dst = y.sample(int(i));
        int* am = argmax.data() + i * size_t(c) * size_t(oh) * size_t(ow);
        for (int ch = 0; ch < c; ++ch) {
            const T* sc = src + size_t(ch) * size_t(h) * size_t(w);
            for (int yy = 0; yy < oh; ++yy)
                for (int xx = 0; xx < ow; ++xx) {
                    int best = (2 * yy) * w + 2 * xx;
                    T bv = sc[best];
                    const int cand[3] = {(2 * yy) * w + 2 * xx + 1, (2 * yy + 1) * w + 2 * xx,
                                         (2 * yy + 1) * w + 2 * xx + 1};
                    for (int k = 0; k < 3; ++k)
                        if (sc[cand[k]] > bv) {
                            bv = sc[cand[k]];
                            best = cand[k];
                        }
                    const size_t o = size_t(ch) * size_t(oh) * size_t(ow) +
                                     size_t(yy) * size_t(ow) + size_t(xx);
                    dst[o] = bv;
                    am[o] = ch * h * w + best;
                }
        }
    });
}

// gradient routed exclusively to the recorded argmax positions
template <typename T>
void max_pool2_backward(const Batch<T>& dy, Batch<T>& dx, const std::vector<int>& argmax,
                        int jobs) {
    const size_t per = dy.sample_size();
    parallel_for(size_t(dy.n), jobs, [&](size_t i) {
        const T* src = dy.sample(int(i));
        T* dst = dx.sample(int(i));
        const int* am = argmax.data() + i * per;
        for (size_t k = 0; k < per; ++k) dst[size_t(am[k])] += src[k];
    });
}

} // namespace nn_detail

// caches of one forward pass needed by backpropagation; reusable across
// steps so the large buffers are allocated once
template <typename T>
struct Workspace {
    Batch<T> input;
    std::vector<Batch<T>> conv_out;  // pre-BN
    std::vector<Batch<T>> act;       // post BN+ReLU, pre-pool
    std::vector<Batch<T>> block_out; // after pool (or after conv for the last block)
    std::vector<std::vector<int>> pool_argmax;
    std::vector<std::vector<T>> bn_mu, bn_sigma_inv; // batch stats of this pass
    std::vector<nn_detail::Mat<T>> dense_in;         // input of each dense layer (in x n)
    nn_detail::Mat<T> output;                        // outputs x n
    std::vector<T> colbuf, dcolbuf;                  // im2col scratch (jobs == 1)
    Batch<T> dblock, dconv, dx;                      // backward scratch
};

template <typename T>
class Network {
public:
    using Mat = nn_detail::Mat<T>;

    NetworkSpec spec;
    std::vector<T> params;
    std::vector<T> stats; // running mean/var per BN channel
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;

    explicit Network(const NetworkSpec& s = NetworkSpec::standard()) : spec(s) { build_layout(); }

    int param_count() const { return int(params.size()); }

    // fan-in scaled uniform init, zero biases, BN scale 1 / shift 0
    void init(Rng& rng) {
        std::fill(params.begin(), params.end(), T(0));
        std::fill(stats.begin(), stats.end(), T(0));
        int in_c = spec.input_channels;
        for (int b = 0; b < spec.conv_blocks(); ++b) {
            const int out_c = spec.conv_filters[size_t(b)];
            const int fan_in = in_c * 9;
            const double bound = 1.0 / std::sqrt(double(fan_in));
            for (int i = 0; i < out_c * fan_in; ++i)
                params[size_t(conv_w_off_[size_t(b)] + i)] = T(rng.uniform(-bound, bound));
            if (has_bn(b)) {
                for (int c = 0; c < out_c; ++c) {
                    params[size_t(bn_gamma_off_[size_t(b)] + c)] = T(1);
                    stats[size_t(bn_var_off_[size_t(b)] + c)] = T(1);
                }
            }
            in_c = out_c;
        }
        int in_d = spec.flatten_size();
        for (size_t l = 0; l < dense_dims_.size(); ++l) {
            const int out_d = dense_dims_[l];
            const double bound = 1.0 / std::sqrt(double(in_d));
            for (int i = 0; i < out_d * in_d; ++i)
                params[size_t(dense_w_off_[l] + i)] = T(rng.uniform(-bound, bound));
            in_d = out_d;
        }
    }

    // Forward pass. train=true uses batch statistics and updates the running
    // moments; train=false (eval) uses the stored running moments.
    const Mat& forward(const Batch<T>& input, bool train, Workspace<T>& ws, int jobs = 1) {
        if (input.n == 0) throw std::invalid_argument("empty batch");
        const int n = input.n;
        ws.input = input;
        ws.conv_out.resize(size_t(spec.conv_blocks()));
        ws.act.resize(size_t(spec.conv_blocks()));
        ws.block_out.resize(size_t(spec.conv_blocks()));
        ws.pool_argmax.resize(size_t(spec.conv_blocks()));
        ws.bn_mu.resize(size_t(spec.conv_blocks()));
        ws.bn_sigma_inv.resize(size_t(spec.conv_blocks()));

        const Batch<T>* cur = &ws.input;
        int size = spec.input_size;
        int in_c = spec.input_channels;
        for (int b = 0; b < spec.conv_blocks(); ++b) {
            const int out_c = spec.conv_filters[size_t(b)];
            Batch<T>& co = ws.conv_out[size_t(b)];
            co.resize(n, out_c, size, size);
            conv_forward(*cur, co, b, in_c, out_c, size, ws, jobs);

            // conv_out keeps the pre-BN values for backward; BN+ReLU operate
            // on a working copy
            const Batch<T>* stage = &co;
            if (has_bn(b)) {
                Batch<T>& a = ws.act[size_t(b)];
                a = co;
                bn_forward(a, b, train, ws.bn_mu[size_t(b)], ws.bn_sigma_inv[size_t(b)]);
                stage = &a;
            }
            Batch<T>& bo = ws.block_out[size_t(b)];
            if (spec.block_has_pool(b)) {
                pool_forward(*stage, bo, ws.pool_argmax[size_t(b)], jobs);
                size /= 2;
            } else {
                bo = *stage;
            }
            cur = &bo;
            in_c = out_c;
        }

        // flatten + dense stack
        const int nf = spec.flatten_size();
        ws.dense_in.resize(dense_dims_.size());
        Mat act(nf, n);
        for (int i = 0; i < n; ++i)
            std::memcpy(act.data() + size_t(i) * size_t(nf), cur->sample(i),
                        size_t(nf) * sizeof(T));
        for (size_t l = 0; l < dense_dims_.size(); ++l) {
            ws.dense_in[l] = act;
            const int out_d = dense_dims_[l];
            const int in_d = int(act.rows());
            Eigen::Map<const Mat> W(params.data() + dense_w_off_[l], out_d, in_d);
            Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bias(
                params.data() + dense_b_off_[l], out_d);
            Mat next = (W * act).colwise() + bias;
            if (l + 1 < dense_dims_.size()) // hidden layers ReLU, output linear
                next = next.cwiseMax(T(0));
            act = std::move(next);
        }
        ws.output = std::move(act);
        return ws.output;
    }

    // Mean absolute error over every output in the batch plus gradients.
    std::pair<double, std::vector<T>> loss_and_gradients(const Batch<T>& input, const Mat& labels,
                                                         Workspace<T>& ws, int jobs = 1) {
        const Mat& pred = forward(input, true, ws, jobs);
        const int n = input.n;
        const int no = spec.outputs;
        double loss = 0;
        Mat dout(no, n);
        const double scale = 1.0 / (double(n) * double(no));
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < no; ++k) {
                const double d = double(pred(k, i)) - double(labels(k, i));
                loss += std::abs(d) * scale;
                dout(k, i) = T((d > 0) - (d < 0)) * T(scale); // subgradient 0 at 0
            }
        return {loss, backward(ws, dout, jobs)};
    }

    std::pair<double, std::vector<T>> loss_and_gradients(const Batch<T>& input, const Mat& labels,
                                                         int jobs = 1) {
        Workspace<T> ws;
        return loss_and_gradients(input, labels, ws, jobs);
    }

    std::vector<T> backward(Workspace<T>& ws, const Mat& dout, int jobs = 1) {
        std::vector<T> grads(params.size(), T(0));
        const int n = ws.input.n;

        // dense stack
        Mat dact = dout;
        for (size_t l = dense_dims_.size(); l-- > 0;) {
            const Mat& x = ws.dense_in[l];
            const int out_d = dense_dims_[l];
            const int in_d = int(x.rows());
            Eigen::Map<const Mat> W(params.data() + dense_w_off_[l], out_d, in_d);
            Eigen::Map<Mat> dW(grads.data() + dense_w_off_[l], out_d, in_d);
            Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(grads.data() + dense_b_off_[l],
                                                               out_d);
            dW.noalias() = dact * x.transpose();
            db = dact.rowwise().sum();
            Mat dx = W.transpose() * dact;
            if (l > 0) {
                // x is the previous layer's ReLU output; gradient passes only
                // through its active entries
                for (int i = 0; i < n; ++i)
                    for (int k = 0; k < in_d; ++k)
                        if (x(k, i) <= T(0)) dx(k, i) = T(0);
            }
            dact = std::move(dx);
        }

        // unflatten into the last block's output gradient
        int size = spec.size_after(spec.conv_blocks() - 1);
        Batch<T>& dblock = ws.dblock;
        dblock.resize(n, spec.conv_filters.back(), size, size);
        const int nf = spec.flatten_size();
        for (int i = 0; i < n; ++i)
            std::memcpy(dblock.sample(i), dact.data() + size_t(i) * size_t(nf),
                        size_t(nf) * sizeof(T));

        for (int b = spec.conv_blocks() - 1; b >= 0; --b) {
            const int in_c = (b == 0) ? spec.input_channels : spec.conv_filters[size_t(b - 1)];
            const int out_c = spec.conv_filters[size_t(b)];
            const int out_size = size;
            const int conv_size = spec.block_has_pool(b) ? out_size * 2 : out_size;

            Batch<T>& dconv = ws.dconv; // gradient at this block's pre-pool stage
            if (spec.block_has_pool(b)) {
                dconv.resize(n, out_c, conv_size, conv_size, true);
                pool_backward(dblock, dconv, ws.pool_argmax[size_t(b)], jobs);
            } else {
                dconv = std::move(dblock);
            }

            if (has_bn(b)) {
                relu_bn_backward(ws.conv_out[size_t(b)], dconv, b, ws.bn_mu[size_t(b)],
                                 ws.bn_sigma_inv[size_t(b)], grads);
            }

            const Batch<T>& x = (b == 0) ? ws.input : ws.block_out[size_t(b - 1)];
            Batch<T>& dx = ws.dx;
            if (b > 0) dx.resize(n, in_c, conv_size, conv_size, true);
            conv_backward(x, dconv, b, in_c, out_c, conv_size, grads, b > 0 ? &dx : nullptr, ws,
                          jobs);
            dblock = std::move(dx);
            size = conv_size;
        }
        return grads;
    }

    // eval-mode forward for a single image
    std::vector<T> predict(const std::vector<T>& image, int jobs = 1) {
        Batch<T> b;
        b.resize(1, spec.input_channels, spec.input_size, spec.input_size);
        std::copy(image.begin(), image.end(), b.v.begin());
        Workspace<T> ws;
        const Mat& out = forward(b, false, ws, jobs);
        std::vector<T> r(size_t(spec.outputs));
        for (int k = 0; k < spec.outputs; ++k) r[size_t(k)] = out(k, 0);
        return r;
    }

    bool has_bn(int block) const { return spec.block_has_pool(block); }

private:
    // parameter layout
    std::vector<int> conv_w_off_, conv_b_off_, bn_gamma_off_, bn_beta_off_;
    std::vector<int> bn_mean_off_, bn_var_off_;
    std::vector<int> dense_w_off_, dense_b_off_;
    std::vector<int> dense_dims_; // hidden units plus the output layer

    void build_layout() {
        int off = 0, soff = 0;
        int in_c = spec.input_channels;
        for (int b = 0; b < spec.conv_blocks(); ++b) {
            const int out_c = spec.conv_filters[size_t(b)];
            conv_w_off_.push_back(off);
            off += out_c * in_c * 9;
            conv_b_off_.push_back(off);
            off += out_c;
            if (has_bn(b)) {
                bn_gamma_off_.push_back(off);
                off += out_c;
                bn_beta_off_.push_back(off);
                off += out_c;
                bn_mean_off_.push_back(soff);
                soff += out_c;
                bn_var_off_.push_back(soff);
                soff += out_c;
            } else {
                bn_gamma_off_.push_back(-1);
                bn_beta_off_.push_back(-1);
                bn_mean_off_.push_back(-1);
                bn_var_off_.push_back(-1);
            }
            in_c = out_c;
        }
        dense_dims_ = spec.dense_units;
        dense_dims_.push_back(spec.outputs);
        int in_d = spec.flatten_size();
        for (int out_d : dense_dims_) {
            dense_w_off_.push_back(off);
            off += out_d * in_d;
            dense_b_off_.push_back(off);
            off += out_d;
            in_d = out_d;
        }
        params.assign(size_t(off), T(0));
        stats.assign(size_t(soff), T(0));
    }

    void conv_forward(const Batch<T>& x, Batch<T>& y, int b, int in_c, int out_c, int size,
                      Workspace<T>& ws, int jobs) {
        const int hw = size * size;
        const int K = in_c * 9;
        Eigen::Map<const Mat> W(params.data() + conv_w_off_[size_t(b)], out_c, K);
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bias(
            params.data() + conv_b_off_[size_t(b)], out_c);
        auto one = [&](std::vector<T>& colbuf, int i) {
            colbuf.resize(size_t(K) * size_t(hw));
            nn_detail::im2col3(x.sample(i), in_c, size, size, colbuf.data());
            Eigen::Map<const Mat> colsT(colbuf.data(), hw, K); // (h*w) x K view
            Eigen::Map<Mat> out(y.sample(i), hw, out_c);       // channel-major sample
            out.noalias() = colsT * W.transpose();
            out.rowwise() += bias.transpose();
        };
        if (jobs == 1) {
            for (int i = 0; i < x.n; ++i) one(ws.colbuf, i);
        } else {
            parallel_for(size_t(x.n), jobs, [&](size_t i) {
                thread_local std::vector<T> colbuf;
                one(colbuf, int(i));
            });
        }
    }

    void conv_backward(const Batch<T>& x, const Batch<T>& dy, int b, int in_c, int out_c,
                       int size, std::vector<T>& grads, Batch<T>* dx, Workspace<T>& ws,
                       int jobs) {
        const int hw = size * size;
        const int K = in_c * 9;
        Eigen::Map<const Mat> W(params.data() + conv_w_off_[size_t(b)], out_c, K);
        Eigen::Map<Mat> dW(grads.data() + conv_w_off_[size_t(b)], out_c, K);
        Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(grads.data() + conv_b_off_[size_t(b)],
                                                           out_c);
        const int n = x.n;
        if (jobs == 1) {
            ws.colbuf.resize(size_t(K) * size_t(hw));
            ws.dcolbuf.resize(size_t(K) * size_t(hw));
            for (int i = 0; i < n; ++i) {
                nn_detail::im2col3(x.sample(i), in_c, size, size, ws.colbuf.data());
                Eigen::Map<const Mat> colsT(ws.colbuf.data(), hw, K);
                Eigen::Map<const Mat> dyT(dy.sample(i), hw, out_c);
                dW.noalias() += dyT.transpose() * colsT;
                db.noalias() += dyT.colwise().sum().transpose();
                if (dx) {
                    Eigen::Map<Mat> dcolsT(ws.dcolbuf.data(), hw, K);
                    dcolsT.noalias() = dyT * W;
                    nn_detail::col2im3(ws.dcolbuf.data(), in_c, size, size, dx->sample(i));
                }
            }
        } else {
            // per-sample partials reduced in sample order: bitwise identical
            // results for any thread count
            std::vector<Mat> dW_part(static_cast<size_t>(n));
            std::vector<Eigen::Matrix<T, Eigen::Dynamic, 1>> db_part(static_cast<size_t>(n));
            parallel_for(size_t(n), jobs, [&](size_t i) {
                thread_local std::vector<T> colbuf, dcolbuf;
                colbuf.resize(size_t(K) * size_t(hw));
                nn_detail::im2col3(x.sample(int(i)), in_c, size, size, colbuf.data());
                Eigen::Map<const Mat> colsT(colbuf.data(), hw, K);
                Eigen::Map<const Mat> dyT(dy.sample(int(i)), hw, out_c);
                dW_part[i].noalias() = dyT.transpose() * colsT;
                db_part[i] = dyT.colwise().sum().transpose();
                if (dx) {
                    dcolbuf.resize(size_t(K) * size_t(hw));
                    Eigen::Map<Mat> dcolsT(dcolbuf.data(), hw, K);
                    dcolsT.noalias() = dyT * W;
                    nn_detail::col2im3(dcolbuf.data(), in_c, size, size, dx->sample(int(i)));
                }
            });
            for (int i = 0; i < n; ++i) {
                dW += dW_part[size_t(i)];
                db += db_part[size_t(i)];
            }
        }
    }

    // BN + ReLU fused, in place; batch stats per channel over batch x spatial
    void bn_forward(Batch<T>& a, int b, bool train, std::vector<T>& mu_out,
                    std::vector<T>& sigma_inv_out) {
        const int c = a.c, hw = a.h * a.w, n = a.n;
        const double count = double(n) * double(hw);
        mu_out.assign(size_t(c), T(0));
        sigma_inv_out.assign(size_t(c), T(0));
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> gamma(
            params.data() + bn_gamma_off_[size_t(b)], c);
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> beta(
            params.data() + bn_beta_off_[size_t(b)], c);
        for (int ch = 0; ch < c; ++ch) {
            double mu, var;
            if (train) {
                double s = 0, ss = 0;
                for (int i = 0; i < n; ++i) {
                    Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> p(
                        a.sample(i) + size_t(ch) * size_t(hw), hw);
                    const auto pd = p.template cast<double>();
                    s += pd.sum();
                    ss += pd.square().sum();
                }
                mu = s / count;
                var = std::max(ss / count - mu * mu, 0.0);
                T& rm = stats[size_t(bn_mean_off_[size_t(b)] + ch)];
                T& rv = stats[size_t(bn_var_off_[size_t(b)] + ch)];
                rm = T((1.0 - bn_momentum) * double(rm) + bn_momentum * mu);
                rv = T((1.0 - bn_momentum) * double(rv) + bn_momentum * var);
            } else {
                mu = double(stats[size_t(bn_mean_off_[size_t(b)] + ch)]);
                var = double(stats[size_t(bn_var_off_[size_t(b)] + ch)]);
            }
            const double sinv = 1.0 / std::sqrt(var + bn_eps);
            mu_out[size_t(ch)] = T(mu);
            sigma_inv_out[size_t(ch)] = T(sinv);
            const T a1 = T(double(gamma(ch)) * sinv);
            const T a0 = T(double(beta(ch)) - double(gamma(ch)) * sinv * mu);
            for (int i = 0; i < n; ++i) {
                Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> p(
                    a.sample(i) + size_t(ch) * size_t(hw), hw);
                p = (a1 * p + a0).max(T(0)); // fused ReLU
            }
        }
    }

    // gradient through ReLU and BN given the stored pre-BN activations
    void relu_bn_backward(const Batch<T>& conv_out, Batch<T>& d, int b,
                          const std::vector<T>& mu, const std::vector<T>& sigma_inv,
                          std::vector<T>& grads) {
        const int c = d.c, hw = d.h * d.w, n = d.n;
        const double count = double(n) * double(hw);
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> gamma(
            params.data() + bn_gamma_off_[size_t(b)], c);
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> beta(
            params.data() + bn_beta_off_[size_t(b)], c);
        for (int ch = 0; ch < c; ++ch) {
            const T m = mu[size_t(ch)];
            const T sinv = sigma_inv[size_t(ch)];
            const T g = gamma(ch), bt = beta(ch);
            // y > 0  <=>  g*xhat + bt > 0, applied as a mask on dy
            const T a1 = g * sinv;
            const T a0 = bt - g * sinv * m;
            double dgamma = 0, dbeta = 0, sum_dy_x = 0;
            for (int i = 0; i < n; ++i) {
                Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> x(
                    conv_out.sample(i) + size_t(ch) * size_t(hw), hw);
                Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> dy(
                    d.sample(i) + size_t(ch) * size_t(hw), hw);
                dy = (a1 * x + a0 > T(0)).select(dy, T(0)); // ReLU subgradient
                dbeta += dy.template cast<double>().sum();
                sum_dy_x += (dy * x).template cast<double>().sum();
            }
            // dgamma = sum dy*xhat = sinv * (sum dy*x - m * sum dy)
            dgamma = double(sinv) * (sum_dy_x - double(m) * dbeta);
            grads[size_t(bn_gamma_off_[size_t(b)] + ch)] += T(dgamma);
            grads[size_t(bn_beta_off_[size_t(b)] + ch)] += T(dbeta);
            // dx = sinv/N * (N*g*dy - sum(g*dy) - xhat * sum(g*dy*xhat))
            const T c1 = T(double(sinv) / count);
            const T sum_dyg = T(double(g) * dbeta);
            const T sum_dyg_xhat = T(double(g) * dgamma);
            for (int i = 0; i < n; ++i) {
                Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> x(
                    conv_out.sample(i) + size_t(ch) * size_t(hw), hw);
                Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> dy(
                    d.sample(i) + size_t(ch) * size_t(hw), hw);
                dy = c1 * (T(count) * g * dy - sum_dyg - ((x - m) * sinv) * sum_dyg_xhat);
            }
        }
    }

    void pool_forward(const Batch<T>& x, Batch<T>& y, std::vector<int>& argmax, int jobs) {
        nn_detail::max_pool2_forward(x, y, argmax, jobs);
    }

    void pool_backward(const Batch<T>& dy, Batch<T>& dx, const std::vector<int>& argmax,
                       int jobs) {
        nn_detail::max_pool2_backward(dy, dx, argmax, jobs);
    }
};

} // namespace exosim
