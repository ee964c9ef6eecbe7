#pragma once
#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "exosim/dataset.hpp"
#include "exosim/image.hpp"
#include "exosim/nn.hpp"
#include "exosim/rng.hpp"

// Training loop: Adam on mini-batch L1 loss, validation every few epochs,
// learning-rate drop on plateau, early stopping on stalled validation,
// best-validation parameters returned. Deterministic for a fixed seed.

namespace exosim {

template <typename T>
struct Adam {
    double lr;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::vector<double> m, v;
    long t = 0;

    explicit Adam(size_t n, double lr_) : lr(lr_), m(n, 0.0), v(n, 0.0) {}

    void step(std::vector<T>& params, const std::vector<T>& grads) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, double(t));
        const double bc2 = 1.0 - std::pow(beta2, double(t));
        for (size_t i = 0; i < params.size(); ++i) {
            const double g = double(grads[i]);
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            params[i] = T(double(params[i]) - lr * mhat / (std::sqrt(vhat) + eps));
        }
    }
};

struct TrainConfig {
    int batch_size = 64;
    double learning_rate = 2e-4;
    double plateau_factor = 0.1;
    int plateau_patience_epochs = 10; // epochs without a new best validation loss
    int val_every_epochs = 5;
    int early_stop_checks = 5; // consecutive validation checks without improvement
    int max_epochs = 5000;
    double target_train_loss = -1.0; // optional stop threshold (memorization runs)
    uint64_t seed = 7;
    int jobs = 1;
};

struct TrainLogEntry {
    int epoch;
    double train_loss;
    double val_loss; // NaN before the first check
    double lr;
};

template <typename T>
struct LabeledSet {
    Batch<T> images;                    // all samples, NCHW
    nn_detail::Mat<T> labels;           // outputs x n
    int n() const { return images.n; }
};

template <typename T>
LabeledSet<T> load_split(const DatasetManifest& manifest, const std::string& root,
                         const std::string& split, const NetworkSpec& spec) {
    std::vector<const Frame*> sel;
    for (const auto& f : manifest.frames)
        if (split.empty() || f.split == split) sel.push_back(&f);
    LabeledSet<T> set;
    set.images.resize(int(sel.size()), spec.input_channels, spec.input_size, spec.input_size);
    set.labels.resize(spec.outputs, int(sel.size()));
    for (size_t i = 0; i < sel.size(); ++i) {
        const Image img = read_pgm(root + "/" + sel[i]->image);
        if (int(img.pix.size()) != spec.input_size * spec.input_size)
            throw std::runtime_error("unexpected image size: " + sel[i]->image);
        T* dst = set.images.sample(int(i));
        for (size_t k = 0; k < img.pix.size(); ++k) dst[k] = T(img.pix[k]);
        for (int c = 0; c < spec.outputs && c < 8; ++c)
            set.labels(c, int(i)) = T(sel[i]->labels[size_t(c)]);
    }
    return set;
}

template <typename T>
double eval_loss(Network<T>& net, const LabeledSet<T>& set, int batch_size, int jobs) {
    if (set.n() == 0) throw std::invalid_argument("empty split");
    double total = 0;
    Workspace<T> ws;
    Batch<T> b;
    for (int start = 0; start < set.n(); start += batch_size) {
        const int bn = std::min(batch_size, set.n() - start);
        b.resize(bn, set.images.c, set.images.h, set.images.w);
        std::memcpy(b.v.data(), set.images.sample(start), sizeof(T) * b.v.size());
        const auto& out = net.forward(b, false, ws, jobs);
        for (int i = 0; i < bn; ++i)
            for (int k = 0; k < net.spec.outputs; ++k)
                total += std::abs(double(out(k, i)) - double(set.labels(k, start + i)));
    }
    return total / (double(set.n()) * double(net.spec.outputs));
}

template <typename T>
struct TrainResult {
    std::vector<T> best_params, best_stats;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<TrainLogEntry> log;
    int epochs = 0;
    std::string stop_reason;
};

template <typename T>
TrainResult<T> train(Network<T>& net, const LabeledSet<T>& train_set,
                     const LabeledSet<T>* val_set, const TrainConfig& cfg) {
    if (train_set.n() == 0) throw std::invalid_argument("empty split");
    Rng rng(cfg.seed);
    Adam<T> opt(net.params.size(), cfg.learning_rate);
    TrainResult<T> res;
    res.best_params = net.params;
    res.best_stats = net.stats;

    std::vector<int> order(size_t(train_set.n()));
    for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);

    Workspace<T> ws;
    Batch<T> batch;
    double last_val = std::numeric_limits<double>::quiet_NaN();
    int epochs_since_best = 0;  // plateau counter, in epochs
    int checks_since_best = 0;  // early-stop counter, in validation checks

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        // Fisher-Yates shuffle
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_int(i)]);

        double epoch_loss = 0;
        for (int start = 0; start < train_set.n(); start += cfg.batch_size) {
            const int bn = std::min(cfg.batch_size, train_set.n() - start);
            batch.resize(bn, train_set.images.c, train_set.images.h, train_set.images.w);
            nn_detail::Mat<T> lab(net.spec.outputs, bn);
            for (int i = 0; i < bn; ++i) {
                std::memcpy(batch.sample(i), train_set.images.sample(order[size_t(start + i)]),
                            sizeof(T) * batch.sample_size());
                for (int k = 0; k < net.spec.outputs; ++k)
                    lab(k, i) = train_set.labels(k, order[size_t(start + i)]);
            }
            auto [loss, grads] = net.loss_and_gradients(batch, lab, ws, cfg.jobs);
            opt.step(net.params, grads);
            epoch_loss += loss * double(bn);
        }
        epoch_loss /= double(train_set.n());
        ++res.epochs;

        bool checked = false;
        bool improved = false;
        if (val_set && epoch % cfg.val_every_epochs == 0) {
            last_val = eval_loss(net, *val_set, cfg.batch_size, cfg.jobs);
            checked = true;
            if (last_val < res.best_val - 1e-12) {
                res.best_val = last_val;
                res.best_params = net.params;
                res.best_stats = net.stats;
                checks_since_best = 0;
                improved = true;
            } else {
                ++checks_since_best;
            }
        }
        res.log.push_back({epoch, epoch_loss, last_val, opt.lr});

        if (checked && checks_since_best >= cfg.early_stop_checks) {
            res.stop_reason = "early stop: validation loss stalled";
            break;
        }
        if (val_set) {
            epochs_since_best = improved ? 0 : epochs_since_best + 1;
            if (epochs_since_best >= cfg.plateau_patience_epochs) {
                opt.lr *= cfg.plateau_factor;
                epochs_since_best = 0;
            }
        }

        if (cfg.target_train_loss > 0 && epoch_loss < cfg.target_train_loss) {
            res.stop_reason = "target train loss reached";
            break;
        }
    }
    if (res.stop_reason.empty()) res.stop_reason = "max epochs";
    if (!val_set || !std::isfinite(res.best_val)) {
        res.best_params = net.params;
        res.best_stats = net.stats;
    }
    return res;
}

inline void write_train_log(const std::vector<TrainLogEntry>& log, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "epoch,train_loss,val_loss,lr\n";
    char buf[160];
    for (const auto& e : log) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.3g\n", e.epoch, e.train_loss, e.val_loss,
                      e.lr);
        f << buf;
    }
}

// --- checkpoint -------------------------------------------------------------

// layout: magic "EXOCKPT1" | u64 spec hash | spec ints | u64 param count |
// f32 params | u64 stats count | f32 stats     (little-endian throughout)
inline void save_checkpoint(const Network<float>& net, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    auto w64 = [&](uint64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); };
    auto w32 = [&](int32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
    f.write("EXOCKPT1", 8);
    w64(net.spec.hash());
    w32(net.spec.input_size);
    w32(net.spec.input_channels);
    w32(int32_t(net.spec.conv_filters.size()));
    for (int v : net.spec.conv_filters) w32(v);
    w32(int32_t(net.spec.dense_units.size()));
    for (int v : net.spec.dense_units) w32(v);
    w32(net.spec.outputs);
    w64(net.params.size());
    f.write(reinterpret_cast<const char*>(net.params.data()),
            std::streamsize(net.params.size() * 4));
    w64(net.stats.size());
    f.write(reinterpret_cast<const char*>(net.stats.data()),
            std::streamsize(net.stats.size() * 4));
}

inline Network<float> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (std::memcmp(magic, "EXOCKPT1", 8) != 0)
        throw std::runtime_error("bad checkpoint magic: " + path);
    auto r64 = [&]() {
        uint64_t v;
        f.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    auto r32 = [&]() {
        int32_t v;
        f.read(reinterpret_cast<char*>(&v), 4);
        return v;
    };
    const uint64_t hash = r64();
    NetworkSpec spec;
    spec.input_size = r32();
    spec.input_channels = r32();
    spec.conv_filters.resize(size_t(r32()));
    for (auto& v : spec.conv_filters) v = r32();
    spec.dense_units.resize(size_t(r32()));
    for (auto& v : spec.dense_units) v = r32();
    spec.outputs = r32();
    if (spec.hash() != hash) throw std::runtime_error("checkpoint spec hash mismatch");
    Network<float> net(spec);
    if (r64() != net.params.size()) throw std::runtime_error("checkpoint param count mismatch");
    f.read(reinterpret_cast<char*>(net.params.data()), std::streamsize(net.params.size() * 4));
    if (r64() != net.stats.size()) throw std::runtime_error("checkpoint stats count mismatch");
    f.read(reinterpret_cast<char*>(net.stats.data()), std::streamsize(net.stats.size() * 4));
    if (!f) throw std::runtime_error("truncated checkpoint: " + path);
    return net;
}

// eval-mode inference: drop the structurally-zero first output, clamp the
// rest to nonnegative magnitudes
template <typename T>
std::array<double, 7> predict_forces(Network<T>& net, const Image& img, int jobs = 1) {
    std::vector<T> pix(img.pix.size());
    for (size_t i = 0; i < pix.size(); ++i) pix[i] = T(img.pix[i]);
    const auto out = net.predict(pix, jobs);
    std::array<double, 7> f{};
    for (int i = 0; i < 7; ++i) f[size_t(i)] = std::max(0.0, double(out[size_t(i) + 1]));
    return f;
}

} // namespace exosim
