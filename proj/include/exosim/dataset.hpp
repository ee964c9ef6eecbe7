#pragma once
#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "exosim/image.hpp"
#include "exosim/render.hpp"
#include "exosim/rng.hpp"
#include "exosim/shapes.hpp"
#include "exosim/statics.hpp"

// Dataset synthesis: sweep each sampled shape through the triangular
// actuation schedule, render and label 50 resampled frames, drop frames with
// the suit tip below the fingertip, shuffle and split 60/20/20. Storage is
// line-delimited JSON plus content-addressed PGM images.

namespace exosim {

using nlohmann::json;

struct Frame {
    std::string image; // path relative to the dataset root
    std::array<double, 8> labels{};
    std::string shape_id;
    int scenario = 0;
    double u = 0.0;
    int sweep_index = 0;
    std::string split; // train | val | test, empty before assignment
    double rod_tip_z = 0.0;
    double finger_tip_z = 0.0;
    uint64_t image_hash = 0;
};

struct GenConfig {
    int instances_per_scenario = 10;
    double u_peak = 4.0;
    double sweep_step = 0.1; // continuation increment cap
    int frames_per_shape = 50;
    uint64_t seed = 1234;
    double contact_stiffness = 2000.0;
    int jobs = 1;
    std::string out_dir = "dataset";

    json to_json() const {
        return json{{"instances_per_scenario", instances_per_scenario},
                    {"u_peak", u_peak},
                    {"sweep_step", sweep_step},
                    {"frames_per_shape", frames_per_shape},
                    {"seed", seed},
                    {"contact_stiffness", contact_stiffness},
                    {"out_dir", out_dir}};
    }
    uint64_t hash() const {
        const std::string s = to_json().dump();
        return fnv1a(s.data(), s.size());
    }
};

struct DatasetManifest {
    uint64_t seed = 0;
    uint64_t config_hash = 0;
    int candidate_frames = 0;
    int retained_frames = 0;
    int failed_shapes = 0;
    std::vector<Frame> frames;
};

// --- actuation samples along the triangular path ------------------------

// `count` samples equally spaced along the 0 -> peak -> 0 path
inline std::vector<double> triangle_samples(double peak, int count) {
    std::vector<double> u(static_cast<size_t>(count));
    const double total = 2.0 * peak;
    for (int i = 0; i < count; ++i) {
        const double s = total * double(i) / double(count - 1);
        u[size_t(i)] = (s <= peak) ? s : total - s;
    }
    return u;
}

// Continuation schedule covering the triangular path with increments capped
// at `step`, containing every sample point; returns (schedule, sample index
// -> schedule index).
inline std::pair<std::vector<double>, std::vector<int>>
sampled_triangle_schedule(double peak, double step, int samples) {
    const auto su = triangle_samples(peak, samples);
    std::vector<double> path; // position along the unfolded path (0..2*peak)
    const int nu = int(std::ceil(peak / step - 1e-12));
    for (int i = 0; i <= nu; ++i) path.push_back(std::min(i * step, peak));
    for (int i = nu; i >= 0; --i) path.push_back(2.0 * peak - std::min(i * step, peak));
    const double total = 2.0 * peak;
    for (int i = 0; i < samples; ++i) path.push_back(total * double(i) / double(samples - 1));
    std::sort(path.begin(), path.end());
    path.erase(std::unique(path.begin(), path.end(),
                           [](double a, double b) { return std::abs(a - b) < 1e-12; }),
               path.end());

    std::vector<double> schedule(path.size());
    for (size_t i = 0; i < path.size(); ++i)
        schedule[i] = (path[i] <= peak) ? path[i] : total - path[i];

    std::vector<int> sample_at(size_t(samples), -1);
    for (int i = 0; i < samples; ++i) {
        const double s = total * double(i) / double(samples - 1);
        for (size_t k = 0; k < path.size(); ++k)
            if (std::abs(path[k] - s) < 1e-12) {
                sample_at[size_t(i)] = int(k);
                break;
            }
    }
    return {schedule, sample_at};
}

// --- per-shape generation ------------------------------------------------

struct ShapeFrames {
    std::vector<Frame> frames;
    std::vector<Image> images;
    bool failed = false;
    std::string fail_note;
};

inline ShapeFrames generate_shape_frames(const ShapeSpec& spec, const GenConfig& cfg,
                                         const RenderOptions& ropts = {}) {
    ShapeFrames out;
    CoupledSystem sys = make_system(make_rod(spec));
    sys.contact_stiffness = cfg.contact_stiffness;

    auto [schedule, sample_at] = sampled_triangle_schedule(cfg.u_peak, cfg.sweep_step,
                                                           cfg.frames_per_shape);
    const SweepResult sweep = actuation_sweep(sys, schedule);
    if (sweep.aborted) {
        out.failed = true;
        out.fail_note = "sweep aborted at index " + std::to_string(sweep.failure_index);
        return out;
    }
    for (int i = 0; i < cfg.frames_per_shape; ++i) {
        const SystemState& st = sweep.states[size_t(sample_at[size_t(i)])];
        Frame fr;
        fr.shape_id = spec.id;
        fr.scenario = spec.scenario;
        fr.u = st.u;
        fr.sweep_index = i;
        // C_0 sits on the anchored joint and is excluded from the labels
        fr.labels[0] = 0.0;
        for (int c = 1; c < 8; ++c) fr.labels[size_t(c)] = st.contact.magnitude(c);
        fr.rod_tip_z = rod_kinematics(sys.rod, st.q, false).station_g.back().r.z();
        fr.finger_tip_z = finger_fk(sys.finger, st.theta).fingertip.z();
        Image img = render_scene(sys.rod, st.q, sys.finger, st.theta, ropts);
        fr.image_hash = image_content_hash(img);
        out.frames.push_back(std::move(fr));
        out.images.push_back(std::move(img));
    }
    return out;
}

// keep frames whose suit tip is not strictly below the fingertip
inline std::vector<Frame> filter_frames(const std::vector<Frame>& frames) {
    std::vector<Frame> kept;
    kept.reserve(frames.size());
    for (const auto& f : frames)
        if (!(f.rod_tip_z < f.finger_tip_z)) kept.push_back(f);
    return kept;
}

// uniform shuffle then 60/20/20 cut
inline void split_dataset(DatasetManifest& m, Rng& rng) {
    std::vector<size_t> idx(m.frames.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
    const size_t n = idx.size();
    const size_t n_train = size_t(std::floor(0.6 * double(n)));
    const size_t n_val = size_t(std::floor(0.2 * double(n)));
    for (size_t k = 0; k < n; ++k) {
        Frame& f = m.frames[idx[k]];
        f.split = (k < n_train) ? "train" : (k < n_train + n_val) ? "val" : "test";
    }
}

// --- serialization -------------------------------------------------------

inline json frame_to_json(const Frame& f) {
    return json{{"image", f.image},
                {"labels", f.labels},
                {"shape_id", f.shape_id},
                {"scenario", f.scenario},
                {"u", f.u},
                {"sweep_index", f.sweep_index},
                {"split", f.split},
                {"rod_tip_z", f.rod_tip_z},
                {"finger_tip_z", f.finger_tip_z},
                {"image_hash", f.image_hash}};
}

inline Frame frame_from_json(const json& j) {
    Frame f;
    f.image = j.at("image").get<std::string>();
    f.labels = j.at("labels").get<std::array<double, 8>>();
    f.shape_id = j.at("shape_id").get<std::string>();
    f.scenario = j.at("scenario").get<int>();
    f.u = j.at("u").get<double>();
    f.sweep_index = j.at("sweep_index").get<int>();
    f.split = j.at("split").get<std::string>();
    f.rod_tip_z = j.at("rod_tip_z").get<double>();
    f.finger_tip_z = j.at("finger_tip_z").get<double>();
    f.image_hash = j.at("image_hash").get<uint64_t>();
    return f;
}

inline void write_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    json head{{"type", "dataset"},
              {"seed", m.seed},
              {"config_hash", m.config_hash},
              {"candidate_frames", m.candidate_frames},
              {"retained_frames", m.retained_frames},
              {"failed_shapes", m.failed_shapes}};
    f << head.dump() << "\n";
    for (const auto& fr : m.frames) f << frame_to_json(fr).dump() << "\n";
}

inline DatasetManifest read_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    DatasetManifest m;
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("empty manifest: " + path);
    json head = json::parse(line);
    m.seed = head.at("seed").get<uint64_t>();
    m.config_hash = head.at("config_hash").get<uint64_t>();
    m.candidate_frames = head.at("candidate_frames").get<int>();
    m.retained_frames = head.at("retained_frames").get<int>();
    m.failed_shapes = head.at("failed_shapes").get<int>();
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        m.frames.push_back(frame_from_json(json::parse(line)));
    }
    return m;
}

// --- full pipeline ---------------------------------------------------------

struct GenReport {
    int shapes = 0;
    int failed_shapes = 0;
    int candidate_frames = 0;
    int retained_frames = 0;
    double retention_rate = 0.0;
    double seconds = 0.0;
    std::vector<std::string> failures;
};

inline DatasetManifest generate_dataset(const GenConfig& cfg, GenReport* report = nullptr) {
    namespace fs = std::filesystem;
    const auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(cfg.out_dir);
    fs::create_directories(cfg.out_dir + "/images");

    Rng rng(cfg.seed);
    const auto specs = sample_scenarios(rng, cfg.instances_per_scenario);

    std::vector<ShapeFrames> results(specs.size());
    std::atomic<size_t> next{0};
    const int jobs = std::max(1, cfg.jobs);
    auto worker = [&]() {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= specs.size()) return;
            results[i] = generate_shape_frames(specs[i], cfg);
        }
    };
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    DatasetManifest manifest;
    manifest.seed = cfg.seed;
    manifest.config_hash = cfg.hash();
    GenReport rep;
    rep.shapes = int(specs.size());

    std::vector<Frame> candidates;
    for (size_t i = 0; i < results.size(); ++i) {
        auto& r = results[i];
        if (r.failed) {
            ++rep.failed_shapes;
            rep.failures.push_back(specs[i].id + ": " + r.fail_note);
            continue;
        }
        for (size_t k = 0; k < r.frames.size(); ++k) {
            char name[32];
            std::snprintf(name, sizeof name, "%016llx",
                          static_cast<unsigned long long>(r.frames[k].image_hash));
            const std::string rel = std::string("images/") + name + ".pgm";
            const std::string abs = cfg.out_dir + "/" + rel;
            if (!fs::exists(abs)) write_pgm(r.images[k], abs);
            r.frames[k].image = rel;
            candidates.push_back(r.frames[k]);
        }
        r.images.clear();
    }
    rep.candidate_frames = int(candidates.size());
    manifest.candidate_frames = rep.candidate_frames;

    manifest.frames = filter_frames(candidates);
    rep.retained_frames = int(manifest.frames.size());
    manifest.retained_frames = rep.retained_frames;
    manifest.failed_shapes = rep.failed_shapes;
    rep.retention_rate = rep.candidate_frames
                             ? double(rep.retained_frames) / double(rep.candidate_frames)
                             : 0.0;

    Rng split_rng = rng.fork(0x51ee7u); // derived split stream
    split_dataset(manifest, split_rng);

    write_manifest(manifest, cfg.out_dir + "/manifest.jsonl");
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    json jrep{{"shapes", rep.shapes},
              {"failed_shapes", rep.failed_shapes},
              {"candidate_frames", rep.candidate_frames},
              {"retained_frames", rep.retained_frames},
              {"retention_rate", rep.retention_rate},
              {"seconds", rep.seconds},
              {"failures", rep.failures},
              {"seed", cfg.seed},
              {"config", cfg.to_json()}};
    std::ofstream rf(cfg.out_dir + "/report.json");
    rf << jrep.dump(2) << "\n";

    if (report) *report = rep;
    return manifest;
}

// --- metrics ---------------------------------------------------------------

struct MetricsRow {
    double rmse = 0.0;
    double rms_pct = 0.0; // 100 * rmse / (max - min of actual)
    double corr = 0.0;    // NaN when either series is constant
};

struct MetricsReport {
    std::array<MetricsRow, 7> per_c; // C_1 .. C_7
    double rmse_mean = 0, rmse_sd = 0;
    double rms_pct_mean = 0, rms_pct_sd = 0;
    double corr_mean = 0, corr_sd = 0;
};

inline MetricsReport compute_metrics(const std::vector<std::array<double, 7>>& predicted,
                                     const std::vector<std::array<double, 7>>& actual) {
    if (predicted.size() != actual.size()) throw std::invalid_argument("length mismatch");
    if (predicted.size() < 2) throw std::invalid_argument("need at least 2 samples");
    const double n = double(predicted.size());
    MetricsReport rep;
    for (int c = 0; c < 7; ++c) {
        double se = 0, sp = 0, sa = 0, spp = 0, saa = 0, spa = 0;
        double amin = std::numeric_limits<double>::infinity(), amax = -amin;
        for (size_t i = 0; i < predicted.size(); ++i) {
            const double p = predicted[i][size_t(c)], a = actual[i][size_t(c)];
            se += (p - a) * (p - a);
            sp += p;
            sa += a;
            spp += p * p;
            saa += a * a;
            spa += p * a;
            amin = std::min(amin, a);
            amax = std::max(amax, a);
        }
        MetricsRow& row = rep.per_c[size_t(c)];
        row.rmse = std::sqrt(se / n);
        row.rms_pct = (amax > amin) ? 100.0 * row.rmse / (amax - amin)
                                    : std::numeric_limits<double>::quiet_NaN();
        const double cov = spa - sp * sa / n;
        const double vp = spp - sp * sp / n;
        const double va = saa - sa * sa / n;
        row.corr = (vp > 0 && va > 0) ? cov / std::sqrt(vp * va)
                                      : std::numeric_limits<double>::quiet_NaN();
    }
    auto mean_sd = [&](auto get) {
        double m = 0, s = 0;
        for (int c = 0; c < 7; ++c) m += get(rep.per_c[size_t(c)]);
        m /= 7.0;
        for (int c = 0; c < 7; ++c) s += std::pow(get(rep.per_c[size_t(c)]) - m, 2);
        return std::pair<double, double>(m, std::sqrt(s / 7.0));
    };
    std::tie(rep.rmse_mean, rep.rmse_sd) = mean_sd([](const MetricsRow& r) { return r.rmse; });
    std::tie(rep.rms_pct_mean, rep.rms_pct_sd) =
        mean_sd([](const MetricsRow& r) { return r.rms_pct; });
    std::tie(rep.corr_mean, rep.corr_sd) = mean_sd([](const MetricsRow& r) { return r.corr; });
    return rep;
}

inline void write_metrics_csv(const std::vector<std::pair<std::string, MetricsReport>>& rows,
                              const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "variant,sphere,rmse,rms_pct,corr\n";
    char buf[256];
    for (const auto& [name, rep] : rows) {
        for (int c = 0; c < 7; ++c) {
            std::snprintf(buf, sizeof buf, "%s,C_%d,%.6g,%.6g,%.6g\n", name.c_str(), c + 1,
                          rep.per_c[size_t(c)].rmse, rep.per_c[size_t(c)].rms_pct,
                          rep.per_c[size_t(c)].corr);
            f << buf;
        }
        std::snprintf(buf, sizeof buf, "%s,mean,%.6g,%.6g,%.6g\n", name.c_str(), rep.rmse_mean,
                      rep.rms_pct_mean, rep.corr_mean);
        f << buf;
        std::snprintf(buf, sizeof buf, "%s,sd,%.6g,%.6g,%.6g\n", name.c_str(), rep.rmse_sd,
                      rep.rms_pct_sd, rep.corr_sd);
        f << buf;
    }
}

} // namespace exosim
