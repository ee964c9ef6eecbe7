// exosim command line: dataset synthesis, training, evaluation, control
// experiments and verification suites behind one binary.
//
// Exit codes: 0 success, 1 usage error, 2 verification failure, 3 runtime
// failure. EXOSIM_OUT overrides the output root for all subcommands.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "exosim/control.hpp"
#include "exosim/dataset.hpp"
#include "exosim/render.hpp"
#include "exosim/shapes.hpp"
#include "exosim/statics.hpp"
#include "exosim/train.hpp"
#include "exosim/verify.hpp"

namespace fs = std::filesystem;
using namespace exosim;

namespace {

std::string resolve_out(const std::string& dir) {
    const char* root = std::getenv("EXOSIM_OUT");
    if (!root || !*root) return dir;
    return fs::path(root) / fs::path(dir).relative_path();
}

// every artifact directory records how it was produced
void write_provenance(const std::string& dir, const std::string& command, uint64_t seed,
                      const std::vector<std::pair<std::string, std::string>>& kv) {
    fs::create_directories(dir);
    std::ofstream f(fs::path(dir) / "config.resolved.ini");
    f << "[" << command << "]\n";
    f << "seed=" << seed << "\n";
    for (const auto& [k, v] : kv) f << k << "=" << v << "\n";
}

ShapeSpec parse_shape(const std::string& family, const std::string& params, double length) {
    ShapeSpec spec;
    spec.family = family_from_name(family);
    spec.length = length;
    if (!params.empty()) {
        spec.params.clear();
        std::stringstream ss(params);
        std::string tok;
        while (std::getline(ss, tok, ',')) spec.params.push_back(std::stod(tok));
    }
    spec.id = family + "_cli";
    return spec;
}

std::vector<std::array<double, 7>> labels_of(const std::vector<const Frame*>& frames) {
    std::vector<std::array<double, 7>> out;
    out.reserve(frames.size());
    for (const auto* f : frames) {
        std::array<double, 7> a{};
        for (int c = 1; c < 8; ++c) a[size_t(c - 1)] = f->labels[size_t(c)];
        out.push_back(a);
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"finger-exosuit interaction simulator and vision force estimator"};
    app.set_config("--config", "", "config file (ini, [section] key=value)");
    app.require_subcommand(1);

    // ---- gen ----
    auto* gen = app.add_subcommand("gen", "synthesize the image/force dataset");
    GenConfig gcfg;
    gen->add_option("--out", gcfg.out_dir, "output directory")->capture_default_str();
    gen->add_option("--instances", gcfg.instances_per_scenario, "instances per scenario")
        ->capture_default_str();
    gen->add_option("--frames", gcfg.frames_per_shape, "frames per shape")->capture_default_str();
    gen->add_option("--peak", gcfg.u_peak, "actuation ramp peak (N)")->capture_default_str();
    gen->add_option("--step", gcfg.sweep_step, "continuation increment cap (N)")
        ->capture_default_str();
    gen->add_option("--seed", gcfg.seed, "rng seed")->capture_default_str();
    gen->add_option("--contact-k", gcfg.contact_stiffness, "contact stiffness (N/m)")
        ->capture_default_str();
    gen->add_option("--jobs", gcfg.jobs, "parallel shapes")->capture_default_str();

    // ---- train ----
    auto* tr = app.add_subcommand("train", "train the force estimator");
    std::string tr_data = "dataset", tr_out = "model";
    TrainConfig tcfg;
    tr->add_option("--data", tr_data, "dataset directory")->capture_default_str();
    tr->add_option("--out", tr_out, "output directory")->capture_default_str();
    tr->add_option("--seed", tcfg.seed, "rng seed")->capture_default_str();
    tr->add_option("--batch", tcfg.batch_size, "batch size")->capture_default_str();
    tr->add_option("--lr", tcfg.learning_rate, "initial learning rate")->capture_default_str();
    tr->add_option("--max-epochs", tcfg.max_epochs, "epoch cap")->capture_default_str();
    tr->add_option("--val-every", tcfg.val_every_epochs, "validation cadence (epochs)")
        ->capture_default_str();
    tr->add_option("--plateau-patience", tcfg.plateau_patience_epochs,
                   "epochs without improvement before an lr drop")
        ->capture_default_str();
    tr->add_option("--early-stop", tcfg.early_stop_checks,
                   "stalled validation checks before stopping")
        ->capture_default_str();
    tr->add_option("--target-train-loss", tcfg.target_train_loss,
                   "stop once the train loss falls below this (off when <= 0)")
        ->capture_default_str();
    tr->add_option("--jobs", tcfg.jobs, "worker threads")->capture_default_str();

    // ---- eval ----
    auto* ev = app.add_subcommand("eval", "metrics on the test split, clean and perturbed");
    std::string ev_data = "dataset", ev_ckpt = "model/checkpoint.bin", ev_out = "eval";
    uint64_t ev_seed = 99;
    ev->add_option("--data", ev_data, "dataset directory")->capture_default_str();
    ev->add_option("--checkpoint", ev_ckpt, "trained checkpoint")->capture_default_str();
    ev->add_option("--out", ev_out, "output directory")->capture_default_str();
    ev->add_option("--seed", ev_seed, "noise rng seed")->capture_default_str();

    // ---- control ----
    auto* ct = app.add_subcommand("control", "closed-loop experiments");
    std::string ct_out = "control", ct_ckpt, ct_mode = "both", ct_feedback = "oracle";
    double ct_kp = 5.0;
    std::vector<double> ct_targets{0.25, 0.3, 0.35};
    std::vector<double> ct_step_gains{0.1, 1.0, 100.0};
    int ct_steps = 50;
    uint64_t ct_seed = 7;
    ct->add_option("--out", ct_out, "output directory")->capture_default_str();
    ct->add_option("--checkpoint", ct_ckpt, "checkpoint (estimator feedback)");
    ct->add_option("--mode", ct_mode, "steady | step | both")->capture_default_str();
    ct->add_option("--feedback", ct_feedback, "oracle | estimator")->capture_default_str();
    ct->add_option("--kp", ct_kp, "steady-state gain")->capture_default_str();
    ct->add_option("--targets", ct_targets, "steady-state targets (N)")->capture_default_str();
    ct->add_option("--step-gains", ct_step_gains, "step-response gains")->capture_default_str();
    ct->add_option("--steps", ct_steps, "steps per steady run / per step phase")
        ->capture_default_str();
    ct->add_option("--seed", ct_seed, "recorded seed")->capture_default_str();

    // ---- verify ----
    auto* vf = app.add_subcommand("verify", "run the oracle suites");

    // ---- render ----
    auto* rd = app.add_subcommand("render", "solve one state and write a PGM");
    std::string rd_family = "R01", rd_params, rd_out = "state.pgm";
    double rd_length = 0.10, rd_u = 1.0;
    rd->add_option("--family", rd_family, "R01|Rs|Rcc|Rsc|RLP")->capture_default_str();
    rd->add_option("--params", rd_params, "comma-separated family parameters");
    rd->add_option("--length", rd_length, "rod length (m)")->capture_default_str();
    rd->add_option("--u", rd_u, "actuation (N)")->capture_default_str();
    rd->add_option("--out", rd_out, "output PGM path")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*gen) {
            gcfg.out_dir = resolve_out(gcfg.out_dir);
            GenReport rep;
            generate_dataset(gcfg, &rep);
            write_provenance(gcfg.out_dir, "gen", gcfg.seed,
                             {{"instances", std::to_string(gcfg.instances_per_scenario)},
                              {"frames", std::to_string(gcfg.frames_per_shape)},
                              {"contact_k", std::to_string(gcfg.contact_stiffness)}});
            std::printf("shapes %d (failed %d), frames %d -> retained %d (%.1f%%), %.1fs\n",
                        rep.shapes, rep.failed_shapes, rep.candidate_frames, rep.retained_frames,
                        100.0 * rep.retention_rate, rep.seconds);
            return 0;
        }
        if (*tr) {
            tr_out = resolve_out(tr_out);
            const auto manifest = read_manifest(tr_data + "/manifest.jsonl");
            const NetworkSpec spec = NetworkSpec::standard();
            Network<float> net(spec);
            std::printf("trainable parameters: %d (reference design table quotes 78,847; the "
                        "stated layer list with same padding yields this count)\n",
                        net.param_count());
            Rng rng(tcfg.seed);
            net.init(rng);
            const auto train_set = load_split<float>(manifest, tr_data, "train", spec);
            const auto val_set = load_split<float>(manifest, tr_data, "val", spec);
            auto res = train<float>(net, train_set, val_set.n() ? &val_set : nullptr, tcfg);
            net.params = res.best_params;
            net.stats = res.best_stats;
            fs::create_directories(tr_out);
            save_checkpoint(net, tr_out + "/checkpoint.bin");
            write_train_log(res.log, tr_out + "/train_log.csv");
            write_provenance(tr_out, "train", tcfg.seed,
                             {{"data", tr_data},
                              {"batch", std::to_string(tcfg.batch_size)},
                              {"lr", std::to_string(tcfg.learning_rate)},
                              {"epochs_run", std::to_string(res.epochs)},
                              {"stop", res.stop_reason}});
            std::printf("epochs %d, best val %.6g, stop: %s\n", res.epochs, res.best_val,
                        res.stop_reason.c_str());
            return 0;
        }
        if (*ev) {
            ev_out = resolve_out(ev_out);
            const auto manifest = read_manifest(ev_data + "/manifest.jsonl");
            Network<float> net = load_checkpoint(ev_ckpt);
            std::vector<const Frame*> test;
            for (const auto& f : manifest.frames)
                if (f.split == "test") test.push_back(&f);
            if (test.size() < 2) throw std::runtime_error("test split too small");
            const auto actual = labels_of(test);

            auto predict_variant = [&](const std::string& variant,
                                       uint64_t seed) -> std::vector<std::array<double, 7>> {
                Rng rng(seed);
                std::vector<std::array<double, 7>> pred;
                pred.reserve(test.size());
                for (const auto* fr : test) {
                    Image img = read_pgm(ev_data + "/" + fr->image);
                    if (variant == "noise_low")
                        img = add_gaussian_noise(img, kNoiseLow.mean, kNoiseLow.variance, rng);
                    else if (variant == "noise_medium")
                        img = add_gaussian_noise(img, kNoiseMedium.mean, kNoiseMedium.variance,
                                                 rng);
                    else if (variant == "noise_high")
                        img = add_gaussian_noise(img, kNoiseHigh.mean, kNoiseHigh.variance, rng);
                    else if (variant == "contrast_low")
                        img = adjust_contrast(img, kContrastLow[0], kContrastLow[1]);
                    else if (variant == "contrast_high")
                        img = adjust_contrast(img, kContrastHigh[0], kContrastHigh[1]);
                    pred.push_back(predict_forces(net, img));
                }
                return pred;
            };

            std::vector<std::pair<std::string, MetricsReport>> rows;
            for (const std::string variant : {"clean", "noise_low", "noise_medium", "noise_high",
                                              "contrast_low", "contrast_high"}) {
                const auto pred = predict_variant(variant, ev_seed);
                rows.emplace_back(variant, compute_metrics(pred, actual));
                std::printf("%-14s corr %.3f +- %.3f  rmse %.4f  rms%% %.2f\n", variant.c_str(),
                            rows.back().second.corr_mean, rows.back().second.corr_sd,
                            rows.back().second.rmse_mean, rows.back().second.rms_pct_mean);
            }
            fs::create_directories(ev_out);
            write_metrics_csv(rows, ev_out + "/metrics.csv");
            write_provenance(ev_out, "eval", ev_seed,
                             {{"data", ev_data}, {"checkpoint", ev_ckpt}});
            return 0;
        }
        if (*ct) {
            ct_out = resolve_out(ct_out);
            fs::create_directories(ct_out);
            CoupledSystem sys = make_system(control_rod_model());
            Network<float> net;
            Network<float>* netp = nullptr;
            const FeedbackSource fb =
                ct_feedback == "estimator" ? FeedbackSource::Estimator : FeedbackSource::Oracle;
            if (fb == FeedbackSource::Estimator) {
                if (ct_ckpt.empty()) throw std::runtime_error("estimator feedback needs --checkpoint");
                net = load_checkpoint(ct_ckpt);
                netp = &net;
            }
            if (ct_mode == "steady" || ct_mode == "both") {
                for (double F_t : ct_targets) {
                    ControlConfig cfg = steady_state_config(F_t, ct_kp, ct_steps);
                    cfg.feedback = fb;
                    const ControlTrace trace = run_experiment(cfg, sys, netp);
                    char name[128];
                    std::snprintf(name, sizeof name, "%s/steady_Ft%.2f_%s.csv", ct_out.c_str(),
                                  F_t, ct_feedback.c_str());
                    write_trace_csv(trace, name);
                    std::printf("steady F_t=%.2f: settle at step %d%s\n", F_t,
                                trace.settle_step(0.005, 3), trace.stuck ? " [stuck]" : "");
                }
            }
            if (ct_mode == "step" || ct_mode == "both") {
                for (double kp : ct_step_gains) {
                    ControlConfig cfg = step_response_config(0.2, kp, ct_steps);
                    cfg.feedback = fb;
                    const ControlTrace trace = run_experiment(cfg, sys, netp);
                    char name[128];
                    std::snprintf(name, sizeof name, "%s/step_Kp%g_%s.csv", ct_out.c_str(), kp,
                                  ct_feedback.c_str());
                    write_trace_csv(trace, name);
                    std::printf("step K_P=%g: final F_net=%.4f%s\n", kp,
                                trace.steps.back().f_net_oracle,
                                trace.stuck ? " [stuck/instability logged]" : "");
                }
            }
            write_provenance(ct_out, "control", ct_seed,
                             {{"kp", std::to_string(ct_kp)},
                              {"feedback", ct_feedback},
                              {"mode", ct_mode}});
            return 0;
        }
        if (*vf) {
            const auto checks = verify::run_all();
            const bool ok = verify::print_results(checks);
            return ok ? 0 : 2;
        }
        if (*rd) {
            const ShapeSpec spec = parse_shape(rd_family, rd_params, rd_length);
            CoupledSystem sys = make_system(make_rod(spec));
            SystemState st = zero_state(sys);
            const int nsteps = std::max(1, int(std::ceil(std::abs(rd_u) / 0.1)));
            for (int i = 1; i <= nsteps && rd_u != 0.0; ++i) {
                const double u = rd_u * double(i) / nsteps;
                st = solve_equilibrium(sys, u, st);
                if (!st.converged)
                    throw std::runtime_error("equilibrium failed at u=" + std::to_string(u));
            }
            const Image img = render_scene(sys.rod, st.q, sys.finger, st.theta);
            write_pgm(img, resolve_out(rd_out));
            std::printf("u=%.3f F_net=%.4f -> %s\n", st.u, st.f_net(), rd_out.c_str());
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 1;
}
