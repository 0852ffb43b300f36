// Experiment driver: dataset generation, augmentation, sensor training,
// detector fitting, evaluation, the configuration grid, and closed-loop
// simulation. Every command is deterministic under its seed and appends an
// entry to the experiment manifest.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "safeocc/safeocc.hpp"

namespace fs = std::filesystem;
using namespace safeocc;

namespace {

constexpr int kExitMissing = 2;
constexpr int kExitValidation = 3;
constexpr int kExitNumerical = 4;

struct MissingFileError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_exists(const std::string& path) {
    if (!fs::exists(path)) throw MissingFileError("missing input: " + path);
}

uint64_t resolve_seed(uint64_t seed) {
    if (const char* env = std::getenv("SAFEOCC_SEED")) return std::strtoull(env, nullptr, 10);
    return seed;
}

// ---------------------------------------------------------------------------
// Experiment manifest

json load_manifest(const std::string& path) {
    if (!fs::exists(path)) {
        json m;
        m["schema_version"] = 1;
        m["global_seed"] = nullptr;
        m["datasets"] = json::object();
        m["sensors"] = json::object();
        m["detectors"] = json::object();
        m["controller_gains"] = json::object();
        m["scenarios"] = json::array();
        m["entries"] = json::array();
        return m;
    }
    std::ifstream in(path);
    return json::parse(in);
}

void record_entry(const std::string& manifest_path, json& manifest, const std::string& cmd,
                  json detail) {
    detail["cmd"] = cmd;
    manifest["entries"].push_back(std::move(detail));
    write_file_atomic(manifest_path, manifest.dump(2) + "\n");
}

std::string dataset_hash(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    require(in.good(), "dataset manifest unreadable: " + dir);
    return json::parse(in).at("data_hash");
}

// ---------------------------------------------------------------------------
// Shared model helpers

std::vector<ConvBlockSpec> parse_arch(const std::string& arch) {
    std::vector<ConvBlockSpec> blocks;
    std::stringstream ss(arch);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        ConvBlockSpec b;
        b.filters = std::stoi(tok);
        require(b.filters > 0, "arch: filter counts must be positive");
        blocks.push_back(b);
    }
    require(!blocks.empty(), "arch: empty filter schedule");
    return blocks;
}

std::string default_arch(int image_dim, bool paper_scale) {
    if (image_dim >= 128) return paper_scale ? "8,16,32,64,256" : "8,16,32,64,128";
    return "8,16,32,64";
}

TapSignal tap_signal_from_name(const std::string& name) {
    if (name == "psi") return TapSignal::psi;
    if (name == "activation") return TapSignal::activation;
    if (name == "pooled") return TapSignal::pooled;
    throw std::invalid_argument("unknown tap signal: " + name);
}

ScalarizerKind scalarizer_from_name(const std::string& name) {
    if (name == "max") return ScalarizerKind::max;
    if (name == "mean") return ScalarizerKind::mean;
    if (name == "2d2pca") return ScalarizerKind::twod_pca;
    throw std::invalid_argument("unknown scalarizer: " + name);
}

RefinerKind refiner_from_name(const std::string& name) {
    if (name == "none") return RefinerKind::none;
    if (name == "scale") return RefinerKind::scale;
    if (name == "standard") return RefinerKind::standard;
    if (name == "norm") return RefinerKind::norm;
    throw std::invalid_argument("unknown refiner: " + name);
}

// name=dir pairs from the --normal/--novel flags
std::vector<std::pair<std::string, std::string>> parse_sets(const std::vector<std::string>& specs) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const std::string& s : specs) {
        const auto eq = s.find('=');
        require(eq != std::string::npos, "test set must be name=dir: " + s);
        out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Commands

struct CommonOpts {
    std::string manifest_path = "experiment.json";
};

int cmd_gen_data(const CommonOpts& common, const std::string& env, int episodes, int size,
                 uint64_t seed, const std::string& out) {
    seed = resolve_seed(seed);
    RenderSpec spec;
    spec.size = size > 0 ? size : (env == "cartpole" ? 128 : 64);
    const int n_ep = episodes > 0 ? episodes : (env == "cartpole" ? 120 : 60);

    EpisodeDataset ds;
    if (env == "pendulum")
        ds = generate_pendulum_dataset(n_ep, seed, spec);
    else if (env == "cartpole")
        ds = generate_cartpole_dataset(n_ep, seed, spec);
    else
        throw std::invalid_argument("unknown env: " + env);

    json info = {{"env", env}, {"seed", seed}, {"episodes", n_ep}, {"size", spec.size}};
    save_dataset(out, ds, info);

    json manifest = load_manifest(common.manifest_path);
    manifest["global_seed"] = seed;
    manifest["datasets"][out] = {{"env", env}, {"hash", dataset_hash(out)},
                                 {"n_frames", ds.data.images.size()}};
    record_entry(common.manifest_path, manifest, "gen-data",
                 {{"env", env}, {"episodes", n_ep}, {"size", spec.size}, {"seed", seed},
                  {"out", out}});
    std::cout << "wrote " << ds.data.images.size() << " frames to " << out << "\n";
    return 0;
}

int cmd_augment(const CommonOpts& common, const std::string& data, const std::string& kinds_csv,
                uint64_t seed, const std::string& out) {
    require_exists(data + "/manifest.json");
    seed = resolve_seed(seed);
    json src_manifest;
    EpisodeDataset ds = load_dataset(data, &src_manifest);

    std::vector<DisturbanceKind> kinds;
    std::stringstream ss(kinds_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) kinds.push_back(disturbance_from_name(tok));
    require(!kinds.empty(), "augment: no kinds given");

    augment_dataset(ds.data, kinds, seed);
    json info = {{"augmented_from", data}, {"kinds", kinds_csv}, {"seed", seed}};
    if (src_manifest.contains("info")) info["source_info"] = src_manifest["info"];
    save_dataset(out, ds, info);

    json manifest = load_manifest(common.manifest_path);
    manifest["datasets"][out] = {{"hash", dataset_hash(out)}, {"augmented_from", data},
                                 {"n_frames", ds.data.images.size()}};
    record_entry(common.manifest_path, manifest, "augment",
                 {{"data", data}, {"kinds", kinds_csv}, {"seed", seed}, {"out", out}});
    std::cout << "wrote " << ds.data.images.size() << " frames to " << out << "\n";
    return 0;
}

int cmd_train_sensor(const CommonOpts& common, const std::string& data, std::string arch,
                     double lr, int epochs, int batch, int threads, uint64_t seed,
                     bool paper_scale, bool lr_sweep, const std::string& out) {
    require_exists(data + "/manifest.json");
    seed = resolve_seed(seed);
    json src_manifest;
    EpisodeDataset ds = load_dataset(data, &src_manifest);
    const int dim = ds.data.images[0].dim1;
    const int outputs = static_cast<int>(ds.data.labels[0].size());
    if (arch.empty()) arch = default_arch(dim, paper_scale);

    Rng rng(seed);
    Split split = make_split(static_cast<int>(ds.data.images.size()), rng);
    Rng init_rng = rng.derive(1);

    TrainConfig cfg;
    cfg.lr = lr;
    cfg.batch = batch;
    cfg.max_epochs = epochs;
    cfg.threads = threads > 0 ? threads
                              : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

    std::string sweep_csv;
    if (lr_sweep) {
        // One epoch per candidate, judged on training SSE, ties to the smaller rate.
        const double candidates[] = {1e-2, 3e-3, 1e-3, 3e-4};
        sweep_csv = "lr,train_loss\n";
        double best_loss = std::numeric_limits<double>::infinity();
        for (double cand : candidates) {
            CnnModel probe = make_cnn(dim, 1, parse_arch(arch), outputs, init_rng = rng.derive(1));
            TrainConfig probe_cfg = cfg;
            probe_cfg.lr = cand;
            probe_cfg.max_epochs = 1;
            Rng train_rng = rng.derive(2);
            TrainHistory h = train(probe, ds.data, split, probe_cfg, train_rng);
            char line[64];
            std::snprintf(line, sizeof(line), "%g,%.9f\n", cand, h.train_loss[0]);
            sweep_csv += line;
            if (h.train_loss[0] < best_loss - 1e-12) {
                best_loss = h.train_loss[0];
                cfg.lr = cand;
            }
        }
    }

    CnnModel model = make_cnn(dim, 1, parse_arch(arch), outputs, init_rng = rng.derive(1));
    Rng train_rng = rng.derive(2);
    TrainHistory hist = train(model, ds.data, split, cfg, train_rng);

    json info = {{"seed", seed},          {"data", data},
                 {"data_hash", src_manifest.at("data_hash")},
                 {"arch", arch},          {"lr", cfg.lr},
                 {"epochs_run", hist.train_loss.size()},
                 {"best_epoch", hist.best_epoch}};
    save_cnn(out, model, info);

    std::string hist_csv = "epoch,train_loss,val_loss\n";
    for (size_t e = 0; e < hist.train_loss.size(); ++e) {
        char line[96];
        std::snprintf(line, sizeof(line), "%zu,%.9f,%.9f\n", e, hist.train_loss[e],
                      hist.val_loss[e]);
        hist_csv += line;
    }
    write_file_atomic(out + ".history.csv", hist_csv);
    if (lr_sweep) write_file_atomic(out + ".lr_sweep.csv", sweep_csv);

    json manifest = load_manifest(common.manifest_path);
    manifest["sensors"][out] = info;
    record_entry(common.manifest_path, manifest, "train-sensor",
                 {{"data", data}, {"arch", arch}, {"lr", cfg.lr}, {"seed", seed}, {"out", out}});
    std::cout << "trained sensor " << out << " best_epoch=" << hist.best_epoch
              << " val=" << hist.val_loss[hist.best_epoch] << "\n";
    return 0;
}

DetectorConfig build_config(const CnnModel& sensor, const std::string& preset,
                            const std::string& tap_signal, int tap_block,
                            const std::string& scalarizer, const std::string& refiner,
                            double nu, double gamma, double epsilon) {
    DetectorConfig cfg;
    if (preset == "config1") {
        cfg = config1_preset();
    } else if (preset == "config2" || preset == "cartpole") {
        cfg = config2_preset(sensor.num_blocks() - 1);
    } else if (preset.empty()) {
        cfg.tap = {tap_block < 0 ? sensor.num_blocks() - 1 : tap_block,
                   tap_signal_from_name(tap_signal)};
        cfg.scalarizer = scalarizer_from_name(scalarizer);
        cfg.refiner = refiner_from_name(refiner);
    } else {
        throw std::invalid_argument("unknown preset: " + preset);
    }
    require(cfg.tap.block >= 0 && cfg.tap.block < sensor.num_blocks(),
            "tap block out of range for this sensor");
    if (nu > 0.0) cfg.nu = nu;
    if (gamma > 0.0) cfg.gamma = gamma;
    cfg.epsilon = epsilon;
    return cfg;
}

int cmd_fit_detector(const CommonOpts& common, const std::string& sensor_path,
                     const std::string& data, const std::string& preset,
                     const std::string& tap_signal, int tap_block, const std::string& scalarizer,
                     const std::string& refiner, double nu, double gamma, double epsilon,
                     int threads, const std::string& out) {
    require_exists(sensor_path);
    require_exists(data + "/manifest.json");
    json sensor_info;
    CnnModel sensor = load_cnn(sensor_path, &sensor_info);
    json src_manifest;
    EpisodeDataset ds = load_dataset(data, &src_manifest);

    DetectorConfig cfg =
        build_config(sensor, preset, tap_signal, tap_block, scalarizer, refiner, nu, gamma, epsilon);
    const int nt = threads > 0 ? threads
                               : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    SafeOccDetector det = fit_detector(sensor, ds.data.images, cfg, nt);

    json info = {{"sensor", sensor_path},
                 {"data", data},
                 {"data_hash", src_manifest.at("data_hash")},
                 {"preset", preset},
                 {"n_sv", det.ocsvm.support_vectors.size()}};
    if (sensor_info.contains("data_hash")) info["sensor_data_hash"] = sensor_info["data_hash"];
    save_detector(out, det, info);

    json manifest = load_manifest(common.manifest_path);
    manifest["detectors"][out] = info;
    record_entry(common.manifest_path, manifest, "fit-detector",
                 {{"sensor", sensor_path}, {"data", data}, {"preset", preset}, {"out", out}});
    std::cout << "fitted detector " << out << " sv=" << det.ocsvm.support_vectors.size()
              << " rho=" << det.ocsvm.rho << "\n";
    return 0;
}

int cmd_eval(const CommonOpts& common, const std::string& sensor_path,
             const std::vector<std::string>& detector_paths,
             const std::vector<std::string>& normal_sets,
             const std::vector<std::string>& novel_sets, const std::string& out) {
    require_exists(sensor_path);
    json sensor_info;
    CnnModel sensor = load_cnn(sensor_path, &sensor_info);

    std::vector<SafeOccDetector> detectors;
    std::vector<std::string> det_names;
    for (const std::string& p : detector_paths) {
        require_exists(p);
        json det_info;
        detectors.push_back(load_detector(p, &det_info));
        det_names.push_back(fs::path(p).stem().string());
        // refuse sensor/detector pairs built from different training data
        if (sensor_info.contains("data_hash") && det_info.contains("sensor_data_hash"))
            require(sensor_info["data_hash"] == det_info["sensor_data_hash"],
                    "detector " + p + " was fitted for a different sensor training set");
    }

    const std::string sensor_name = fs::path(sensor_path).stem().string();
    std::vector<AccuracyRow> rows;
    std::string err_csv = "sensor,test_set,mean_l2,n_images\n";

    auto eval_sets = [&](const std::vector<std::string>& specs, bool expect_novel) {
        for (const auto& [name, dir] : parse_sets(specs)) {
            require_exists(dir + "/manifest.json");
            EpisodeDataset ds = load_dataset(dir);
            // sensor regression error on this set
            double total = 0.0;
            std::vector<ForwardPass> passes;
            passes.reserve(ds.data.images.size());
            for (size_t i = 0; i < ds.data.images.size(); ++i) {
                passes.push_back(forward(sensor, ds.data.images[i]));
                double d2 = 0.0;
                for (size_t k = 0; k < ds.data.labels[i].size(); ++k) {
                    const double d = passes.back().output[k] - ds.data.labels[i][k];
                    d2 += d * d;
                }
                total += std::sqrt(d2);
            }
            char line[160];
            std::snprintf(line, sizeof(line), "%s,%s,%.6f,%zu\n", sensor_name.c_str(),
                          name.c_str(), total / ds.data.images.size(), ds.data.images.size());
            err_csv += line;

            for (size_t d = 0; d < detectors.size(); ++d) {
                int correct = 0;
                for (const ForwardPass& fp : passes)
                    if ((novelty_from_pass(detectors[d], fp).verdict == Verdict::novel) ==
                        expect_novel)
                        ++correct;
                rows.push_back({sensor_name, det_names[d], name,
                                expect_novel ? "novel" : "normal",
                                100.0 * correct / static_cast<double>(passes.size()),
                                static_cast<int>(passes.size())});
            }
            if (detectors.size() > 1) {
                int correct = 0;
                for (const ForwardPass& fp : passes) {
                    bool any_novel = false;
                    for (const SafeOccDetector& det : detectors)
                        if (novelty_from_pass(det, fp).verdict == Verdict::novel) any_novel = true;
                    if (any_novel == expect_novel) ++correct;
                }
                rows.push_back({sensor_name, "union", name, expect_novel ? "novel" : "normal",
                                100.0 * correct / static_cast<double>(passes.size()),
                                static_cast<int>(passes.size())});
            }
        }
    };
    eval_sets(normal_sets, false);
    eval_sets(novel_sets, true);

    write_file_atomic(out, accuracy_csv(rows));
    const std::string err_path = out + ".errors.csv";
    write_file_atomic(err_path, err_csv);

    json manifest = load_manifest(common.manifest_path);
    record_entry(common.manifest_path, manifest, "eval",
                 {{"sensor", sensor_path}, {"detectors", detector_paths}, {"out", out}});
    std::cout << "wrote " << rows.size() << " accuracy rows to " << out << "\n";
    return 0;
}

int cmd_grid(const CommonOpts& common, const std::string& sensor_path, const std::string& data,
             const std::vector<std::string>& normal_sets, const std::vector<std::string>& novel_sets,
             double nu, int threads, const std::string& out) {
    require_exists(sensor_path);
    require_exists(data + "/manifest.json");
    json sensor_info;
    CnnModel sensor = load_cnn(sensor_path, &sensor_info);
    EpisodeDataset ds = load_dataset(data);
    const std::string sensor_name = fs::path(sensor_path).stem().string();
    const int nt = threads > 0 ? threads
                               : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

    struct SetCache {
        std::string name;
        bool expect_novel;
        std::vector<ForwardPass> passes;
    };
    std::vector<SetCache> sets;
    auto load_sets = [&](const std::vector<std::string>& specs, bool expect_novel) {
        for (const auto& [name, dir] : parse_sets(specs)) {
            require_exists(dir + "/manifest.json");
            EpisodeDataset set_ds = load_dataset(dir);
            SetCache c;
            c.name = name;
            c.expect_novel = expect_novel;
            for (const Tensor3& img : set_ds.data.images) c.passes.push_back(forward(sensor, img));
            sets.push_back(std::move(c));
        }
    };
    load_sets(normal_sets, false);
    load_sets(novel_sets, true);

    // {psi, activation, pooled} x {first, last} x {max, 2d2pca} x {none, scale, standard}
    const TapSignal signals[] = {TapSignal::psi, TapSignal::activation, TapSignal::pooled};
    const char* signal_names[] = {"psi", "act", "pooled"};
    const int tap_blocks[] = {0, sensor.num_blocks() - 1};
    const char* block_names[] = {"first", "last"};
    const ScalarizerKind scalarizers[] = {ScalarizerKind::max, ScalarizerKind::twod_pca};
    const char* scalarizer_names[] = {"gmax", "g2d2pca"};
    const RefinerKind refiners[] = {RefinerKind::none, RefinerKind::scale, RefinerKind::standard};
    const char* refiner_names[] = {"none", "sscale", "sstandard"};

    std::vector<AccuracyRow> rows;
    for (int si = 0; si < 3; ++si)
        for (int bi = 0; bi < 2; ++bi)
            for (int gi = 0; gi < 2; ++gi)
                for (int ri = 0; ri < 3; ++ri) {
                    DetectorConfig cfg;
                    cfg.tap = {tap_blocks[bi], signals[si]};
                    cfg.scalarizer = scalarizers[gi];
                    cfg.refiner = refiners[ri];
                    if (nu > 0.0) cfg.nu = nu;
                    SafeOccDetector det = fit_detector(sensor, ds.data.images, cfg, nt);
                    const std::string config_name = std::string(signal_names[si]) + "-" +
                                                    block_names[bi] + "-" + scalarizer_names[gi] +
                                                    "-" + refiner_names[ri];
                    for (const SetCache& set : sets) {
                        int correct = 0;
                        for (const ForwardPass& fp : set.passes)
                            if ((novelty_from_pass(det, fp).verdict == Verdict::novel) ==
                                set.expect_novel)
                                ++correct;
                        rows.push_back({sensor_name, config_name, set.name,
                                        set.expect_novel ? "novel" : "normal",
                                        100.0 * correct / static_cast<double>(set.passes.size()),
                                        static_cast<int>(set.passes.size())});
                    }
                }

    write_file_atomic(out, accuracy_csv(rows));
    json manifest = load_manifest(common.manifest_path);
    record_entry(common.manifest_path, manifest, "grid",
                 {{"sensor", sensor_path}, {"data", data}, {"out", out}});
    std::cout << "wrote " << rows.size() << " grid rows to " << out << "\n";
    return 0;
}

int cmd_simulate(const CommonOpts& common, const std::string& env, const std::string& sensor_path,
                 const std::string& detector_path, const std::string& scenario_name, int onset,
                 int horizon, int debounce, const std::string& recourse, bool no_safety,
                 uint64_t seed, int size, const std::string& out) {
    require(env == "cartpole", "simulate supports --env cartpole only");
    require_exists(sensor_path);
    seed = resolve_seed(seed);
    CnnModel sensor = load_cnn(sensor_path);

    SafeOccDetector det;
    bool have_detector = false;
    if (!detector_path.empty()) {
        require_exists(detector_path);
        det = load_detector(detector_path);
        have_detector = true;
    }

    LoopScenario scenario;
    scenario.onset = onset;
    scenario.horizon = horizon;
    if (scenario_name != "clean") scenario.disturbance = disturbance_from_name(scenario_name);

    SafetySystem safety;
    safety.debounce = debounce;
    if (recourse == "freeze")
        safety.policy = RecoursePolicy::freeze_last_control;
    else if (recourse == "zero")
        safety.policy = RecoursePolicy::zero_control;
    else
        throw std::invalid_argument("unknown recourse policy: " + recourse);

    RenderSpec spec;
    spec.size = size > 0 ? size : sensor.input_dim;
    require(spec.size == sensor.input_dim, "render size must match the sensor input");

    const bool use_safety = have_detector && !no_safety;
    auto steps = run_closed_loop(sensor, have_detector ? &det : nullptr, default_cartpole_pid(),
                                 use_safety ? &safety : nullptr, scenario, seed, spec);
    write_file_atomic(out, loop_csv(steps));

    json manifest = load_manifest(common.manifest_path);
    PidController gains = default_cartpole_pid();
    manifest["controller_gains"] = {{"kp", gains.kp}, {"ki", gains.ki}, {"kd", gains.kd},
                                    {"tau_f", gains.tau_f}};
    manifest["scenarios"].push_back({{"scenario", scenario_name}, {"onset", onset},
                                     {"seed", seed}, {"out", out}});
    record_entry(common.manifest_path, manifest, "simulate",
                 {{"scenario", scenario_name}, {"onset", onset}, {"seed", seed}, {"out", out}});
    std::cout << "simulated " << steps.size() << " steps to " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SAFE-OCC style sensor/novelty experiment driver"};
    app.require_subcommand(1);
    CommonOpts common;
    app.add_option("--manifest", common.manifest_path, "experiment manifest path");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "render a simulation dataset");
    std::string gen_env = "pendulum", gen_out = "dataset";
    int gen_episodes = 0, gen_size = 0;
    uint64_t gen_seed = 1;
    gen->add_option("--env", gen_env, "pendulum or cartpole");
    gen->add_option("--episodes", gen_episodes, "episode count (0 = env default)");
    gen->add_option("--size", gen_size, "image size (0 = env default)");
    gen->add_option("--seed", gen_seed, "rng seed");
    gen->add_option("--out", gen_out, "output directory")->required();

    // augment
    auto* aug = app.add_subcommand("augment", "append disturbed copies of a dataset");
    std::string aug_data, aug_kinds = "blockages,blur,fog,noise,shift,spatter", aug_out;
    uint64_t aug_seed = 1;
    aug->add_option("--data", aug_data, "source dataset directory")->required();
    aug->add_option("--kinds", aug_kinds, "comma list of disturbance kinds");
    aug->add_option("--seed", aug_seed, "rng seed");
    aug->add_option("--out", aug_out, "output directory")->required();

    // train-sensor
    auto* ts = app.add_subcommand("train-sensor", "train a CNN sensor");
    std::string ts_data, ts_arch, ts_out;
    double ts_lr = 1e-3;
    int ts_epochs = 50, ts_batch = 32, ts_threads = 0;
    uint64_t ts_seed = 1;
    bool ts_paper_scale = false, ts_lr_sweep = false;
    ts->add_option("--data", ts_data, "training dataset directory")->required();
    ts->add_option("--arch", ts_arch, "filter schedule, e.g. 8,16,32,64");
    ts->add_option("--lr", ts_lr, "learning rate");
    ts->add_option("--epochs", ts_epochs, "max epochs");
    ts->add_option("--batch", ts_batch, "minibatch size");
    ts->add_option("--threads", ts_threads, "worker threads (0 = hardware)");
    ts->add_option("--seed", ts_seed, "rng seed");
    ts->add_flag("--paper-scale", ts_paper_scale, "use the full-width last block");
    ts->add_flag("--lr-sweep", ts_lr_sweep, "one-epoch sweep over {1e-2,3e-3,1e-3,3e-4}");
    ts->add_option("--out", ts_out, "output model file")->required();

    // fit-detector
    auto* fd = app.add_subcommand("fit-detector", "fit a novelty detector");
    std::string fd_sensor, fd_data, fd_preset, fd_signal = "pooled", fd_scalarizer = "max";
    std::string fd_refiner = "standard", fd_out;
    int fd_block = -1, fd_threads = 0;
    double fd_nu = 0.0, fd_gamma = 0.0, fd_eps = 0.0;
    fd->add_option("--sensor", fd_sensor, "sensor model file")->required();
    fd->add_option("--data", fd_data, "training dataset directory")->required();
    fd->add_option("--preset", fd_preset, "config1, config2, or cartpole");
    fd->add_option("--tap-signal", fd_signal, "psi, activation, or pooled");
    fd->add_option("--tap-block", fd_block, "0-based block (-1 = last)");
    fd->add_option("--scalarizer", fd_scalarizer, "max, mean, or 2d2pca");
    fd->add_option("--refiner", fd_refiner, "none, scale, standard, or norm");
    fd->add_option("--nu", fd_nu, "OC-SVM nu (0 = default 1e-4)");
    fd->add_option("--gamma", fd_gamma, "kernel gamma (0 = 1/feature dim)");
    fd->add_option("--epsilon", fd_eps, "decision margin epsilon");
    fd->add_option("--threads", fd_threads, "worker threads (0 = hardware)");
    fd->add_option("--out", fd_out, "output model file")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "accuracy and sensor-error tables");
    std::string ev_sensor, ev_out;
    std::vector<std::string> ev_detectors, ev_normal, ev_novel;
    ev->add_option("--sensor", ev_sensor, "sensor model file")->required();
    ev->add_option("--detectors", ev_detectors, "detector model files")->required();
    ev->add_option("--normal", ev_normal, "normal test sets as name=dir");
    ev->add_option("--novel", ev_novel, "novel test sets as name=dir");
    ev->add_option("--out", ev_out, "output CSV")->required();

    // grid
    auto* gr = app.add_subcommand("grid", "full configuration enumeration");
    std::string gr_sensor, gr_data, gr_out;
    std::vector<std::string> gr_normal, gr_novel;
    double gr_nu = 0.0;
    int gr_threads = 0;
    gr->add_option("--sensor", gr_sensor, "sensor model file")->required();
    gr->add_option("--data", gr_data, "detector training dataset")->required();
    gr->add_option("--normal", gr_normal, "normal test sets as name=dir");
    gr->add_option("--novel", gr_novel, "novel test sets as name=dir");
    gr->add_option("--nu", gr_nu, "OC-SVM nu override");
    gr->add_option("--threads", gr_threads, "worker threads (0 = hardware)");
    gr->add_option("--out", gr_out, "output CSV")->required();

    // simulate
    auto* sim = app.add_subcommand("simulate", "closed-loop cart-pole run");
    std::string sim_env = "cartpole", sim_sensor, sim_detector, sim_scenario = "clean";
    std::string sim_recourse = "freeze", sim_out;
    int sim_onset = 150, sim_horizon = 400, sim_debounce = 3, sim_size = 0;
    uint64_t sim_seed = 1;
    bool sim_no_safety = false;
    sim->add_option("--env", sim_env, "environment (cartpole)");
    sim->add_option("--sensor", sim_sensor, "sensor model file")->required();
    sim->add_option("--detector", sim_detector, "detector model file (optional)");
    sim->add_option("--scenario", sim_scenario, "clean, fog, spatter, or blockages");
    sim->add_option("--onset", sim_onset, "disturbance onset step");
    sim->add_option("--horizon", sim_horizon, "max steps");
    sim->add_option("--debounce", sim_debounce, "consecutive novels before alarm");
    sim->add_option("--recourse", sim_recourse, "freeze or zero");
    sim->add_flag("--no-safety", sim_no_safety, "disable the safety system");
    sim->add_option("--seed", sim_seed, "rng seed");
    sim->add_option("--size", sim_size, "render size (0 = sensor input)");
    sim->add_option("--out", sim_out, "output CSV")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return cmd_gen_data(common, gen_env, gen_episodes, gen_size, gen_seed, gen_out);
        if (aug->parsed()) return cmd_augment(common, aug_data, aug_kinds, aug_seed, aug_out);
        if (ts->parsed())
            return cmd_train_sensor(common, ts_data, ts_arch, ts_lr, ts_epochs, ts_batch,
                                    ts_threads, ts_seed, ts_paper_scale, ts_lr_sweep, ts_out);
        if (fd->parsed())
            return cmd_fit_detector(common, fd_sensor, fd_data, fd_preset, fd_signal, fd_block,
                                    fd_scalarizer, fd_refiner, fd_nu, fd_gamma, fd_eps, fd_threads,
                                    fd_out);
        if (ev->parsed()) return cmd_eval(common, ev_sensor, ev_detectors, ev_normal, ev_novel, ev_out);
        if (gr->parsed())
            return cmd_grid(common, gr_sensor, gr_data, gr_normal, gr_novel, gr_nu, gr_threads,
                            gr_out);
        if (sim->parsed())
            return cmd_simulate(common, sim_env, sim_sensor, sim_detector, sim_scenario, sim_onset,
                                sim_horizon, sim_debounce, sim_recourse, sim_no_safety, sim_seed,
                                sim_size, sim_out);
    } catch (const MissingFileError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMissing;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return 0;
}
