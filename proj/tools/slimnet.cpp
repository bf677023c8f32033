// Command-line front end binding the toolkit together: cost analysis, SPP
// insertion, channel pruning, model verification, toy sparsity training,
// forward inference and detection scoring.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "slim/cfg.hpp"
#include "slim/errors.hpp"
#include "slim/eval.hpp"
#include "slim/forward.hpp"
#include "slim/graph.hpp"
#include "slim/prune.hpp"
#include "slim/sparsity.hpp"
#include "slim/spp.hpp"
#include "slim/tensor.hpp"
#include "slim/weights.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInput = 2;
constexpr int kExitVerification = 3;

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw slim::ArgumentError("cannot write " + path);
    out << text;
}

slim::NetworkDef load_validated(const std::string& path) {
    slim::NetworkDef def = slim::load_cfg(path);
    if (auto diags = slim::validate(def); !diags.empty()) {
        std::ostringstream msg;
        msg << path << " failed validation:";
        for (const auto& d : diags) msg << "\n  layer " << d.layer << ": " << d.message;
        throw slim::ValidationError(msg.str());
    }
    return def;
}

slim::Tensor random_input(int c, int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    slim::Tensor t(c, h, w);
    for (float& v : t.data) v = dist(rng);
    return t;
}

int cmd_analyze(const std::string& cfg_path, int input, bool csv, const std::string& out_path) {
    slim::NetworkDef def = load_validated(cfg_path);
    slim::ShapeInfo shapes = slim::infer_shapes(def, input, input);
    slim::CostReport report = slim::count_flops(def, input, input);
    std::string text = csv ? slim::render_cost_csv(def, shapes, report)
                           : slim::render_cost_table(def, shapes, report);
    if (out_path.empty())
        std::cout << text;
    else
        write_text(out_path, text);
    return kExitOk;
}

int cmd_insert_spp(const std::string& cfg_path, const std::string& out_path, bool literal_pool) {
    slim::NetworkDef def = load_validated(cfg_path);
    slim::SppOptions options;
    options.literal_identity_pool = literal_pool;
    slim::NetworkDef transformed = slim::insert_spp(def, options);
    slim::save_cfg(transformed, out_path);
    std::cout << "wrote " << out_path << " (" << transformed.layers.size() << " layers, "
              << slim::count_spp_blocks(transformed) << " spp blocks)\n";
    return kExitOk;
}

int cmd_prune(const std::string& cfg_path, const std::string& weights_path, double ratio,
              double local_percentile, int iterations, const std::string& out_dir, bool csv) {
    slim::NetworkDef def = load_validated(cfg_path);
    slim::WeightStore store = slim::load_weights(weights_path, def);

    slim::PruneConfig config;
    config.global_ratio = ratio;
    config.local_percentile = local_percentile;
    config.iterations = iterations;

    auto reports = slim::iterative_prune(def, store, config, nullptr);

    fs::create_directories(out_dir);
    std::string stem = fs::path(cfg_path).stem().string();
    std::string cfg_out = (fs::path(out_dir) / (stem + "-pruned.cfg")).string();
    std::string weights_out = (fs::path(out_dir) / (stem + "-pruned.weights")).string();
    slim::save_cfg(def, cfg_out);
    slim::save_weights(store, def, weights_out);

    std::ostringstream all;
    for (size_t round = 0; round < reports.size(); ++round) {
        all << "round " << round + 1 << "\n";
        all << (csv ? slim::render_prune_report_csv(reports[round])
                    : slim::render_prune_report(reports[round]));
        all << "\n";
    }
    std::string report_out =
        (fs::path(out_dir) / (csv ? "prune-report.csv" : "prune-report.txt")).string();
    write_text(report_out, all.str());
    std::cout << all.str();
    std::cout << "wrote " << cfg_out << ", " << weights_out << ", " << report_out << "\n";
    return kExitOk;
}

int cmd_verify(const std::string& cfg_a, const std::string& weights_a, const std::string& cfg_b,
               const std::string& weights_b, int trials, double tolerance, std::uint64_t seed,
               const std::string& blob_path) {
    slim::NetworkDef def_a = load_validated(cfg_a);
    slim::NetworkDef def_b = load_validated(cfg_b);
    slim::WeightStore store_a = slim::load_weights(weights_a, def_a);
    slim::WeightStore store_b = slim::load_weights(weights_b, def_b);

    double worst = 0;
    for (int trial = 0; trial < trials; ++trial) {
        slim::Tensor input = blob_path.empty()
                                 ? random_input(def_a.channels, def_a.height, def_a.width,
                                                seed + static_cast<std::uint64_t>(trial))
                                 : slim::load_blob(blob_path);
        slim::ForwardResult ra = slim::run_network(def_a, store_a, input);
        slim::ForwardResult rb = slim::run_network(def_b, store_b, input);
        if (ra.head_layers.size() != rb.head_layers.size())
            throw slim::ValidationError("models expose different numbers of head outputs");
        for (size_t h = 0; h < ra.head_layers.size(); ++h) {
            const slim::Tensor& ta = ra.layer_out[ra.head_layers[h]];
            const slim::Tensor& tb = rb.layer_out[rb.head_layers[h]];
            if (ta.size() != tb.size())
                throw slim::ValidationError("head " + std::to_string(h) +
                                            " output shapes differ");
            for (size_t i = 0; i < ta.data.size(); ++i)
                worst = std::max(worst,
                                 static_cast<double>(std::fabs(ta.data[i] - tb.data[i])));
        }
        if (!blob_path.empty()) break; // a supplied input is a single trial
    }
    std::cout << "max deviation: " << worst << " (tolerance " << tolerance << ")\n";
    return worst <= tolerance ? kExitOk : kExitVerification;
}

int cmd_sparsity_train(double alpha, double lr, double momentum, double weight_decay, int steps,
                       std::uint64_t seed, int checkpoint_every, const std::string& out_dir) {
    slim::ToyScenario scenario = slim::make_toy_scenario(seed);
    slim::SparsityConfig config;
    config.alpha = alpha;
    config.learning_rate = lr;
    config.momentum = momentum;
    config.weight_decay = weight_decay;
    config.steps = steps;
    config.seed = seed;

    fs::create_directories(out_dir);
    std::ostringstream loss_csv;
    loss_csv << "step,task_loss,penalty,total\n";

    slim::SgdState state;
    auto checkpoint = [&](int step) {
        auto [def, store] = slim::export_toy(scenario.net);
        std::ostringstream name;
        name << "ckpt-" << std::setw(4) << std::setfill('0') << step;
        slim::save_cfg(def, (fs::path(out_dir) / (name.str() + ".cfg")).string());
        slim::save_weights(store, def, (fs::path(out_dir) / (name.str() + ".weights")).string());
        auto hist = slim::gamma_histogram(store, def, 20, 0.01, 1.0);
        write_text((fs::path(out_dir) / (name.str() + "-gamma-hist.csv")).string(),
                   slim::render_histogram_csv(hist));
    };

    for (int step = 1; step <= steps; ++step) {
        slim::LossBreakdown loss =
            slim::train_step(scenario.net, scenario.inputs, scenario.targets, config, state);
        loss_csv << step << ',' << loss.task << ',' << loss.penalty << ',' << loss.total << "\n";
        if (checkpoint_every > 0 && step % checkpoint_every == 0) checkpoint(step);
    }
    checkpoint(steps);
    write_text((fs::path(out_dir) / "loss.csv").string(), loss_csv.str());

    auto [def, store] = slim::export_toy(scenario.net);
    auto hist = slim::gamma_histogram(store, def, 20, 0.01, 1.0);
    std::cout << "trained " << steps << " steps (alpha " << alpha << "); fraction of |gamma| below "
              << hist.probe << ": " << hist.fraction_below_probe << "\n";
    std::cout << "wrote checkpoints and loss.csv under " << out_dir << "\n";
    return kExitOk;
}

int cmd_infer(const std::string& cfg_path, const std::string& weights_path,
              const std::string& blob_path, double conf, const std::string& out_path) {
    slim::NetworkDef def = load_validated(cfg_path);
    slim::WeightStore store = slim::load_weights(weights_path, def);
    slim::Tensor input = slim::load_blob(blob_path);
    slim::ForwardResult result =
        slim::run_network(def, store, input, static_cast<float>(conf));

    std::ostringstream out;
    for (const slim::Detection& d : result.detections)
        out << d.class_id << ' ' << d.score << ' ' << d.x << ' ' << d.y << ' ' << d.w << ' '
            << d.h << "\n";
    if (out_path.empty())
        std::cout << out.str();
    else
        write_text(out_path, out.str());
    return kExitOk;
}

std::vector<slim::EvalDetection> load_detections(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw slim::ParseError("cannot open detections file: " + path);
    std::vector<slim::EvalDetection> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        slim::EvalDetection d;
        double cx = 0, cy = 0, w = 0, h = 0;
        if (!(ss >> d.image >> d.category >> d.score >> cx >> cy >> w >> h))
            throw slim::ParseError(path + " line " + std::to_string(line_no) +
                                   ": expected 'image_id class_id score x y w h'");
        d.box = {cx - w / 2, cy - h / 2, w, h}; // detections use center form
        out.push_back(d);
    }
    return out;
}

std::vector<slim::GroundTruth> load_ground_truths(const std::string& dir) {
    std::vector<slim::GroundTruth> out;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".txt") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const fs::path& file : files) {
        std::ifstream in(file);
        std::ostringstream buf;
        buf << in.rdbuf();
        auto gts = slim::parse_visdrone(buf.str(), file.stem().string());
        out.insert(out.end(), gts.begin(), gts.end());
    }
    if (out.empty())
        throw slim::ArgumentError("no annotations found under " + dir);
    return out;
}

int cmd_eval(const std::string& det_path, const std::string& gt_dir, double conf, double nms_thr,
             bool csv, const std::string& out_path) {
    auto detections = load_detections(det_path);
    auto truths = load_ground_truths(gt_dir);
    slim::EvalSummary summary = slim::evaluate(detections, truths, conf, nms_thr);
    std::string text =
        csv ? slim::render_eval_csv(summary) : slim::render_eval_table(summary);
    if (out_path.empty())
        std::cout << text;
    else
        write_text(out_path, text);
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"model compression toolkit for darknet-style detectors"};
    app.require_subcommand(1);

    // analyze
    std::string cfg_path, weights_path, out_path, out_dir, blob_path;
    int input_px = 0;
    bool csv = false;
    auto* analyze = app.add_subcommand("analyze", "parameter and FLOP accounting");
    analyze->add_option("cfg", cfg_path, "network definition")->required();
    analyze->add_option("--input", input_px, "square input size override (pixels)");
    analyze->add_flag("--csv", csv, "machine-readable output");
    analyze->add_option("-o,--output", out_path, "write the report to a file");

    // insert-spp
    bool literal_pool = false;
    auto* spp = app.add_subcommand("insert-spp", "add spp blocks to each detection head");
    spp->add_option("cfg", cfg_path, "network definition")->required();
    spp->add_option("-o,--output", out_path, "transformed definition path")->required();
    spp->add_flag("--literal-identity-pool", literal_pool,
                  "emit the identity branch as a size-1 maxpool layer");

    // prune
    double ratio = 0.5, local_percentile = 0.9, tolerance = 1e-5, conf = 0.1, nms_thr = 0.5;
    int iterations = 1, trials = 10;
    std::uint64_t seed = 0;
    auto* prune = app.add_subcommand("prune", "threshold, mask and slice channels");
    prune->add_option("cfg", cfg_path, "network definition")->required();
    prune->add_option("weights", weights_path, "weight file")->required();
    prune->add_option("--ratio", ratio, "global percentile ratio in [0,1)")->required();
    prune->add_option("--local-percentile", local_percentile,
                      "per-layer safety percentile (default 0.9)");
    prune->add_option("--iterations", iterations, "pruning rounds (default 1)");
    prune->add_option("-o,--output", out_dir, "output directory")->required();
    prune->add_flag("--csv", csv, "machine-readable report");

    // verify
    std::string cfg_b, weights_b;
    auto* verify = app.add_subcommand("verify", "compare two models on shared inputs");
    verify->add_option("cfg_a", cfg_path)->required();
    verify->add_option("weights_a", weights_path)->required();
    verify->add_option("cfg_b", cfg_b)->required();
    verify->add_option("weights_b", weights_b)->required();
    verify->add_option("--trials", trials, "random inputs to test (default 10)");
    verify->add_option("--tol", tolerance, "max allowed deviation (default 1e-5)");
    verify->add_option("--seed", seed, "random input seed");
    verify->add_option("--input", blob_path, "use this blob instead of random inputs");

    // sparsity-train
    double alpha = 0.001, lr = 0.05, momentum = 0.9, weight_decay = 0.0005;
    int steps = 200, checkpoint_every = 0;
    auto* train = app.add_subcommand("sparsity-train", "toy-scale sparsity training");
    train->add_option("--alpha", alpha, "L1 penalty factor (default 0.001)");
    train->add_option("--lr", lr, "learning rate (default 0.05)");
    train->add_option("--momentum", momentum, "sgd momentum (default 0.9)");
    train->add_option("--weight-decay", weight_decay, "kernel weight decay (default 0.0005)");
    train->add_option("--steps", steps, "training steps (default 200)");
    train->add_option("--seed", seed, "scenario seed");
    train->add_option("--checkpoint-every", checkpoint_every, "checkpoint period (0 = end only)");
    train->add_option("-o,--output", out_dir, "output directory")->required();

    // infer
    auto* infer = app.add_subcommand("infer", "forward pass over a tensor blob");
    infer->add_option("cfg", cfg_path)->required();
    infer->add_option("weights", weights_path)->required();
    infer->add_option("blob", blob_path, "float32 blob with a .shape sidecar")->required();
    infer->add_option("--conf", conf, "objectness threshold (default 0.1)");
    infer->add_option("-o,--output", out_path, "write detections to a file");

    // eval
    std::string det_path, gt_dir;
    auto* eval = app.add_subcommand("eval", "score detections against annotations");
    eval->add_option("--det", det_path, "detections file")->required();
    eval->add_option("--gt", gt_dir, "annotation directory (one .txt per image)")->required();
    eval->add_option("--conf", conf, "confidence threshold (default 0.1)");
    eval->add_option("--nms", nms_thr, "nms IoU threshold (default 0.5)");
    eval->add_flag("--csv", csv, "machine-readable output");
    eval->add_option("-o,--output", out_path, "write the summary to a file");

    try {
        app.parse(argc, argv);
        if (analyze->parsed()) return cmd_analyze(cfg_path, input_px, csv, out_path);
        if (spp->parsed()) return cmd_insert_spp(cfg_path, out_path, literal_pool);
        if (prune->parsed())
            return cmd_prune(cfg_path, weights_path, ratio, local_percentile, iterations,
                             out_dir, csv);
        if (verify->parsed())
            return cmd_verify(cfg_path, weights_path, cfg_b, weights_b, trials, tolerance, seed,
                              blob_path);
        if (train->parsed())
            return cmd_sparsity_train(alpha, lr, momentum, weight_decay, steps, seed,
                                      checkpoint_every, out_dir);
        if (infer->parsed()) return cmd_infer(cfg_path, weights_path, blob_path, conf, out_path);
        if (eval->parsed()) return cmd_eval(det_path, gt_dir, conf, nms_thr, csv, out_path);
        return kExitUsage;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    } catch (const slim::ParseError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const slim::ValidationError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const slim::ArgumentError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitVerification;
    }
}
