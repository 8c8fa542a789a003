// Command-line front end: cost analysis, classifier training, the two-stage
// recognition pipeline, synthetic dataset generation, and detection
// evaluation. Exit codes: 0 success, 1 usage, 2 data/format error,
// 3 reference-check failure.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "weldsign/cost.hpp"
#include "weldsign/metrics.hpp"
#include "weldsign/pipeline.hpp"
#include "weldsign/synth.hpp"
#include "weldsign/train.hpp"

namespace {

using namespace weldsign;

struct AnalyzeOptions {
    std::string model = "gynet";
    int input = 0;
    int width_div = 1;
    bool json = false;
    bool table = false;
    std::string check;
    bool dump_graph = false;
    bool count_bn_pool = false;
};

NetGraph graph_for_model(const std::string& model, int width_div) {
    if (model == "grnet") return build_grnet(width_div);
    if (model == "gynet") return build_gynet(GynetVariant::Full);
    if (model == "gynet-baseline") return build_gynet(GynetVariant::Baseline);
    if (model == "gynet-sib") return build_gynet(GynetVariant::SibOnly);
    if (model == "gynet-cwb") return build_gynet(GynetVariant::CwbOnly);
    throw std::invalid_argument("unknown model '" + model + "'");
}

int run_analyze(const AnalyzeOptions& opt) {
    const NetGraph g = graph_for_model(opt.model, opt.width_div);
    const int input = opt.input > 0 ? opt.input : (opt.model == "grnet" ? 224 : 416);
    CostConventions conventions;
    conventions.bn_counted = opt.count_bn_pool;
    conventions.pool_counted = opt.count_bn_pool;
    const CostReport report = analyze(g, {input, input, 3}, conventions);

    if (opt.dump_graph) {
        std::cout << graph_to_json(g).dump(2) << "\n";
        return 0;
    }
    if (opt.json) {
        std::cout << report.to_json().dump(2) << "\n";
    } else if (opt.table || opt.check.empty()) {
        std::cout << report.to_table();
    }

    if (opt.check.empty()) return 0;
    if (opt.check != "paper") throw std::invalid_argument("unknown reference set '" + opt.check + "'");

    std::vector<ReferenceCheck> checks;
    if (opt.model == "gynet") {
        checks = compare_to_reference(report, gynet_reference());
    } else if (opt.model == "gynet-baseline") {
        checks = compare_to_reference(report, gynet_baseline_reference());
    } else if (opt.model == "gynet-sib") {
        checks = compare_to_reference(report, gynet_sib_reference());
    } else if (opt.model == "gynet-cwb") {
        checks = compare_to_reference(report, gynet_cwb_reference());
    } else {
        // no published totals are reproducible for this model; check the
        // analyzer against the exact element count of a generated store
        const WeightStore store = init_weights(g, 1, {input, input, 3});
        ReferenceCheck c;
        c.metric = "params (weight-store float count)";
        c.expected = static_cast<double>(store.total_floats());
        c.actual = static_cast<double>(report.total_params);
        c.rel_err = std::abs(c.actual - c.expected) / std::max(1.0, c.expected);
        c.pass = report.total_params == store.total_floats();
        checks.push_back(c);
    }

    bool all_pass = true;
    for (const auto& c : checks) {
        std::cout << (c.pass ? "PASS" : "FAIL") << "  " << c.metric << ": got " << c.actual << ", expected "
                  << c.expected << " (rel err " << std::fixed << std::setprecision(4) << c.rel_err << ")\n";
        all_pass = all_pass && c.pass;
    }
    return all_pass ? 0 : 3;
}

struct DirectorySource final : LabeledImageSource {
    std::vector<std::pair<std::string, int>> entries;

    explicit DirectorySource(const std::string& dir) {
        std::ifstream manifest(dir + "/labels.jsonl");
        if (!manifest) throw std::runtime_error("cannot open '" + dir + "/labels.jsonl'");
        std::string line;
        while (std::getline(manifest, line)) {
            if (line.empty()) continue;
            const auto j = nlohmann::json::parse(line);
            entries.emplace_back(dir + "/" + j.at("image").get<std::string>(), j.at("label").get<int>());
        }
        if (entries.empty()) throw std::runtime_error("empty dataset manifest in '" + dir + "'");
    }

    int size() const override { return static_cast<int>(entries.size()); }
    OrientationSample item(int index) const override {
        const auto& [path, label] = entries.at(static_cast<size_t>(index));
        return {load_ppm(path), label};
    }
};

int run_train_cls(const std::string& data_dir, const std::string& val_dir, int synth_n, int synth_val_n,
                  TrainConfig cfg, int width_div, const std::string& out_path, const std::string& log_path) {
    std::unique_ptr<LabeledImageSource> train_src, val_src;
    if (!data_dir.empty()) {
        train_src = std::make_unique<DirectorySource>(data_dir);
        val_src = std::make_unique<DirectorySource>(val_dir.empty() ? data_dir : val_dir);
    } else {
        train_src = std::make_unique<GeneratedOrientationSource>(synth_n, cfg.seed);
        val_src = std::make_unique<GeneratedOrientationSource>(synth_val_n, cfg.seed, 224, synth_n);
    }
    const NetGraph g = build_grnet(width_div);
    std::cerr << "training " << (width_div > 1 ? "width-1/" + std::to_string(width_div) + " " : "")
              << "classifier on " << train_src->size() << " images, validating on " << val_src->size() << "\n";
    const TrainResult result = train(g, *train_src, *val_src, cfg);
    for (const auto& e : result.log) {
        std::cerr << "epoch " << e.epoch << "  loss " << e.train_loss << "  val_acc " << e.val_accuracy
                  << "  lr " << e.lr << "\n";
    }
    save_weights_file(out_path, result.best_weights);
    if (!log_path.empty()) {
        std::ofstream f(log_path);
        f << result.log_to_json().dump(2) << "\n";
    }
    std::cout << result.log_to_json()["best_val_accuracy"] << "\n";
    return 0;
}

int grnet_width_div_for(const WeightStore& w) {
    // the stem kernel is 3×3×3×(64/width_div)
    return 64 / w.get("stem.conv.weight").dim(3);
}

int run_classify(const std::string& image_path, const std::string& weights_path, bool json_out) {
    const Tensor image = load_ppm(image_path);
    const WeightStore weights = load_weights_file(weights_path);
    const NetGraph g = build_grnet(grnet_width_div_for(weights));
    const auto [cls, conf] = classify_orientation(image, g, weights);
    if (json_out) {
        std::cout << nlohmann::json{{"class", cls}, {"confidence", conf}}.dump() << "\n";
    } else {
        std::cout << "class " << cls << " confidence " << conf << "\n";
    }
    return 0;
}

int run_recognize(const std::string& image_path, const std::string& weights_path, PipelineConfig cfg,
                  const std::string& out_path) {
    const Tensor image = load_ppm(image_path);
    const WeightStore weights = load_weights_file(weights_path);
    const NetGraph g = build_gynet(GynetVariant::Full);
    const std::vector<Detection> dets = recognize(image, g, weights, cfg);
    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path);
        if (!file) throw std::runtime_error("cannot open '" + out_path + "' for writing");
        out = &file;
    }
    for (const auto& d : dets) (*out) << detection_to_json(d, cfg.class_names).dump() << "\n";
    return 0;
}

int run_pipeline_cmd(const std::string& image_path, const std::string& cls_weights_path,
                     const std::string& det_weights_path, const PipelineConfig& cfg,
                     const std::string& json_path) {
    const Tensor image = load_ppm(image_path);
    const WeightStore cls_weights = load_weights_file(cls_weights_path);
    const WeightStore det_weights = load_weights_file(det_weights_path);
    const NetGraph grnet = build_grnet(grnet_width_div_for(cls_weights));
    const NetGraph gynet = build_gynet(GynetVariant::Full);
    const PipelineResult result = run_pipeline(image, grnet, cls_weights, gynet, det_weights, cfg);
    const nlohmann::json j = result.to_json(cfg);
    if (!json_path.empty()) {
        std::ofstream f(json_path);
        if (!f) throw std::runtime_error("cannot open '" + json_path + "' for writing");
        f << j.dump(2) << "\n";
    } else {
        std::cout << j.dump(2) << "\n";
    }
    return 0;
}

int run_synth(const std::string& kind, int n, uint64_t seed, const std::string& out_dir) {
    if (kind == "orientation") {
        write_orientation_dataset(out_dir, n, seed);
    } else if (kind == "scenes") {
        write_scene_dataset(out_dir, n, seed);
    } else {
        throw std::invalid_argument("unknown dataset kind '" + kind + "'");
    }
    std::cout << "wrote " << n << " " << kind << " samples to " << out_dir << "\n";
    return 0;
}

int run_eval(const std::string& pred_path, const std::string& gt_path, double iou_thr) {
    auto read_lines = [](const std::string& path) {
        std::ifstream f(path);
        if (!f) throw std::runtime_error("cannot open '" + path + "'");
        std::vector<nlohmann::json> lines;
        std::string line;
        while (std::getline(f, line)) {
            if (!line.empty()) lines.push_back(nlohmann::json::parse(line));
        }
        return lines;
    };
    std::vector<Detection> dets;
    for (const auto& j : read_lines(pred_path)) dets.push_back(detection_from_json(j));
    std::vector<GroundTruthBox> gts;
    for (const auto& j : read_lines(gt_path)) gts.push_back(gt_from_json(j));
    const EvalReport report = evaluate_detections(dets, gts, iou_thr);
    std::cout << report.to_json().dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"X-ray weld sign recognition toolkit"};
    app.require_subcommand(1);

    AnalyzeOptions an;
    auto* analyze_cmd = app.add_subcommand("analyze", "static cost report for a model");
    analyze_cmd->add_option("--model", an.model, "grnet | gynet | gynet-baseline | gynet-sib | gynet-cwb");
    analyze_cmd->add_option("--input", an.input, "input resolution (default 224/416 per model)");
    analyze_cmd->add_option("--width-div", an.width_div, "channel divisor for grnet miniatures");
    analyze_cmd->add_flag("--json", an.json, "emit the full report as JSON");
    analyze_cmd->add_flag("--table", an.table, "emit the per-layer table");
    analyze_cmd->add_option("--check", an.check, "compare totals against the named reference set");
    analyze_cmd->add_flag("--dump-graph", an.dump_graph, "emit the layer graph as JSON and exit");
    analyze_cmd->add_flag("--count-bn-pool", an.count_bn_pool, "include BN/pooling work in flops");

    std::string data_dir, val_dir, out_path = "weights.wld", log_path;
    int synth_n = 2000, synth_val_n = 400, width_div = 4;
    TrainConfig cfg;
    auto* train_cmd = app.add_subcommand("train-cls", "train the orientation classifier");
    train_cmd->add_option("--data", data_dir, "dataset directory (PPM files + labels.jsonl)");
    train_cmd->add_option("--val-data", val_dir, "validation directory (defaults to --data)");
    train_cmd->add_option("--synth", synth_n, "train on generated data: number of samples");
    train_cmd->add_option("--synth-val", synth_val_n, "generated validation samples");
    train_cmd->add_option("--epochs", cfg.epochs, "epochs");
    train_cmd->add_option("--lr", cfg.lr0, "initial learning rate");
    train_cmd->add_option("--batch", cfg.batch_size, "mini-batch size");
    train_cmd->add_option("--seed", cfg.seed, "RNG seed");
    train_cmd->add_option("--label-smoothing", cfg.label_smoothing, "label smoothing epsilon");
    train_cmd->add_option("--width-div", width_div, "classifier channel divisor (1 = full network)");
    train_cmd->add_option("--out", out_path, "output weight file");
    train_cmd->add_option("--log", log_path, "JSON training log path");

    std::string image_path, weights_path;
    bool json_flag = false;
    auto* classify_cmd = app.add_subcommand("classify", "classify cross-mark orientation");
    classify_cmd->add_option("--image", image_path)->required();
    classify_cmd->add_option("--weights", weights_path)->required();
    classify_cmd->add_flag("--json", json_flag);

    std::string rec_image, rec_weights, rec_out;
    PipelineConfig pipe_cfg;
    auto* recognize_cmd = app.add_subcommand("recognize", "detect signs on one image");
    recognize_cmd->add_option("--image", rec_image)->required();
    recognize_cmd->add_option("--weights", rec_weights)->required();
    recognize_cmd->add_option("--conf", pipe_cfg.conf_threshold, "confidence threshold");
    recognize_cmd->add_option("--iou", pipe_cfg.nms_iou, "NMS IoU threshold");
    recognize_cmd->add_option("--out", rec_out, "detections JSONL path (default stdout)");

    std::string pl_image, pl_cls, pl_det, pl_json, pl_config;
    auto* pipeline_cmd = app.add_subcommand("pipeline", "classify, redirect, recognize");
    pipeline_cmd->add_option("--image", pl_image)->required();
    pipeline_cmd->add_option("--cls-weights", pl_cls)->required();
    pipeline_cmd->add_option("--det-weights", pl_det)->required();
    pipeline_cmd->add_option("--config", pl_config, "pipeline config JSON");
    pipeline_cmd->add_option("--json-out", pl_json, "result path (default stdout)");

    std::string synth_kind = "orientation", synth_out = "dataset";
    int sn = 100;
    uint64_t sseed = 7;
    auto* synth_cmd = app.add_subcommand("synth", "generate synthetic datasets");
    synth_cmd->add_option("--kind", synth_kind, "orientation | scenes");
    synth_cmd->add_option("--n", sn, "sample count");
    synth_cmd->add_option("--seed", sseed, "RNG seed");
    synth_cmd->add_option("--out", synth_out, "output directory")->required();

    std::string eval_pred, eval_gt;
    double eval_iou = 0.5;
    auto* eval_cmd = app.add_subcommand("eval", "detection metrics from JSONL files");
    eval_cmd->add_option("--pred", eval_pred)->required();
    eval_cmd->add_option("--gt", eval_gt)->required();
    eval_cmd->add_option("--iou", eval_iou, "matching IoU threshold");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*analyze_cmd) return run_analyze(an);
        if (*train_cmd) {
            return run_train_cls(data_dir, val_dir, synth_n, synth_val_n, cfg, width_div, out_path, log_path);
        }
        if (*classify_cmd) return run_classify(image_path, weights_path, json_flag);
        if (*recognize_cmd) return run_recognize(rec_image, rec_weights, pipe_cfg, rec_out);
        if (*pipeline_cmd) {
            PipelineConfig cfg2 = pipe_cfg;
            if (!pl_config.empty()) {
                std::ifstream f(pl_config);
                if (!f) throw std::runtime_error("cannot open config '" + pl_config + "'");
                cfg2 = PipelineConfig::from_json(nlohmann::json::parse(f));
            }
            return run_pipeline_cmd(pl_image, pl_cls, pl_det, cfg2, pl_json);
        }
        if (*synth_cmd) return run_synth(synth_kind, sn, sseed, synth_out);
        if (*eval_cmd) return run_eval(eval_pred, eval_gt, eval_iou);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
