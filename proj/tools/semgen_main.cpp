#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "semgen/config.hpp"
#include "semgen/dataio.hpp"
#include "semgen/discovery.hpp"
#include "semgen/errors.hpp"
#include "semgen/finetune.hpp"
#include "semgen/kernels.hpp"
#include "semgen/network.hpp"
#include "semgen/pretrain.hpp"
#include "semgen/report.hpp"
#include "semgen/rng.hpp"
#include "semgen/run_record.hpp"
#include "semgen/transforms.hpp"

namespace fs = std::filesystem;
using namespace semgen;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    uint64_t seed = 0;
    bool seed_given = false;
    int workers = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool out_required = true) {
    cmd->add_option("--config", args.config_path, "JSON config file (defaults used when omitted)");
    auto* out = cmd->add_option("--out", args.out_dir, "output directory");
    if (out_required) out->required();
    cmd->add_option("--seed", args.seed, "root seed (overrides the config's)")
        ->each([&args](const std::string&) { args.seed_given = true; });
    cmd->add_option("--workers", args.workers, "worker threads for parallel kernels");
}

Config load_config(const CommonArgs& args) {
    Config cfg;
    if (!args.config_path.empty()) {
        cfg = Config::load(args.config_path);
    } else {
        cfg.bind_derived_fields();
    }
    if (args.seed_given) {
        cfg.seed = args.seed;
        cfg.bind_derived_fields();
    }
    if (args.workers > 0) set_workers(args.workers);
    return cfg;
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw RunError("cannot open " + path.string() + " for writing");
    out << text << '\n';
    if (!out) throw RunError("write failed for " + path.string());
}

RunRecord start_record(const std::string& command, const Config& cfg) {
    RunRecord record;
    record.command = command;
    record.config_hash = cfg.hash();
    record.seed = cfg.seed;
    record.started_at = iso8601_utc_now();
    return record;
}

void finish_record(RunRecord& record, std::vector<std::string> artifacts, const fs::path& out_dir) {
    record.finished_at = iso8601_utc_now();
    record.artifacts = std::move(artifacts);
    save_run_record(record, out_dir);
}

InitSpec parse_init(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) return InitSpec{text, {}};
    InitSpec spec{text.substr(0, eq), fs::path(text.substr(eq + 1))};
    if (spec.name.empty() || spec.weights.empty())
        throw ValidationError("bad --init \"" + text + "\": expected name or name=weights.sgwt");
    return spec;
}

int run_gen_synthetic(const CommonArgs& args) {
    Config cfg = load_config(args);
    RunRecord record = start_record("gen-synthetic", cfg);
    const fs::path out_dir(args.out_dir);

    CorpusManifest manifest;
    const char* cache_root = std::getenv("SEMGEN_CACHE");
    if (cache_root && *cache_root) {
        // corpora are pure functions of the spec, so cache them by spec hash
        const std::string key =
            hash_hex(fnv1a64(phantom_spec_to_json_text(cfg.phantom)));
        const fs::path cache_dir = fs::path(cache_root) / key;
        if (!fs::exists(cache_dir / "manifest.csv"))
            generate_phantom_corpus(cfg.phantom, cache_dir);
        fs::create_directories(out_dir);
        fs::copy(cache_dir, out_dir,
                 fs::copy_options::recursive | fs::copy_options::overwrite_existing);
        manifest = load_manifest(out_dir / "manifest.csv");
        manifest.validate();
    } else {
        manifest = generate_phantom_corpus(cfg.phantom, out_dir);
    }

    std::vector<std::string> artifacts{"manifest.csv", "phantom_spec.json"};
    for (const ManifestEntry& e : manifest.entries) artifacts.push_back(e.path);
    finish_record(record, std::move(artifacts), out_dir);
    std::cout << "generated " << manifest.entries.size() << " patients in " << out_dir.string()
              << "\n";
    return 0;
}

int run_discover(const CommonArgs& args, const std::string& manifest_path) {
    Config cfg = load_config(args);
    RunRecord record = start_record("discover", cfg);
    const fs::path out_dir(args.out_dir);

    CorpusManifest manifest = load_manifest(manifest_path);
    DiscoveryReport report;
    std::vector<PatternCrop> crops = run_discovery(manifest, cfg, cfg.seed, &report);
    save_crop_dataset(crops, out_dir);
    write_text_file(out_dir / "discovery_report.json", discovery_report_to_json_text(report));

    finish_record(record, {"crops.csv", "crops", "discovery_report.json"}, out_dir);
    std::cout << "discovered " << crops.size() << " crops (" << report.references.size()
              << " reference rounds) in " << out_dir.string() << "\n";
    return 0;
}

int run_pretrain(const CommonArgs& args, const std::string& dataset_dir) {
    Config cfg = load_config(args);
    RunRecord record = start_record("pretrain", cfg);
    const fs::path out_dir(args.out_dir);

    std::vector<PatternCrop> crops = load_crop_dataset(dataset_dir);
    PretrainTrainer trainer(DualHeadUNet<float>::build(cfg.model), cfg);
    trainer.run(crops, out_dir);

    finish_record(record, {"log.csv", "weights_final.sgwt", "checkpoints"}, out_dir);
    const EpochLog& last = trainer.log().back();
    std::cout << "pretrained " << last.epoch << " epochs (final loss_total "
              << format_double(last.loss_total) << ") in " << out_dir.string() << "\n";
    return 0;
}

int run_finetune(const CommonArgs& args, const std::string& manifest_path,
                 const std::string& task_name, const std::vector<std::string>& init_texts) {
    Config cfg = load_config(args);
    RunRecord record = start_record("finetune", cfg);
    const fs::path out_dir(args.out_dir);
    const TaskKind kind = task_kind_from_string(task_name);

    std::vector<InitSpec> inits;
    for (const std::string& text : init_texts) inits.push_back(parse_init(text));
    if (inits.empty()) inits.push_back(InitSpec{"scratch", {}});

    CorpusManifest manifest = load_manifest(manifest_path);
    auto [cls_task, seg_task] = make_toy_targets(manifest, cfg, cfg.seed);
    const TargetTask& task = kind == TaskKind::classification ? cls_task : seg_task;

    CompareResult result = compare_inits(task, inits, cfg, cfg.seed);
    fs::create_directories(out_dir);
    save_compare_csv(result, out_dir / "finetune_results.csv");
    write_text_file(out_dir / "finetune_summary.json", compare_result_to_json_text(result));

    finish_record(record, {"finetune_results.csv", "finetune_summary.json"}, out_dir);
    for (const InitSummary& s : result.inits)
        std::cout << task.name << " " << result.metric << " [" << s.init
                  << "]: " << format_double(s.mean) << " +/- " << format_double(s.sd) << "\n";
    return 0;
}

int run_evaluate(const CommonArgs& args, const std::string& dataset_dir,
                 const std::string& weights_path) {
    Config cfg = load_config(args);
    RunRecord record = start_record("evaluate", cfg);
    const fs::path out_dir(args.out_dir);

    std::vector<PatternCrop> crops = load_crop_dataset(dataset_dir);
    DualHeadUNet<float> model = DualHeadUNet<float>::build(cfg.model);
    auto ps = model.params();
    load_weights(ps, weights_path);
    PretextMetrics metrics = evaluate_pretext(model, crops, cfg.pretrain.loss_weights);

    std::ostringstream json;
    json << "{\n"
         << "  \"accuracy\": " << format_double(metrics.accuracy) << ",\n"
         << "  \"loss_cls\": " << format_double(metrics.loss_cls) << ",\n"
         << "  \"loss_rec\": " << format_double(metrics.loss_rec) << ",\n"
         << "  \"loss_total\": " << format_double(metrics.loss_total) << ",\n"
         << "  \"n_crops\": " << crops.size() << ",\n"
         << "  \"weights\": \"" << weights_path << "\"\n"
         << "}";
    fs::create_directories(out_dir);
    write_text_file(out_dir / "evaluation.json", json.str());

    finish_record(record, {"evaluation.json"}, out_dir);
    std::cout << "accuracy " << format_double(metrics.accuracy) << ", loss_rec "
              << format_double(metrics.loss_rec) << " over " << crops.size() << " crops\n";
    return 0;
}

int run_transform_preview(const CommonArgs& args, const std::string& input_path) {
    Config cfg = load_config(args);
    RunRecord record = start_record("transform-preview", cfg);
    const fs::path out_dir(args.out_dir);

    const Volume before = load_volume(input_path);
    auto [after, rec] = compose(before, cfg.transforms, derive_seed(cfg.seed, "preview"));
    fs::create_directories(out_dir);
    save_volume(before, out_dir / "before.sgvol");
    save_volume(after, out_dir / "after.sgvol");
    write_text_file(out_dir / "transform_record.json", record_to_json_text(rec));

    finish_record(record, {"before.sgvol", "after.sgvol", "transform_record.json"}, out_dir);
    std::cout << "applied " << rec.steps.size() << " transform step(s)\n";
    return 0;
}

int run_report(const CommonArgs& args, const std::string& log_path,
               const std::string& summary_path) {
    Config cfg = load_config(args);
    RunRecord record = start_record("report", cfg);
    const fs::path out_dir(args.out_dir);
    if (log_path.empty() && summary_path.empty())
        throw ValidationError("report: nothing to render (pass --log and/or --summary)");

    fs::create_directories(out_dir);
    std::vector<std::string> artifacts;
    if (!log_path.empty()) {
        render_loss_curve(load_training_log(log_path), out_dir / "loss_curve.bmp");
        artifacts.push_back("loss_curve.bmp");
    }
    if (!summary_path.empty()) {
        write_metric_table(compare_result_from_json_text(read_text_file(summary_path)),
                           out_dir / "metric_table.csv");
        artifacts.push_back("metric_table.csv");
    }

    const size_t n_files = artifacts.size();
    finish_record(record, std::move(artifacts), out_dir);
    std::cout << "wrote " << n_files << " report file(s) to " << out_dir.string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"semgen: self-supervised pretraining by self-discovery, self-classification "
                 "and self-restoration"};
    app.require_subcommand(1);

    CommonArgs gen_args;
    auto* gen = app.add_subcommand("gen-synthetic", "generate a synthetic phantom corpus");
    add_common(gen, gen_args);

    CommonArgs disc_args;
    std::string disc_manifest;
    auto* disc = app.add_subcommand("discover", "build the pattern crop dataset by similarity");
    add_common(disc, disc_args);
    disc->add_option("--manifest", disc_manifest, "corpus manifest.csv")->required();

    CommonArgs pre_args;
    std::string pre_dataset;
    auto* pre = app.add_subcommand("pretrain", "run warmup + joint pretext training");
    add_common(pre, pre_args);
    pre->add_option("--dataset", pre_dataset, "crop dataset directory")->required();

    CommonArgs fin_args;
    std::string fin_manifest, fin_task = "segmentation";
    std::vector<std::string> fin_inits;
    auto* fin = app.add_subcommand("finetune", "fine-tune and compare initializations");
    add_common(fin, fin_args);
    fin->add_option("--manifest", fin_manifest, "corpus manifest.csv")->required();
    fin->add_option("--task", fin_task, "classification or segmentation");
    fin->add_option("--init", fin_inits, "initialization: NAME (scratch) or NAME=weights.sgwt");

    CommonArgs eval_args;
    std::string eval_dataset, eval_weights;
    auto* eval = app.add_subcommand("evaluate", "evaluate pretext metrics of a weights file");
    add_common(eval, eval_args);
    eval->add_option("--dataset", eval_dataset, "crop dataset directory")->required();
    eval->add_option("--weights", eval_weights, "weights .sgwt file")->required();

    CommonArgs prev_args;
    std::string prev_input;
    auto* prev = app.add_subcommand("transform-preview", "emit before/after volumes and record");
    add_common(prev, prev_args);
    prev->add_option("--input", prev_input, "input .sgvol volume")->required();

    CommonArgs rep_args;
    std::string rep_log, rep_summary;
    auto* rep = app.add_subcommand("report", "render loss curves and metric tables");
    add_common(rep, rep_args);
    rep->add_option("--log", rep_log, "training log.csv to plot");
    rep->add_option("--summary", rep_summary, "finetune_summary.json to tabulate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (gen->parsed()) return run_gen_synthetic(gen_args);
        if (disc->parsed()) return run_discover(disc_args, disc_manifest);
        if (pre->parsed()) return run_pretrain(pre_args, pre_dataset);
        if (fin->parsed()) return run_finetune(fin_args, fin_manifest, fin_task, fin_inits);
        if (eval->parsed()) return run_evaluate(eval_args, eval_dataset, eval_weights);
        if (prev->parsed()) return run_transform_preview(prev_args, prev_input);
        if (rep->parsed()) return run_report(rep_args, rep_log, rep_summary);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const RunError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
