#include "semgen/finetune.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "semgen/discovery.hpp"
#include "semgen/errors.hpp"
#include "semgen/losses.hpp"
#include "semgen/metrics.hpp"
#include "semgen/optimizer.hpp"
#include "semgen/rng.hpp"

namespace semgen {

using nlohmann::json;

void TargetTask::validate(const Shape3& input_shape) const {
    if (train.empty()) throw ValidationError("target task \"" + name + "\": no training samples");
    if (heldout.empty()) throw ValidationError("target task \"" + name + "\": no held-out samples");
    if (kind == TaskKind::classification && n_classes < 2)
        throw ValidationError("target task \"" + name + "\": needs at least 2 classes");
    auto check = [&](const TargetSample& s) {
        s.input.validate("target task \"" + name + "\" input");
        if (!(s.input.shape == input_shape))
            throw ValidationError("target task \"" + name + "\": sample shape " +
                                  to_string(s.input.shape) + " does not match input shape " +
                                  to_string(input_shape));
        if (kind == TaskKind::classification) {
            if (s.label < 0 || s.label >= n_classes)
                throw ValidationError("target task \"" + name + "\": label " +
                                      std::to_string(s.label) + " out of range");
            return;
        }
        if (!(s.mask.shape == s.input.shape))
            throw ValidationError("target task \"" + name + "\": mask shape mismatch");
        int64_t on = 0;
        for (float v : s.mask.voxels) {
            if (v != 0.0f && v != 1.0f)
                throw ValidationError("target task \"" + name + "\": mask is not binary");
            on += v == 1.0f;
        }
        if (on == 0) throw ValidationError("target task \"" + name + "\": empty mask");
    };
    for (const TargetSample& s : train) check(s);
    for (const TargetSample& s : heldout) check(s);
}

namespace {

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw RunError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int64_t phantom_patient_index(const std::string& patient_id) {
    const auto pos = patient_id.rfind('_');
    if (pos != std::string::npos) {
        try {
            return std::stoll(patient_id.substr(pos + 1));
        } catch (const std::exception&) {
        }
    }
    throw ValidationError("segmentation task: patient id \"" + patient_id +
                          "\" is not a phantom id");
}

Volume crop_window(const Volume& v, const std::array<int64_t, 3>& origin, const Shape3& ext) {
    Volume out(ext);
    size_t i = 0;
    for (int64_t z = origin[0]; z < origin[0] + ext.d; ++z)
        for (int64_t y = origin[1]; y < origin[1] + ext.h; ++y)
            for (int64_t x = origin[2]; x < origin[2] + ext.w; ++x)
                out.voxels[i++] = v.at(z, y, x);
    return out;
}

std::vector<TargetSample> coordinate_samples(const CorpusManifest& corpus,
                                             const std::vector<std::string>& ids,
                                             const std::vector<Coordinate>& coords,
                                             const PretrainConfig& cut_cfg) {
    std::vector<TargetSample> samples;
    for (PatternCrop& crop : extract_crops_for_patients(corpus, ids, coords, cut_cfg)) {
        TargetSample s;
        s.input = std::move(crop.data);
        s.label = crop.coordinate_index;
        s.patient_id = crop.patient_id;
        samples.push_back(std::move(s));
    }
    return samples;
}

std::vector<TargetSample> structure_samples(const CorpusManifest& corpus, const PhantomSpec& spec,
                                            const std::vector<ManifestEntry>& entries,
                                            const Shape3& ext, int64_t structure,
                                            int64_t samples_per_patient, uint64_t seed) {
    std::vector<TargetSample> samples;
    for (const ManifestEntry& entry : entries) {
        const int64_t idx = phantom_patient_index(entry.patient_id);
        const Volume vol = corpus.load(entry);
        const Volume mask = structure_mask(spec, idx, structure);
        const auto center = patient_primitives(spec, idx)[static_cast<size_t>(structure)].center;
        const std::array<int64_t, 3> axes{vol.shape.d, vol.shape.h, vol.shape.w};
        const std::array<int64_t, 3> exts{ext.d, ext.h, ext.w};
        for (int64_t k = 0; k < samples_per_patient; ++k) {
            Rng rng(derive_seed(seed, "task_seg_offset", static_cast<uint64_t>(idx),
                                static_cast<uint64_t>(k)));
            std::array<int64_t, 3> origin{};
            for (int a = 0; a < 3; ++a) {
                const size_t ai = static_cast<size_t>(a);
                // keep the structure center inside the window so the mask
                // crop is never empty
                const int64_t max_off = std::max<int64_t>(0, exts[ai] / 2 - 2);
                const int64_t off = rng.uniform_int(-max_off, max_off);
                const int64_t o = std::llround(center[ai]) - exts[ai] / 2 + off;
                origin[ai] = std::clamp<int64_t>(o, 0, axes[ai] - exts[ai]);
            }
            TargetSample s;
            s.input = crop_window(vol, origin, ext);
            s.mask = crop_window(mask, origin, ext);
            s.patient_id = entry.patient_id;
            samples.push_back(std::move(s));
        }
    }
    return samples;
}

} // namespace

std::pair<TargetTask, TargetTask> make_toy_targets(const CorpusManifest& corpus,
                                                   const Config& config, uint64_t seed) {
    corpus.validate();
    config.finetune.validate();
    const auto train_entries = corpus.split_entries("train");
    const auto heldout_entries = corpus.split_entries("heldout");
    if (train_entries.empty())
        throw ValidationError("make_toy_targets: corpus has no train split");
    if (heldout_entries.size() < 2)
        throw ValidationError("make_toy_targets: need at least 2 held-out patients, have " +
                              std::to_string(heldout_entries.size()));
    const Shape3 ref_shape = train_entries.front().shape;
    const Shape3 crop_shape = config.pretrain.canonical_crop_shape;

    // classification: same coordinate set the discovery stage derives from
    // this seed, crops from held-out patients only
    const std::vector<Coordinate> coords =
        sample_coordinates(ref_shape, config.pretrain.C, crop_shape, config.discovery.max_overlap,
                           config.discovery.coordinate_attempts, seed);
    std::vector<std::string> heldout_ids;
    for (const auto& e : heldout_entries) heldout_ids.push_back(e.patient_id);
    Rng split_rng(derive_seed(seed, "task_cls_split"));
    split_rng.shuffle(heldout_ids);
    const size_t n_cls_train = heldout_ids.size() / 2;
    std::vector<std::string> cls_train_ids(heldout_ids.begin(),
                                           heldout_ids.begin() + static_cast<std::ptrdiff_t>(n_cls_train));
    std::vector<std::string> cls_eval_ids(heldout_ids.begin() + static_cast<std::ptrdiff_t>(n_cls_train),
                                          heldout_ids.end());
    PretrainConfig cut_cfg = config.pretrain;
    cut_cfg.scale_factors = {1.0};

    TargetTask cls;
    cls.kind = TaskKind::classification;
    cls.name = "coordinate_classification";
    cls.n_classes = config.pretrain.C;
    cls.train = coordinate_samples(corpus, cls_train_ids, coords, cut_cfg);
    cls.heldout = coordinate_samples(corpus, cls_eval_ids, coords, cut_cfg);

    // segmentation: the phantom spec stored beside the corpus (falling back
    // to the configured one) gives the analytic ground-truth masks
    PhantomSpec spec = config.phantom;
    const auto spec_path = corpus.root / "phantom_spec.json";
    if (std::filesystem::exists(spec_path))
        spec = phantom_spec_from_json_text(read_text_file(spec_path));
    if (!(spec.base_shape == ref_shape))
        throw ValidationError("make_toy_targets: phantom spec shape " + to_string(spec.base_shape) +
                              " does not match corpus volume shape " + to_string(ref_shape));
    const int64_t structure = config.finetune.designated_structure;
    if (structure < 0 || structure >= spec.n_structures)
        throw ValidationError("make_toy_targets: designated structure " +
                              std::to_string(structure) + " out of range (corpus has " +
                              std::to_string(spec.n_structures) + ")");

    TargetTask seg;
    seg.kind = TaskKind::segmentation;
    seg.name = "structure_segmentation";
    seg.train = structure_samples(corpus, spec, train_entries, crop_shape, structure,
                                  config.finetune.samples_per_patient, seed);
    seg.heldout = structure_samples(corpus, spec, heldout_entries, crop_shape, structure,
                                    config.finetune.samples_per_patient, seed);

    cls.validate(crop_shape);
    seg.validate(crop_shape);
    return {std::move(cls), std::move(seg)};
}

namespace {

struct SampleBatch {
    Tensor<float> input;
    Tensor<float> onehot; // classification
    Tensor<float> mask;   // segmentation
};

SampleBatch make_sample_batch(const std::vector<TargetSample>& samples,
                              const std::vector<size_t>& which, TaskKind kind, int64_t n_classes,
                              const Shape3& shape) {
    const int64_t B = static_cast<int64_t>(which.size());
    SampleBatch batch{Tensor<float>({B, 1, shape.d, shape.h, shape.w}), Tensor<float>(), Tensor<float>()};
    if (kind == TaskKind::classification)
        batch.onehot = Tensor<float>({B, n_classes});
    else
        batch.mask = Tensor<float>({B, 1, shape.d, shape.h, shape.w});
    const int64_t per = shape.voxels();
    for (int64_t b = 0; b < B; ++b) {
        const TargetSample& s = samples[which[static_cast<size_t>(b)]];
        std::copy(s.input.voxels.begin(), s.input.voxels.end(), batch.input.data() + b * per);
        if (kind == TaskKind::classification)
            batch.onehot.at2(b, s.label) = 1.0f;
        else
            std::copy(s.mask.voxels.begin(), s.mask.voxels.end(), batch.mask.data() + b * per);
    }
    return batch;
}

template <typename Net>
double train_target(Net& net, const std::vector<TargetSample>& samples,
                    const std::vector<size_t>& budget_ids, TaskKind kind, int64_t n_classes,
                    const FinetuneConfig& fc, const Shape3& shape, uint64_t seed) {
    auto ps = net.params();
    Adam<float> opt(fc.learning_rate);
    opt.attach(ps);
    std::vector<size_t> order = budget_ids;
    double epoch_loss = 0.0;
    for (int64_t epoch = 1; epoch <= fc.epochs; ++epoch) {
        Rng order_rng(derive_seed(seed, "order", static_cast<uint64_t>(epoch)));
        order_rng.shuffle(order);
        double sum = 0.0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(fc.batch_size)) {
            const size_t stop = std::min(order.size(), start + static_cast<size_t>(fc.batch_size));
            std::vector<size_t> which(order.begin() + static_cast<std::ptrdiff_t>(start),
                                      order.begin() + static_cast<std::ptrdiff_t>(stop));
            SampleBatch batch = make_sample_batch(samples, which, kind, n_classes, shape);
            double l = 0.0;
            net.zero_grad();
            if (kind == TaskKind::classification) {
                const Tensor<float>& logits = net.forward(batch.input);
                Tensor<float> probs(logits.shape());
                kernels::softmax_rows(logits, probs);
                l = loss_cls(probs, batch.onehot);
                Tensor<float> gprobs(probs.shape());
                loss_cls_backward(probs, batch.onehot, gprobs);
                Tensor<float> glogits(probs.shape());
                softmax_backward(probs, gprobs, glogits);
                net.backward(glogits);
            } else {
                const Tensor<float>& probs = net.forward(batch.input);
                l = dice_loss(probs, batch.mask);
                Tensor<float> gprobs(probs.shape());
                dice_loss_backward(probs, batch.mask, gprobs);
                net.backward(gprobs);
            }
            if (!std::isfinite(l))
                throw RunError("divergence at epoch " + std::to_string(epoch) + " (finetune)");
            sum += l * static_cast<double>(which.size());
            opt.step(ps);
        }
        epoch_loss = sum / static_cast<double>(order.size());
    }
    return epoch_loss;
}

constexpr size_t kEvalBatch = 4;

double eval_classification(EncoderClassifier<float>& net, const std::vector<TargetSample>& samples,
                           int64_t n_classes, const Shape3& shape) {
    std::vector<std::vector<double>> scores;
    std::vector<int> labels;
    for (size_t start = 0; start < samples.size(); start += kEvalBatch) {
        const size_t stop = std::min(samples.size(), start + kEvalBatch);
        std::vector<size_t> which(stop - start);
        std::iota(which.begin(), which.end(), start);
        SampleBatch batch =
            make_sample_batch(samples, which, TaskKind::classification, n_classes, shape);
        const Tensor<float>& logits = net.forward(batch.input);
        Tensor<float> probs(logits.shape());
        kernels::softmax_rows(logits, probs);
        for (int64_t b = 0; b < probs.dim(0); ++b) {
            std::vector<double> row(static_cast<size_t>(n_classes));
            for (int64_t c = 0; c < n_classes; ++c)
                row[static_cast<size_t>(c)] = static_cast<double>(probs.at2(b, c));
            scores.push_back(std::move(row));
            labels.push_back(samples[start + static_cast<size_t>(b)].label);
        }
    }
    return macro_auc(scores, labels, static_cast<int>(n_classes));
}

std::pair<double, double> eval_segmentation(SegmentationNet<float>& net,
                                            const std::vector<TargetSample>& samples,
                                            const Shape3& shape) {
    double iou_sum = 0.0, dice_sum = 0.0;
    const int64_t per = shape.voxels();
    for (size_t start = 0; start < samples.size(); start += kEvalBatch) {
        const size_t stop = std::min(samples.size(), start + kEvalBatch);
        std::vector<size_t> which(stop - start);
        std::iota(which.begin(), which.end(), start);
        SampleBatch batch = make_sample_batch(samples, which, TaskKind::segmentation, 0, shape);
        const Tensor<float>& probs = net.forward(batch.input);
        for (int64_t b = 0; b < static_cast<int64_t>(which.size()); ++b) {
            const float* p = probs.data() + b * per;
            const float* m = batch.mask.data() + b * per;
            iou_sum += iou(p, m, per);
            dice_sum += dice(p, m, per);
        }
    }
    const double n = static_cast<double>(samples.size());
    return {iou_sum / n, dice_sum / n};
}

} // namespace

FinetuneMetrics finetune(const TargetTask& task, const InitSpec& init, const Config& config,
                         uint64_t seed) {
    config.finetune.validate();
    task.validate(config.model.input_shape);

    const int64_t budget = std::max<int64_t>(
        1, std::llround(config.finetune.label_budget_fraction *
                        static_cast<double>(task.train.size())));
    // the budget subset depends on the seed only, never on the init, so every
    // initialization trains and evaluates on identical data
    std::vector<size_t> ids(task.train.size());
    std::iota(ids.begin(), ids.end(), size_t{0});
    Rng budget_rng(derive_seed(seed, "budget"));
    budget_rng.shuffle(ids);
    ids.resize(static_cast<size_t>(budget));

    ModelConfig mc = config.model;
    mc.n_classes = task.kind == TaskKind::classification ? task.n_classes : mc.n_classes;
    const uint64_t init_seed = derive_seed(seed, "task_init");

    FinetuneMetrics metrics;
    metrics.init = init.name;
    metrics.seed = seed;

    auto run_net = [&](auto& net) {
        metrics.train_loss =
            train_target(net, task.train, ids, task.kind, task.n_classes, config.finetune,
                         config.model.input_shape, seed);
    };

    if (task.kind == TaskKind::classification) {
        EncoderClassifier<float> net = [&] {
            if (init.weights.empty())
                return EncoderClassifier<float>::build(mc, task.n_classes,
                                                       config.finetune.head_hidden, init_seed);
            auto source = DualHeadUNet<float>::build(config.model);
            auto src_ps = source.params();
            load_weights(src_ps, init.weights);
            return std::get<EncoderClassifier<float>>(split_for_target(
                source, TaskKind::classification, task.n_classes, config.finetune.head_hidden,
                init_seed));
        }();
        run_net(net);
        metrics.auc = eval_classification(net, task.heldout, task.n_classes,
                                          config.model.input_shape);
    } else {
        SegmentationNet<float> net = [&] {
            if (init.weights.empty()) return SegmentationNet<float>::build(mc, init_seed);
            auto source = DualHeadUNet<float>::build(config.model);
            auto src_ps = source.params();
            load_weights(src_ps, init.weights);
            return std::get<SegmentationNet<float>>(split_for_target(
                source, TaskKind::segmentation, 0, config.finetune.head_hidden, init_seed));
        }();
        run_net(net);
        const auto [iou_mean, dice_mean] =
            eval_segmentation(net, task.heldout, config.model.input_shape);
        metrics.iou = iou_mean;
        metrics.dice = dice_mean;
    }
    return metrics;
}

CompareResult compare_inits(const TargetTask& task, const std::vector<InitSpec>& inits,
                            const Config& config, uint64_t root_seed) {
    if (inits.empty()) throw ValidationError("compare_inits: no initializations given");
    CompareResult result;
    result.metric = task.kind == TaskKind::classification ? "auc" : "iou";
    for (const InitSpec& init : inits) {
        InitSummary summary;
        summary.init = init.name;
        for (int64_t s = 0; s < config.finetune.n_seeds; ++s) {
            FinetuneMetrics m =
                finetune(task, init, config, derive_seed(root_seed, "finetune_run",
                                                         static_cast<uint64_t>(s)));
            m.seed = static_cast<uint64_t>(s);
            summary.values.push_back(m.primary(task.kind));
            result.runs.push_back(std::move(m));
        }
        const MeanSd ms = mean_sd(summary.values);
        summary.mean = ms.mean;
        summary.sd = ms.sd;
        result.inits.push_back(std::move(summary));
    }
    for (size_t i = 0; i < result.inits.size(); ++i)
        for (size_t j = i + 1; j < result.inits.size(); ++j)
            result.t_stats.push_back(TStat{result.inits[i].init, result.inits[j].init,
                                           two_sample_t(result.inits[i].values,
                                                        result.inits[j].values)});
    return result;
}

void save_compare_csv(const CompareResult& result, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw RunError("save_compare_csv: cannot open " + path.string() + " for writing");
    out << "seed,init,metric\n";
    for (const FinetuneMetrics& run : result.runs) {
        check_csv_safe(run.init, "compare csv: init");
        const double value = result.metric == "auc" ? run.auc : run.iou;
        out << run.seed << ',' << run.init << ',' << format_double(value) << '\n';
    }
    if (!out) throw RunError("save_compare_csv: write failed for " + path.string());
}

std::string compare_result_to_json_text(const CompareResult& result) {
    auto finite_or_text = [](double v) {
        return std::isfinite(v) ? json(v) : json(v > 0 ? "inf" : "-inf");
    };
    json inits = json::array();
    for (const InitSummary& s : result.inits)
        inits.push_back(json{{"init", s.init},
                             {"values", s.values},
                             {"mean", s.mean},
                             {"sd", s.sd}});
    json tstats = json::array();
    for (const TStat& t : result.t_stats)
        tstats.push_back(json{{"a", t.a}, {"b", t.b}, {"t", finite_or_text(t.t)}});
    json runs = json::array();
    for (const FinetuneMetrics& run : result.runs)
        runs.push_back(json{{"seed", run.seed},
                            {"init", run.init},
                            {"auc", run.auc},
                            {"iou", run.iou},
                            {"dice", run.dice},
                            {"train_loss", run.train_loss}});
    return json{{"metric", result.metric},
                {"inits", std::move(inits)},
                {"t_stats", std::move(tstats)},
                {"runs", std::move(runs)}}
        .dump(2);
}

CompareResult compare_result_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError("compare result: invalid JSON: " + std::string(e.what()));
    }
    auto text_or_inf = [](const json& v) {
        if (v.is_number()) return v.get<double>();
        const auto s = v.get<std::string>();
        return s == "inf" ? std::numeric_limits<double>::infinity()
                          : -std::numeric_limits<double>::infinity();
    };
    CompareResult result;
    try {
        result.metric = j.at("metric").get<std::string>();
        for (const json& ji : j.at("inits")) {
            InitSummary s;
            s.init = ji.at("init").get<std::string>();
            s.values = ji.at("values").get<std::vector<double>>();
            s.mean = ji.at("mean").get<double>();
            s.sd = ji.at("sd").get<double>();
            result.inits.push_back(std::move(s));
        }
        for (const json& jt : j.at("t_stats"))
            result.t_stats.push_back(TStat{jt.at("a").get<std::string>(),
                                           jt.at("b").get<std::string>(),
                                           text_or_inf(jt.at("t"))});
        for (const json& jr : j.at("runs")) {
            FinetuneMetrics m;
            m.seed = jr.at("seed").get<uint64_t>();
            m.init = jr.at("init").get<std::string>();
            m.auc = jr.at("auc").get<double>();
            m.iou = jr.at("iou").get<double>();
            m.dice = jr.at("dice").get<double>();
            m.train_loss = jr.at("train_loss").get<double>();
            result.runs.push_back(std::move(m));
        }
    } catch (const json::exception& e) {
        throw ValidationError("compare result: missing or mistyped field: " + std::string(e.what()));
    }
    return result;
}

} // namespace semgen
