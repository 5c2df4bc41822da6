#include "semgen/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "semgen/dataio.hpp"
#include "semgen/errors.hpp"
#include "semgen/losses.hpp"
#include "semgen/optimizer.hpp"
#include "semgen/parallel.hpp"
#include "semgen/rng.hpp"
#include "semgen/transforms.hpp"

namespace semgen {

void save_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw RunError("save_training_log: cannot open " + path.string() + " for writing");
    out << "epoch,stage,loss_cls,loss_rec,loss_total\n";
    for (const EpochLog& row : log) {
        check_csv_safe(row.stage, "training log: stage");
        out << row.epoch << ',' << row.stage << ',' << format_double(row.loss_cls) << ','
            << format_double(row.loss_rec) << ',' << format_double(row.loss_total) << '\n';
    }
    if (!out) throw RunError("save_training_log: write failed for " + path.string());
}

std::vector<EpochLog> load_training_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw RunError("load_training_log: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "epoch,stage,loss_cls,loss_rec,loss_total")
        throw ValidationError("corrupt training log: bad header in " + path.string());
    std::vector<EpochLog> log;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 5)
            throw ValidationError("corrupt training log: expected 5 fields, got " +
                                  std::to_string(f.size()));
        EpochLog row;
        try {
            row.epoch = std::stoll(f[0]);
            row.stage = f[1];
            row.loss_cls = std::stod(f[2]);
            row.loss_rec = std::stod(f[3]);
            row.loss_total = std::stod(f[4]);
        } catch (const std::exception&) {
            throw ValidationError("corrupt training log: non-numeric field in \"" + line + "\"");
        }
        log.push_back(std::move(row));
    }
    return log;
}

namespace {

struct Batch {
    Tensor<float> input;   // transformed crops
    Tensor<float> target;  // originals
    Tensor<float> onehot;  // (B, C) pseudo labels
};

Batch make_batch(const std::vector<PatternCrop>& crops, const std::vector<Volume>& inputs,
                 const std::vector<size_t>& order, size_t start, size_t stop, int64_t n_classes,
                 const Shape3& shape) {
    const int64_t B = static_cast<int64_t>(stop - start);
    Batch batch{Tensor<float>({B, 1, shape.d, shape.h, shape.w}),
                Tensor<float>({B, 1, shape.d, shape.h, shape.w}), Tensor<float>({B, n_classes})};
    const int64_t per = shape.voxels();
    for (size_t b = start; b < stop; ++b) {
        const size_t i = order[b];
        const int64_t off = static_cast<int64_t>(b - start) * per;
        std::copy(inputs[i].voxels.begin(), inputs[i].voxels.end(), batch.input.data() + off);
        std::copy(crops[i].data.voxels.begin(), crops[i].data.voxels.end(),
                  batch.target.data() + off);
        batch.onehot.at2(static_cast<int64_t>(b - start), crops[i].pseudo_label) = 1.0f;
    }
    return batch;
}

std::vector<Volume> transform_all(const std::vector<PatternCrop>& crops,
                                  const TransformConfig& tcfg, uint64_t seed,
                                  std::string_view stream, uint64_t epoch) {
    std::vector<Volume> inputs(crops.size());
    parallel_indexed(static_cast<int64_t>(crops.size()), [&](int64_t i) {
        inputs[static_cast<size_t>(i)] =
            compose(crops[static_cast<size_t>(i)].data, tcfg,
                    derive_seed(seed, stream, epoch, static_cast<uint64_t>(i)))
                .first;
    });
    return inputs;
}

} // namespace

PretrainTrainer::PretrainTrainer(DualHeadUNet<float>&& model, const Config& config)
    : model_(std::move(model)), config_(config) {}

void PretrainTrainer::run(const std::vector<PatternCrop>& crops,
                          const std::filesystem::path& out_dir, const EpochHook& hook) {
    const PretrainConfig& pc = config_.pretrain;
    validate_config(pc, -1);
    config_.transforms.validate();
    if (crops.empty()) throw ValidationError("pretrain: empty crop set");
    for (const PatternCrop& c : crops) {
        c.validate(pc.canonical_crop_shape);
        if (c.pseudo_label < 0 || c.pseudo_label >= model_.cfg.n_classes)
            throw ValidationError("pretrain: pseudo label " + std::to_string(c.pseudo_label) +
                                  " outside the model's " + std::to_string(model_.cfg.n_classes) +
                                  " classes");
    }
    if (pc.warmup_epochs > 0 && pc.loss_weights.lambda_cls == 0.0)
        throw ValidationError("warmup stage has zero effective loss (lambda_cls is zero)");

    if (!out_dir.empty()) std::filesystem::create_directories(out_dir / "checkpoints");

    const uint64_t seed = pc.seed;
    const int64_t n_classes = model_.cfg.n_classes;
    const Shape3 shape = model_.cfg.input_shape;
    auto ps = model_.params();
    // one optimizer across both stages; frozen parameters keep zero moments
    Adam<float> opt(pc.learning_rate);
    opt.attach(ps);

    std::vector<size_t> order(crops.size());
    std::iota(order.begin(), order.end(), size_t{0});
    const int64_t total_epochs = pc.warmup_epochs + pc.joint_epochs;

    for (int64_t epoch = 1; epoch <= total_epochs; ++epoch) {
        const bool warmup = epoch <= pc.warmup_epochs;
        const std::vector<Volume> inputs =
            transform_all(crops, config_.transforms, seed, "transform", static_cast<uint64_t>(epoch));
        Rng order_rng(derive_seed(seed, "order", static_cast<uint64_t>(epoch)));
        order_rng.shuffle(order);

        double sum_cls = 0.0, sum_rec = 0.0;
        int64_t seen = 0, batch_index = 0;
        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(pc.batch_size), ++batch_index) {
            const size_t stop = std::min(order.size(), start + static_cast<size_t>(pc.batch_size));
            Batch batch = make_batch(crops, inputs, order, start, stop, n_classes, shape);
            const int64_t B = batch.onehot.dim(0);

            ForwardOut<float> out = model_.forward(batch.input);
            Tensor<float> probs(out.logits->shape());
            kernels::softmax_rows(*out.logits, probs);
            const double l_cls = loss_cls(probs, batch.onehot);
            const double l_rec = loss_rec(batch.target, *out.reconstruction);
            if (!std::isfinite(l_cls) || !std::isfinite(l_rec))
                throw RunError("divergence at epoch " + std::to_string(epoch) + " (batch " +
                               std::to_string(batch_index) + ")");
            sum_cls += l_cls * static_cast<double>(B);
            sum_rec += l_rec * static_cast<double>(B);
            seen += B;

            model_.zero_grad();
            Tensor<float> gprobs(probs.shape());
            loss_cls_backward(probs, batch.onehot, gprobs);
            kernels::scale_inplace(gprobs, static_cast<float>(pc.loss_weights.lambda_cls));
            Tensor<float> glogits(probs.shape());
            softmax_backward(probs, gprobs, glogits);
            if (warmup) {
                model_.backward_cls_only(glogits);
            } else {
                Tensor<float> grecon(out.reconstruction->shape());
                loss_rec_backward(batch.target, *out.reconstruction, grecon);
                kernels::scale_inplace(grecon, static_cast<float>(pc.loss_weights.lambda_rec));
                model_.backward(grecon, glogits);
            }
            opt.step(ps);
        }

        EpochLog row;
        row.epoch = epoch;
        row.stage = warmup ? "warmup" : "joint";
        row.loss_cls = sum_cls / static_cast<double>(seen);
        row.loss_rec = sum_rec / static_cast<double>(seen);
        row.loss_total = loss_total(row.loss_cls, row.loss_rec, pc.loss_weights);
        log_.push_back(row);

        if (!out_dir.empty()) {
            char name[32];
            std::snprintf(name, sizeof(name), "epoch_%03d.sgwt", static_cast<int>(epoch));
            WeightsMeta meta{config_.hash(), row.stage, epoch, row.loss_cls, row.loss_rec};
            save_weights(ps, meta, out_dir / "checkpoints" / name);
        }
        if (hook) hook(row, model_);
    }

    if (!out_dir.empty()) {
        const EpochLog& last = log_.back();
        WeightsMeta meta{config_.hash(), last.stage, last.epoch, last.loss_cls, last.loss_rec};
        save_weights(ps, meta, out_dir / "weights_final.sgwt");
        save_training_log(log_, out_dir / "log.csv");
    }
}

PretextMetrics evaluate_pretext(DualHeadUNet<float>& model, const std::vector<PatternCrop>& crops,
                                const LossWeights& weights) {
    if (crops.empty()) throw ValidationError("evaluate_pretext: empty crop set");
    const Shape3 shape = model.cfg.input_shape;
    const int64_t n_classes = model.cfg.n_classes;
    std::vector<Volume> inputs(crops.size());
    for (size_t i = 0; i < crops.size(); ++i) inputs[i] = crops[i].data;

    std::vector<size_t> order(crops.size());
    std::iota(order.begin(), order.end(), size_t{0});

    double sum_cls = 0.0, sum_rec = 0.0;
    int64_t correct = 0;
    constexpr size_t kEvalBatch = 8;
    for (size_t start = 0; start < order.size(); start += kEvalBatch) {
        const size_t stop = std::min(order.size(), start + kEvalBatch);
        Batch batch = make_batch(crops, inputs, order, start, stop, n_classes, shape);
        ForwardOut<float> out = model.forward(batch.input);
        Tensor<float> probs(out.logits->shape());
        kernels::softmax_rows(*out.logits, probs);
        const int64_t B = batch.onehot.dim(0);
        sum_cls += loss_cls(probs, batch.onehot) * static_cast<double>(B);
        sum_rec += loss_rec(batch.target, *out.reconstruction) * static_cast<double>(B);
        for (int64_t b = 0; b < B; ++b) {
            int64_t argmax = 0;
            for (int64_t c = 1; c < n_classes; ++c)
                if (probs.at2(b, c) > probs.at2(b, argmax)) argmax = c;
            if (argmax == crops[order[start + static_cast<size_t>(b)]].pseudo_label) ++correct;
        }
    }
    PretextMetrics m;
    const double n = static_cast<double>(crops.size());
    m.accuracy = static_cast<double>(correct) / n;
    m.loss_cls = sum_cls / n;
    m.loss_rec = sum_rec / n;
    m.loss_total = loss_total(m.loss_cls, m.loss_rec, weights);
    return m;
}

} // namespace semgen
