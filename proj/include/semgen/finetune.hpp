#pragma once

// Fine-tuning harness for the two transfer pathways (encoder-only
// classification, encoder+decoder segmentation) plus the toy phantom target
// tasks used to compare initializations across seeds.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "semgen/config.hpp"
#include "semgen/dataio.hpp"
#include "semgen/network.hpp"
#include "semgen/tensor.hpp"
#include "semgen/types.hpp"

namespace semgen {

struct TargetSample {
    Volume input;
    int label = 0; // classification
    Volume mask;   // segmentation; empty otherwise
    std::string patient_id;
};

struct TargetTask {
    TaskKind kind = TaskKind::classification;
    std::string name;
    int64_t n_classes = 0; // classification only
    std::vector<TargetSample> train;
    std::vector<TargetSample> heldout;

    // shapes consistent, labels in range, masks binary / shape-matched / non-empty
    void validate(const Shape3& input_shape) const;
};

// Deterministic toy tasks on a phantom corpus:
//   classification: predict which of the C shared coordinates a raw crop was
//     cut at; samples come from held-out patients only, split by patient.
//   segmentation: binary mask of the designated phantom structure on crops
//     centered near its jittered location (train split trains, held-out
//     split evaluates); every mask is non-empty by construction.
std::pair<TargetTask, TargetTask> make_toy_targets(const CorpusManifest& corpus,
                                                   const Config& config, uint64_t seed);

// ---- Dice loss (soft, smoothed) ----
// L = (1/N) sum_i [1 - (2 <p_i, g_i> + eps) / (sum p_i + sum g_i + eps)]

inline constexpr double kDiceEps = 1.0;

template <typename T>
double dice_loss(const Tensor<T>& probs, const Tensor<T>& masks) {
    if (!probs.same_shape(masks)) throw ValidationError("dice_loss: shape mismatch");
    const int64_t N = probs.dim(0), per = probs.numel() / N;
    double total = 0.0;
    for (int64_t n = 0; n < N; ++n) {
        const T* p = probs.data() + n * per;
        const T* g = masks.data() + n * per;
        double inter = 0.0, psum = 0.0, gsum = 0.0;
        for (int64_t i = 0; i < per; ++i) {
            inter += static_cast<double>(p[i]) * static_cast<double>(g[i]);
            psum += static_cast<double>(p[i]);
            gsum += static_cast<double>(g[i]);
        }
        total += 1.0 - (2.0 * inter + kDiceEps) / (psum + gsum + kDiceEps);
    }
    return total / static_cast<double>(N);
}

template <typename T>
void dice_loss_backward(const Tensor<T>& probs, const Tensor<T>& masks, Tensor<T>& gprobs) {
    if (!probs.same_shape(masks) || !probs.same_shape(gprobs))
        throw ValidationError("dice_loss_backward: shape mismatch");
    const int64_t N = probs.dim(0), per = probs.numel() / N;
    for (int64_t n = 0; n < N; ++n) {
        const T* p = probs.data() + n * per;
        const T* g = masks.data() + n * per;
        T* out = gprobs.data() + n * per;
        double inter = 0.0, psum = 0.0, gsum = 0.0;
        for (int64_t i = 0; i < per; ++i) {
            inter += static_cast<double>(p[i]) * static_cast<double>(g[i]);
            psum += static_cast<double>(p[i]);
            gsum += static_cast<double>(g[i]);
        }
        const double denom = psum + gsum + kDiceEps;
        const double numer = 2.0 * inter + kDiceEps;
        for (int64_t i = 0; i < per; ++i)
            out[i] = static_cast<T>((numer / (denom * denom) -
                                     2.0 * static_cast<double>(g[i]) / denom) /
                                    static_cast<double>(N));
    }
}

// ---- fine-tuning runs ----

struct InitSpec {
    std::string name;               // "scratch" or a label for the weights
    std::filesystem::path weights;  // empty path -> random initialization
};

struct FinetuneMetrics {
    std::string init;
    uint64_t seed = 0;     // per-run seed index
    double auc = 0.0;      // classification
    double iou = 0.0;      // segmentation
    double dice = 0.0;     // segmentation
    double train_loss = 0.0;

    // the comparison metric for the task kind: auc or iou
    double primary(TaskKind kind) const { return kind == TaskKind::classification ? auc : iou; }
};

// Trains the split sub-model on the task's label budget
// (max(1, round(label_budget_fraction * |train|)) samples, chosen by the seed
// alone so every initialization sees the same split) and evaluates on the
// task's held-out samples.
FinetuneMetrics finetune(const TargetTask& task, const InitSpec& init, const Config& config,
                         uint64_t seed);

struct InitSummary {
    std::string init;
    std::vector<double> values; // primary metric per seed
    double mean = 0.0;
    double sd = 0.0;
};

struct TStat {
    std::string a;
    std::string b;
    double t = 0.0;
};

struct CompareResult {
    std::string metric; // "auc" or "iou"
    std::vector<FinetuneMetrics> runs;
    std::vector<InitSummary> inits;
    std::vector<TStat> t_stats; // one per unordered init pair
};

// config.finetune.n_seeds fine-tuning runs per initialization; seeds 0..n-1
// map to run seeds via the root seed.
CompareResult compare_inits(const TargetTask& task, const std::vector<InitSpec>& inits,
                            const Config& config, uint64_t root_seed);

// CSV with header seed,init,metric (one row per run, primary metric)
void save_compare_csv(const CompareResult& result, const std::filesystem::path& path);
// JSON summary: metric, per-init values/mean/sd, pairwise t statistics
std::string compare_result_to_json_text(const CompareResult& result);
CompareResult compare_result_from_json_text(const std::string& text);

} // namespace semgen
