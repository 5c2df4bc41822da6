#pragma once

// Two-stage pretext training on discovered crops: a classification-only
// warmup (decoder bitwise frozen), then joint optimization of the weighted
// classification + restoration objective. Inputs are transformed copies of
// the crops, restoration targets are the untouched originals.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "semgen/config.hpp"
#include "semgen/network.hpp"
#include "semgen/types.hpp"

namespace semgen {

struct EpochLog {
    int64_t epoch = 0; // 1-based, contiguous across stages
    std::string stage; // "warmup" or "joint"
    double loss_cls = 0.0;
    double loss_rec = 0.0;
    double loss_total = 0.0;
};

// CSV with header epoch,stage,loss_cls,loss_rec,loss_total; doubles at full
// round-trip precision
void save_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path);
std::vector<EpochLog> load_training_log(const std::filesystem::path& path);

struct PretextMetrics {
    double accuracy = 0.0; // argmax pseudo-label accuracy
    double loss_cls = 0.0;
    double loss_rec = 0.0;
    double loss_total = 0.0;
};

// Called after each epoch with the appended log row and the updated model.
using EpochHook = std::function<void(const EpochLog&, DualHeadUNet<float>&)>;

class PretrainTrainer {
public:
    PretrainTrainer(DualHeadUNet<float>&& model, const Config& config);

    // Runs warmup_epochs + joint_epochs over `crops`. Warmup steps only the
    // classification path; the decoder and reconstruction parameters receive
    // identically zero gradients, so Adam leaves them bit-identical. When
    // out_dir is non-empty, writes checkpoints/epoch_###.sgwt per epoch plus
    // weights_final.sgwt and log.csv.
    void run(const std::vector<PatternCrop>& crops, const std::filesystem::path& out_dir,
             const EpochHook& hook = nullptr);

    DualHeadUNet<float>& model() { return model_; }
    const std::vector<EpochLog>& log() const { return log_; }

private:
    DualHeadUNet<float> model_;
    Config config_;
    std::vector<EpochLog> log_;
};

// Accuracy and losses on the crops as given (no re-corruption: the pseudo
// label is a property of the crop, and transforms are training-time
// augmentation only).
PretextMetrics evaluate_pretext(DualHeadUNet<float>& model, const std::vector<PatternCrop>& crops,
                                const LossWeights& weights);

} // namespace semgen
