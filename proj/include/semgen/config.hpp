#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "semgen/types.hpp"

namespace semgen {

// Composition policy and per-transform parameter ranges. Count/size ranges are
// inclusive; fractions are of the corresponding crop axis length.
struct TransformConfig {
    double p_nonlinear = 0.9;
    double p_shuffle = 0.5;
    double p_paint = 0.9;
    std::array<int64_t, 2> shuffle_block_extent{4, 8};
    std::array<int64_t, 2> shuffle_block_count{20, 60};
    std::array<int64_t, 2> inpaint_cuboid_count{1, 5};
    std::array<double, 2> inpaint_cuboid_fraction{0.1, 0.4};
    std::array<int64_t, 2> outpaint_window_count{1, 3};
    std::array<double, 2> outpaint_window_fraction{0.25, 0.5};
    double outpaint_max_retained_fraction = 0.8;

    void validate() const;
    bool operator==(const TransformConfig&) const = default;
};

struct PretrainConfig {
    int64_t K = 200;
    int64_t C = 44;
    Shape3 canonical_crop_shape{32, 64, 64}; // 64x64x32 depth-last
    std::vector<double> scale_factors{0.8, 1.0, 1.2};
    LossWeights loss_weights;
    int64_t warmup_epochs = 20;
    int64_t joint_epochs = 30;
    double learning_rate = 0.001;
    int64_t batch_size = 8;
    std::string optimizer = "adam";
    uint64_t seed = 42; // root seed, filled from the top-level config

    bool operator==(const PretrainConfig& o) const;
};

// Checks every invariant; returns the config unchanged if all hold.
// corpus_size < 0 skips the corpus-dependent checks.
PretrainConfig validate_config(const PretrainConfig& config, int64_t corpus_size);

struct ModelConfig {
    Shape3 input_shape{16, 32, 32};
    int64_t depth = 4;
    int64_t base_channels = 16;
    int64_t n_classes = 2;
    std::vector<int64_t> fc_hidden{1024};
    uint64_t param_seed = 0;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

struct AutoencoderConfig {
    Shape3 input_shape{32, 64, 64}; // whole volume downsampled to 64x64x32
    int64_t stages = 4;
    int64_t base_channels = 8;
    int64_t latent_dim = 256;
    int64_t epochs = 30;
    double learning_rate = 0.001;
    int64_t batch_size = 4;

    void validate() const;
    bool operator==(const AutoencoderConfig&) const = default;
};

struct DiscoveryConfig {
    double max_overlap = 0.25;
    int64_t coordinate_attempts = 10000;
    std::vector<uint64_t> reference_seeds; // empty -> single reference from the root seed

    void validate() const;
    bool operator==(const DiscoveryConfig&) const = default;
};

struct PhantomSpec {
    int64_t n_patients = 30;
    Shape3 base_shape{32, 64, 64};
    int64_t n_structures = 6;
    std::array<double, 2> structure_radius_range{3.0, 7.0};
    std::array<double, 2> structure_intensity_range{0.35, 0.9};
    double deformation = 1.5; // voxel std of per-patient center jitter
    double noise = 0.02;      // uniform intensity noise amplitude
    double heldout_fraction = 0.2;
    uint64_t seed = 42;

    void validate() const;
    bool operator==(const PhantomSpec&) const = default;
};

struct FinetuneConfig {
    double label_budget_fraction = 0.1;
    int64_t epochs = 8;
    double learning_rate = 0.001;
    int64_t batch_size = 4;
    int64_t samples_per_patient = 6;
    std::vector<int64_t> head_hidden{32};
    int64_t n_seeds = 5;
    int64_t designated_structure = 0;

    void validate() const;
    bool operator==(const FinetuneConfig&) const = default;
};

// The single JSON config document. Unknown keys are rejected at any level.
struct Config {
    uint64_t seed = 42;
    PhantomSpec phantom;
    PretrainConfig pretrain;
    ModelConfig model;
    AutoencoderConfig autoencoder;
    TransformConfig transforms;
    DiscoveryConfig discovery;
    FinetuneConfig finetune;

    static Config load(const std::filesystem::path& path);
    static Config from_json_text(const std::string& text);
    std::string to_json_text() const; // canonical (sorted keys, 2-space indent)
    void save(const std::filesystem::path& path) const;

    // FNV-1a over the canonical JSON text, as a fixed-width hex string.
    std::string hash() const;

    // Re-derives the fields that depend on other sections (model input shape,
    // class count, seeds). Called by load(); call manually after edits.
    void bind_derived_fields();

    bool operator==(const Config&) const;
};

std::string hash_hex(uint64_t h);

// Standalone round-trip for the phantom spec, used by the corpus generator to
// drop a phantom_spec.json next to the volumes (fine-tuning reads it back to
// recompute ground-truth masks).
std::string phantom_spec_to_json_text(const PhantomSpec& spec);
PhantomSpec phantom_spec_from_json_text(const std::string& text);

} // namespace semgen
