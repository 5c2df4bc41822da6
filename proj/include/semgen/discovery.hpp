#pragma once

// Self-discovery stage: embed whole patients with a small auto-encoder, rank
// them by latent L2 distance around a seeded reference, then cut labeled
// multi-scale crops at coordinates shared across the retrieved patients.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "semgen/config.hpp"
#include "semgen/dataio.hpp"
#include "semgen/network.hpp"
#include "semgen/types.hpp"

namespace semgen {

struct DiscoveryIndex {
    std::string reference_id;
    std::map<std::string, LatentVector> latents;
    std::vector<std::pair<std::string, double>> neighbors; // (patient_id, distance), ascending

    void validate() const;
};

// Trains on the manifest's "train" split, volumes resized to cfg.input_shape.
// Appends the per-epoch training loss to loss_log when given.
AutoEncoder<float> train_autoencoder(const CorpusManifest& corpus, const AutoencoderConfig& cfg,
                                     uint64_t seed, std::vector<double>* loss_log = nullptr);

// v must already match the auto-encoder input shape
LatentVector embed(const Volume& v, AutoEncoder<float>& ae);

// exact K smallest L2 distances to the reference, ties by ascending patient_id
DiscoveryIndex nearest_neighbors(const std::string& reference_id,
                                 const std::map<std::string, LatentVector>& latents, int64_t K);

// rejection sampling under the pairwise-overlap cap; indices 0..C-1
std::vector<Coordinate> sample_coordinates(const Shape3& ref_shape, int64_t C, const Shape3& extent,
                                           double max_overlap, int64_t attempt_budget, uint64_t seed);

// one crop per (patient in {reference} + neighbors, coordinate, scale);
// scaled windows are centered on the coordinate center, clamped in bounds,
// and resized to the canonical shape
std::vector<PatternCrop> extract_crops(const CorpusManifest& corpus, const DiscoveryIndex& index,
                                       const std::vector<Coordinate>& coords,
                                       const PretrainConfig& cfg);

// crops for an explicit patient list (used for held-out evaluation sets)
std::vector<PatternCrop> extract_crops_for_patients(const CorpusManifest& corpus,
                                                    const std::vector<std::string>& patient_ids,
                                                    const std::vector<Coordinate>& coords,
                                                    const PretrainConfig& cfg);

struct ReferenceBlock {
    std::string reference_id;
    std::vector<std::pair<std::string, double>> neighbors;
};

struct DiscoveryReport {
    std::vector<ReferenceBlock> references;
    std::vector<Coordinate> coordinates;
    double ae_initial_loss = 0.0;
    double ae_final_loss = 0.0;
    std::string config_hash;
};

std::string discovery_report_to_json_text(const DiscoveryReport& report);
DiscoveryReport discovery_report_from_json_text(const std::string& text);

// Full stage: auto-encoder, embeddings, one discovery round per reference seed
// (config.discovery.reference_seeds, or a single root-seed round when empty),
// shared coordinates, deduplicated patient set. Deterministic per
// (corpus bytes, config, seed).
std::vector<PatternCrop> run_discovery(const CorpusManifest& corpus, const Config& config,
                                       uint64_t seed, DiscoveryReport* out_report = nullptr);

} // namespace semgen
