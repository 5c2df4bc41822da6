#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "semgen/config.hpp"
#include "semgen/types.hpp"

namespace semgen {

// ---- CSV primitives shared by every tabular artifact ----

std::vector<std::string> split_csv_line(const std::string& line);
// rejects field values that would break the single-line-per-row format
void check_csv_safe(const std::string& s, const std::string& what);
// round-trips doubles exactly (max_digits10)
std::string format_double(double v);

// ---- SGVOL container ----
// 8-byte magic "SGVOL\0\0\1", three little-endian u32 (depth, height, width),
// then float32 little-endian voxels in row-major (z, y, x) order.

void save_volume(const Volume& v, const std::filesystem::path& path);
Volume load_volume(const std::filesystem::path& path);

// ---- corpus manifest ----

struct ManifestEntry {
    std::string patient_id;
    std::string path; // relative to the manifest's directory
    Shape3 shape;
    std::string split = "train";

    bool operator==(const ManifestEntry&) const = default;
};

struct CorpusManifest {
    std::filesystem::path root; // directory the entry paths are relative to
    std::vector<ManifestEntry> entries;
    std::optional<uint64_t> corpus_seed; // set by the generator, not persisted in the CSV

    const ManifestEntry* find(const std::string& patient_id) const;
    std::vector<ManifestEntry> split_entries(const std::string& split) const;
    std::filesystem::path resolve(const ManifestEntry& e) const { return root / e.path; }
    Volume load(const ManifestEntry& e) const;

    // unique patient ids, resolvable paths, on-disk shapes match the listed ones
    void validate() const;
};

// CSV with header patient_id,path,depth,height,width,split
void save_manifest(const CorpusManifest& m, const std::filesystem::path& csv_path);
CorpusManifest load_manifest(const std::filesystem::path& csv_path);

// ---- synthetic phantom corpus ----

struct PhantomPrimitive {
    bool rod = false;              // rods are axis-elongated ellipsoids
    std::array<double, 3> center;  // (z, y, x), voxel units
    std::array<double, 3> radii;   // per-axis semi-axes
    double intensity = 0.5;
};

// shared layout before per-patient jitter; pure function of the spec seed
std::vector<PhantomPrimitive> phantom_layout(const PhantomSpec& spec);
// layout with patient jitter applied (centers shifted, intensities scaled)
std::vector<PhantomPrimitive> patient_primitives(const PhantomSpec& spec, int64_t patient);
Volume render_phantom(const PhantomSpec& spec, int64_t patient);
// hard support of one jittered primitive (voxels with normalized radius <= 1), as a 0/1 volume
Volume structure_mask(const PhantomSpec& spec, int64_t patient, int64_t structure);

std::string phantom_patient_id(int64_t patient);

// Writes patient_###.sgvol volumes, manifest.csv and phantom_spec.json into
// out_dir and returns the manifest. Bitwise reproducible per spec.
CorpusManifest generate_phantom_corpus(const PhantomSpec& spec, const std::filesystem::path& out_dir);

// ---- crop datasets ----
// Directory layout: crops.csv plus crops/crop_#####.sgvol, one file per row.
// CSV header: crop_id,patient_id,coordinate_index,pseudo_label,scale_factor

void save_crop_dataset(const std::vector<PatternCrop>& crops, const std::filesystem::path& dir);
std::vector<PatternCrop> load_crop_dataset(const std::filesystem::path& dir);

} // namespace semgen
