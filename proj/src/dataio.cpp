#include "semgen/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "semgen/errors.hpp"
#include "semgen/parallel.hpp"
#include "semgen/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "SGVOL I/O assumes a little-endian host");

namespace semgen {
namespace {

constexpr char kMagic[8] = {'S', 'G', 'V', 'O', 'L', '\0', '\0', '\1'};

void write_u32(std::ostream& out, uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
}

} // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

void check_csv_safe(const std::string& s, const std::string& what) {
    if (s.find(',') != std::string::npos || s.find('\n') != std::string::npos)
        throw ValidationError(what + " may not contain commas or newlines: \"" + s + "\"");
}

std::string format_double(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

void save_volume(const Volume& v, const std::filesystem::path& path) {
    v.validate("save_volume");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RunError("save_volume: cannot open " + path.string() + " for writing");
    out.write(kMagic, sizeof(kMagic));
    write_u32(out, static_cast<uint32_t>(v.shape.d));
    write_u32(out, static_cast<uint32_t>(v.shape.h));
    write_u32(out, static_cast<uint32_t>(v.shape.w));
    out.write(reinterpret_cast<const char*>(v.voxels.data()),
              static_cast<std::streamsize>(v.voxels.size() * sizeof(float)));
    if (!out) throw RunError("save_volume: write failed for " + path.string());
}

Volume load_volume(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("load_volume: cannot open " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (in.gcount() != sizeof(magic) || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw ValidationError("not an SGVOL file: " + path.string());
    uint32_t dims[3];
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (in.gcount() != sizeof(dims)) throw ValidationError("corrupt volume: " + path.string());
    Volume v;
    v.shape = Shape3{static_cast<int64_t>(dims[0]), static_cast<int64_t>(dims[1]),
                     static_cast<int64_t>(dims[2])};
    if (v.shape.d < 1 || v.shape.h < 1 || v.shape.w < 1)
        throw ValidationError("corrupt volume: " + path.string());
    const uint64_t n = static_cast<uint64_t>(dims[0]) * dims[1] * dims[2];
    const auto file_size = std::filesystem::file_size(path);
    if (file_size != sizeof(kMagic) + sizeof(dims) + n * sizeof(float))
        throw ValidationError("corrupt volume: " + path.string());
    v.voxels.resize(n);
    in.read(reinterpret_cast<char*>(v.voxels.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (static_cast<uint64_t>(in.gcount()) != n * sizeof(float))
        throw ValidationError("corrupt volume: " + path.string());
    v.validate("load_volume(" + path.string() + ")");
    return v;
}

const ManifestEntry* CorpusManifest::find(const std::string& patient_id) const {
    for (const auto& e : entries)
        if (e.patient_id == patient_id) return &e;
    return nullptr;
}

std::vector<ManifestEntry> CorpusManifest::split_entries(const std::string& split) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
        if (e.split == split) out.push_back(e);
    return out;
}

Volume CorpusManifest::load(const ManifestEntry& e) const {
    Volume v = load_volume(resolve(e));
    if (!(v.shape == e.shape))
        throw ValidationError("manifest: volume " + e.path + " has shape " + to_string(v.shape) +
                              " but manifest lists " + to_string(e.shape));
    return v;
}

void CorpusManifest::validate() const {
    std::vector<std::string> ids;
    for (const auto& e : entries) ids.push_back(e.patient_id);
    std::sort(ids.begin(), ids.end());
    const auto dup = std::adjacent_find(ids.begin(), ids.end());
    if (dup != ids.end()) throw ValidationError("manifest: duplicate patient_id \"" + *dup + "\"");
    for (const auto& e : entries) {
        if (!std::filesystem::exists(resolve(e)))
            throw ValidationError("manifest: path not resolvable: " + resolve(e).string());
        if (e.shape.d < 1 || e.shape.h < 1 || e.shape.w < 1)
            throw ValidationError("manifest: bad shape for patient " + e.patient_id);
    }
}

void save_manifest(const CorpusManifest& m, const std::filesystem::path& csv_path) {
    std::ofstream out(csv_path);
    if (!out) throw RunError("save_manifest: cannot open " + csv_path.string() + " for writing");
    out << "patient_id,path,depth,height,width,split\n";
    for (const auto& e : m.entries) {
        check_csv_safe(e.patient_id, "manifest: patient_id");
        check_csv_safe(e.path, "manifest: path");
        check_csv_safe(e.split, "manifest: split");
        out << e.patient_id << ',' << e.path << ',' << e.shape.d << ',' << e.shape.h << ','
            << e.shape.w << ',' << e.split << '\n';
    }
}

CorpusManifest load_manifest(const std::filesystem::path& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw ValidationError("load_manifest: cannot open " + csv_path.string());
    CorpusManifest m;
    m.root = csv_path.parent_path();
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("manifest: empty file " + csv_path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "patient_id,path,depth,height,width,split")
        throw ValidationError("manifest: unexpected header \"" + line + "\"");
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 6)
            throw ValidationError("manifest: line " + std::to_string(line_no) + " has " +
                                  std::to_string(f.size()) + " fields, expected 6");
        ManifestEntry e;
        e.patient_id = f[0];
        e.path = f[1];
        try {
            e.shape = Shape3{std::stoll(f[2]), std::stoll(f[3]), std::stoll(f[4])};
        } catch (const std::exception&) {
            throw ValidationError("manifest: line " + std::to_string(line_no) + " has non-numeric shape");
        }
        e.split = f[5];
        m.entries.push_back(std::move(e));
    }
    m.validate();
    return m;
}

// ---- phantom corpus ----

std::string phantom_patient_id(int64_t patient) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "patient_%03lld", static_cast<long long>(patient));
    return buf;
}

std::vector<PhantomPrimitive> phantom_layout(const PhantomSpec& spec) {
    Rng rng(derive_seed(spec.seed, "layout"));
    const std::array<int64_t, 3> extent{spec.base_shape.d, spec.base_shape.h, spec.base_shape.w};
    std::vector<PhantomPrimitive> prims;
    prims.reserve(static_cast<size_t>(spec.n_structures));
    for (int64_t i = 0; i < spec.n_structures; ++i) {
        PhantomPrimitive p;
        p.rod = (i % 2 == 1); // alternate so both kinds always appear
        const double r = rng.uniform(spec.structure_radius_range[0], spec.structure_radius_range[1]);
        if (p.rod) {
            const int64_t long_axis = rng.uniform_int(0, 2);
            for (int a = 0; a < 3; ++a)
                p.radii[static_cast<size_t>(a)] = (a == long_axis) ? 2.0 * r : std::max(1.2, 0.45 * r);
        } else {
            for (int a = 0; a < 3; ++a) p.radii[static_cast<size_t>(a)] = r * rng.uniform(0.7, 1.3);
        }
        for (int a = 0; a < 3; ++a) {
            const double lo = p.radii[static_cast<size_t>(a)];
            const double hi = static_cast<double>(extent[static_cast<size_t>(a)] - 1) -
                              p.radii[static_cast<size_t>(a)];
            p.center[static_cast<size_t>(a)] =
                hi > lo ? rng.uniform(lo, hi) : static_cast<double>(extent[static_cast<size_t>(a)] - 1) / 2.0;
        }
        p.intensity = rng.uniform(spec.structure_intensity_range[0], spec.structure_intensity_range[1]);
        prims.push_back(p);
    }
    return prims;
}

std::vector<PhantomPrimitive> patient_primitives(const PhantomSpec& spec, int64_t patient) {
    auto prims = phantom_layout(spec);
    for (size_t j = 0; j < prims.size(); ++j) {
        Rng rng(derive_seed(spec.seed, "jitter", static_cast<uint64_t>(patient), j));
        for (int a = 0; a < 3; ++a)
            prims[j].center[static_cast<size_t>(a)] += spec.deformation * rng.uniform(-1.0, 1.0);
        // intensity jitter is tied to the deformation knob so that the
        // zero-jitter corpus stays bit-identical across patients
        prims[j].intensity *= 1.0 + 0.05 * spec.deformation * rng.uniform(-1.0, 1.0);
        prims[j].intensity = std::clamp(prims[j].intensity, 0.05, 0.98);
    }
    return prims;
}

namespace {

constexpr double kBackground = 0.08;

inline double normalized_radius_sq(const PhantomPrimitive& p, int64_t z, int64_t y, int64_t x) {
    const double dz = (static_cast<double>(z) - p.center[0]) / p.radii[0];
    const double dy = (static_cast<double>(y) - p.center[1]) / p.radii[1];
    const double dx = (static_cast<double>(x) - p.center[2]) / p.radii[2];
    return dz * dz + dy * dy + dx * dx;
}

} // namespace

Volume render_phantom(const PhantomSpec& spec, int64_t patient) {
    const auto prims = patient_primitives(spec, patient);
    Volume v;
    v.shape = spec.base_shape;
    v.voxels.resize(static_cast<size_t>(v.shape.voxels()));
    Rng noise_rng(derive_seed(spec.seed, "noise", static_cast<uint64_t>(patient)));
    size_t i = 0;
    for (int64_t z = 0; z < v.shape.d; ++z)
        for (int64_t y = 0; y < v.shape.h; ++y)
            for (int64_t x = 0; x < v.shape.w; ++x, ++i) {
                double val = kBackground;
                for (const auto& p : prims) {
                    const double rho2 = normalized_radius_sq(p, z, y, x);
                    if (rho2 < 1.0) val = std::max(val, p.intensity * std::sqrt(1.0 - rho2));
                }
                val += spec.noise * noise_rng.normal();
                v.voxels[i] = static_cast<float>(std::clamp(val, 0.0, 1.0));
            }
    return v;
}

Volume structure_mask(const PhantomSpec& spec, int64_t patient, int64_t structure) {
    if (structure < 0 || structure >= spec.n_structures)
        throw ValidationError("structure_mask: structure index " + std::to_string(structure) +
                              " out of range [0, " + std::to_string(spec.n_structures) + ")");
    const auto prims = patient_primitives(spec, patient);
    const auto& p = prims[static_cast<size_t>(structure)];
    Volume m;
    m.shape = spec.base_shape;
    m.voxels.resize(static_cast<size_t>(m.shape.voxels()));
    size_t i = 0;
    for (int64_t z = 0; z < m.shape.d; ++z)
        for (int64_t y = 0; y < m.shape.h; ++y)
            for (int64_t x = 0; x < m.shape.w; ++x, ++i)
                m.voxels[i] = normalized_radius_sq(p, z, y, x) <= 1.0 ? 1.0f : 0.0f;
    return m;
}

CorpusManifest generate_phantom_corpus(const PhantomSpec& spec, const std::filesystem::path& out_dir) {
    spec.validate();
    std::filesystem::create_directories(out_dir);

    std::vector<Volume> volumes(static_cast<size_t>(spec.n_patients));
    parallel_indexed(spec.n_patients,
                     [&](int64_t i) { volumes[static_cast<size_t>(i)] = render_phantom(spec, i); });

    const int64_t n_heldout =
        std::min<int64_t>(spec.n_patients,
                          std::llround(static_cast<double>(spec.n_patients) * spec.heldout_fraction));
    CorpusManifest m;
    m.root = out_dir;
    m.corpus_seed = spec.seed;
    for (int64_t i = 0; i < spec.n_patients; ++i) {
        ManifestEntry e;
        e.patient_id = phantom_patient_id(i);
        e.path = e.patient_id + ".sgvol";
        e.shape = spec.base_shape;
        e.split = (i >= spec.n_patients - n_heldout) ? "heldout" : "train";
        save_volume(volumes[static_cast<size_t>(i)], out_dir / e.path);
        m.entries.push_back(std::move(e));
    }
    save_manifest(m, out_dir / "manifest.csv");
    std::ofstream spec_out(out_dir / "phantom_spec.json");
    if (!spec_out) throw RunError("generate_phantom_corpus: cannot write phantom_spec.json");
    spec_out << phantom_spec_to_json_text(spec) << "\n";
    return m;
}

// ---- crop datasets ----

namespace {

std::string crop_file_name(int64_t crop_id) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "crop_%05lld.sgvol", static_cast<long long>(crop_id));
    return buf;
}

} // namespace

void save_crop_dataset(const std::vector<PatternCrop>& crops, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "crops");
    std::ofstream csv(dir / "crops.csv");
    if (!csv) throw RunError("save_crop_dataset: cannot open crops.csv for writing in " + dir.string());
    csv << "crop_id,patient_id,coordinate_index,pseudo_label,scale_factor\n";
    for (size_t i = 0; i < crops.size(); ++i) {
        const auto& c = crops[i];
        check_csv_safe(c.patient_id, "crop dataset: patient_id");
        const auto id = static_cast<int64_t>(i);
        csv << id << ',' << c.patient_id << ',' << c.coordinate_index << ',' << c.pseudo_label << ','
            << format_double(c.scale_factor) << '\n';
        save_volume(c.data, dir / "crops" / crop_file_name(id));
    }
}

std::vector<PatternCrop> load_crop_dataset(const std::filesystem::path& dir) {
    std::ifstream csv(dir / "crops.csv");
    if (!csv) throw ValidationError("load_crop_dataset: cannot open " + (dir / "crops.csv").string());
    std::string line;
    if (!std::getline(csv, line)) throw ValidationError("corrupt crop dataset: empty crops.csv");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "crop_id,patient_id,coordinate_index,pseudo_label,scale_factor")
        throw ValidationError("corrupt crop dataset: unexpected header \"" + line + "\"");
    std::vector<PatternCrop> crops;
    size_t line_no = 1;
    while (std::getline(csv, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 5)
            throw ValidationError("corrupt crop dataset: line " + std::to_string(line_no) + " has " +
                                  std::to_string(f.size()) + " fields, expected 5");
        PatternCrop c;
        int64_t crop_id = 0;
        try {
            crop_id = std::stoll(f[0]);
            c.coordinate_index = static_cast<int>(std::stoll(f[2]));
            c.pseudo_label = static_cast<int>(std::stoll(f[3]));
            c.scale_factor = std::stod(f[4]);
        } catch (const std::exception&) {
            throw ValidationError("corrupt crop dataset: line " + std::to_string(line_no) +
                                  " has a non-numeric field");
        }
        c.patient_id = f[1];
        c.data = load_volume(dir / "crops" / crop_file_name(crop_id));
        crops.push_back(std::move(c));
    }
    if (!crops.empty()) {
        const Shape3 shape = crops.front().data.shape;
        for (const auto& c : crops) c.validate(shape);
    }
    return crops;
}

} // namespace semgen
