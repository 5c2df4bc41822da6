#include "semgen/discovery.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "semgen/errors.hpp"
#include "semgen/losses.hpp"
#include "semgen/optimizer.hpp"
#include "semgen/parallel.hpp"
#include "semgen/rng.hpp"

namespace semgen {

using nlohmann::json;

void DiscoveryIndex::validate() const {
    if (!latents.count(reference_id))
        throw ValidationError("discovery index: reference \"" + reference_id + "\" has no latent");
    double prev = 0.0;
    for (const auto& [id, dist] : neighbors) {
        if (id == reference_id)
            throw ValidationError("discovery index: reference appears in its own neighbor list");
        if (!(dist >= 0.0) || !std::isfinite(dist))
            throw ValidationError("discovery index: invalid distance for neighbor " + id);
        if (dist < prev)
            throw ValidationError("discovery index: neighbor distances not sorted");
        prev = dist;
    }
}

namespace {

// stack resized volumes into one (N,1,D,H,W) batch
Tensor<float> batch_of(const std::vector<Volume>& vols, const std::vector<size_t>& which,
                       const Shape3& shape) {
    Tensor<float> x({static_cast<int64_t>(which.size()), 1, shape.d, shape.h, shape.w});
    const int64_t per = shape.voxels();
    for (size_t b = 0; b < which.size(); ++b)
        std::copy(vols[which[b]].voxels.begin(), vols[which[b]].voxels.end(),
                  x.data() + static_cast<int64_t>(b) * per);
    return x;
}

double ae_epoch_loss(AutoEncoder<float>& ae, Adam<float>& opt, const std::vector<Param<float>*>& ps,
                     const std::vector<Volume>& vols, const std::vector<size_t>& order,
                     int64_t batch_size, const Shape3& shape, bool train) {
    double loss_sum = 0.0;
    int64_t n_seen = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
        std::vector<size_t> which(order.begin() + static_cast<std::ptrdiff_t>(start),
                                  order.begin() +
                                      static_cast<std::ptrdiff_t>(
                                          std::min(order.size(), start + static_cast<size_t>(batch_size))));
        Tensor<float> x = batch_of(vols, which, shape);
        const Tensor<float>& recon = ae.forward(x);
        const double l = loss_rec(x, recon);
        loss_sum += l * static_cast<double>(which.size());
        n_seen += static_cast<int64_t>(which.size());
        if (!train) continue;
        ae.zero_grad();
        Tensor<float> g(recon.shape());
        loss_rec_backward(x, recon, g);
        ae.backward(g);
        opt.step(ps);
    }
    return loss_sum / static_cast<double>(n_seen);
}

} // namespace

AutoEncoder<float> train_autoencoder(const CorpusManifest& corpus, const AutoencoderConfig& cfg,
                                     uint64_t seed, std::vector<double>* loss_log) {
    cfg.validate();
    const auto entries = corpus.split_entries("train");
    if (entries.empty()) throw ValidationError("train_autoencoder: empty corpus (no train split)");

    std::vector<Volume> vols(entries.size());
    parallel_indexed(static_cast<int64_t>(entries.size()), [&](int64_t i) {
        vols[static_cast<size_t>(i)] =
            kernels::trilinear_resize(corpus.load(entries[static_cast<size_t>(i)]), cfg.input_shape);
    });

    auto ae = AutoEncoder<float>::build(cfg, derive_seed(seed, "ae_init"));
    auto ps = ae.params();
    Adam<float> opt(cfg.learning_rate);
    opt.attach(ps);

    std::vector<size_t> order(vols.size());
    std::iota(order.begin(), order.end(), size_t{0});
    for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(seed, "ae_order", static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        const double l =
            ae_epoch_loss(ae, opt, ps, vols, order, cfg.batch_size, cfg.input_shape, true);
        if (!std::isfinite(l))
            throw RunError("divergence at epoch " + std::to_string(epoch) + " (autoencoder)");
        if (loss_log) loss_log->push_back(l);
    }
    return ae;
}

LatentVector embed(const Volume& v, AutoEncoder<float>& ae) {
    v.validate("embed");
    Tensor<float> x({1, 1, v.shape.d, v.shape.h, v.shape.w});
    std::copy(v.voxels.begin(), v.voxels.end(), x.data());
    ae.forward(x);
    const Tensor<float>& latent = ae.latent_out();
    LatentVector out;
    out.values.resize(static_cast<size_t>(latent.numel()));
    for (int64_t i = 0; i < latent.numel(); ++i) {
        out.values[static_cast<size_t>(i)] = static_cast<double>(latent[i]);
        if (!std::isfinite(out.values[static_cast<size_t>(i)]))
            throw RunError("embed: non-finite latent entry");
    }
    return out;
}

DiscoveryIndex nearest_neighbors(const std::string& reference_id,
                                 const std::map<std::string, LatentVector>& latents, int64_t K) {
    const auto ref_it = latents.find(reference_id);
    if (ref_it == latents.end())
        throw ValidationError("nearest_neighbors: unknown reference \"" + reference_id + "\"");
    if (K < 0 || K > static_cast<int64_t>(latents.size()) - 1)
        throw ValidationError("nearest_neighbors: K=" + std::to_string(K) +
                              " out of range for corpus of " + std::to_string(latents.size()));
    const auto& ref = ref_it->second.values;

    DiscoveryIndex index;
    index.reference_id = reference_id;
    index.latents = latents;
    std::vector<std::pair<std::string, double>> all;
    for (const auto& [id, latent] : latents) {
        if (id == reference_id) continue;
        if (latent.values.size() != ref.size())
            throw ValidationError("nearest_neighbors: latent length mismatch for " + id);
        double ss = 0.0;
        for (size_t i = 0; i < ref.size(); ++i) {
            const double d = latent.values[i] - ref[i];
            ss += d * d;
        }
        all.emplace_back(id, std::sqrt(ss));
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second < b.second : a.first < b.first;
    });
    all.resize(static_cast<size_t>(K));
    index.neighbors = std::move(all);
    index.validate();
    return index;
}

std::vector<Coordinate> sample_coordinates(const Shape3& ref_shape, int64_t C, const Shape3& extent,
                                           double max_overlap, int64_t attempt_budget, uint64_t seed) {
    if (C < 1) throw ValidationError("sample_coordinates: C must be >= 1");
    if (extent.d > ref_shape.d || extent.h > ref_shape.h || extent.w > ref_shape.w)
        throw ValidationError("sample_coordinates: extent " + to_string(extent) +
                              " does not fit in reference shape " + to_string(ref_shape));
    Rng rng(derive_seed(seed, "coordinates"));
    std::vector<Coordinate> coords;
    const double crop_voxels = static_cast<double>(extent.voxels());
    int64_t attempts = 0;
    while (static_cast<int64_t>(coords.size()) < C) {
        if (attempts++ >= attempt_budget)
            throw ValidationError("cannot satisfy overlap constraint — reduce C or extent");
        Coordinate cand;
        cand.index = static_cast<int>(coords.size());
        cand.origin = {rng.uniform_int(0, ref_shape.d - extent.d),
                       rng.uniform_int(0, ref_shape.h - extent.h),
                       rng.uniform_int(0, ref_shape.w - extent.w)};
        cand.extent = extent;
        bool ok = true;
        for (const Coordinate& c : coords) {
            const int64_t iz = std::max<int64_t>(
                0, std::min(cand.origin[0] + extent.d, c.origin[0] + extent.d) -
                       std::max(cand.origin[0], c.origin[0]));
            const int64_t iy = std::max<int64_t>(
                0, std::min(cand.origin[1] + extent.h, c.origin[1] + extent.h) -
                       std::max(cand.origin[1], c.origin[1]));
            const int64_t ix = std::max<int64_t>(
                0, std::min(cand.origin[2] + extent.w, c.origin[2] + extent.w) -
                       std::max(cand.origin[2], c.origin[2]));
            if (static_cast<double>(iz * iy * ix) / crop_voxels > max_overlap) {
                ok = false;
                break;
            }
        }
        if (ok) coords.push_back(cand);
    }
    return coords;
}

namespace {

PatternCrop cut_one(const Volume& vol, const Coordinate& coord, double scale,
                    const Shape3& canonical, const std::string& patient_id) {
    // window of size scale*extent centered on the coordinate center
    const std::array<int64_t, 3> axes{vol.shape.d, vol.shape.h, vol.shape.w};
    const std::array<int64_t, 3> base{coord.extent.d, coord.extent.h, coord.extent.w};
    std::array<int64_t, 3> ext{}, org{};
    for (int a = 0; a < 3; ++a) {
        const int64_t e =
            std::llround(scale * static_cast<double>(base[static_cast<size_t>(a)]));
        if (e < 2)
            throw ValidationError("extract_crops: scaled crop degenerate (axis < 2 voxels) at scale " +
                                  std::to_string(scale));
        if (e > axes[static_cast<size_t>(a)])
            throw ValidationError("extract_crops: scale " + std::to_string(scale) +
                                  " does not fit inside volume axis " +
                                  std::to_string(axes[static_cast<size_t>(a)]));
        const double center = static_cast<double>(coord.origin[static_cast<size_t>(a)]) +
                              static_cast<double>(base[static_cast<size_t>(a)] - 1) / 2.0;
        int64_t o = std::llround(center - static_cast<double>(e - 1) / 2.0);
        o = std::clamp<int64_t>(o, 0, axes[static_cast<size_t>(a)] - e);
        ext[static_cast<size_t>(a)] = e;
        org[static_cast<size_t>(a)] = o;
    }
    Volume window;
    window.shape = Shape3{ext[0], ext[1], ext[2]};
    window.voxels.resize(static_cast<size_t>(window.shape.voxels()));
    size_t i = 0;
    for (int64_t z = org[0]; z < org[0] + ext[0]; ++z)
        for (int64_t y = org[1]; y < org[1] + ext[1]; ++y)
            for (int64_t x = org[2]; x < org[2] + ext[2]; ++x)
                window.voxels[i++] = vol.at(z, y, x);

    PatternCrop crop;
    crop.data = window.shape == canonical ? std::move(window)
                                          : kernels::trilinear_resize(window, canonical);
    crop.pseudo_label = coord.index;
    crop.coordinate_index = coord.index;
    crop.patient_id = patient_id;
    crop.scale_factor = scale;
    return crop;
}

std::vector<PatternCrop> crops_for_patient_list(const CorpusManifest& corpus,
                                                const std::vector<std::string>& patient_ids,
                                                const std::vector<Coordinate>& coords,
                                                const PretrainConfig& cfg) {
    std::vector<std::vector<PatternCrop>> per_patient(patient_ids.size());
    parallel_indexed(static_cast<int64_t>(patient_ids.size()), [&](int64_t p) {
        const ManifestEntry* entry = corpus.find(patient_ids[static_cast<size_t>(p)]);
        if (!entry)
            throw ValidationError("extract_crops: patient \"" + patient_ids[static_cast<size_t>(p)] +
                                  "\" not in manifest");
        const Volume vol = corpus.load(*entry);
        for (const Coordinate& coord : coords) {
            coord.validate(vol.shape);
            for (double s : cfg.scale_factors)
                per_patient[static_cast<size_t>(p)].push_back(
                    cut_one(vol, coord, s, cfg.canonical_crop_shape, entry->patient_id));
        }
    });
    std::vector<PatternCrop> crops;
    for (auto& pc : per_patient)
        for (auto& c : pc) crops.push_back(std::move(c));
    return crops;
}

} // namespace

std::vector<PatternCrop> extract_crops(const CorpusManifest& corpus, const DiscoveryIndex& index,
                                       const std::vector<Coordinate>& coords,
                                       const PretrainConfig& cfg) {
    index.validate();
    std::vector<std::string> ids{index.reference_id};
    for (const auto& [id, dist] : index.neighbors) ids.push_back(id);
    return crops_for_patient_list(corpus, ids, coords, cfg);
}

std::vector<PatternCrop> extract_crops_for_patients(const CorpusManifest& corpus,
                                                    const std::vector<std::string>& patient_ids,
                                                    const std::vector<Coordinate>& coords,
                                                    const PretrainConfig& cfg) {
    return crops_for_patient_list(corpus, patient_ids, coords, cfg);
}

std::string discovery_report_to_json_text(const DiscoveryReport& report) {
    json refs = json::array();
    for (const ReferenceBlock& block : report.references) {
        json neighbors = json::array();
        for (const auto& [id, dist] : block.neighbors)
            neighbors.push_back(json{{"patient_id", id}, {"distance", dist}});
        refs.push_back(json{{"reference_id", block.reference_id}, {"neighbors", std::move(neighbors)}});
    }
    json coords = json::array();
    for (const Coordinate& c : report.coordinates)
        coords.push_back(json{{"index", c.index},
                              {"origin", json::array({c.origin[0], c.origin[1], c.origin[2]})},
                              {"extent", json::array({c.extent.d, c.extent.h, c.extent.w})}});
    return json{{"references", std::move(refs)},
                {"coordinates", std::move(coords)},
                {"ae_initial_loss", report.ae_initial_loss},
                {"ae_final_loss", report.ae_final_loss},
                {"config_hash", report.config_hash}}
        .dump(2);
}

DiscoveryReport discovery_report_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError("discovery report: invalid JSON: " + std::string(e.what()));
    }
    DiscoveryReport report;
    for (const json& jr : j.at("references")) {
        ReferenceBlock block;
        block.reference_id = jr.at("reference_id").get<std::string>();
        for (const json& jn : jr.at("neighbors"))
            block.neighbors.emplace_back(jn.at("patient_id").get<std::string>(),
                                         jn.at("distance").get<double>());
        report.references.push_back(std::move(block));
    }
    for (const json& jc : j.at("coordinates")) {
        Coordinate c;
        c.index = jc.at("index").get<int>();
        const auto& org = jc.at("origin");
        c.origin = {org.at(0).get<int64_t>(), org.at(1).get<int64_t>(), org.at(2).get<int64_t>()};
        const auto& ext = jc.at("extent");
        c.extent = Shape3{ext.at(0).get<int64_t>(), ext.at(1).get<int64_t>(), ext.at(2).get<int64_t>()};
        report.coordinates.push_back(c);
    }
    report.ae_initial_loss = j.at("ae_initial_loss").get<double>();
    report.ae_final_loss = j.at("ae_final_loss").get<double>();
    report.config_hash = j.at("config_hash").get<std::string>();
    return report;
}

std::vector<PatternCrop> run_discovery(const CorpusManifest& corpus, const Config& config,
                                       uint64_t seed, DiscoveryReport* out_report) {
    corpus.validate();
    validate_config(config.pretrain, static_cast<int64_t>(corpus.split_entries("train").size()));
    config.discovery.validate();

    const auto train_entries = corpus.split_entries("train");
    if (train_entries.empty()) throw ValidationError("run_discovery: no train-split patients");
    const Shape3 ref_shape = train_entries.front().shape;
    for (const auto& e : train_entries)
        if (!(e.shape == ref_shape))
            throw ValidationError("run_discovery: mixed volume shapes in train split");

    // measure the untrained reconstruction loss for the report, then train
    std::vector<double> ae_losses;
    auto ae0 = AutoEncoder<float>::build(config.autoencoder, derive_seed(seed, "ae_init"));
    {
        std::vector<size_t> order{0};
        Volume first = kernels::trilinear_resize(corpus.load(train_entries.front()),
                                                 config.autoencoder.input_shape);
        Tensor<float> x({1, 1, first.shape.d, first.shape.h, first.shape.w});
        std::copy(first.voxels.begin(), first.voxels.end(), x.data());
        ae_losses.push_back(loss_rec(x, ae0.forward(x)));
    }
    auto ae = train_autoencoder(corpus, config.autoencoder, seed, &ae_losses);

    std::map<std::string, LatentVector> latents;
    for (const auto& e : train_entries) {
        const Volume v = kernels::trilinear_resize(corpus.load(e), config.autoencoder.input_shape);
        LatentVector latent = embed(v, ae);
        latent.patient_id = e.patient_id;
        latents[e.patient_id] = std::move(latent);
    }

    std::vector<Coordinate> coords =
        sample_coordinates(ref_shape, config.pretrain.C, config.pretrain.canonical_crop_shape,
                           config.discovery.max_overlap, config.discovery.coordinate_attempts, seed);

    std::vector<uint64_t> reference_seeds = config.discovery.reference_seeds;
    if (reference_seeds.empty()) reference_seeds.push_back(seed);

    DiscoveryReport report;
    report.coordinates = coords;
    report.ae_initial_loss = ae_losses.front();
    report.ae_final_loss = ae_losses.back();
    report.config_hash = config.hash();

    // one discovery round per reference seed; the coordinate set is shared so
    // pseudo labels stay consistent, and repeated patients are kept once
    std::vector<PatternCrop> crops;
    std::vector<std::string> seen;
    for (uint64_t ref_seed : reference_seeds) {
        Rng pick(derive_seed(ref_seed, "reference"));
        const auto& ref_entry =
            train_entries[static_cast<size_t>(pick.uniform_int(0, static_cast<int64_t>(train_entries.size()) - 1))];
        DiscoveryIndex index = nearest_neighbors(ref_entry.patient_id, latents, config.pretrain.K);
        report.references.push_back(ReferenceBlock{index.reference_id, index.neighbors});

        std::vector<std::string> ids{index.reference_id};
        for (const auto& [id, dist] : index.neighbors) ids.push_back(id);
        std::vector<std::string> fresh;
        for (const auto& id : ids)
            if (std::find(seen.begin(), seen.end(), id) == seen.end()) {
                fresh.push_back(id);
                seen.push_back(id);
            }
        auto round = crops_for_patient_list(corpus, fresh, coords, config.pretrain);
        for (auto& c : round) crops.push_back(std::move(c));
    }

    if (out_report) *out_report = std::move(report);
    return crops;
}

} // namespace semgen
