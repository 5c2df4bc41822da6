#include "semgen/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "semgen/rng.hpp"

namespace semgen {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& ctx, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ValidationError("config: " + ctx + " must be a JSON object");
    for (const auto& item : obj.items()) {
        if (!allowed.count(item.key()))
            throw ValidationError("config: unknown key \"" + item.key() + "\" in " + ctx);
    }
}

// Shape triples are written depth-last in JSON ([h, w, d]); Shape3 is (d, h, w).
Shape3 shape_from_json(const json& arr, const std::string& ctx) {
    if (!arr.is_array() || arr.size() != 3)
        throw ValidationError("config: " + ctx + " must be a 3-element array");
    return Shape3{arr[2].get<int64_t>(), arr[0].get<int64_t>(), arr[1].get<int64_t>()};
}

json shape_to_json(const Shape3& s) { return json::array({s.h, s.w, s.d}); }

template <typename T>
std::array<T, 2> range_from_json(const json& arr, const std::string& ctx) {
    if (!arr.is_array() || arr.size() != 2)
        throw ValidationError("config: " + ctx + " must be a [min, max] pair");
    std::array<T, 2> r{arr[0].get<T>(), arr[1].get<T>()};
    if (r[1] < r[0]) throw ValidationError("config: " + ctx + " has max < min");
    return r;
}

void parse_transforms(const json& j, TransformConfig& t) {
    check_keys(j, "transforms",
               {"p_nonlinear", "p_shuffle", "p_paint", "shuffle_block_extent", "shuffle_block_count",
                "inpaint_cuboid_count", "inpaint_cuboid_fraction", "outpaint_window_count",
                "outpaint_window_fraction", "outpaint_max_retained_fraction"});
    if (j.contains("p_nonlinear")) t.p_nonlinear = j["p_nonlinear"].get<double>();
    if (j.contains("p_shuffle")) t.p_shuffle = j["p_shuffle"].get<double>();
    if (j.contains("p_paint")) t.p_paint = j["p_paint"].get<double>();
    if (j.contains("shuffle_block_extent"))
        t.shuffle_block_extent = range_from_json<int64_t>(j["shuffle_block_extent"], "transforms.shuffle_block_extent");
    if (j.contains("shuffle_block_count"))
        t.shuffle_block_count = range_from_json<int64_t>(j["shuffle_block_count"], "transforms.shuffle_block_count");
    if (j.contains("inpaint_cuboid_count"))
        t.inpaint_cuboid_count = range_from_json<int64_t>(j["inpaint_cuboid_count"], "transforms.inpaint_cuboid_count");
    if (j.contains("inpaint_cuboid_fraction"))
        t.inpaint_cuboid_fraction =
            range_from_json<double>(j["inpaint_cuboid_fraction"], "transforms.inpaint_cuboid_fraction");
    if (j.contains("outpaint_window_count"))
        t.outpaint_window_count = range_from_json<int64_t>(j["outpaint_window_count"], "transforms.outpaint_window_count");
    if (j.contains("outpaint_window_fraction"))
        t.outpaint_window_fraction =
            range_from_json<double>(j["outpaint_window_fraction"], "transforms.outpaint_window_fraction");
    if (j.contains("outpaint_max_retained_fraction"))
        t.outpaint_max_retained_fraction = j["outpaint_max_retained_fraction"].get<double>();
}

json transforms_to_json(const TransformConfig& t) {
    return json{{"p_nonlinear", t.p_nonlinear},
                {"p_shuffle", t.p_shuffle},
                {"p_paint", t.p_paint},
                {"shuffle_block_extent", t.shuffle_block_extent},
                {"shuffle_block_count", t.shuffle_block_count},
                {"inpaint_cuboid_count", t.inpaint_cuboid_count},
                {"inpaint_cuboid_fraction", t.inpaint_cuboid_fraction},
                {"outpaint_window_count", t.outpaint_window_count},
                {"outpaint_window_fraction", t.outpaint_window_fraction},
                {"outpaint_max_retained_fraction", t.outpaint_max_retained_fraction}};
}

void parse_pretrain(const json& j, PretrainConfig& p) {
    check_keys(j, "pretrain",
               {"K", "C", "canonical_crop_shape", "scale_factors", "loss_weights", "warmup_epochs",
                "joint_epochs", "learning_rate", "batch_size", "optimizer"});
    if (j.contains("K")) p.K = j["K"].get<int64_t>();
    if (j.contains("C")) p.C = j["C"].get<int64_t>();
    if (j.contains("canonical_crop_shape"))
        p.canonical_crop_shape = shape_from_json(j["canonical_crop_shape"], "pretrain.canonical_crop_shape");
    if (j.contains("scale_factors")) p.scale_factors = j["scale_factors"].get<std::vector<double>>();
    if (j.contains("loss_weights")) {
        const json& lw = j["loss_weights"];
        check_keys(lw, "pretrain.loss_weights", {"lambda_cls", "lambda_rec"});
        if (lw.contains("lambda_cls")) p.loss_weights.lambda_cls = lw["lambda_cls"].get<double>();
        if (lw.contains("lambda_rec")) p.loss_weights.lambda_rec = lw["lambda_rec"].get<double>();
    }
    if (j.contains("warmup_epochs")) p.warmup_epochs = j["warmup_epochs"].get<int64_t>();
    if (j.contains("joint_epochs")) p.joint_epochs = j["joint_epochs"].get<int64_t>();
    if (j.contains("learning_rate")) p.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("batch_size")) p.batch_size = j["batch_size"].get<int64_t>();
    if (j.contains("optimizer")) p.optimizer = j["optimizer"].get<std::string>();
}

json pretrain_to_json(const PretrainConfig& p) {
    return json{{"K", p.K},
                {"C", p.C},
                {"canonical_crop_shape", shape_to_json(p.canonical_crop_shape)},
                {"scale_factors", p.scale_factors},
                {"loss_weights", {{"lambda_cls", p.loss_weights.lambda_cls}, {"lambda_rec", p.loss_weights.lambda_rec}}},
                {"warmup_epochs", p.warmup_epochs},
                {"joint_epochs", p.joint_epochs},
                {"learning_rate", p.learning_rate},
                {"batch_size", p.batch_size},
                {"optimizer", p.optimizer}};
}

void parse_model(const json& j, ModelConfig& m) {
    check_keys(j, "model", {"depth", "base_channels", "fc_hidden"});
    if (j.contains("depth")) m.depth = j["depth"].get<int64_t>();
    if (j.contains("base_channels")) m.base_channels = j["base_channels"].get<int64_t>();
    if (j.contains("fc_hidden")) m.fc_hidden = j["fc_hidden"].get<std::vector<int64_t>>();
}

json model_to_json(const ModelConfig& m) {
    return json{{"depth", m.depth}, {"base_channels", m.base_channels}, {"fc_hidden", m.fc_hidden}};
}

void parse_autoencoder(const json& j, AutoencoderConfig& a) {
    check_keys(j, "autoencoder",
               {"input_shape", "stages", "base_channels", "latent_dim", "epochs", "learning_rate", "batch_size"});
    if (j.contains("input_shape")) a.input_shape = shape_from_json(j["input_shape"], "autoencoder.input_shape");
    if (j.contains("stages")) a.stages = j["stages"].get<int64_t>();
    if (j.contains("base_channels")) a.base_channels = j["base_channels"].get<int64_t>();
    if (j.contains("latent_dim")) a.latent_dim = j["latent_dim"].get<int64_t>();
    if (j.contains("epochs")) a.epochs = j["epochs"].get<int64_t>();
    if (j.contains("learning_rate")) a.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("batch_size")) a.batch_size = j["batch_size"].get<int64_t>();
}

json autoencoder_to_json(const AutoencoderConfig& a) {
    return json{{"input_shape", shape_to_json(a.input_shape)},
                {"stages", a.stages},
                {"base_channels", a.base_channels},
                {"latent_dim", a.latent_dim},
                {"epochs", a.epochs},
                {"learning_rate", a.learning_rate},
                {"batch_size", a.batch_size}};
}

void parse_discovery(const json& j, DiscoveryConfig& d) {
    check_keys(j, "discovery", {"max_overlap", "coordinate_attempts", "reference_seeds"});
    if (j.contains("max_overlap")) d.max_overlap = j["max_overlap"].get<double>();
    if (j.contains("coordinate_attempts")) d.coordinate_attempts = j["coordinate_attempts"].get<int64_t>();
    if (j.contains("reference_seeds")) d.reference_seeds = j["reference_seeds"].get<std::vector<uint64_t>>();
}

json discovery_to_json(const DiscoveryConfig& d) {
    return json{{"max_overlap", d.max_overlap},
                {"coordinate_attempts", d.coordinate_attempts},
                {"reference_seeds", d.reference_seeds}};
}

void parse_phantom(const json& j, PhantomSpec& p) {
    check_keys(j, "phantom",
               {"n_patients", "base_shape", "n_structures", "structure_radius_range",
                "structure_intensity_range", "deformation", "noise", "heldout_fraction", "seed"});
    if (j.contains("n_patients")) p.n_patients = j["n_patients"].get<int64_t>();
    if (j.contains("base_shape")) p.base_shape = shape_from_json(j["base_shape"], "phantom.base_shape");
    if (j.contains("n_structures")) p.n_structures = j["n_structures"].get<int64_t>();
    if (j.contains("structure_radius_range"))
        p.structure_radius_range = range_from_json<double>(j["structure_radius_range"], "phantom.structure_radius_range");
    if (j.contains("structure_intensity_range"))
        p.structure_intensity_range =
            range_from_json<double>(j["structure_intensity_range"], "phantom.structure_intensity_range");
    if (j.contains("deformation")) p.deformation = j["deformation"].get<double>();
    if (j.contains("noise")) p.noise = j["noise"].get<double>();
    if (j.contains("heldout_fraction")) p.heldout_fraction = j["heldout_fraction"].get<double>();
    if (j.contains("seed")) p.seed = j["seed"].get<uint64_t>();
}

json phantom_to_json(const PhantomSpec& p) {
    return json{{"n_patients", p.n_patients},
                {"base_shape", shape_to_json(p.base_shape)},
                {"n_structures", p.n_structures},
                {"structure_radius_range", p.structure_radius_range},
                {"structure_intensity_range", p.structure_intensity_range},
                {"deformation", p.deformation},
                {"noise", p.noise},
                {"heldout_fraction", p.heldout_fraction},
                {"seed", p.seed}};
}

void parse_finetune(const json& j, FinetuneConfig& f) {
    check_keys(j, "finetune",
               {"label_budget_fraction", "epochs", "learning_rate", "batch_size", "samples_per_patient",
                "head_hidden", "n_seeds", "designated_structure"});
    if (j.contains("label_budget_fraction")) f.label_budget_fraction = j["label_budget_fraction"].get<double>();
    if (j.contains("epochs")) f.epochs = j["epochs"].get<int64_t>();
    if (j.contains("learning_rate")) f.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("batch_size")) f.batch_size = j["batch_size"].get<int64_t>();
    if (j.contains("samples_per_patient")) f.samples_per_patient = j["samples_per_patient"].get<int64_t>();
    if (j.contains("head_hidden")) f.head_hidden = j["head_hidden"].get<std::vector<int64_t>>();
    if (j.contains("n_seeds")) f.n_seeds = j["n_seeds"].get<int64_t>();
    if (j.contains("designated_structure")) f.designated_structure = j["designated_structure"].get<int64_t>();
}

json finetune_to_json(const FinetuneConfig& f) {
    return json{{"label_budget_fraction", f.label_budget_fraction},
                {"epochs", f.epochs},
                {"learning_rate", f.learning_rate},
                {"batch_size", f.batch_size},
                {"samples_per_patient", f.samples_per_patient},
                {"head_hidden", f.head_hidden},
                {"n_seeds", f.n_seeds},
                {"designated_structure", f.designated_structure}};
}

} // namespace

bool PretrainConfig::operator==(const PretrainConfig& o) const {
    return K == o.K && C == o.C && canonical_crop_shape == o.canonical_crop_shape &&
           scale_factors == o.scale_factors && loss_weights.lambda_cls == o.loss_weights.lambda_cls &&
           loss_weights.lambda_rec == o.loss_weights.lambda_rec && warmup_epochs == o.warmup_epochs &&
           joint_epochs == o.joint_epochs && learning_rate == o.learning_rate && batch_size == o.batch_size &&
           optimizer == o.optimizer && seed == o.seed;
}

void TransformConfig::validate() const {
    auto prob = [](double p, const char* name) {
        if (!(p >= 0.0 && p <= 1.0))
            throw ValidationError(std::string("transforms.") + name + " must be in [0,1]");
    };
    prob(p_nonlinear, "p_nonlinear");
    prob(p_shuffle, "p_shuffle");
    prob(p_paint, "p_paint");
    auto ordered = [](auto lo, auto hi, const char* name) {
        if (hi < lo) throw ValidationError(std::string("transforms.") + name + " range is inverted (max < min)");
    };
    ordered(shuffle_block_extent[0], shuffle_block_extent[1], "shuffle_block_extent");
    ordered(shuffle_block_count[0], shuffle_block_count[1], "shuffle_block_count");
    ordered(inpaint_cuboid_count[0], inpaint_cuboid_count[1], "inpaint_cuboid_count");
    ordered(inpaint_cuboid_fraction[0], inpaint_cuboid_fraction[1], "inpaint_cuboid_fraction");
    ordered(outpaint_window_count[0], outpaint_window_count[1], "outpaint_window_count");
    ordered(outpaint_window_fraction[0], outpaint_window_fraction[1], "outpaint_window_fraction");
    if (shuffle_block_extent[0] < 1) throw ValidationError("transforms.shuffle_block_extent min must be >= 1");
    if (shuffle_block_count[0] < 0) throw ValidationError("transforms.shuffle_block_count min must be >= 0");
    if (inpaint_cuboid_count[0] < 0) throw ValidationError("transforms.inpaint_cuboid_count min must be >= 0");
    if (inpaint_cuboid_fraction[0] < 0.0 || inpaint_cuboid_fraction[1] > 1.0)
        throw ValidationError("transforms.inpaint_cuboid_fraction must be within [0,1]");
    if (outpaint_window_count[0] < 1) throw ValidationError("transforms.outpaint_window_count min must be >= 1");
    if (outpaint_window_fraction[0] < 0.0 || outpaint_window_fraction[1] > 1.0)
        throw ValidationError("transforms.outpaint_window_fraction must be within [0,1]");
    if (!(outpaint_max_retained_fraction > 0.0 && outpaint_max_retained_fraction < 1.0))
        throw ValidationError("transforms.outpaint_max_retained_fraction must be in (0,1)");
}

PretrainConfig validate_config(const PretrainConfig& config, int64_t corpus_size) {
    if (config.K < 1) throw ValidationError("pretrain.K must be >= 1");
    if (corpus_size >= 0 && config.K > corpus_size - 1)
        throw ValidationError("pretrain.K must be <= corpus size - 1 (K=" + std::to_string(config.K) +
                              ", corpus size " + std::to_string(corpus_size) + ")");
    if (config.C < 1) throw ValidationError("pretrain.C must be >= 1");
    const Shape3& s = config.canonical_crop_shape;
    if (s.d < 1 || s.h < 1 || s.w < 1)
        throw ValidationError("pretrain.canonical_crop_shape axes must all be >= 1");
    if (config.scale_factors.empty()) throw ValidationError("pretrain.scale_factors must be non-empty");
    for (double f : config.scale_factors)
        if (!(f > 0.0)) throw ValidationError("pretrain.scale_factors must all be > 0");
    if (config.loss_weights.lambda_cls < 0.0) throw ValidationError("pretrain.loss_weights.lambda_cls must be >= 0");
    if (config.loss_weights.lambda_rec < 0.0) throw ValidationError("pretrain.loss_weights.lambda_rec must be >= 0");
    if (config.loss_weights.lambda_cls == 0.0 && config.loss_weights.lambda_rec == 0.0)
        throw ValidationError("pretrain.loss_weights: loss weights both zero");
    if (config.warmup_epochs < 0) throw ValidationError("pretrain.warmup_epochs must be >= 0");
    if (config.joint_epochs < 0) throw ValidationError("pretrain.joint_epochs must be >= 0");
    if (!(config.learning_rate > 0.0)) throw ValidationError("pretrain.learning_rate must be > 0");
    if (config.batch_size < 1) throw ValidationError("pretrain.batch_size must be >= 1");
    if (config.optimizer != "adam")
        throw ValidationError("pretrain.optimizer: unknown optimizer \"" + config.optimizer + "\"");
    return config;
}

void ModelConfig::validate() const {
    if (depth < 1) throw ValidationError("model.depth must be >= 1");
    if (base_channels < 1) throw ValidationError("model.base_channels must be >= 1");
    if (n_classes < 2) throw ValidationError("model: C must be >= 2 for classification to be meaningful");
    const int64_t div = int64_t(1) << depth;
    struct {
        const char* name;
        int64_t v;
    } axes[3] = {{"depth", input_shape.d}, {"height", input_shape.h}, {"width", input_shape.w}};
    for (const auto& a : axes) {
        if (a.v % div != 0)
            throw ValidationError(std::string("model: input ") + a.name + " axis " + std::to_string(a.v) +
                                  " not divisible by 2^depth = " + std::to_string(div));
    }
    for (int64_t wdt : fc_hidden)
        if (wdt < 1) throw ValidationError("model.fc_hidden widths must be >= 1");
}

void AutoencoderConfig::validate() const {
    if (stages < 1) throw ValidationError("autoencoder.stages must be >= 1");
    if (base_channels < 1) throw ValidationError("autoencoder.base_channels must be >= 1");
    if (latent_dim < 1) throw ValidationError("autoencoder.latent_dim must be >= 1");
    if (epochs < 1) throw ValidationError("autoencoder.epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw ValidationError("autoencoder.learning_rate must be > 0");
    if (batch_size < 1) throw ValidationError("autoencoder.batch_size must be >= 1");
    const int64_t div = int64_t(1) << stages;
    if (input_shape.d % div != 0 || input_shape.h % div != 0 || input_shape.w % div != 0)
        throw ValidationError("autoencoder.input_shape axes must be divisible by 2^stages = " + std::to_string(div));
}

void DiscoveryConfig::validate() const {
    if (!(max_overlap >= 0.0 && max_overlap <= 1.0))
        throw ValidationError("discovery.max_overlap must be in [0,1]");
    if (coordinate_attempts < 1) throw ValidationError("discovery.coordinate_attempts must be >= 1");
}

void PhantomSpec::validate() const {
    if (n_patients < 1) throw ValidationError("phantom.n_patients must be >= 1");
    if (base_shape.d < 1 || base_shape.h < 1 || base_shape.w < 1)
        throw ValidationError("phantom.base_shape axes must all be >= 1");
    if (n_structures < 1) throw ValidationError("phantom.n_structures must be >= 1");
    if (!(structure_radius_range[0] >= 1.0))
        throw ValidationError("phantom.structure_radius_range min must be >= 1 voxel");
    if (!(deformation >= 0.0)) throw ValidationError("phantom.deformation must be >= 0");
    if (!(noise >= 0.0 && noise <= 0.5)) throw ValidationError("phantom.noise must be in [0, 0.5]");
    if (!(heldout_fraction >= 0.0 && heldout_fraction < 1.0))
        throw ValidationError("phantom.heldout_fraction must be in [0, 1)");
    const int64_t min_axis = std::min(base_shape.d, std::min(base_shape.h, base_shape.w));
    if (static_cast<double>(min_axis) < 2.0 * structure_radius_range[0])
        throw ValidationError("phantom: degenerate shape, axis " + std::to_string(min_axis) +
                              " smaller than smallest structure diameter");
    if (!(structure_intensity_range[0] > 0.0 && structure_intensity_range[1] <= 1.0))
        throw ValidationError("phantom.structure_intensity_range must be within (0,1]");
}

void FinetuneConfig::validate() const {
    if (!(label_budget_fraction > 0.0 && label_budget_fraction <= 1.0))
        throw ValidationError("finetune.label_budget_fraction must be in (0,1]");
    if (epochs < 1) throw ValidationError("finetune.epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw ValidationError("finetune.learning_rate must be > 0");
    if (batch_size < 1) throw ValidationError("finetune.batch_size must be >= 1");
    if (samples_per_patient < 1) throw ValidationError("finetune.samples_per_patient must be >= 1");
    if (n_seeds < 1) throw ValidationError("finetune.n_seeds must be >= 1");
    if (designated_structure < 0) throw ValidationError("finetune.designated_structure must be >= 0");
}

void Config::bind_derived_fields() {
    pretrain.seed = seed;
    if (!phantom.seed) phantom.seed = derive_seed(seed, "phantom");
    model.input_shape = pretrain.canonical_crop_shape;
    model.n_classes = pretrain.C;
    model.param_seed = derive_seed(seed, "init");
}

Config Config::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("config: invalid JSON: ") + e.what());
    }
    check_keys(j, "top level",
               {"seed", "phantom", "pretrain", "model", "autoencoder", "transforms", "discovery", "finetune"});
    Config c;
    if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
    if (j.contains("phantom")) parse_phantom(j["phantom"], c.phantom);
    if (j.contains("pretrain")) parse_pretrain(j["pretrain"], c.pretrain);
    if (j.contains("model")) parse_model(j["model"], c.model);
    if (j.contains("autoencoder")) parse_autoencoder(j["autoencoder"], c.autoencoder);
    if (j.contains("transforms")) parse_transforms(j["transforms"], c.transforms);
    if (j.contains("discovery")) parse_discovery(j["discovery"], c.discovery);
    if (j.contains("finetune")) parse_finetune(j["finetune"], c.finetune);
    c.bind_derived_fields();
    c.transforms.validate();
    c.autoencoder.validate();
    c.discovery.validate();
    c.finetune.validate();
    return c;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("config: cannot open file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::string Config::to_json_text() const {
    json j{{"seed", seed},
           {"phantom", phantom_to_json(phantom)},
           {"pretrain", pretrain_to_json(pretrain)},
           {"model", model_to_json(model)},
           {"autoencoder", autoencoder_to_json(autoencoder)},
           {"transforms", transforms_to_json(transforms)},
           {"discovery", discovery_to_json(discovery)},
           {"finetune", finetune_to_json(finetune)}};
    return j.dump(2);
}

void Config::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw RunError("config: cannot write file " + path.string());
    out << to_json_text() << "\n";
}

std::string hash_hex(uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return s;
}

std::string Config::hash() const {
    const std::string text = to_json_text();
    return hash_hex(fnv1a64(text.data(), text.size()));
}

std::string phantom_spec_to_json_text(const PhantomSpec& spec) { return phantom_to_json(spec).dump(2); }

PhantomSpec phantom_spec_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("phantom spec: invalid JSON: ") + e.what());
    }
    PhantomSpec spec;
    parse_phantom(j, spec);
    spec.validate();
    return spec;
}

bool Config::operator==(const Config& o) const {
    return seed == o.seed && phantom == o.phantom && pretrain == o.pretrain && model == o.model &&
           autoencoder == o.autoencoder && transforms == o.transforms && discovery == o.discovery &&
           finetune == o.finetune;
}

} // namespace semgen
