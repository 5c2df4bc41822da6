#include "semgen/network.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace semgen {
namespace {

constexpr char kMagic[6] = {'S', 'G', 'W', 'T', '\0', '\1'};

std::filesystem::path sidecar_path(const std::filesystem::path& blob_path) {
    auto p = blob_path;
    p.replace_extension(".json");
    return p;
}

void write_u32(std::ostream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t read_u32(std::istream& in, const std::string& what) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (in.gcount() != 4) throw ValidationError("corrupt weights: " + what);
    return v;
}

void write_meta(const WeightsMeta& meta, const std::filesystem::path& path) {
    nlohmann::json j{{"config_hash", meta.config_hash},
                     {"stage", meta.stage},
                     {"epoch", meta.epoch},
                     {"loss_cls", meta.loss_cls},
                     {"loss_rec", meta.loss_rec}};
    std::ofstream out(sidecar_path(path));
    if (!out) throw RunError("save_weights: cannot write sidecar for " + path.string());
    out << j.dump(2) << "\n";
}

} // namespace

WeightsMeta load_weights_meta(const std::filesystem::path& path) {
    std::ifstream in(sidecar_path(path));
    if (!in) throw ValidationError("weights sidecar missing: " + sidecar_path(path).string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("weights sidecar: invalid JSON: " + std::string(e.what()));
    }
    WeightsMeta meta;
    meta.config_hash = j.at("config_hash").get<std::string>();
    meta.stage = j.at("stage").get<std::string>();
    meta.epoch = j.at("epoch").get<int64_t>();
    meta.loss_cls = j.at("loss_cls").get<double>();
    meta.loss_rec = j.at("loss_rec").get<double>();
    return meta;
}

template <typename T>
void save_weights(const std::vector<Param<T>*>& params, const WeightsMeta& meta,
                  const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RunError("save_weights: cannot open " + path.string() + " for writing");
    out.write(kMagic, sizeof(kMagic));
    const uint16_t width = sizeof(T);
    out.write(reinterpret_cast<const char*>(&width), 2);
    write_u32(out, static_cast<uint32_t>(params.size()));
    for (const Param<T>* p : params) {
        write_u32(out, static_cast<uint32_t>(p->name.size()));
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        write_u32(out, static_cast<uint32_t>(p->value.rank()));
        for (size_t i = 0; i < p->value.rank(); ++i)
            write_u32(out, static_cast<uint32_t>(p->value.dim(i)));
        out.write(reinterpret_cast<const char*>(p->value.data()),
                  static_cast<std::streamsize>(p->value.numel() * static_cast<int64_t>(sizeof(T))));
    }
    if (!out) throw RunError("save_weights: write failed for " + path.string());
    write_meta(meta, path);
}

template <typename T>
WeightsMeta load_weights(std::vector<Param<T>*>& params, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("load_weights: cannot open " + path.string());
    char magic[6];
    in.read(magic, sizeof(magic));
    if (in.gcount() != sizeof(magic) || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw ValidationError("not an SGWT file: " + path.string());
    uint16_t width = 0;
    in.read(reinterpret_cast<char*>(&width), 2);
    if (in.gcount() != 2 || width != sizeof(T))
        throw ValidationError("load_weights: scalar width " + std::to_string(width) +
                              " does not match model scalar width " + std::to_string(sizeof(T)));
    const uint32_t count = read_u32(in, "tensor count");
    if (count != params.size())
        throw ValidationError("weights do not match model: file has " + std::to_string(count) +
                              " tensors, model has " + std::to_string(params.size()));
    for (Param<T>* p : params) {
        const uint32_t name_len = read_u32(in, "name length");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (in.gcount() != static_cast<std::streamsize>(name_len))
            throw ValidationError("corrupt weights: truncated name");
        if (name != p->name)
            throw ValidationError("weights do not match model: expected tensor \"" + p->name +
                                  "\", file has \"" + name + "\"");
        const uint32_t rank = read_u32(in, "rank");
        if (rank != p->value.rank())
            throw ValidationError("weights do not match model: rank mismatch for " + name);
        for (size_t i = 0; i < rank; ++i) {
            const uint32_t d = read_u32(in, "dim");
            if (static_cast<int64_t>(d) != p->value.dim(i))
                throw ValidationError("weights do not match model: shape mismatch for " + name);
        }
        in.read(reinterpret_cast<char*>(p->value.data()),
                static_cast<std::streamsize>(p->value.numel() * static_cast<int64_t>(sizeof(T))));
        if (in.gcount() != static_cast<std::streamsize>(p->value.numel() * static_cast<int64_t>(sizeof(T))))
            throw ValidationError("corrupt weights: truncated payload for " + name);
    }
    return load_weights_meta(path);
}

template void save_weights<float>(const std::vector<Param<float>*>&, const WeightsMeta&,
                                  const std::filesystem::path&);
template void save_weights<double>(const std::vector<Param<double>*>&, const WeightsMeta&,
                                   const std::filesystem::path&);
template WeightsMeta load_weights<float>(std::vector<Param<float>*>&, const std::filesystem::path&);
template WeightsMeta load_weights<double>(std::vector<Param<double>*>&, const std::filesystem::path&);

} // namespace semgen
