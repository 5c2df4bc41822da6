#pragma once

// The dual-head 3D U-Net (encoder-decoder with skip connections plus a
// classification head on the pooled bottleneck), the patient-embedding
// auto-encoder, and the fine-tuning splits. Weight (de)serialization is in
// network.cpp; everything else is header-only templates.

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "semgen/config.hpp"
#include "semgen/errors.hpp"
#include "semgen/layers.hpp"

namespace semgen {

// two (conv3 -> groupnorm -> relu) units
template <typename T>
struct ConvBlock {
    Conv3d<T> c1, c2;
    GroupNorm<T> n1, n2;
    ReLU<T> r1, r2;

    void build(const std::string& prefix, int64_t ci, int64_t co) {
        c1.build(prefix + ".conv1", ci, co, 3);
        n1.build(prefix + ".norm1", co);
        c2.build(prefix + ".conv2", co, co, 3);
        n2.build(prefix + ".norm2", co);
    }
    void collect(std::vector<Param<T>*>& ps) {
        c1.collect(ps);
        n1.collect(ps);
        c2.collect(ps);
        n2.collect(ps);
    }
    const Tensor<T>& forward(const Tensor<T>& in) {
        return r2.forward(n2.forward(c2.forward(r1.forward(n1.forward(c1.forward(in))))));
    }
    const Tensor<T>& out() const { return r2.out; }
    const Tensor<T>& backward(const Tensor<T>& gout) {
        return c1.backward(n1.backward(r1.backward(c2.backward(n2.backward(r2.backward(gout))))));
    }
};

// Encoder pyramid: depth+1 blocks with 2x pooling in between, channel width
// doubling per level (base * 2^l).
template <typename T>
struct Encoder {
    int64_t depth = 0, base = 0, in_ch = 1;
    std::vector<ConvBlock<T>> blocks;
    std::vector<MaxPool2<T>> pools;

    void build(const std::string& prefix, int64_t input_channels, int64_t d, int64_t base_ch) {
        depth = d;
        base = base_ch;
        in_ch = input_channels;
        blocks.resize(static_cast<size_t>(d + 1));
        pools.resize(static_cast<size_t>(d));
        for (int64_t l = 0; l <= d; ++l) {
            const int64_t ci = l == 0 ? input_channels : base_ch << (l - 1);
            blocks[static_cast<size_t>(l)].build(prefix + std::to_string(l), ci, base_ch << l);
        }
    }
    void collect(std::vector<Param<T>*>& ps) {
        for (auto& b : blocks) b.collect(ps);
    }
    int64_t channels_at(int64_t level) const { return base << level; }

    const Tensor<T>& forward(const Tensor<T>& x) {
        const Tensor<T>* cur = &x;
        for (int64_t l = 0; l <= depth; ++l) {
            if (l > 0) cur = &pools[static_cast<size_t>(l - 1)].forward(*cur);
            cur = &blocks[static_cast<size_t>(l)].forward(*cur);
        }
        return bottleneck();
    }
    const Tensor<T>& level_out(int64_t l) const { return blocks[static_cast<size_t>(l)].out(); }
    const Tensor<T>& bottleneck() const { return level_out(depth); }

    // g_bneck: gradient at the bottleneck output; g_skips[l] (optional, may be
    // empty when no decoder is attached) adds the skip consumers' gradients.
    Tensor<T> backward(const Tensor<T>& g_bneck, const std::vector<Tensor<T>>& g_skips) {
        Tensor<T> g = g_bneck;
        for (int64_t l = depth; l >= 0; --l) {
            g = blocks[static_cast<size_t>(l)].backward(g);
            if (l > 0) {
                g = pools[static_cast<size_t>(l - 1)].backward(g);
                if (!g_skips.empty()) kernels::add_inplace(g, g_skips[static_cast<size_t>(l - 1)]);
            }
        }
        return g;
    }
};

// Decoder pyramid: upsample, concat the encoder skip, conv block; finishes at
// full resolution with `base` channels.
template <typename T>
struct Decoder {
    int64_t depth = 0, base = 0;
    std::vector<Upsample2<T>> ups;      // index l upsamples level l+1 -> l
    std::vector<ConvBlock<T>> blocks;   // index l
    std::vector<Tensor<T>> cats;        // concat activations per level
    std::vector<Tensor<T>> g_skips;     // gradient wrt encoder level_out(l), filled by backward

    void build(const std::string& prefix, int64_t d, int64_t base_ch) {
        depth = d;
        base = base_ch;
        ups.resize(static_cast<size_t>(d));
        blocks.resize(static_cast<size_t>(d));
        cats.resize(static_cast<size_t>(d));
        for (int64_t l = 0; l < d; ++l) {
            const int64_t upper = base_ch << (l + 1); // channels arriving from above
            const int64_t skip = base_ch << l;
            blocks[static_cast<size_t>(l)].build(prefix + std::to_string(l), upper + skip, skip);
        }
    }
    void collect(std::vector<Param<T>*>& ps) {
        for (auto& b : blocks) b.collect(ps);
    }

    const Tensor<T>& forward(const Encoder<T>& enc) {
        const Tensor<T>* cur = &enc.bottleneck();
        for (int64_t l = depth - 1; l >= 0; --l) {
            const Tensor<T>& up = ups[static_cast<size_t>(l)].forward(*cur);
            const Tensor<T>& skip = enc.level_out(l);
            auto& cat = cats[static_cast<size_t>(l)];
            cat = Tensor<T>({up.dim(0), up.dim(1) + skip.dim(1), up.dim(2), up.dim(3), up.dim(4)});
            kernels::concat_channels(up, skip, cat);
            cur = &blocks[static_cast<size_t>(l)].forward(cat);
        }
        return blocks[0].out();
    }

    // returns gradient wrt the bottleneck; skip gradients land in g_skips
    Tensor<T> backward(const Tensor<T>& g_final) {
        g_skips.assign(static_cast<size_t>(depth), Tensor<T>());
        Tensor<T> g = g_final;
        for (int64_t l = 0; l < depth; ++l) {
            g = blocks[static_cast<size_t>(l)].backward(g);
            const auto& cat = cats[static_cast<size_t>(l)];
            const int64_t up_ch = ups[static_cast<size_t>(l)].out.dim(1);
            Tensor<T> g_up({cat.dim(0), up_ch, cat.dim(2), cat.dim(3), cat.dim(4)});
            auto& g_skip = g_skips[static_cast<size_t>(l)];
            g_skip = Tensor<T>({cat.dim(0), cat.dim(1) - up_ch, cat.dim(2), cat.dim(3), cat.dim(4)});
            kernels::split_channels(g, g_up, g_skip);
            g = ups[static_cast<size_t>(l)].backward(g_up);
        }
        return g;
    }
};

// GAP -> fc stack, ReLU between hidden layers, raw logits out
template <typename T>
struct ClassHead {
    GlobalAvgPool<T> gap;
    std::vector<Linear<T>> lins;
    std::vector<ReLU<T>> acts;

    void build(const std::string& prefix, int64_t in_ch, const std::vector<int64_t>& hidden,
               int64_t n_out) {
        std::vector<int64_t> widths{in_ch};
        widths.insert(widths.end(), hidden.begin(), hidden.end());
        widths.push_back(n_out);
        lins.resize(widths.size() - 1);
        acts.resize(widths.size() - 2);
        for (size_t i = 0; i + 1 < widths.size(); ++i)
            lins[i].build(prefix + ".fc" + std::to_string(i), widths[i], widths[i + 1]);
    }
    void collect(std::vector<Param<T>*>& ps) {
        for (auto& l : lins) l.collect(ps);
    }
    const Tensor<T>& forward(const Tensor<T>& bneck) {
        const Tensor<T>* h = &gap.forward(bneck);
        for (size_t i = 0; i < lins.size(); ++i) {
            h = &lins[i].forward(*h);
            if (i + 1 < lins.size()) h = &acts[i].forward(*h);
        }
        return *h;
    }
    Tensor<T> backward(const Tensor<T>& glogits) {
        Tensor<T> g = glogits;
        for (size_t i = lins.size(); i-- > 0;) {
            g = lins[i].backward(g);
            if (i > 0) g = acts[i - 1].backward(g);
        }
        return gap.backward(g);
    }
};

template <typename T>
struct ForwardOut {
    const Tensor<T>* reconstruction;
    const Tensor<T>* logits;
    const Tensor<T>* bottleneck;
};

template <typename T>
class DualHeadUNet {
public:
    ModelConfig cfg;
    Encoder<T> enc;
    Decoder<T> dec;
    Conv3d<T> recon_conv; // 1x1x1 to a single channel
    Sigmoid<T> recon_act;
    ClassHead<T> cls;

    static DualHeadUNet build(const ModelConfig& config) {
        config.validate();
        DualHeadUNet m;
        m.cfg = config;
        m.enc.build("enc", 1, config.depth, config.base_channels);
        m.dec.build("dec", config.depth, config.base_channels);
        m.recon_conv.build("recon", config.base_channels, 1, 1);
        m.cls.build("cls", m.enc.channels_at(config.depth), config.fc_hidden, config.n_classes);
        auto ps = m.params();
        init_params(ps, config.param_seed);
        return m;
    }

    void check_input(const Tensor<T>& x) const {
        if (x.rank() != 5 || x.dim(1) != 1 || x.dim(2) != cfg.input_shape.d ||
            x.dim(3) != cfg.input_shape.h || x.dim(4) != cfg.input_shape.w)
            throw ValidationError("model: batch shape does not match configured input shape " +
                                  to_string(cfg.input_shape));
    }

    ForwardOut<T> forward(const Tensor<T>& x) {
        check_input(x);
        const Tensor<T>& bneck = enc.forward(x);
        const Tensor<T>& features = dec.forward(enc);
        const Tensor<T>& recon = recon_act.forward(recon_conv.forward(features));
        const Tensor<T>& logits = cls.forward(bneck);
        return {&recon, &logits, &bneck};
    }

    // joint backward; pass zero tensors to drop a head
    void backward(const Tensor<T>& grecon, const Tensor<T>& glogits) {
        Tensor<T> g_bneck = dec.backward(recon_conv.backward(recon_act.backward(grecon)));
        kernels::add_inplace(g_bneck, cls.backward(glogits));
        enc.backward(g_bneck, dec.g_skips);
    }

    // warmup path: only the classification branch sees a gradient, decoder and
    // reconstruction parameters are untouched
    void backward_cls_only(const Tensor<T>& glogits) {
        enc.backward(cls.backward(glogits), {});
    }

    // Collected fresh on every call (the pointers reach into this object, so
    // they go stale if the model is moved).
    std::vector<Param<T>*> params() {
        std::vector<Param<T>*> ps;
        enc.collect(ps);
        dec.collect(ps);
        recon_conv.collect(ps);
        cls.collect(ps);
        return ps;
    }
    void zero_grad() {
        auto ps = params();
        zero_grads(ps);
    }

private:
    DualHeadUNet() = default;
};

// ---- fine-tuning splits ----

enum class TaskKind { classification, segmentation };

inline TaskKind task_kind_from_string(const std::string& s) {
    if (s == "classification") return TaskKind::classification;
    if (s == "segmentation") return TaskKind::segmentation;
    throw ValidationError("unknown task_kind \"" + s + "\"");
}

// encoder + fresh fc head
template <typename T>
class EncoderClassifier {
public:
    ModelConfig cfg;
    Encoder<T> enc;
    ClassHead<T> head;

    static EncoderClassifier build(const ModelConfig& config, int64_t n_out,
                                   const std::vector<int64_t>& head_hidden, uint64_t seed) {
        EncoderClassifier m;
        m.cfg = config;
        m.enc.build("enc", 1, config.depth, config.base_channels);
        m.head.build("task_cls", m.enc.channels_at(config.depth), head_hidden, n_out);
        auto ps = m.params();
        init_params(ps, seed);
        return m;
    }

    const Tensor<T>& forward(const Tensor<T>& x) { return head.forward(enc.forward(x)); }
    void backward(const Tensor<T>& glogits) { enc.backward(head.backward(glogits), {}); }
    std::vector<Param<T>*> params() {
        std::vector<Param<T>*> ps;
        enc.collect(ps);
        head.collect(ps);
        return ps;
    }
    void zero_grad() {
        auto ps = params();
        zero_grads(ps);
    }

private:
    EncoderClassifier() = default;
};

// encoder + decoder + fresh single-channel mask head
template <typename T>
class SegmentationNet {
public:
    ModelConfig cfg;
    Encoder<T> enc;
    Decoder<T> dec;
    Conv3d<T> out_conv;
    Sigmoid<T> act;

    static SegmentationNet build(const ModelConfig& config, uint64_t seed) {
        SegmentationNet m;
        m.cfg = config;
        m.enc.build("enc", 1, config.depth, config.base_channels);
        m.dec.build("dec", config.depth, config.base_channels);
        m.out_conv.build("task_seg", config.base_channels, 1, 1);
        auto ps = m.params();
        init_params(ps, seed);
        return m;
    }

    // (N,1,D,H,W) mask probabilities
    const Tensor<T>& forward(const Tensor<T>& x) {
        enc.forward(x);
        return act.forward(out_conv.forward(dec.forward(enc)));
    }
    void backward(const Tensor<T>& gmask) {
        Tensor<T> g_bneck = dec.backward(out_conv.backward(act.backward(gmask)));
        enc.backward(g_bneck, dec.g_skips);
    }
    std::vector<Param<T>*> params() {
        std::vector<Param<T>*> ps;
        enc.collect(ps);
        dec.collect(ps);
        out_conv.collect(ps);
        return ps;
    }
    void zero_grad() {
        auto ps = params();
        zero_grads(ps);
    }

private:
    SegmentationNet() = default;
};

// Copies every parameter whose name exists in both models (encoder for the
// classifier, encoder+decoder for segmentation); task heads keep their fresh
// initialization. Transferred values are bit-equal by construction.
template <typename T, typename Net>
int64_t transfer_matching_params(DualHeadUNet<T>& source, Net& target) {
    auto src_ps = source.params();
    auto dst_ps = target.params();
    int64_t copied = 0;
    for (Param<T>* dst : dst_ps) {
        for (Param<T>* src : src_ps) {
            if (src->name == dst->name) {
                if (src->value.shape() != dst->value.shape())
                    throw ValidationError("transfer: shape mismatch for parameter " + src->name);
                dst->value = src->value;
                ++copied;
                break;
            }
        }
    }
    return copied;
}

// Builds the target sub-model for the task kind and copies the matching
// pretrained parameters into it: classification keeps the encoder plus a
// freshly initialized fc head, segmentation keeps encoder and decoder plus a
// fresh single-channel output layer. Transferred values are bit-equal.
template <typename T>
std::variant<EncoderClassifier<T>, SegmentationNet<T>> split_for_target(
    DualHeadUNet<T>& pretrained, TaskKind kind, int64_t n_out,
    const std::vector<int64_t>& head_hidden, uint64_t head_seed) {
    if (kind == TaskKind::classification) {
        auto m = EncoderClassifier<T>::build(pretrained.cfg, n_out, head_hidden, head_seed);
        transfer_matching_params(pretrained, m);
        return m;
    }
    auto m = SegmentationNet<T>::build(pretrained.cfg, head_seed);
    transfer_matching_params(pretrained, m);
    return m;
}

// ---- patient-embedding auto-encoder ----

template <typename T>
class AutoEncoder {
public:
    AutoencoderConfig cfg;

    static AutoEncoder build(const AutoencoderConfig& config, uint64_t seed) {
        config.validate();
        AutoEncoder m;
        m.cfg = config;
        const int64_t s = config.stages;
        m.enc_convs.resize(static_cast<size_t>(s));
        m.enc_norms.resize(static_cast<size_t>(s));
        m.enc_acts.resize(static_cast<size_t>(s));
        m.enc_pools.resize(static_cast<size_t>(s));
        for (int64_t i = 0; i < s; ++i) {
            const int64_t ci = i == 0 ? 1 : config.base_channels << (i - 1);
            const int64_t co = config.base_channels << i;
            m.enc_convs[static_cast<size_t>(i)].build("ae_enc" + std::to_string(i) + ".conv", ci, co, 3);
            m.enc_norms[static_cast<size_t>(i)].build("ae_enc" + std::to_string(i) + ".norm", co);
        }
        m.bneck_shape = {config.input_shape.d >> s, config.input_shape.h >> s,
                         config.input_shape.w >> s};
        m.bneck_ch = config.base_channels << (s - 1);
        const int64_t flat = m.bneck_ch * m.bneck_shape.voxels();
        m.to_latent.build("ae_latent", flat, config.latent_dim);
        m.from_latent.build("ae_expand", config.latent_dim, flat);
        m.dec_convs.resize(static_cast<size_t>(s));
        m.dec_norms.resize(static_cast<size_t>(s));
        m.dec_acts.resize(static_cast<size_t>(s));
        m.dec_ups.resize(static_cast<size_t>(s));
        for (int64_t i = 0; i < s; ++i) {
            // mirror of the encoder, walking back up
            const int64_t ci = config.base_channels << (s - 1 - i);
            const int64_t co = i + 1 < s ? config.base_channels << (s - 2 - i) : config.base_channels;
            m.dec_convs[static_cast<size_t>(i)].build("ae_dec" + std::to_string(i) + ".conv", ci, co, 3);
            m.dec_norms[static_cast<size_t>(i)].build("ae_dec" + std::to_string(i) + ".norm", co);
        }
        m.out_conv.build("ae_out", config.base_channels, 1, 1);
        auto ps = m.params();
        init_params(ps, seed);
        return m;
    }

    std::vector<Param<T>*> params() {
        std::vector<Param<T>*> ps;
        for (auto& c : enc_convs) c.collect(ps);
        for (auto& n : enc_norms) n.collect(ps);
        to_latent.collect(ps);
        from_latent.collect(ps);
        for (auto& c : dec_convs) c.collect(ps);
        for (auto& n : dec_norms) n.collect(ps);
        out_conv.collect(ps);
        return ps;
    }

    // returns (reconstruction, latent); latent lives in latent_out()
    const Tensor<T>& forward(const Tensor<T>& x) {
        if (x.dim(2) != cfg.input_shape.d || x.dim(3) != cfg.input_shape.h ||
            x.dim(4) != cfg.input_shape.w)
            throw ValidationError("autoencoder: batch shape does not match input shape " +
                                  to_string(cfg.input_shape));
        const Tensor<T>* cur = &x;
        for (size_t i = 0; i < enc_convs.size(); ++i) {
            cur = &enc_acts[i].forward(enc_norms[i].forward(enc_convs[i].forward(*cur)));
            cur = &enc_pools[i].forward(*cur);
        }
        flat_in = flatten(*cur);
        latent = to_latent.forward(flat_in);
        const Tensor<T>& expanded = expand_act.forward(from_latent.forward(latent));
        unflat = unflatten(expanded, cur->shape());
        cur = &unflat;
        for (size_t i = 0; i < dec_convs.size(); ++i) {
            cur = &dec_ups[i].forward(*cur);
            cur = &dec_acts[i].forward(dec_norms[i].forward(dec_convs[i].forward(*cur)));
        }
        return out_act.forward(out_conv.forward(*cur));
    }

    const Tensor<T>& latent_out() const { return latent; }

    void backward(const Tensor<T>& grecon) {
        Tensor<T> g = out_conv.backward(out_act.backward(grecon));
        for (size_t i = dec_convs.size(); i-- > 0;) {
            g = dec_convs[i].backward(dec_norms[i].backward(dec_acts[i].backward(g)));
            g = dec_ups[i].backward(g);
        }
        Tensor<T> gflat = flatten(g);
        gflat = from_latent.backward(expand_act.backward(gflat));
        g = unflatten(to_latent.backward(gflat), enc_pools.back().out.shape());
        for (size_t i = enc_convs.size(); i-- > 0;) {
            g = enc_pools[i].backward(g);
            g = enc_convs[i].backward(enc_norms[i].backward(enc_acts[i].backward(g)));
        }
    }

    void zero_grad() {
        auto ps = params();
        zero_grads(ps);
    }

private:
    std::vector<Conv3d<T>> enc_convs, dec_convs;
    std::vector<GroupNorm<T>> enc_norms, dec_norms;
    std::vector<ReLU<T>> enc_acts, dec_acts;
    std::vector<MaxPool2<T>> enc_pools;
    std::vector<Upsample2<T>> dec_ups;
    Linear<T> to_latent, from_latent;
    ReLU<T> expand_act;
    Conv3d<T> out_conv;
    Sigmoid<T> out_act;
    Shape3 bneck_shape;
    int64_t bneck_ch = 0;
    Tensor<T> flat_in, latent, unflat;

    AutoEncoder() = default;

    static Tensor<T> flatten(const Tensor<T>& t) {
        Tensor<T> out({t.dim(0), t.numel() / t.dim(0)});
        std::copy(t.data(), t.data() + t.numel(), out.data());
        return out;
    }
    static Tensor<T> unflatten(const Tensor<T>& t, const std::vector<int64_t>& shape) {
        Tensor<T> out(shape);
        std::copy(t.data(), t.data() + t.numel(), out.data());
        return out;
    }
};

// ---- weight files ----
// Blob: magic "SGWT\0\1", u16 scalar width, u32 tensor count, then per tensor
// u32 name length + bytes, u32 rank, u32 dims, raw little-endian payload.
// Sidecar JSON (same stem, .json): config_hash, stage, epoch, loss_cls, loss_rec.

struct WeightsMeta {
    std::string config_hash;
    std::string stage; // "warmup", "joint", "autoencoder", "finetune"
    int64_t epoch = 0;
    double loss_cls = 0.0;
    double loss_rec = 0.0;
};

template <typename T>
void save_weights(const std::vector<Param<T>*>& params, const WeightsMeta& meta,
                  const std::filesystem::path& path);

// loads by name into an already-built model; unknown/missing/mis-shaped
// tensors are validation errors
template <typename T>
WeightsMeta load_weights(std::vector<Param<T>*>& params, const std::filesystem::path& path);

WeightsMeta load_weights_meta(const std::filesystem::path& path);

template <typename T>
uint64_t params_checksum(const std::vector<Param<T>*>& params) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const Param<T>* p : params)
        h = fnv1a64(p->value.data(), static_cast<size_t>(p->value.numel()) * sizeof(T), h);
    return h;
}

} // namespace semgen
