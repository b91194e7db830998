#ifndef COWSYNTH_NN_MODEL_HPP
#define COWSYNTH_NN_MODEL_HPP

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cowsynth/nn/layers.hpp"
#include "cowsynth/nn/tensor.hpp"

namespace cow::nn {

struct ArchitectureConfig {
    int input_h = 400;
    int input_w = 400;
    int base_channels = 46;
    std::array<int, 4> channel_multipliers{1, 2, 4, 8};
    int latent_residual_blocks = 3;
    int convs_per_block = 3;
    int kernel_size = 3;
    double leaky_slope = 0.2;
    std::string seg_output_activation = "sigmoid";
    std::string recon_output_activation = "sigmoid";
    // One decoding branch per modality; only the first is wired into the
    // forward pass and the training loop.
    std::vector<std::string> modalities{"t2"};

    void validate() const {
        if (input_h < 16 || input_w < 16 || input_h % 16 || input_w % 16)
            throw std::invalid_argument(
                "input H/W must be positive multiples of 16 (four pooling "
                "stages), got " + std::to_string(input_h) + "x" +
                std::to_string(input_w));
        if (base_channels < 1) throw std::invalid_argument("base_channels must be >= 1");
        for (int m : channel_multipliers)
            if (m < 1) throw std::invalid_argument("channel multipliers must be >= 1");
        if (latent_residual_blocks < 1 || convs_per_block < 1)
            throw std::invalid_argument("block counts must be >= 1");
        if (kernel_size < 1 || kernel_size % 2 == 0)
            throw std::invalid_argument("kernel size must be odd");
        if (seg_output_activation != "sigmoid" || recon_output_activation != "sigmoid")
            throw std::invalid_argument("only sigmoid output activations are supported");
        if (modalities.empty())
            throw std::invalid_argument("at least one modality required");
    }

    int channels(int level) const { return base_channels * channel_multipliers[level]; }
};

// Full-scale defaults land the parameter count near 26.7M at 400x400.
inline ArchitectureConfig full_scale_config() { return {}; }

// Small enough for CPU training on 96x96 phantom slices.
inline ArchitectureConfig desk_scale_config() {
    ArchitectureConfig cfg;
    cfg.input_h = 96;
    cfg.input_w = 96;
    cfg.base_channels = 12;
    return cfg;
}

namespace detail {

// conv + instance norm + leaky rectifier
template <typename T>
struct ConvUnit {
    Conv2d<T> conv;
    InstanceNorm2d<T> norm;
    LeakyReLU<T> act;

    ConvUnit(int in_ch, int out_ch, int k, T slope, const std::string& name)
        : conv(in_ch, out_ch, k, name + ".conv"),
          norm(out_ch, name + ".norm"),
          act(slope) {}

    void init(std::mt19937_64& rng, T slope) { conv.init(rng, slope); }
    Tensor<T> forward(const Tensor<T>& x) {
        return act.forward(norm.forward(conv.forward(x)));
    }
    Tensor<T> backward(const Tensor<T>& gy) {
        return conv.backward(norm.backward(act.backward(gy)));
    }
    void collect(std::vector<Parameter<T>*>& out) {
        conv.collect(out);
        norm.collect(out);
    }
};

template <typename T>
struct EncoderBlock {
    std::vector<std::unique_ptr<ConvUnit<T>>> units;
    MaxPool2d<T> pool;

    Tensor<T> forward_features(const Tensor<T>& x) {
        Tensor<T> cur = x;
        for (auto& u : units) cur = u->forward(cur);
        return cur;
    }
    Tensor<T> backward_features(const Tensor<T>& gfeat) {
        Tensor<T> g = gfeat;
        for (auto it = units.rbegin(); it != units.rend(); ++it) g = (*it)->backward(g);
        return g;
    }
};

// Two 3x3 convolutions + instance normalisation with identity shortcut.
template <typename T>
struct ResidualBlock {
    Conv2d<T> conv1, conv2;
    InstanceNorm2d<T> norm1, norm2;
    LeakyReLU<T> act1, act2;

    ResidualBlock(int ch, int k, T slope, const std::string& name)
        : conv1(ch, ch, k, name + ".conv1"),
          conv2(ch, ch, k, name + ".conv2"),
          norm1(ch, name + ".norm1"),
          norm2(ch, name + ".norm2"),
          act1(slope),
          act2(slope) {}

    void init(std::mt19937_64& rng, T slope) {
        conv1.init(rng, slope);
        conv2.init(rng, slope);
    }
    Tensor<T> forward(const Tensor<T>& x) {
        Tensor<T> h = act1.forward(norm1.forward(conv1.forward(x)));
        h = norm2.forward(conv2.forward(h));
        add_inplace(h, x);
        return act2.forward(h);
    }
    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> g = act2.backward(gy);  // grad of (x + h2)
        Tensor<T> gh = conv1.backward(norm1.backward(
            act1.backward(conv2.backward(norm2.backward(g)))));
        add_inplace(gh, g);
        return gh;
    }
    void collect(std::vector<Parameter<T>*>& out) {
        conv1.collect(out);
        norm1.collect(out);
        conv2.collect(out);
        norm2.collect(out);
    }
};

template <typename T>
struct UpBlock {
    Upsample2d<T> up;
    std::vector<std::unique_ptr<ConvUnit<T>>> units;
    int up_channels = 0;    // channels entering the concat from below
    int skip_channels = 0;  // encoder skip width
    int extra_channels = 0; // decoder-branch skip width (synthesis block 1)

    Tensor<T> forward_units(const Tensor<T>& cat) {
        Tensor<T> cur = cat;
        for (auto& u : units) cur = u->forward(cur);
        return cur;
    }
    Tensor<T> backward_units(const Tensor<T>& gy) {
        Tensor<T> g = gy;
        for (auto it = units.rbegin(); it != units.rend(); ++it) g = (*it)->backward(g);
        return g;
    }
};

template <typename T>
struct DecoderBranch {
    std::string name;
    // blocks[0] is the deepest (first after the latent space)
    std::vector<UpBlock<T>> blocks;
    std::unique_ptr<Conv2d<T>> head;
    Sigmoid<T> out_act;
};

}  // namespace detail

// Encoder / decoder-branch / synthesis-branch model. The encoder compresses
// the input through four conv+max-pool blocks into a latent space of
// residual blocks; two mirrored upsampling branches decode it, with skip
// connections from the corresponding encoder blocks. The first convolution
// block of the synthesis branch additionally receives the decoder branch's
// feature map at the same resolution.
template <typename T>
class SynthModel {
public:
    struct Outputs {
        Tensor<T> recon;
        Tensor<T> seg;
    };

    SynthModel() = default;

    SynthModel(const ArchitectureConfig& cfg, uint64_t seed) : cfg_(cfg), seed_(seed) {
        cfg_.validate();
        const int k = cfg_.kernel_size;
        const T slope = static_cast<T>(cfg_.leaky_slope);

        int in_ch = 1;
        for (int b = 0; b < 4; ++b) {
            int out_ch = cfg_.channels(b);
            detail::EncoderBlock<T> blk;
            for (int u = 0; u < cfg_.convs_per_block; ++u) {
                std::string nm = "enc" + std::to_string(b + 1) + ".unit" + std::to_string(u + 1);
                blk.units.push_back(std::make_unique<detail::ConvUnit<T>>(
                    u == 0 ? in_ch : out_ch, out_ch, k, slope, nm));
            }
            encoder_.push_back(std::move(blk));
            in_ch = out_ch;
        }

        int latent_ch = cfg_.channels(3);
        for (int r = 0; r < cfg_.latent_residual_blocks; ++r)
            latent_.push_back(std::make_unique<detail::ResidualBlock<T>>(
                latent_ch, k, slope, "latent" + std::to_string(r + 1)));

        for (const std::string& mod : cfg_.modalities)
            decoders_.push_back(make_branch("dec." + mod, /*extra_at_block1=*/0));
        synthesis_ = make_branch("synth", /*extra_at_block1=*/cfg_.channels(3));

        log_sigma1_sq_.name = "uncertainty.log_sigma1_sq";
        log_sigma2_sq_.name = "uncertainty.log_sigma2_sq";
        log_sigma1_sq_.init_shape(1, 1, 1, 1);
        log_sigma2_sq_.init_shape(1, 1, 1, 1);

        std::mt19937_64 rng(seed);
        for (auto& blk : encoder_)
            for (auto& u : blk.units) u->init(rng, slope);
        for (auto& r : latent_) r->init(rng, slope);
        for (auto& d : decoders_) init_branch(d, rng, slope);
        init_branch(synthesis_, rng, slope);
        set_phase(1);
    }

    const ArchitectureConfig& config() const { return cfg_; }
    uint64_t seed() const { return seed_; }
    int phase() const { return phase_; }

    // Phase 1 freezes the synthesis branch and the uncertainty parameters;
    // phase 2 trains everything.
    void set_phase(int phase) {
        if (phase != 1 && phase != 2) throw std::invalid_argument("phase must be 1 or 2");
        phase_ = phase;
        freeze_synthesis_branch(phase == 1);
        log_sigma1_sq_.trainable = (phase == 2);
        log_sigma2_sq_.trainable = (phase == 2);
    }

    void freeze_synthesis_branch(bool frozen) {
        std::vector<Parameter<T>*> ps;
        collect_branch(synthesis_, ps);
        for (auto* p : ps) p->trainable = !frozen;
    }

    bool synthesis_frozen() {
        std::vector<Parameter<T>*> ps;
        collect_branch(synthesis_, ps);
        for (auto* p : ps)
            if (p->trainable) return false;
        return true;
    }

    std::vector<Parameter<T>*> parameters() {
        std::vector<Parameter<T>*> out;
        for (auto& blk : encoder_)
            for (auto& u : blk.units) u->collect(out);
        for (auto& r : latent_) r->collect(out);
        for (auto& d : decoders_) collect_branch(d, out);
        collect_branch(synthesis_, out);
        out.push_back(&log_sigma1_sq_);
        out.push_back(&log_sigma2_sq_);
        return out;
    }

    std::vector<Parameter<T>*> synthesis_parameters() {
        std::vector<Parameter<T>*> out;
        collect_branch(synthesis_, out);
        return out;
    }

    // Count of trainable scalars (all branches plus the two uncertainty
    // parameters; freezing is a phase-local state and does not change it).
    size_t parameter_count() {
        size_t n = 0;
        for (auto* p : parameters()) n += p->count();
        return n;
    }

    void zero_grad() {
        for (auto* p : parameters()) p->zero_grad();
    }

    T log_sigma1_sq() const { return log_sigma1_sq_.value.data[0]; }
    T log_sigma2_sq() const { return log_sigma2_sq_.value.data[0]; }
    Parameter<T>& log_sigma1_sq_param() { return log_sigma1_sq_; }
    Parameter<T>& log_sigma2_sq_param() { return log_sigma2_sq_; }

    // Full forward pass. with_synthesis=false skips the synthesis branch
    // (phase-1 autoencoder training); seg is empty in that case.
    Outputs forward(const Tensor<T>& x, bool with_synthesis = true) {
        if (x.c != 1 || x.h != cfg_.input_h || x.w != cfg_.input_w)
            throw std::invalid_argument("input shape " + x.shape_str() +
                                        " does not match configured " +
                                        std::to_string(cfg_.input_h) + "x" +
                                        std::to_string(cfg_.input_w));
        enc_feats_.clear();
        enc_feats_.resize(4);
        Tensor<T> cur = x;
        for (int b = 0; b < 4; ++b) {
            enc_feats_[b] = encoder_[b].forward_features(cur);
            cur = encoder_[b].pool.forward(enc_feats_[b]);
        }
        for (auto& r : latent_) cur = r->forward(cur);
        z_ = cur;

        Outputs out;
        out.recon = branch_forward(decoders_[0], z_, nullptr, &dec_feats_);
        if (with_synthesis)
            out.seg = branch_forward(synthesis_, z_, &dec_feats_[0], nullptr);
        return out;
    }

    // Backward through both branches. Either gradient may be empty (zero).
    // Gradients accumulate into parameter .grad buffers.
    void backward(const Tensor<T>& grad_recon, const Tensor<T>& grad_seg) {
        std::vector<Tensor<T>> skip_grads(4);
        for (int b = 0; b < 4; ++b) skip_grads[b] = Tensor<T>::zeros_like(enc_feats_[b]);

        Tensor<T> gz = Tensor<T>::zeros_like(z_);
        Tensor<T> dec_extra = Tensor<T>::zeros_like(dec_feats_[0]);
        if (grad_seg.size() > 0) {
            Tensor<T> g = branch_backward(synthesis_, grad_seg, skip_grads, &dec_extra);
            add_inplace(gz, g);
        }
        if (grad_recon.size() > 0 || dec_extra.size() > 0) {
            Tensor<T> g = branch_backward_with_inject(decoders_[0], grad_recon,
                                                      skip_grads, dec_extra);
            add_inplace(gz, g);
        }
        for (auto it = latent_.rbegin(); it != latent_.rend(); ++it)
            gz = (*it)->backward(gz);
        for (int b = 3; b >= 0; --b) {
            Tensor<T> gf = encoder_[b].pool.backward(gz);
            add_inplace(gf, skip_grads[b]);
            gz = encoder_[b].backward_features(gf);
        }
    }

    void backward_recon(const Tensor<T>& grad_recon) {
        backward(grad_recon, Tensor<T>());
    }

private:
    detail::DecoderBranch<T> make_branch(const std::string& name, int extra_at_block1) {
        const int k = cfg_.kernel_size;
        const T slope = static_cast<T>(cfg_.leaky_slope);
        detail::DecoderBranch<T> br;
        br.name = name;
        for (int i = 0; i < 4; ++i) {
            // block i sits at the resolution of encoder block 3-i
            int level = 3 - i;
            detail::UpBlock<T> blk;
            blk.up_channels = (i == 0) ? cfg_.channels(3) : cfg_.channels(level + 1);
            blk.skip_channels = cfg_.channels(level);
            blk.extra_channels = (i == 0) ? extra_at_block1 : 0;
            int cat_ch = blk.up_channels + blk.skip_channels + blk.extra_channels;
            int out_ch = cfg_.channels(level);
            for (int u = 0; u < cfg_.convs_per_block; ++u) {
                std::string nm = name + ".block" + std::to_string(i + 1) + ".unit" +
                                 std::to_string(u + 1);
                blk.units.push_back(std::make_unique<detail::ConvUnit<T>>(
                    u == 0 ? cat_ch : out_ch, out_ch, k, slope, nm));
            }
            br.blocks.push_back(std::move(blk));
        }
        br.head = std::make_unique<Conv2d<T>>(cfg_.channels(0), 1, k, name + ".head");
        return br;
    }

    void init_branch(detail::DecoderBranch<T>& br, std::mt19937_64& rng, T slope) {
        for (auto& blk : br.blocks)
            for (auto& u : blk.units) u->init(rng, slope);
        br.head->init(rng, slope);
    }

    void collect_branch(detail::DecoderBranch<T>& br, std::vector<Parameter<T>*>& out) {
        for (auto& blk : br.blocks)
            for (auto& u : blk.units) u->collect(out);
        br.head->collect(out);
    }

    // extra_in: decoder feature injected into block 1 (synthesis branch).
    // feats_out: per-block outputs cached for the synthesis skip.
    Tensor<T> branch_forward(detail::DecoderBranch<T>& br, const Tensor<T>& z,
                             const Tensor<T>* extra_in,
                             std::vector<Tensor<T>>* feats_out) {
        if (feats_out) {
            feats_out->clear();
            feats_out->resize(4);
        }
        Tensor<T> cur = z;
        for (int i = 0; i < 4; ++i) {
            auto& blk = br.blocks[i];
            Tensor<T> up = blk.up.forward(cur);
            Tensor<T> cat = (i == 0 && extra_in)
                                ? concat_channels(up, enc_feats_[3 - i], *extra_in)
                                : concat_channels(up, enc_feats_[3 - i]);
            cur = blk.forward_units(cat);
            if (feats_out) (*feats_out)[i] = cur;
        }
        return br.out_act.forward(br.head->forward(cur));
    }

    Tensor<T> branch_backward(detail::DecoderBranch<T>& br, const Tensor<T>& gy,
                              std::vector<Tensor<T>>& skip_grads,
                              Tensor<T>* extra_grad) {
        Tensor<T> g = br.head->backward(br.out_act.backward(gy));
        for (int i = 3; i >= 0; --i) {
            auto& blk = br.blocks[i];
            Tensor<T> gcat = blk.backward_units(g);
            Tensor<T> gup = slice_channels(gcat, 0, blk.up_channels);
            add_inplace(skip_grads[3 - i],
                        slice_channels(gcat, blk.up_channels, blk.skip_channels));
            if (i == 0 && blk.extra_channels > 0 && extra_grad)
                add_inplace(*extra_grad,
                            slice_channels(gcat, blk.up_channels + blk.skip_channels,
                                           blk.extra_channels));
            g = blk.up.backward(gup);
        }
        return g;
    }

    // Decoder-branch backward; inject adds the synthesis branch's gradient
    // contribution at the block-1 output.
    Tensor<T> branch_backward_with_inject(detail::DecoderBranch<T>& br,
                                          const Tensor<T>& gy,
                                          std::vector<Tensor<T>>& skip_grads,
                                          const Tensor<T>& inject_at_block1) {
        Tensor<T> g;
        if (gy.size() > 0)
            g = br.head->backward(br.out_act.backward(gy));
        else
            g = Tensor<T>::zeros_like(dec_feats_[3]);
        for (int i = 3; i >= 0; --i) {
            auto& blk = br.blocks[i];
            if (i == 0 && inject_at_block1.size() > 0) add_inplace(g, inject_at_block1);
            Tensor<T> gcat = blk.backward_units(g);
            Tensor<T> gup = slice_channels(gcat, 0, blk.up_channels);
            add_inplace(skip_grads[3 - i],
                        slice_channels(gcat, blk.up_channels, blk.skip_channels));
            g = blk.up.backward(gup);
        }
        return g;
    }

    ArchitectureConfig cfg_;
    uint64_t seed_ = 0;
    int phase_ = 1;
    std::vector<detail::EncoderBlock<T>> encoder_;
    std::vector<std::unique_ptr<detail::ResidualBlock<T>>> latent_;
    std::vector<detail::DecoderBranch<T>> decoders_;
    detail::DecoderBranch<T> synthesis_;
    Parameter<T> log_sigma1_sq_, log_sigma2_sq_;
    std::vector<Tensor<T>> enc_feats_;
    std::vector<Tensor<T>> dec_feats_;
    Tensor<T> z_;
};

}  // namespace cow::nn

#endif
