#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wpseg/grid.hpp"
#include "wpseg/tensor.hpp"

namespace wpseg {

struct ModelConfig {
    int depth = 4;           // down/up-sampling stages
    int base_channels = 16;  // channels at the first stage, doubled per stage
    int in_channels = 1;
    int out_channels = 2;    // background, nodule

    int divisor() const { return 1 << depth; }
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct Param {
    std::string name;
    AlignedVector<float> value;
    AlignedVector<float> grad;
};

/// UNet-style encoder/decoder: per stage two (3x3 conv, instance norm, ReLU)
/// units, 2x max-pool down, 2x nearest up with skip concatenation, and a 1x1
/// head producing out_channels logits.
class SegModel {
public:
    /// He fan-in initialization from `seed`; norm gains 1, shifts and head bias 0.
    SegModel(ModelConfig cfg, std::uint64_t seed);
    // Copies carry weights only; the activation cache starts empty.
    SegModel(const SegModel& other);
    SegModel& operator=(const SegModel& other);
    SegModel(SegModel&&) noexcept = default;
    SegModel& operator=(SegModel&&) noexcept = default;

    const ModelConfig& config() const noexcept { return cfg_; }

    /// Training forward pass; caches activations for backward().
    const Tensor<float>& forward(const Tensor<float>& input);

    /// Overwrites every parameter's grad with d(loss)/d(param) given
    /// d(loss)/d(logits) for the last forward() call.
    void backward(const Tensor<float>& grad_logits);

    /// Stateless forward usable concurrently on a shared model.
    Tensor<float> infer(const Tensor<float>& input) const;

    std::vector<Param>& params() noexcept { return params_; }
    const std::vector<Param>& params() const noexcept { return params_; }
    std::size_t parameter_count() const;

    void set_all(float v);
    void zero_grad();

private:
    struct Unit {
        int weight, gamma, beta;
        int in_ch, out_ch;
    };
    struct Block {
        Unit a, b;
    };
    struct UnitCache {
        Tensor<float> conv, out;
        std::vector<float> mean, inv_std;
    };
    struct BlockCache {
        UnitCache a, b;
    };
    struct Workspace {
        Tensor<float> input;
        std::vector<BlockCache> enc, dec;
        std::vector<Tensor<float>> pooled, cat;
        std::vector<std::vector<std::uint8_t>> argmax;
        BlockCache bottleneck;
        Tensor<float> logits;
    };

    int add_param(std::string name, std::size_t size);
    Unit make_unit(const std::string& prefix, int in_ch, int out_ch);
    Block make_block(const std::string& prefix, int in_ch, int out_ch);
    void check_input(const Tensor<float>& input) const;
    void run(const Tensor<float>& input, Workspace& ws) const;
    void unit_forward(const Unit& u, const Tensor<float>& in, UnitCache& c) const;
    void block_forward(const Block& b, const Tensor<float>& in, BlockCache& c) const;
    void unit_backward(const Unit& u, const Tensor<float>& in, const UnitCache& c, const Tensor<float>& grad_out,
                       Tensor<float>* grad_in);
    void block_backward(const Block& b, const Tensor<float>& in, const BlockCache& c, const Tensor<float>& grad_out,
                        Tensor<float>* grad_in);

    ModelConfig cfg_;
    std::vector<Param> params_;
    std::vector<Block> enc_, dec_;
    Block bottleneck_{};
    int head_w_ = -1, head_b_ = -1;
    Workspace ws_;
    bool has_forward_ = false;
};

struct Prediction {
    Grid<double> prob;  // foreground softmax probability
    BinaryMask hard;    // argmax, ties -> background
};

/// One image through the network. Image dims must be divisible by 2^depth.
Prediction predict(const SegModel& model, const Image& image);

/// Foreground probability per pixel from 2-channel logits.
Grid<double> foreground_probability(const Tensor<float>& logits, int index);

struct CheckpointMeta {
    std::int64_t step = 0;
    std::uint64_t config_hash = 0;
    std::string rng_state;
};

/// Binary checkpoint: magic "WPSEG1", format version, architecture,
/// metadata, then each parameter as (name, float32 values), little-endian.
void save_checkpoint(const std::filesystem::path& path, const SegModel& model, const CheckpointMeta& meta);
SegModel load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

}  // namespace wpseg
