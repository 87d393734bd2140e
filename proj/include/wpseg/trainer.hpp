#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "wpseg/losses.hpp"
#include "wpseg/model.hpp"

namespace wpseg {

enum class LambdaMode { constant, gaussian_warmup };

LambdaMode parse_lambda_mode(const std::string& s);
std::string to_string(LambdaMode m);

struct TrainConfig {
    int image_size = 128;
    int batch_size = 8;
    double lr0 = 0.01;
    int max_iters = 2000;
    double poly_power = 0.9;
    LambdaMode lambda_mode = LambdaMode::constant;
    double lambda_value = 0.1;
    std::uint64_t seed = 0;
    bool aug_rot90 = true;
    bool aug_hflip = true;
    bool aug_vflip = true;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    int eval_interval = 200;
    int depth = 3;
    int base_channels = 16;
    bool drop_empty_int = false;
    int val_count = 20;  // training images with ground truth used for validation

    void validate() const;
    ModelConfig model_config() const;

    /// Flat key=value text, one field per line, in declaration order.
    std::string serialize() const;
    static TrainConfig parse(const std::string& text, const std::string& source = "<config>");
    static TrainConfig load(const std::filesystem::path& path);
    /// Apply one key=value; unknown keys are a ConfigError.
    void set(const std::string& key, const std::string& value);

    std::uint64_t hash() const;
};

/// lr0 * (1 - step/max_iters)^power, 0 from max_iters on.
double poly_lr(int step, const TrainConfig& cfg);

/// constant: lambda_value; gaussian_warmup: lambda_value * exp(-5 (1 - min(step/max_iters, 1))^2).
double lambda_at(int step, const TrainConfig& cfg);

/// Counter-clockwise quarter turns, then horizontal flip, then vertical flip.
struct Transform {
    int quarter_turns = 0;
    bool hflip = false;
    bool vflip = false;

    friend bool operator==(const Transform&, const Transform&) = default;
};

Transform sample_transform(std::mt19937_64& rng, const TrainConfig& cfg);

template <typename T>
Grid<T> apply_transform(const Grid<T>& g, const Transform& t);
template <typename T>
Grid<T> invert_transform(const Grid<T>& g, const Transform& t);

struct TrainSample {
    std::string id;
    Grid<float> image;
    BinaryMask y_int, y_uni, u;
};

/// One jointly sampled transform applied to the image and all three masks.
TrainSample augment(const TrainSample& s, std::mt19937_64& rng, const TrainConfig& cfg);

struct ValidationItem {
    Image image;  // already at the training resolution
    BinaryMask gt;
};

/// SGD with momentum and L2 weight decay: v = mu*v + (g + wd*w); w -= lr*v.
class SgdMomentum {
public:
    SgdMomentum(SegModel& model, double momentum, double weight_decay);
    void step(double lr);

    std::vector<std::vector<float>>& velocity() noexcept { return velocity_; }

private:
    SegModel* model_;
    float momentum_, weight_decay_;
    std::vector<std::vector<float>> velocity_;
};

/// dual: two models, cross teaching (first on y_int, second on y_uni).
/// single_int / single_uni: one model, supervised CE+Dice on that target.
enum class TrainMode { dual, single_int, single_uni };

struct StepRecord {
    int step = 0;
    double lr = 0;
    LossReport loss;
    std::optional<double> val_dsc;
};

class Trainer {
public:
    Trainer(TrainConfig cfg, std::vector<TrainSample> data, std::vector<ValidationItem> val,
            TrainMode mode = TrainMode::dual);

    /// One optimization step on the next batch. Throws NumericalError on a
    /// non-finite loss, naming the batch's image ids.
    StepRecord step();

    /// Runs until max_iters, evaluating every eval_interval steps and at the
    /// last step. `on_step` sees every record.
    void run(const std::function<void(const StepRecord&)>& on_step = {});

    /// Mean validation DSC of the current prediction (ensemble in dual mode).
    double validate() const;

    int current_step() const noexcept { return step_; }
    const TrainConfig& config() const noexcept { return cfg_; }
    TrainMode mode() const noexcept { return mode_; }
    std::size_t model_count() const noexcept { return models_.size(); }
    SegModel& model(std::size_t k) { return *models_.at(k); }
    const SegModel& model(std::size_t k) const { return *models_.at(k); }

    double best_val_dsc() const noexcept { return best_val_dsc_; }
    /// Parameter snapshot at the best validation DSC (the current models if
    /// validation never ran).
    std::vector<SegModel> best_models() const;

    std::string rng_state() const;

    /// Full resumable state: step, RNG, batch order, weights, momenta.
    void save_state(const std::filesystem::path& path) const;
    void load_state(const std::filesystem::path& path);

private:
    std::vector<std::size_t> next_batch();

    TrainConfig cfg_;
    std::vector<TrainSample> data_;
    std::vector<ValidationItem> val_;
    TrainMode mode_;
    std::vector<std::unique_ptr<SegModel>> models_;
    std::vector<std::unique_ptr<SgdMomentum>> optimizers_;
    std::mt19937_64 rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    int step_ = 0;
    double best_val_dsc_ = -1.0;
    std::vector<SegModel> best_;
};

enum class InferMode { f1, f2, ensemble };

InferMode parse_infer_mode(const std::string& s);
std::string to_string(InferMode m);

/// f1/f2: that model's argmax; ensemble: mean of the two foreground
/// probabilities > 0.5. A model needed by the mode must be non-null.
BinaryMask infer(const SegModel* f1, const SegModel* f2, const Image& image, InferMode mode);

// Resampling to the training resolution.
Grid<float> resize_bilinear(const Grid<float>& src, int height, int width);
BinaryMask resize_nearest(const BinaryMask& src, int height, int width);

}  // namespace wpseg
