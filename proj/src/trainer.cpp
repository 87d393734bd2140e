#include "wpseg/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "wpseg/binio.hpp"
#include "wpseg/metrics.hpp"

namespace wpseg {

namespace {

std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("invalid value '" + v + "' for " + key);
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw ConfigError("invalid boolean '" + v + "' for " + key);
}

std::string fmt_real(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

}  // namespace

LambdaMode parse_lambda_mode(const std::string& s) {
    if (s == "constant") return LambdaMode::constant;
    if (s == "gaussian_warmup" || s == "warmup") return LambdaMode::gaussian_warmup;
    throw ConfigError("unknown lambda mode '" + s + "' (constant|gaussian_warmup)");
}

std::string to_string(LambdaMode m) { return m == LambdaMode::constant ? "constant" : "gaussian_warmup"; }

void TrainConfig::validate() const {
    if (image_size < 16) throw ConfigError("image_size must be >= 16");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr0 > 0)) throw ConfigError("lr0 must be > 0");
    if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
    if (!(poly_power >= 0)) throw ConfigError("poly_power must be >= 0");
    if (!(lambda_value >= 0)) throw ConfigError("lambda_value must be >= 0");
    if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must be in [0,1)");
    if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be >= 0");
    if (eval_interval < 1) throw ConfigError("eval_interval must be >= 1");
    if (val_count < 0) throw ConfigError("val_count must be >= 0");
    if (depth < 1 || depth > 6 || base_channels < 1) throw ConfigError("invalid model depth/base_channels");
    if (image_size % (1 << depth)) {
        throw ConfigError("image_size " + std::to_string(image_size) + " must be divisible by 2^depth = " +
                          std::to_string(1 << depth));
    }
}

ModelConfig TrainConfig::model_config() const { return ModelConfig{depth, base_channels, 1, 2}; }

std::string TrainConfig::serialize() const {
    std::ostringstream s;
    s << "image_size=" << image_size << '\n'
      << "batch_size=" << batch_size << '\n'
      << "lr0=" << fmt_real(lr0) << '\n'
      << "max_iters=" << max_iters << '\n'
      << "poly_power=" << fmt_real(poly_power) << '\n'
      << "lambda_mode=" << to_string(lambda_mode) << '\n'
      << "lambda_value=" << fmt_real(lambda_value) << '\n'
      << "seed=" << seed << '\n'
      << "aug_rot90=" << aug_rot90 << '\n'
      << "aug_hflip=" << aug_hflip << '\n'
      << "aug_vflip=" << aug_vflip << '\n'
      << "momentum=" << fmt_real(momentum) << '\n'
      << "weight_decay=" << fmt_real(weight_decay) << '\n'
      << "eval_interval=" << eval_interval << '\n'
      << "depth=" << depth << '\n'
      << "base_channels=" << base_channels << '\n'
      << "drop_empty_int=" << drop_empty_int << '\n'
      << "val_count=" << val_count << '\n';
    return s.str();
}

void TrainConfig::set(const std::string& key, const std::string& value) {
    if (key == "image_size") image_size = parse_number<int>(key, value);
    else if (key == "batch_size") batch_size = parse_number<int>(key, value);
    else if (key == "lr0") lr0 = parse_number<double>(key, value);
    else if (key == "max_iters") max_iters = parse_number<int>(key, value);
    else if (key == "poly_power") poly_power = parse_number<double>(key, value);
    else if (key == "lambda_mode") lambda_mode = parse_lambda_mode(value);
    else if (key == "lambda_value") lambda_value = parse_number<double>(key, value);
    else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
    else if (key == "aug_rot90") aug_rot90 = parse_bool(key, value);
    else if (key == "aug_hflip") aug_hflip = parse_bool(key, value);
    else if (key == "aug_vflip") aug_vflip = parse_bool(key, value);
    else if (key == "momentum") momentum = parse_number<double>(key, value);
    else if (key == "weight_decay") weight_decay = parse_number<double>(key, value);
    else if (key == "eval_interval") eval_interval = parse_number<int>(key, value);
    else if (key == "depth") depth = parse_number<int>(key, value);
    else if (key == "base_channels") base_channels = parse_number<int>(key, value);
    else if (key == "drop_empty_int") drop_empty_int = parse_bool(key, value);
    else if (key == "val_count") val_count = parse_number<int>(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
}

TrainConfig TrainConfig::parse(const std::string& text, const std::string& source) {
    TrainConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(source, lineno, "expected key=value");
        try {
            cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return cfg;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

std::uint64_t TrainConfig::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : serialize()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

double poly_lr(int step, const TrainConfig& cfg) {
    if (step >= cfg.max_iters) return 0.0;
    const double frac = 1.0 - static_cast<double>(std::max(step, 0)) / cfg.max_iters;
    return cfg.lr0 * std::pow(frac, cfg.poly_power);
}

double lambda_at(int step, const TrainConfig& cfg) {
    if (cfg.lambda_mode == LambdaMode::constant) return cfg.lambda_value;
    const double t = std::min(static_cast<double>(std::max(step, 0)) / cfg.max_iters, 1.0);
    return cfg.lambda_value * std::exp(-5.0 * (1.0 - t) * (1.0 - t));
}

Transform sample_transform(std::mt19937_64& rng, const TrainConfig& cfg) {
    std::uniform_int_distribution<int> quarter(0, 3);
    std::bernoulli_distribution coin(0.5);
    Transform t;
    t.quarter_turns = quarter(rng);
    t.hflip = coin(rng);
    t.vflip = coin(rng);
    if (!cfg.aug_rot90) t.quarter_turns = 0;
    if (!cfg.aug_hflip) t.hflip = false;
    if (!cfg.aug_vflip) t.vflip = false;
    return t;
}

namespace {

template <typename T>
Grid<T> rotate_ccw(const Grid<T>& g) {
    const int h = g.height(), w = g.width();
    Grid<T> out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out(w - 1 - x, y) = g(y, x);
    return out;
}

template <typename T>
Grid<T> flip(const Grid<T>& g, bool horizontal) {
    const int h = g.height(), w = g.width();
    Grid<T> out(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out(y, x) = horizontal ? g(y, w - 1 - x) : g(h - 1 - y, x);
    return out;
}

}  // namespace

template <typename T>
Grid<T> apply_transform(const Grid<T>& g, const Transform& t) {
    Grid<T> out = g;
    for (int k = 0; k < (t.quarter_turns & 3); ++k) out = rotate_ccw(out);
    if (t.hflip) out = flip(out, true);
    if (t.vflip) out = flip(out, false);
    return out;
}

template <typename T>
Grid<T> invert_transform(const Grid<T>& g, const Transform& t) {
    Grid<T> out = g;
    if (t.vflip) out = flip(out, false);
    if (t.hflip) out = flip(out, true);
    for (int k = 0; k < ((4 - (t.quarter_turns & 3)) & 3); ++k) out = rotate_ccw(out);
    return out;
}

template Grid<float> apply_transform(const Grid<float>&, const Transform&);
template Grid<std::uint8_t> apply_transform(const Grid<std::uint8_t>&, const Transform&);
template Grid<double> apply_transform(const Grid<double>&, const Transform&);
template Grid<float> invert_transform(const Grid<float>&, const Transform&);
template Grid<std::uint8_t> invert_transform(const Grid<std::uint8_t>&, const Transform&);
template Grid<double> invert_transform(const Grid<double>&, const Transform&);

TrainSample augment(const TrainSample& s, std::mt19937_64& rng, const TrainConfig& cfg) {
    const Transform t = sample_transform(rng, cfg);
    return {s.id, apply_transform(s.image, t), apply_transform(s.y_int, t), apply_transform(s.y_uni, t),
            apply_transform(s.u, t)};
}

SgdMomentum::SgdMomentum(SegModel& model, double momentum, double weight_decay)
    : model_(&model), momentum_(static_cast<float>(momentum)), weight_decay_(static_cast<float>(weight_decay)) {
    for (const auto& p : model.params()) velocity_.emplace_back(p.value.size(), 0.0f);
}

void SgdMomentum::step(double lr) {
    const float rate = static_cast<float>(lr);
    auto& params = model_->params();
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& w = params[k].value;
        const auto& g = params[k].grad;
        auto& v = velocity_[k];
        for (std::size_t j = 0; j < w.size(); ++j) {
            v[j] = momentum_ * v[j] + (g[j] + weight_decay_ * w[j]);
            w[j] -= rate * v[j];
        }
    }
}

Trainer::Trainer(TrainConfig cfg, std::vector<TrainSample> data, std::vector<ValidationItem> val, TrainMode mode)
    : cfg_(std::move(cfg)), data_(std::move(data)), val_(std::move(val)), mode_(mode) {
    cfg_.validate();
    if (cfg_.drop_empty_int) {
        std::erase_if(data_, [](const TrainSample& s) { return count_foreground(s.y_int) == 0; });
    }
    if (data_.empty()) throw ConfigError("training set is empty");
    for (const auto& s : data_) {
        const ImageDims d{cfg_.image_size, cfg_.image_size};
        if (dims_of(s.image) != d || dims_of(s.y_int) != d || dims_of(s.y_uni) != d || dims_of(s.u) != d) {
            throw ValidationError("training sample '" + s.id + "' is not " + std::to_string(cfg_.image_size) + "x" +
                                  std::to_string(cfg_.image_size));
        }
    }
    for (const auto& v : val_) {
        if (v.image.height() != cfg_.image_size || v.image.width() != cfg_.image_size ||
            dims_of(v.gt) != dims_of(v.image)) {
            throw ValidationError("validation image '" + v.image.id + "' has wrong dimensions");
        }
    }
    const ModelConfig mc = cfg_.model_config();
    switch (mode_) {
        case TrainMode::dual:
            models_.push_back(std::make_unique<SegModel>(mc, cfg_.seed));
            models_.push_back(std::make_unique<SegModel>(mc, cfg_.seed + 1));
            break;
        case TrainMode::single_int: models_.push_back(std::make_unique<SegModel>(mc, cfg_.seed)); break;
        case TrainMode::single_uni: models_.push_back(std::make_unique<SegModel>(mc, cfg_.seed + 1)); break;
    }
    for (auto& m : models_) optimizers_.push_back(std::make_unique<SgdMomentum>(*m, cfg_.momentum, cfg_.weight_decay));
    rng_.seed(mix64(cfg_.seed ^ 0xda7aULL));
    order_.resize(data_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    cursor_ = order_.size();
}

std::vector<std::size_t> Trainer::next_batch() {
    std::vector<std::size_t> batch;
    for (int k = 0; k < cfg_.batch_size; ++k) {
        if (cursor_ >= order_.size()) {
            std::shuffle(order_.begin(), order_.end(), rng_);
            cursor_ = 0;
        }
        batch.push_back(order_[cursor_++]);
    }
    return batch;
}

StepRecord Trainer::step() {
    const int b = cfg_.batch_size;
    const int s = cfg_.image_size;
    const std::size_t hw = static_cast<std::size_t>(s) * s;
    const auto idx = next_batch();

    Tensor<float> x(b, 1, s, s);
    std::vector<std::uint8_t> y_int(b * hw), y_uni(b * hw), unc(b * hw);
    for (int i = 0; i < b; ++i) {
        const TrainSample a = augment(data_[idx[i]], rng_, cfg_);
        std::copy(a.image.data().begin(), a.image.data().end(), x.plane(i, 0));
        std::copy(a.y_int.data().begin(), a.y_int.data().end(), y_int.begin() + i * hw);
        std::copy(a.y_uni.data().begin(), a.y_uni.data().end(), y_uni.begin() + i * hw);
        std::copy(a.u.data().begin(), a.u.data().end(), unc.begin() + i * hw);
    }

    StepRecord rec;
    rec.step = step_;
    rec.lr = poly_lr(step_, cfg_);
    std::vector<Tensor<double>> logits, grads;
    for (auto& m : models_) {
        logits.push_back(m->forward(x).cast<double>());
        grads.emplace_back(b, 2, s, s);
    }

    if (mode_ == TrainMode::dual) {
        const SupervisedTerms sup = supervised_loss(logits[0], logits[1], y_int, y_uni, &grads[0], &grads[1]);
        const double lambda = lambda_at(step_, cfg_);
        const bool coupled = lambda > 0.0;
        const double ct = cross_teaching_loss(logits[0], logits[1], unc, coupled ? &grads[0] : nullptr,
                                              coupled ? &grads[1] : nullptr, lambda);
        rec.loss = {sup.total(), ct, total_loss(sup.total(), ct, lambda), lambda};
    } else {
        const auto& target = mode_ == TrainMode::single_int ? y_int : y_uni;
        const double ce = ce_loss(logits[0], target, {}, &grads[0]);
        const double dice = dice_loss(logits[0], target, &grads[0]);
        rec.loss = {ce + dice, 0.0, ce + dice, 0.0};
    }

    if (!std::isfinite(rec.loss.l_total)) {
        std::string ids;
        for (auto i : idx) ids += (ids.empty() ? "" : ",") + data_[i].id;
        throw NumericalError("non-finite loss at step " + std::to_string(step_) + " (l_sup=" +
                             fmt_real(rec.loss.l_sup) + ", l_ct_u=" + fmt_real(rec.loss.l_ct_u) + "); batch: " + ids);
    }

    for (std::size_t k = 0; k < models_.size(); ++k) {
        models_[k]->backward(grads[k].cast<float>());
        optimizers_[k]->step(rec.lr);
    }
    ++step_;
    return rec;
}

double Trainer::validate() const {
    if (val_.empty()) return std::nan("");
    double sum = 0.0;
    for (const auto& v : val_) {
        const SegModel* f1 = models_[0].get();
        const SegModel* f2 = models_.size() > 1 ? models_[1].get() : nullptr;
        const BinaryMask pred = infer(f1, f2, v.image, f2 ? InferMode::ensemble : InferMode::f1);
        sum += dsc(pred, v.gt);
    }
    return sum / static_cast<double>(val_.size());
}

void Trainer::run(const std::function<void(const StepRecord&)>& on_step) {
    while (step_ < cfg_.max_iters) {
        StepRecord rec = step();
        const bool due = step_ % cfg_.eval_interval == 0 || step_ == cfg_.max_iters;
        if (due && !val_.empty()) {
            rec.val_dsc = validate();
            if (*rec.val_dsc > best_val_dsc_) {
                best_val_dsc_ = *rec.val_dsc;
                best_.clear();
                for (const auto& m : models_) best_.push_back(*m);
            }
        }
        if (on_step) on_step(rec);
    }
}

std::vector<SegModel> Trainer::best_models() const {
    if (!best_.empty()) return best_;
    std::vector<SegModel> out;
    for (const auto& m : models_) out.push_back(*m);
    return out;
}

std::string Trainer::rng_state() const {
    std::ostringstream s;
    s << rng_;
    return s.str();
}

namespace {
constexpr char kStateMagic[8] = {'W', 'P', 'S', 'T', 'A', 'T', 'E', '1'};
}

void Trainer::save_state(const std::filesystem::path& path) const {
    using namespace binio;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(kStateMagic, sizeof kStateMagic);
    put_string(out, cfg_.serialize());
    put<std::int32_t>(out, static_cast<std::int32_t>(mode_));
    put<std::int32_t>(out, step_);
    put<std::uint64_t>(out, cursor_);
    std::vector<std::uint64_t> order(order_.begin(), order_.end());
    put_vector(out, order);
    put_string(out, rng_state());
    put<double>(out, best_val_dsc_);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(best_.size()));
    for (const auto& m : best_)
        for (const auto& p : m.params()) put_vector(out, p.value);
    for (std::size_t k = 0; k < models_.size(); ++k) {
        for (const auto& p : models_[k]->params()) put_vector(out, p.value);
        for (const auto& v : optimizers_[k]->velocity()) put_vector(out, v);
    }
    if (!out) throw IoError("write failed: " + path.string());
}

void Trainer::load_state(const std::filesystem::path& path) {
    using namespace binio;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("missing train state " + path.string());
    const std::string where = path.string();
    char magic[sizeof kStateMagic];
    in.read(magic, sizeof magic);
    if (!in || !std::equal(magic, magic + sizeof magic, kStateMagic)) throw FormatError(where + " is not a train state");
    if (get_string(in, where) != cfg_.serialize()) throw ConfigError(where + ": saved config differs from this trainer");
    if (get<std::int32_t>(in, where) != static_cast<std::int32_t>(mode_)) throw ConfigError(where + ": mode differs");
    step_ = get<std::int32_t>(in, where);
    cursor_ = get<std::uint64_t>(in, where);
    const auto order = get_vector<std::uint64_t>(in, where);
    if (order.size() != order_.size()) throw FormatError(where + ": dataset size differs");
    order_.assign(order.begin(), order.end());
    std::istringstream rs(get_string(in, where));
    rs >> rng_;
    best_val_dsc_ = get<double>(in, where);
    const auto n_best = get<std::uint32_t>(in, where);
    best_.clear();
    auto read_params = [&](SegModel& m) {
        for (auto& p : m.params()) {
            auto v = get_vector<float>(in, where);
            if (v.size() != p.value.size()) throw FormatError(where + ": parameter size mismatch");
            p.value.assign(v.begin(), v.end());
        }
    };
    for (std::uint32_t k = 0; k < n_best; ++k) {
        best_.push_back(*models_.at(k));
        read_params(best_.back());
    }
    for (std::size_t k = 0; k < models_.size(); ++k) {
        read_params(*models_[k]);
        for (auto& v : optimizers_[k]->velocity()) {
            auto r = get_vector<float>(in, where);
            if (r.size() != v.size()) throw FormatError(where + ": optimizer state mismatch");
            v = std::move(r);
        }
    }
}

InferMode parse_infer_mode(const std::string& s) {
    if (s == "f1") return InferMode::f1;
    if (s == "f2") return InferMode::f2;
    if (s == "ensemble") return InferMode::ensemble;
    throw ConfigError("unknown inference mode '" + s + "' (f1|f2|ensemble)");
}

std::string to_string(InferMode m) {
    switch (m) {
        case InferMode::f1: return "f1";
        case InferMode::f2: return "f2";
        case InferMode::ensemble: return "ensemble";
    }
    return "?";
}

BinaryMask infer(const SegModel* f1, const SegModel* f2, const Image& image, InferMode mode) {
    auto need = [](const SegModel* m, const char* name) -> const SegModel& {
        if (!m) throw MissingArtifactError(std::string("inference needs checkpoint ") + name);
        return *m;
    };
    if (mode == InferMode::f1) return predict(need(f1, "f1"), image).hard;
    if (mode == InferMode::f2) return predict(need(f2, "f2"), image).hard;
    const Prediction a = predict(need(f1, "f1"), image);
    const Prediction b = predict(need(f2, "f2"), image);
    BinaryMask out(image.height(), image.width());
    for (std::size_t j = 0; j < out.size(); ++j) {
        out.data()[j] = 0.5 * (a.prob.data()[j] + b.prob.data()[j]) > 0.5 ? 1 : 0;
    }
    return out;
}

Grid<float> resize_bilinear(const Grid<float>& src, int height, int width) {
    if (src.height() == height && src.width() == width) return src;
    Grid<float> out(height, width);
    const double sy = static_cast<double>(src.height()) / height;
    const double sx = static_cast<double>(src.width()) / width;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height() - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, src.height() - 1);
        const double ty = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width() - 1.0);
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, src.width() - 1);
            const double tx = fx - x0;
            const double top = src(y0, x0) * (1 - tx) + src(y0, x1) * tx;
            const double bot = src(y1, x0) * (1 - tx) + src(y1, x1) * tx;
            out(y, x) = static_cast<float>(top * (1 - ty) + bot * ty);
        }
    }
    return out;
}

BinaryMask resize_nearest(const BinaryMask& src, int height, int width) {
    if (src.height() == height && src.width() == width) return src;
    BinaryMask out(height, width);
    for (int y = 0; y < height; ++y) {
        const int sy = std::min(static_cast<int>((y + 0.5) * src.height() / height), src.height() - 1);
        for (int x = 0; x < width; ++x) {
            const int sx = std::min(static_cast<int>((x + 0.5) * src.width() / width), src.width() - 1);
            out(y, x) = src(sy, sx);
        }
    }
    return out;
}

}  // namespace wpseg
