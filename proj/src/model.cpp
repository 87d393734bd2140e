#include "wpseg/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "wpseg/binio.hpp"
#include "wpseg/kernels.hpp"

namespace wpseg {

namespace {

constexpr float kNormEps = 1e-5f;

int stage_channels(const ModelConfig& cfg, int level) { return cfg.base_channels << level; }

}  // namespace

SegModel::SegModel(const SegModel& o)
    : cfg_(o.cfg_),
      params_(o.params_),
      enc_(o.enc_),
      dec_(o.dec_),
      bottleneck_(o.bottleneck_),
      head_w_(o.head_w_),
      head_b_(o.head_b_) {}

SegModel& SegModel::operator=(const SegModel& o) {
    if (this != &o) {
        cfg_ = o.cfg_;
        params_ = o.params_;
        enc_ = o.enc_;
        dec_ = o.dec_;
        bottleneck_ = o.bottleneck_;
        head_w_ = o.head_w_;
        head_b_ = o.head_b_;
        ws_ = Workspace{};
        has_forward_ = false;
    }
    return *this;
}

SegModel::SegModel(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.depth < 1 || cfg.depth > 6) throw ConfigError("model depth must be in 1..6");
    if (cfg.base_channels < 1) throw ConfigError("base_channels must be >= 1");
    if (cfg.in_channels < 1 || cfg.out_channels < 2) throw ConfigError("bad model channel counts");

    int in_ch = cfg.in_channels;
    for (int l = 0; l < cfg.depth; ++l) {
        enc_.push_back(make_block("enc" + std::to_string(l), in_ch, stage_channels(cfg, l)));
        in_ch = stage_channels(cfg, l);
    }
    bottleneck_ = make_block("bottleneck", in_ch, stage_channels(cfg, cfg.depth));
    dec_.resize(cfg.depth);
    for (int l = cfg.depth - 1; l >= 0; --l) {
        dec_[l] = make_block("dec" + std::to_string(l), stage_channels(cfg, l + 1) + stage_channels(cfg, l),
                             stage_channels(cfg, l));
    }
    head_w_ = add_param("head.weight", static_cast<std::size_t>(cfg.out_channels) * cfg.base_channels);
    head_b_ = add_param("head.bias", cfg.out_channels);

    std::mt19937_64 rng(seed);
    auto he_init = [&](Param& p, int fan_in) {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        for (auto& v : p.value) v = static_cast<float>(dist(rng));
    };
    auto init_unit = [&](const Unit& u) {
        he_init(params_[u.weight], u.in_ch * 9);
        std::fill(params_[u.gamma].value.begin(), params_[u.gamma].value.end(), 1.0f);
    };
    for (const auto& b : enc_) {
        init_unit(b.a);
        init_unit(b.b);
    }
    init_unit(bottleneck_.a);
    init_unit(bottleneck_.b);
    for (int l = cfg.depth - 1; l >= 0; --l) {
        init_unit(dec_[l].a);
        init_unit(dec_[l].b);
    }
    he_init(params_[head_w_], cfg.base_channels);
}

int SegModel::add_param(std::string name, std::size_t size) {
    params_.push_back(Param{std::move(name), AlignedVector<float>(size, 0.0f), AlignedVector<float>(size, 0.0f)});
    return static_cast<int>(params_.size()) - 1;
}

SegModel::Unit SegModel::make_unit(const std::string& prefix, int in_ch, int out_ch) {
    Unit u{};
    u.in_ch = in_ch;
    u.out_ch = out_ch;
    u.weight = add_param(prefix + ".conv.weight", static_cast<std::size_t>(out_ch) * in_ch * 9);
    u.gamma = add_param(prefix + ".norm.gamma", out_ch);
    u.beta = add_param(prefix + ".norm.beta", out_ch);
    return u;
}

SegModel::Block SegModel::make_block(const std::string& prefix, int in_ch, int out_ch) {
    Block b;
    b.a = make_unit(prefix + ".0", in_ch, out_ch);
    b.b = make_unit(prefix + ".1", out_ch, out_ch);
    return b;
}

std::size_t SegModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

void SegModel::set_all(float v) {
    for (auto& p : params_) std::fill(p.value.begin(), p.value.end(), v);
}

void SegModel::zero_grad() {
    for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0f);
}

void SegModel::check_input(const Tensor<float>& input) const {
    if (input.c() != cfg_.in_channels) {
        throw ShapeError("model expects " + std::to_string(cfg_.in_channels) + " input channel(s), got " +
                         std::to_string(input.c()));
    }
    const int d = cfg_.divisor();
    if (input.n() < 1 || input.h() < d || input.w() < d || input.h() % d || input.w() % d) {
        throw ShapeError("input " + std::to_string(input.h()) + "x" + std::to_string(input.w()) +
                         " must have height and width divisible by " + std::to_string(d));
    }
}

void SegModel::unit_forward(const Unit& u, const Tensor<float>& in, UnitCache& c) const {
    kernels::conv3x3_forward<float>(in, params_[u.weight].value, u.out_ch, c.conv);
    kernels::instance_norm_forward<float>(c.conv, params_[u.gamma].value, params_[u.beta].value, kNormEps, true,
                                          c.out, c.mean, c.inv_std);
}

void SegModel::block_forward(const Block& b, const Tensor<float>& in, BlockCache& c) const {
    unit_forward(b.a, in, c.a);
    unit_forward(b.b, c.a.out, c.b);
}

void SegModel::run(const Tensor<float>& input, Workspace& ws) const {
    check_input(input);
    const int depth = cfg_.depth;
    ws.enc.resize(depth);
    ws.dec.resize(depth);
    ws.pooled.resize(depth);
    ws.cat.resize(depth);
    ws.argmax.resize(depth);

    const Tensor<float>* x = &input;
    for (int l = 0; l < depth; ++l) {
        block_forward(enc_[l], *x, ws.enc[l]);
        kernels::maxpool2_forward<float>(ws.enc[l].b.out, ws.pooled[l], ws.argmax[l]);
        x = &ws.pooled[l];
    }
    block_forward(bottleneck_, *x, ws.bottleneck);
    x = &ws.bottleneck.b.out;
    for (int l = depth - 1; l >= 0; --l) {
        const Tensor<float>& skip = ws.enc[l].b.out;
        Tensor<float>& cat = ws.cat[l];
        const int up_ch = x->c();
        if (cat.n() != skip.n() || cat.c() != up_ch + skip.c() || cat.h() != skip.h() || cat.w() != skip.w()) {
            cat.resize(skip.n(), up_ch + skip.c(), skip.h(), skip.w());
        }
        kernels::upsample2_forward<float>(*x, cat, 0);
        kernels::copy_channels<float>(skip, cat, up_ch);
        block_forward(dec_[l], cat, ws.dec[l]);
        x = &ws.dec[l].b.out;
    }
    kernels::conv1x1_forward<float>(*x, params_[head_w_].value, params_[head_b_].value, cfg_.out_channels, ws.logits);
}

const Tensor<float>& SegModel::forward(const Tensor<float>& input) {
    ws_.input = input;
    run(ws_.input, ws_);
    has_forward_ = true;
    return ws_.logits;
}

Tensor<float> SegModel::infer(const Tensor<float>& input) const {
    Workspace ws;
    run(input, ws);
    return std::move(ws.logits);
}

void SegModel::unit_backward(const Unit& u, const Tensor<float>& in, const UnitCache& c, const Tensor<float>& grad_out,
                             Tensor<float>* grad_in) {
    Tensor<float> grad_conv;
    kernels::instance_norm_backward<float>(c.conv, c.out, params_[u.gamma].value, c.mean, c.inv_std, true, grad_out,
                                           params_[u.gamma].grad, params_[u.beta].grad, grad_conv);
    kernels::conv3x3_backward<float>(in, params_[u.weight].value, grad_conv, params_[u.weight].grad, grad_in);
}

void SegModel::block_backward(const Block& b, const Tensor<float>& in, const BlockCache& c,
                              const Tensor<float>& grad_out, Tensor<float>* grad_in) {
    Tensor<float> grad_mid;
    unit_backward(b.b, c.a.out, c.b, grad_out, &grad_mid);
    unit_backward(b.a, in, c.a, grad_mid, grad_in);
}

void SegModel::backward(const Tensor<float>& grad_logits) {
    if (!has_forward_) throw ValidationError("backward() called before forward()");
    if (!grad_logits.same_shape(ws_.logits)) throw ShapeError("backward: gradient shape does not match logits");
    const int depth = cfg_.depth;
    Workspace& ws = ws_;

    Tensor<float> g;
    kernels::conv1x1_backward<float>(ws.dec[0].b.out, params_[head_w_].value, grad_logits, params_[head_w_].grad,
                                     params_[head_b_].grad, &g);

    std::vector<Tensor<float>> grad_skip(depth);
    for (int l = 0; l < depth; ++l) {
        Tensor<float> grad_cat;
        block_backward(dec_[l], ws.cat[l], ws.dec[l], g, &grad_cat);
        const Tensor<float>& below = l + 1 < depth ? ws.dec[l + 1].b.out : ws.bottleneck.b.out;
        const int up_ch = below.c();
        Tensor<float>& gs = grad_skip[l];
        gs.resize(ws.enc[l].b.out.n(), ws.enc[l].b.out.c(), ws.enc[l].b.out.h(), ws.enc[l].b.out.w());
        kernels::add_channels<float>(grad_cat, up_ch, gs);
        g.resize(below.n(), below.c(), below.h(), below.w());
        kernels::upsample2_backward<float>(grad_cat, 0, g);
    }

    Tensor<float> grad_pooled;
    block_backward(bottleneck_, ws.pooled[depth - 1], ws.bottleneck, g, &grad_pooled);
    for (int l = depth - 1; l >= 0; --l) {
        Tensor<float> grad_enc;
        kernels::maxpool2_backward<float>(grad_pooled, ws.argmax[l], grad_enc);
        kernels::add_channels<float>(grad_skip[l], 0, grad_enc);
        const Tensor<float>& in = l == 0 ? ws.input : ws.pooled[l - 1];
        Tensor<float> grad_in;
        block_backward(enc_[l], in, ws.enc[l], grad_enc, l == 0 ? nullptr : &grad_in);
        grad_pooled = std::move(grad_in);
    }
}

Grid<double> foreground_probability(const Tensor<float>& logits, int index) {
    Grid<double> prob(logits.h(), logits.w());
    const float* bg = logits.plane(index, 0);
    const float* fg = logits.plane(index, 1);
    auto out = prob.data();
    for (std::size_t j = 0; j < out.size(); ++j) {
        const double d = static_cast<double>(fg[j]) - static_cast<double>(bg[j]);
        out[j] = 1.0 / (1.0 + std::exp(-d));
    }
    return prob;
}

Prediction predict(const SegModel& model, const Image& image) {
    Tensor<float> x(1, 1, image.height(), image.width());
    std::copy(image.pixels.data().begin(), image.pixels.data().end(), x.data());
    Tensor<float> logits = model.infer(x);
    Prediction p{foreground_probability(logits, 0), BinaryMask(image.height(), image.width())};
    const float* bg = logits.plane(0, 0);
    const float* fg = logits.plane(0, 1);
    auto hard = p.hard.data();
    for (std::size_t j = 0; j < hard.size(); ++j) hard[j] = fg[j] > bg[j] ? 1 : 0;
    return p;
}

namespace {

constexpr char kMagic[6] = {'W', 'P', 'S', 'E', 'G', '1'};
constexpr std::uint32_t kFormatVersion = 1;

using binio::get;
using binio::get_string;
using binio::put;
using binio::put_string;

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const SegModel& model, const CheckpointMeta& meta) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kFormatVersion);
    const auto& c = model.config();
    put<std::int32_t>(out, c.depth);
    put<std::int32_t>(out, c.base_channels);
    put<std::int32_t>(out, c.in_channels);
    put<std::int32_t>(out, c.out_channels);
    put<std::int64_t>(out, meta.step);
    put<std::uint64_t>(out, meta.config_hash);
    put_string(out, meta.rng_state);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(model.params().size()));
    for (const auto& p : model.params()) {
        put_string(out, p.name);
        put<std::uint64_t>(out, p.value.size());
        out.write(reinterpret_cast<const char*>(p.value.data()), static_cast<std::streamsize>(p.value.size() * sizeof(float)));
    }
    if (!out) throw IoError("write failed: " + path.string());
}

SegModel load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("missing checkpoint " + path.string() + " (run train)");
    const std::string where = path.string();
    char magic[sizeof kMagic];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw FormatError(where + " is not a WPSEG1 checkpoint");
    if (get<std::uint32_t>(in, where) != kFormatVersion) throw FormatError(where + ": unsupported checkpoint version");
    ModelConfig cfg;
    cfg.depth = get<std::int32_t>(in, where);
    cfg.base_channels = get<std::int32_t>(in, where);
    cfg.in_channels = get<std::int32_t>(in, where);
    cfg.out_channels = get<std::int32_t>(in, where);
    CheckpointMeta m;
    m.step = get<std::int64_t>(in, where);
    m.config_hash = get<std::uint64_t>(in, where);
    m.rng_state = get_string(in, where);
    SegModel model(cfg, 0);
    const auto count = get<std::uint32_t>(in, where);
    if (count != model.params().size()) throw FormatError(where + ": parameter count mismatch");
    for (auto& p : model.params()) {
        if (get_string(in, where) != p.name) throw FormatError(where + ": parameter order mismatch at " + p.name);
        if (get<std::uint64_t>(in, where) != p.value.size()) throw FormatError(where + ": size mismatch for " + p.name);
        in.read(reinterpret_cast<char*>(p.value.data()), static_cast<std::streamsize>(p.value.size() * sizeof(float)));
        if (!in) throw FormatError("truncated checkpoint " + where);
    }
    if (meta) *meta = std::move(m);
    return model;
}

}  // namespace wpseg
