#include <benchmark/benchmark.h>

#include <random>

#include "wpseg/kernels.hpp"
#include "wpseg/losses.hpp"
#include "wpseg/trainer.hpp"

using namespace wpseg;

namespace {

Tensor<float> random_tensor(int n, int c, int h, int w, std::uint64_t seed) {
    Tensor<float> t(n, c, h, w);
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> d;
    for (auto& v : t.span()) v = d(rng);
    return t;
}

std::vector<float> random_vector(std::size_t n, std::uint64_t seed) {
    std::vector<float> v(n);
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> d(0.0f, 0.1f);
    for (auto& x : v) x = d(rng);
    return v;
}

// args: batch, channels in, channels out, size
void conv_args(benchmark::internal::Benchmark* b) {
    b->Args({4, 8, 8, 128})->Args({4, 16, 16, 64})->Args({4, 32, 32, 32});
}

void BM_conv3x3_forward_reference(benchmark::State& st) {
    const int n = st.range(0), ci = st.range(1), co = st.range(2), s = st.range(3);
    auto in = random_tensor(n, ci, s, s, 1);
    auto w = random_vector(static_cast<std::size_t>(co) * ci * 9, 2);
    Tensor<float> out;
    for (auto _ : st) {
        kernels::reference::conv3x3_forward<float>(in, w, co, out);
        benchmark::DoNotOptimize(out.data());
    }
}

void BM_conv3x3_forward_parallel(benchmark::State& st) {
    const int n = st.range(0), ci = st.range(1), co = st.range(2), s = st.range(3);
    auto in = random_tensor(n, ci, s, s, 1);
    auto w = random_vector(static_cast<std::size_t>(co) * ci * 9, 2);
    Tensor<float> out;
    for (auto _ : st) {
        kernels::conv3x3_forward<float>(in, w, co, out);
        benchmark::DoNotOptimize(out.data());
    }
}

void BM_conv3x3_backward_reference(benchmark::State& st) {
    const int n = st.range(0), ci = st.range(1), co = st.range(2), s = st.range(3);
    auto in = random_tensor(n, ci, s, s, 1);
    auto go = random_tensor(n, co, s, s, 3);
    auto w = random_vector(static_cast<std::size_t>(co) * ci * 9, 2);
    std::vector<float> gw(w.size());
    Tensor<float> gi;
    for (auto _ : st) {
        kernels::reference::conv3x3_backward<float>(in, w, go, gw, &gi);
        benchmark::DoNotOptimize(gi.data());
    }
}

void BM_conv3x3_backward_parallel(benchmark::State& st) {
    const int n = st.range(0), ci = st.range(1), co = st.range(2), s = st.range(3);
    auto in = random_tensor(n, ci, s, s, 1);
    auto go = random_tensor(n, co, s, s, 3);
    auto w = random_vector(static_cast<std::size_t>(co) * ci * 9, 2);
    std::vector<float> gw(w.size());
    Tensor<float> gi;
    for (auto _ : st) {
        kernels::conv3x3_backward<float>(in, w, go, gw, &gi);
        benchmark::DoNotOptimize(gi.data());
    }
}

void BM_instance_norm_reference(benchmark::State& st) {
    auto in = random_tensor(4, 16, 128, 128, 4);
    std::vector<float> g(16, 1.0f), b(16, 0.0f);
    Tensor<float> out;
    for (auto _ : st) {
        kernels::reference::instance_norm_forward<float>(in, g, b, 1e-5f, true, out);
        benchmark::DoNotOptimize(out.data());
    }
}

void BM_instance_norm_parallel(benchmark::State& st) {
    auto in = random_tensor(4, 16, 128, 128, 4);
    std::vector<float> g(16, 1.0f), b(16, 0.0f), mean, inv;
    Tensor<float> out;
    for (auto _ : st) {
        kernels::instance_norm_forward<float>(in, g, b, 1e-5f, true, out, mean, inv);
        benchmark::DoNotOptimize(out.data());
    }
}

// args: size, batch, depth, base channels
void BM_train_step_dual(benchmark::State& st) {
    TrainConfig cfg;
    cfg.image_size = st.range(0);
    cfg.batch_size = st.range(1);
    cfg.depth = st.range(2);
    cfg.base_channels = st.range(3);
    std::vector<TrainSample> data;
    for (int i = 0; i < 8; ++i) {
        TrainSample s{"s" + std::to_string(i), Grid<float>(cfg.image_size, cfg.image_size, 0.5f),
                      BinaryMask(cfg.image_size, cfg.image_size), BinaryMask(cfg.image_size, cfg.image_size),
                      BinaryMask(cfg.image_size, cfg.image_size)};
        for (int y = 10; y < 30; ++y)
            for (int x = 10; x < 30; ++x) {
                s.image(y, x) = 0.9f;
                s.y_uni(y, x) = 1;
                s.u(y, x) = 1;
            }
        data.push_back(std::move(s));
    }
    Trainer trainer(cfg, std::move(data), {});
    for (auto _ : st) benchmark::DoNotOptimize(trainer.step());
}

}  // namespace

BENCHMARK(BM_conv3x3_forward_reference)->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv3x3_forward_parallel)->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv3x3_backward_reference)->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv3x3_backward_parallel)->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_instance_norm_reference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_instance_norm_parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_train_step_dual)
    ->Args({128, 4, 3, 8})
    ->Args({128, 8, 3, 8})
    ->Args({128, 8, 3, 16})
    ->Args({64, 8, 3, 16})
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
