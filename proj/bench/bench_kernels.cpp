// Parallel kernels against their serial references, plus whole-model passes.
#include <benchmark/benchmark.h>

#include <vector>

#include "ltmlc/kernels.hpp"
#include "ltmlc/model.hpp"
#include "ltmlc/parallel.hpp"
#include "ltmlc/rng.hpp"
#include "ltmlc/synthgen.hpp"

namespace {

using namespace ltmlc;

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

kernels::LinearShape linear_shape(const benchmark::State& state) {
  return {static_cast<int>(state.range(0)), static_cast<int>(state.range(1)), static_cast<int>(state.range(1))};
}

template <auto Fn>
void BM_LinearForward(benchmark::State& state) {
  const auto s = linear_shape(state);
  const auto x = random_vector(static_cast<std::size_t>(s.rows) * s.in, 1);
  const auto w = random_vector(static_cast<std::size_t>(s.in) * s.out, 2);
  const auto b = random_vector(s.out, 3);
  std::vector<double> y(static_cast<std::size_t>(s.rows) * s.out);
  for (auto _ : state) {
    Fn(x, w, b, y, s);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * s.rows * s.in * s.out);
}

template <auto Fn>
void BM_LinearBackwardParams(benchmark::State& state) {
  const auto s = linear_shape(state);
  const auto x = random_vector(static_cast<std::size_t>(s.rows) * s.in, 1);
  const auto dy = random_vector(static_cast<std::size_t>(s.rows) * s.out, 2);
  std::vector<double> dw(static_cast<std::size_t>(s.in) * s.out), db(s.out);
  for (auto _ : state) {
    Fn(x, dy, dw, db, s);
    benchmark::DoNotOptimize(dw.data());
  }
  state.SetItemsProcessed(state.iterations() * s.rows * s.in * s.out);
}

kernels::ConvShape conv_shape(const benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  return {side, side, static_cast<int>(state.range(1)), static_cast<int>(state.range(2))};
}

template <auto Fn>
void BM_ConvForward(benchmark::State& state) {
  const auto s = conv_shape(state);
  const auto in = random_vector(static_cast<std::size_t>(s.height) * s.width * s.in_channels, 1);
  const auto w = random_vector(9u * s.in_channels * s.out_channels, 2);
  const auto b = random_vector(s.out_channels, 3);
  std::vector<double> out(static_cast<std::size_t>(s.out_height()) * s.out_width() * s.out_channels);
  for (auto _ : state) {
    Fn(in, w, b, out, s);
    benchmark::DoNotOptimize(out.data());
  }
}

template <auto Fn>
void BM_ConvBackwardInput(benchmark::State& state) {
  const auto s = conv_shape(state);
  const auto dout = random_vector(static_cast<std::size_t>(s.out_height()) * s.out_width() * s.out_channels, 1);
  const auto w = random_vector(9u * s.in_channels * s.out_channels, 2);
  std::vector<double> din(static_cast<std::size_t>(s.height) * s.width * s.in_channels);
  for (auto _ : state) {
    Fn(dout, w, din, s);
    benchmark::DoNotOptimize(din.data());
  }
}

BENCHMARK_TEMPLATE(BM_LinearForward, kernels::reference::linear_forward)->Args({64, 64})->Args({256, 64});
BENCHMARK_TEMPLATE(BM_LinearForward, kernels::linear_forward)->Args({64, 64})->Args({256, 64});
BENCHMARK_TEMPLATE(BM_LinearBackwardParams, kernels::reference::linear_backward_params)->Args({64, 64})->Args({256, 64});
BENCHMARK_TEMPLATE(BM_LinearBackwardParams, kernels::linear_backward_params)->Args({64, 64})->Args({256, 64});
BENCHMARK_TEMPLATE(BM_ConvForward, kernels::reference::conv3x3s2_forward)->Args({64, 3, 16})->Args({32, 16, 32});
BENCHMARK_TEMPLATE(BM_ConvForward, kernels::conv3x3s2_forward)->Args({64, 3, 16})->Args({32, 16, 32});
BENCHMARK_TEMPLATE(BM_ConvBackwardInput, kernels::reference::conv3x3s2_backward_input)->Args({32, 16, 32});
BENCHMARK_TEMPLATE(BM_ConvBackwardInput, kernels::conv3x3s2_backward_input)->Args({32, 16, 32});

model::QueryModel default_model() {
  const ClassVocabulary vocab(synthgen::class_names(26));
  model::ModelConfig cfg;
  return model::QueryModel(cfg, vocab, model::synthetic_embedding_table(vocab, cfg.d), 1);
}

void BM_ModelForward(benchmark::State& state) {
  parallel::set_num_threads(static_cast<int>(state.range(0)));
  const auto m = default_model();
  Rng rng(4);
  ImageTensor image(64, 64);
  for (auto& v : image.data()) v = static_cast<float>(rng.uniform());
  auto ws = m.make_workspace();
  for (auto _ : state) benchmark::DoNotOptimize(m.forward(image, *ws));
}

void BM_ModelForwardBackward(benchmark::State& state) {
  parallel::set_num_threads(static_cast<int>(state.range(0)));
  const auto m = default_model();
  Rng rng(5);
  ImageTensor image(64, 64);
  for (auto& v : image.data()) v = static_cast<float>(rng.uniform());
  auto ws = m.make_workspace();
  std::vector<double> grad(m.parameters().size());
  const std::vector<double> dlogits(m.vocabulary().size(), 0.01);
  for (auto _ : state) {
    m.forward(image, *ws);
    m.backward(dlogits, *ws, grad);
    benchmark::DoNotOptimize(grad.data());
  }
}

BENCHMARK(BM_ModelForward)->Arg(1)->Arg(4);
BENCHMARK(BM_ModelForwardBackward)->Arg(1)->Arg(4);

}  // namespace

BENCHMARK_MAIN();
