#include <benchmark/benchmark.h>

#include <random>

#include "p2c/bpe.hpp"
#include "p2c/index.hpp"
#include "p2c/losses.hpp"
#include "p2c/synth.hpp"

namespace {

using namespace p2c;

Model bench_model(std::size_t dim, std::size_t hidden) {
  const auto synth = synth_corpus({});
  std::vector<std::string> texts;
  for (const auto& s : synth.corpus.snippets()) texts.push_back(s.code);
  Model m;
  m.vocab = train_bpe(texts, 600);
  m.params = EncoderParams::initialize({m.vocab.size(), dim, hidden}, FacetMode::kPrefixed, 1, m.vocab.hash());
  return m;
}

RowMatrix unit_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  RowMatrix e(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < e.rows(); ++i) {
    for (Eigen::Index j = 0; j < e.cols(); ++j) e(i, j) = g(rng);
    e.row(i).normalize();
  }
  return e;
}

void BM_EncodeCode(benchmark::State& state) {
  const Model m = bench_model(static_cast<std::size_t>(state.range(0)), 2 * static_cast<std::size_t>(state.range(0)));
  const auto tokens = m.vocab.tokenize("int r = checked_vexlor(buf, len); if (r < 0) { return -1; } log_event(r);");
  for (auto _ : state) benchmark::DoNotOptimize(encode_code(tokens, m.params));
}
BENCHMARK(BM_EncodeCode)->Arg(64)->Arg(128);

void BM_BmtLoss(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const RowMatrix e = unit_rows(n, 64, 3);
  std::vector<Label> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i / 4;
  const auto mining = static_cast<Mining>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(bmt_loss(e, labels, {0.2, mining}));
  state.SetLabel(std::string(to_string(mining)));
}
BENCHMARK(BM_BmtLoss)->ArgsProduct({{32, 64}, {0, 1, 2, 3}});

void BM_SearchExact(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = "s" + std::to_string(i);
  const EmbeddingIndex index(ids, unit_rows(n, 64, 5), "bench");
  const Vector q = unit_rows(1, 64, 6).row(0).transpose();
  for (auto _ : state) benchmark::DoNotOptimize(index.search_exact(q, 10));
}
BENCHMARK(BM_SearchExact)->Arg(1000)->Arg(28000);

void BM_SearchIvf(benchmark::State& state) {
  const std::size_t n = 28000;
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = "s" + std::to_string(i);
  const EmbeddingIndex index(ids, unit_rows(n, 64, 5), "bench");
  const IvfIndex ivf(index);
  const Vector q = unit_rows(1, 64, 6).row(0).transpose();
  for (auto _ : state) benchmark::DoNotOptimize(ivf.search(q, 10));
}
BENCHMARK(BM_SearchIvf);

}  // namespace

BENCHMARK_MAIN();
