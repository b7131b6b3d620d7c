#include <survgen/cade.hpp>
#include <survgen/dataio.hpp>
#include <survgen/fusion.hpp>
#include <survgen/survmetrics.hpp>
#include <survgen/tensor.hpp>

#include <benchmark/benchmark.h>

#include <vector>

namespace {

using namespace survgen;

Tensor random_matrix(std::size_t r, std::size_t c, RngStream& rng, bool rg = false) {
    std::vector<double> v(r * c);
    for (double& x : v) x = rng.normal();
    return Tensor({r, c}, std::move(v), rg);
}

void bm_matmul_backward(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    RngStream rng(1);
    Tensor a = random_matrix(n, n, rng, true);
    Tensor b = random_matrix(n, n, rng, true);
    for (auto _ : state) {
        Tensor loss = sum(matmul(a, b));
        loss.backward();
        benchmark::DoNotOptimize(loss.item());
        a.zero_grad();
        b.zero_grad();
    }
}
BENCHMARK(bm_matmul_backward)->Arg(16)->Arg(64)->Arg(128);

void bm_concordance(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    RngStream rng(2);
    std::vector<double> risks(n);
    std::vector<SurvivalRecord> records(n);
    for (std::size_t i = 0; i < n; ++i) {
        risks[i] = rng.normal();
        records[i].time = rng.exponential(1.0);
        records[i].event = rng.bernoulli(0.7);
    }
    for (auto _ : state) benchmark::DoNotOptimize(concordance_index(risks, records));
}
BENCHMARK(bm_concordance)->Arg(200)->Arg(2000)->Arg(20000);

void bm_compose_statistics(benchmark::State& state) {
    const std::size_t d = static_cast<std::size_t>(state.range(0));
    RngStream rng(3);
    std::vector<double> mg(d), vg(d), mi(d), vi(d);
    for (std::size_t k = 0; k < d; ++k) {
        mg[k] = rng.normal();
        vg[k] = 0.5 + rng.uniform();
        mi[k] = rng.normal();
        vi[k] = 0.5 + rng.uniform();
    }
    const GaussianStats g = make_stats(mg, vg), i = make_stats(mi, vi);
    KernelSpec spec;
    spec.mode = KernelMode::Expectation;
    for (auto _ : state) {
        RngStream local(4);
        benchmark::DoNotOptimize(compose_statistics(g, i, spec, local));
    }
}
BENCHMARK(bm_compose_statistics)->Arg(16)->Arg(256);

void bm_forward_clean(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    DomainSpec spec;
    spec.domain_id = "bench";
    spec.n_samples = n;
    spec.patches_per_sample = 16;
    spec.pathways = 8;
    spec.signal_dim = 24;
    spec.seed = 5;
    const ModalityBatch batch = generate_domain(spec);
    const Model model = make_model(24, 24, 24, 16, 4, 5);
    const KernelSpec kernel;
    for (auto _ : state) {
        ForwardResult fr =
            forward(batch, model.backbone, model.dirac, ForwardMode::Clean, 0.0, kernel, 0);
        benchmark::DoNotOptimize(fr.hazards.value().data());
    }
}
BENCHMARK(bm_forward_clean)->Arg(16)->Arg(64);

} // namespace

BENCHMARK_MAIN();
