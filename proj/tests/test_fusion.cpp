#include <survgen/cade.hpp>
#include <survgen/errors.hpp>
#include <survgen/fusion.hpp>
#include <survgen/survmetrics.hpp>
#include <survgen/tensor.hpp>

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace survgen;

namespace {

Tensor random_tokens(std::size_t r, std::size_t c, RngStream& rng) {
    std::vector<double> v(r * c);
    for (double& x : v) x = rng.normal();
    return Tensor({r, c}, std::move(v));
}

// n=2 samples, 3/2 tokens, feature width 3, latent 4, 4 bins.
ModalityBatch tiny_batch(std::uint64_t seed) {
    RngStream rng(seed);
    ModalityBatch b;
    for (std::size_t i = 0; i < 2; ++i) {
        b.patch_tokens.push_back(random_tokens(3, 3, rng));
        b.pathway_tokens.push_back(random_tokens(2, 3, rng));
        SurvivalRecord r;
        r.time = 1.0 + static_cast<double>(i);
        r.event = true;
        r.bin = i;
        b.labels.push_back(r);
        b.sample_ids.push_back("t-" + std::to_string(i));
    }
    return b;
}

} // namespace

TEST_CASE("full objective passes the finite-difference check") {
    const ModalityBatch batch = tiny_batch(41);
    Model model = make_model(3, 3, 4, 4, 4, 9);
    KernelSpec kernel;
    kernel.mode = KernelMode::Stochastic;
    kernel.gamma = 0.4;
    const std::uint64_t noise_key = 77; // frozen: every replay draws identical masks and t

    auto loss = [&] {
        const ForwardResult clean =
            forward(batch, model.backbone, model.dirac, ForwardMode::Clean, 0.0, kernel, 0);
        Tensor total = discrete_nll_logits(clean.logits, batch.labels);
        const ForwardResult deg = forward(batch, model.backbone, model.dirac, ForwardMode::Sdir,
                                          0.5, kernel, noise_key);
        total = add(total, discrete_nll_logits(deg.logits, batch.labels));
        const Tensor latents = clean.clean_latents;
        const Tensor img = slice_cols(latents, 0, 4);
        const Tensor gene = slice_cols(latents, 4, 8);
        RngStream kernel_rng(mix64(noise_key ^ mix64(kStreamKernel)));
        const double t = draw_interpolant(kernel, kernel_rng);
        const Tensor p_ent =
            block_product(interpolate_stats(t, batch_stats_floored(gene), batch_stats_floored(img)));
        return add(total, gaussian_kl_graph(batch_stats_floored(latents), p_ent));
    };

    const GradientCheckResult r = check_gradients(loss, trainable_parameters(model), 1e-4);
    CHECK(r.checked > 150);
    CHECK_MESSAGE(r.passed, "max rel err ", r.max_rel_error);
}

TEST_CASE("clean forward is deterministic and ignores the noise key") {
    const ModalityBatch batch = tiny_batch(42);
    const Model model = make_model(3, 3, 4, 4, 4, 10);
    const KernelSpec kernel;
    const ForwardResult a =
        forward(batch, model.backbone, model.dirac, ForwardMode::Clean, 0.0, kernel, 1);
    const ForwardResult b =
        forward(batch, model.backbone, model.dirac, ForwardMode::Clean, 0.0, kernel, 999);
    CHECK(a.logits.value() == b.logits.value());
    CHECK(a.clean_latents.shape() == Shape{2, 8});
    for (double h : a.hazards.value()) {
        CHECK(h > 0.0);
        CHECK(h < 1.0);
    }
}

TEST_CASE("permuting the batch permutes outputs identically") {
    RngStream rng(43);
    ModalityBatch batch;
    for (std::size_t i = 0; i < 5; ++i) {
        batch.patch_tokens.push_back(random_tokens(3 + i, 3, rng));
        batch.pathway_tokens.push_back(random_tokens(2, 3, rng));
        SurvivalRecord r;
        r.time = 1.0 + static_cast<double>(i);
        r.event = (i % 2) == 0;
        batch.labels.push_back(r);
        batch.sample_ids.push_back("perm-" + std::to_string(i));
    }
    ModalityBatch shuffled;
    const std::size_t order[] = {3, 0, 4, 1, 2};
    for (std::size_t i : order) {
        shuffled.patch_tokens.push_back(batch.patch_tokens[i]);
        shuffled.pathway_tokens.push_back(batch.pathway_tokens[i]);
        shuffled.labels.push_back(batch.labels[i]);
        shuffled.sample_ids.push_back(batch.sample_ids[i]);
    }
    const Model model = make_model(3, 3, 4, 4, 4, 11);
    const KernelSpec kernel;
    const std::uint64_t key = 123;
    // Masks key off sample ids, so each sample keeps its exact output row.
    const ForwardResult a =
        forward(batch, model.backbone, model.dirac, ForwardMode::Sdir, 0.5, kernel, key);
    const ForwardResult b =
        forward(shuffled, model.backbone, model.dirac, ForwardMode::Sdir, 0.5, kernel, key);
    for (std::size_t k = 0; k < 5; ++k)
        for (std::size_t c = 0; c < 4; ++c)
            CHECK(a.logits.at(order[k], c) == doctest::Approx(b.logits.at(k, c)).epsilon(1e-15));
}

TEST_CASE("single-patch attention reduces to that patch") {
    RngStream rng(44);
    const Tensor gene = random_tokens(2, 4, rng);
    const Tensor patch = random_tokens(1, 4, rng);
    const Model model = make_model(4, 4, 4, 4, 4, 12);
    // With one key, softmax weights are exactly 1; the context is the value
    // row regardless of scores.
    const Tensor fused = cross_attention(gene, patch, model.backbone);
    const Tensor ctx = matmul(matmul(patch, model.backbone.wv), model.backbone.wo);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 4; ++c)
            CHECK(fused.at(r, c) ==
                  doctest::Approx(gene.at(r, c) + ctx.at(0, c)).epsilon(1e-12));
}

TEST_CASE("sdir mode changes only the sparsified modality") {
    const ModalityBatch batch = tiny_batch(45);
    const Model model = make_model(3, 3, 4, 4, 4, 13);
    const KernelSpec kernel;
    const ForwardResult clean =
        forward(batch, model.backbone, model.dirac, ForwardMode::Clean, 0.0, kernel, 0);
    const ForwardResult deg =
        forward(batch, model.backbone, model.dirac, ForwardMode::Sdir, 0.9, kernel, 7);
    // Same clean latents are reported either way.
    CHECK(clean.clean_latents.value() == deg.clean_latents.value());
    CHECK(clean.logits.value() != deg.logits.value());
}

TEST_CASE("alpha zero keeps every coordinate so sdir equals the response map") {
    const ModalityBatch batch = tiny_batch(46);
    const Model model = make_model(3, 3, 4, 4, 4, 14);
    const KernelSpec kernel;
    const ForwardResult a =
        forward(batch, model.backbone, model.dirac, ForwardMode::Sdir, 0.0, kernel, 5);
    const ForwardResult b =
        forward(batch, model.backbone, model.dirac, ForwardMode::Sdir, 0.0, kernel, 6);
    // No dropped coordinates: different keys draw identical (all-keep) masks.
    for (std::size_t i = 0; i < a.logits.value().size(); ++i)
        CHECK(a.logits.value()[i] == doctest::Approx(b.logits.value()[i]).epsilon(1e-15));
}

TEST_CASE("cade mode entangles latents and records the draw") {
    const ModalityBatch batch = tiny_batch(47);
    const Model model = make_model(3, 3, 4, 4, 4, 15);
    KernelSpec kernel;
    kernel.mode = KernelMode::Stochastic;
    kernel.gamma = 0.3;
    const ForwardResult fr =
        forward(batch, model.backbone, model.dirac, ForwardMode::Cade, 0.0, kernel, 99);
    CHECK(fr.kernel_t >= 0.0);
    CHECK(fr.kernel_t <= 1.0);
    const ForwardResult clean =
        forward(batch, model.backbone, model.dirac, ForwardMode::Clean, 0.0, kernel, 0);
    CHECK(fr.logits.value() != clean.logits.value());
}

TEST_CASE("cade mode needs at least two samples") {
    ModalityBatch batch = tiny_batch(48);
    batch.patch_tokens.resize(1);
    batch.pathway_tokens.resize(1);
    batch.labels.resize(1);
    batch.sample_ids.resize(1);
    const Model model = make_model(3, 3, 4, 4, 4, 16);
    const KernelSpec kernel;
    try {
        forward(batch, model.backbone, model.dirac, ForwardMode::Cade, 0.0, kernel, 1);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.category() == ErrorCategory::Batch);
    }
}

TEST_CASE("named parameters enumerate a stable checkpoint layout") {
    const Model model = make_model(3, 3, 4, 4, 4, 17);
    const auto named = named_parameters(model);
    CHECK(named.size() == 18);
    CHECK(named.front().first == "enc_image.w1");
    CHECK(named.back().first == "dirac.anchor");
    // Names are unique.
    for (std::size_t i = 0; i < named.size(); ++i)
        for (std::size_t j = i + 1; j < named.size(); ++j)
            CHECK(named[i].first != named[j].first);
}

TEST_CASE("validate_batch rejects ragged and empty inputs") {
    ModalityBatch batch = tiny_batch(49);
    batch.sample_ids.pop_back();
    CHECK_THROWS_AS(validate_batch(batch), Error);
    ModalityBatch empty;
    CHECK_THROWS_AS(validate_batch(empty), Error);
}
