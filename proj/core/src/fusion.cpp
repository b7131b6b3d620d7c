#include "survgen/fusion.hpp"

#include "survgen/errors.hpp"

#include <cmath>

namespace survgen {

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

Tensor init_weight(std::size_t rows, std::size_t cols, RngStream& rng) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
    std::vector<double> w(rows * cols);
    for (double& v : w) v = scale * rng.normal();
    return Tensor(Shape{rows, cols}, std::move(w), true);
}

Mlp make_mlp(std::size_t in, std::size_t hidden, RngStream& rng) {
    Mlp m;
    m.w1 = init_weight(in, hidden, rng);
    m.b1 = Tensor::zeros(1, hidden, true);
    m.w2 = init_weight(hidden, hidden, rng);
    m.b2 = Tensor::zeros(1, hidden, true);
    return m;
}

Tensor apply_mlp(const Tensor& tokens, const Mlp& m) {
    Tensor h = relu(add_rowvec(matmul(tokens, m.w1), m.b1));
    return add_rowvec(matmul(h, m.w2), m.b2);
}

} // namespace

void validate_batch(const ModalityBatch& batch) {
    const std::size_t n = batch.labels.size();
    if (n == 0) fail(ErrorCategory::Batch, "batch: empty");
    if (batch.patch_tokens.size() != n || batch.pathway_tokens.size() != n ||
        batch.sample_ids.size() != n)
        fail(ErrorCategory::Batch, "batch: field lengths disagree (n=" + std::to_string(n) + ")");
    for (std::size_t i = 0; i < n; ++i) {
        if (batch.patch_tokens[i].rows() < 1 || batch.pathway_tokens[i].rows() < 1)
            fail(ErrorCategory::Batch, "batch: sample " + batch.sample_ids[i] +
                                           " has an empty token set");
        for (double v : batch.patch_tokens[i].value())
            if (!std::isfinite(v))
                fail(ErrorCategory::Data, "batch: non-finite patch feature in sample " +
                                              batch.sample_ids[i]);
        for (double v : batch.pathway_tokens[i].value())
            if (!std::isfinite(v))
                fail(ErrorCategory::Data, "batch: non-finite pathway feature in sample " +
                                              batch.sample_ids[i]);
    }
}

BackboneParams make_backbone(std::size_t f_image, std::size_t f_gene, std::size_t hidden,
                             std::size_t d, std::size_t bins, RngStream& rng) {
    if (f_image == 0 || f_gene == 0 || hidden == 0 || d == 0)
        fail(ErrorCategory::Param, "backbone: all widths must be positive");
    if (bins < 2) fail(ErrorCategory::Param, "backbone: need at least 2 hazard bins");
    BackboneParams p;
    p.f_image = f_image;
    p.f_gene = f_gene;
    p.hidden = hidden;
    p.d = d;
    p.bins = bins;
    p.enc_image = make_mlp(f_image, hidden, rng);
    p.enc_gene = make_mlp(f_gene, hidden, rng);
    p.proj_image = init_weight(hidden, d, rng);
    p.proj_gene = init_weight(hidden, d, rng);
    p.wq = init_weight(d, d, rng);
    p.wk = init_weight(d, d, rng);
    p.wv = init_weight(d, d, rng);
    p.wo = init_weight(d, d, rng);
    p.head_w = init_weight(d, bins, rng);
    p.head_b = Tensor::zeros(1, bins, true);
    return p;
}

Model make_model(std::size_t f_image, std::size_t f_gene, std::size_t hidden, std::size_t d,
                 std::size_t bins, std::uint64_t seed, bool learnable_anchor) {
    Model m;
    RngStream init = make_stream(seed, {kStreamInit});
    m.backbone = make_backbone(f_image, f_gene, hidden, d, bins, init);
    RngStream anchor = make_stream(seed, {kStreamAnchor});
    m.dirac = make_dirac_response(d, anchor, learnable_anchor);
    return m;
}

std::vector<std::pair<std::string, Tensor>> named_parameters(const Model& m) {
    const BackboneParams& b = m.backbone;
    return {
        {"enc_image.w1", b.enc_image.w1}, {"enc_image.b1", b.enc_image.b1},
        {"enc_image.w2", b.enc_image.w2}, {"enc_image.b2", b.enc_image.b2},
        {"enc_gene.w1", b.enc_gene.w1},   {"enc_gene.b1", b.enc_gene.b1},
        {"enc_gene.w2", b.enc_gene.w2},   {"enc_gene.b2", b.enc_gene.b2},
        {"proj_image", b.proj_image},     {"proj_gene", b.proj_gene},
        {"attn.wq", b.wq},                {"attn.wk", b.wk},
        {"attn.wv", b.wv},                {"attn.wo", b.wo},
        {"head.w", b.head_w},             {"head.b", b.head_b},
        {"dirac.phi", m.dirac.phi_weights},
        {"dirac.anchor", m.dirac.anchor},
    };
}

std::vector<Tensor> trainable_parameters(const Model& m) {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters(m))
        if (t.requires_grad()) out.push_back(t);
    return out;
}

EncodedSample encode_project(const Tensor& patches, const Tensor& pathways,
                             const BackboneParams& params) {
    if (patches.cols() != params.f_image)
        fail(ErrorCategory::Shape, "encode_project: patch width " + std::to_string(patches.cols()) +
                                       " vs model " + std::to_string(params.f_image));
    if (pathways.cols() != params.f_gene)
        fail(ErrorCategory::Shape, "encode_project: pathway width " +
                                       std::to_string(pathways.cols()) + " vs model " +
                                       std::to_string(params.f_gene));
    EncodedSample out;
    out.image_tokens = matmul(apply_mlp(patches, params.enc_image), params.proj_image);
    out.gene_tokens = matmul(apply_mlp(pathways, params.enc_gene), params.proj_gene);
    out.pooled_image = mean_axis0(out.image_tokens);
    out.pooled_gene = mean_axis0(out.gene_tokens);
    return out;
}

Tensor cross_attention(const Tensor& gene_tokens, const Tensor& patch_tokens,
                       const BackboneParams& params) {
    if (gene_tokens.cols() != params.d || patch_tokens.cols() != params.d)
        fail(ErrorCategory::Shape, "cross_attention: token width must be d=" +
                                       std::to_string(params.d));
    Tensor q = matmul(gene_tokens, params.wq);
    Tensor k = matmul(patch_tokens, params.wk);
    Tensor v = matmul(patch_tokens, params.wv);
    Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(params.d)));
    Tensor weights = softmax_rows(scores);
    Tensor context = matmul(weights, v);
    return add(gene_tokens, matmul(context, params.wo));
}

Tensor survival_head(const Tensor& fused_tokens, const BackboneParams& params) {
    Tensor pooled = mean_axis0(fused_tokens);
    return add_rowvec(matmul(pooled, params.head_w), params.head_b);
}

std::uint64_t sample_noise_key(std::uint64_t noise_key, const std::string& sample_id) {
    return mix64(noise_key ^ mix64(fnv1a(sample_id)));
}

ForwardResult forward(const ModalityBatch& batch, const BackboneParams& params,
                      const DiracResponse& dirac, ForwardMode mode, double alpha,
                      const KernelSpec& kernel, std::uint64_t noise_key, bool sdir_both) {
    validate_batch(batch);
    const std::size_t n = batch.n();

    std::vector<EncodedSample> enc(n);
    Tensor pooled_image, pooled_gene;
    for (std::size_t i = 0; i < n; ++i) {
        enc[i] = encode_project(batch.patch_tokens[i], batch.pathway_tokens[i], params);
        pooled_image = i == 0 ? enc[i].pooled_image : concat_rows(pooled_image, enc[i].pooled_image);
        pooled_gene = i == 0 ? enc[i].pooled_gene : concat_rows(pooled_gene, enc[i].pooled_gene);
    }

    ForwardResult res;
    res.clean_latents = concat_cols(pooled_image, pooled_gene);

    Tensor entangled; // cade mode: n x 2d recolored latents
    if (mode == ForwardMode::Cade) {
        if (n < 2) fail(ErrorCategory::Batch, "forward: cade mode needs a batch of at least 2");
        Tensor joint_stats = batch_stats_floored(res.clean_latents);
        Tensor z_tilde = standardize(res.clean_latents, joint_stats);
        Tensor g_stats = batch_stats_floored(pooled_gene);
        Tensor i_stats = batch_stats_floored(pooled_image);
        RngStream kernel_rng(mix64(noise_key ^ mix64(kStreamKernel)));
        res.kernel_t = draw_interpolant(kernel, kernel_rng);
        entangled = entangle(z_tilde, interpolate_stats(res.kernel_t, g_stats, i_stats));
    }

    Tensor logits;
    for (std::size_t i = 0; i < n; ++i) {
        Tensor image_side, gene_side;
        switch (mode) {
            case ForwardMode::Clean:
                image_side = enc[i].image_tokens;
                gene_side = enc[i].gene_tokens;
                break;
            case ForwardMode::Sdir: {
                RngStream mask_rng(sample_noise_key(noise_key, batch.sample_ids[i]));
                auto [z_hat, mask] = sparsify(enc[i].pooled_image, alpha, mask_rng);
                image_side = dirac_response(z_hat, dirac);
                if (sdir_both) {
                    RngStream gene_rng(
                        sample_noise_key(noise_key, batch.sample_ids[i] + ":gene"));
                    auto [g_hat, g_mask] = sparsify(enc[i].pooled_gene, alpha, gene_rng);
                    gene_side = dirac_response(g_hat, dirac);
                } else {
                    gene_side = enc[i].gene_tokens;
                }
                break;
            }
            case ForwardMode::Cade: {
                const std::size_t d = params.d;
                Tensor row = slice_rows(entangled, i, i + 1);
                image_side = slice_cols(row, 0, d);
                gene_side = slice_cols(row, d, 2 * d);
                break;
            }
        }
        Tensor fused = cross_attention(gene_side, image_side, params);
        Tensor sample_logits = survival_head(fused, params);
        logits = i == 0 ? sample_logits : concat_rows(logits, sample_logits);
    }

    res.logits = logits;
    res.hazards = sigmoid(logits);
    return res;
}

} // namespace survgen
