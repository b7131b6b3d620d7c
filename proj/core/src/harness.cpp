#include "survgen/harness.hpp"

#include "survgen/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace survgen {

namespace {

using nlohmann::json;

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

std::string full(double v) { return fmt("%.17g", v); }

std::string file_stamp(const std::string& config_hash) {
    return "# config=" + config_hash + " version=" + std::string(kToolVersion) + "\n";
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCategory::Io, "cannot open " + path + " for writing");
    out << content;
    out.flush();
    if (!out) fail(ErrorCategory::Io, "write failed for " + path);
}

LoadedDataset load_domain(const ExperimentConfig& cfg, const std::string& id) {
    auto it = cfg.datasets.find(id);
    if (it == cfg.datasets.end())
        fail(ErrorCategory::Param, "no dataset path configured for domain '" + id + "'");
    return load_dataset(it->second);
}

// Momentum-free gradient descent by default; first/second-moment updates
// behind the "adam" flag. Parameters never reached by backward keep empty
// gradients and are skipped, so unused modules leave no trace in the state.
class Optimizer {
public:
    Optimizer(std::string kind, double lr, std::vector<Tensor> params)
        : kind_(std::move(kind)), lr_(lr), params_(std::move(params)) {
        if (kind_ == "adam") {
            m_.resize(params_.size());
            v_.resize(params_.size());
            for (std::size_t i = 0; i < params_.size(); ++i) {
                m_[i].assign(params_[i].size(), 0.0);
                v_[i].assign(params_[i].size(), 0.0);
            }
        } else if (kind_ != "gd") {
            fail(ErrorCategory::Param, "unknown optimizer '" + kind_ + "'");
        }
    }

    void step() {
        ++t_;
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Tensor& p = params_[i];
            const std::vector<double>& g = p.grad();
            if (g.empty()) continue;
            std::vector<double>& value = p.mutable_value();
            if (kind_ == "gd") {
                for (std::size_t k = 0; k < value.size(); ++k) value[k] -= lr_ * g[k];
            } else {
                const double bc1 = 1.0 - std::pow(0.9, static_cast<double>(t_));
                const double bc2 = 1.0 - std::pow(0.999, static_cast<double>(t_));
                for (std::size_t k = 0; k < value.size(); ++k) {
                    m_[i][k] = 0.9 * m_[i][k] + 0.1 * g[k];
                    v_[i][k] = 0.999 * v_[i][k] + 0.001 * g[k] * g[k];
                    value[k] -= lr_ * (m_[i][k] / bc1) / (std::sqrt(v_[i][k] / bc2) + 1e-8);
                }
            }
            for (double x : value)
                if (!std::isfinite(x))
                    fail(ErrorCategory::Numeric, "parameter update produced a non-finite value");
            p.zero_grad();
        }
    }

private:
    std::string kind_;
    double lr_ = 0.0;
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    std::uint64_t t_ = 0;
};

ModalityBatch make_training_batch(const ModalityBatch& source,
                                  const std::vector<SurvivalRecord>& binned_labels,
                                  const std::vector<std::size_t>& idx, std::uint64_t seed,
                                  std::size_t epoch, std::size_t train_patches) {
    ModalityBatch b;
    b.patch_tokens.reserve(idx.size());
    b.pathway_tokens.reserve(idx.size());
    b.labels.reserve(idx.size());
    b.sample_ids.reserve(idx.size());
    for (std::size_t i : idx) {
        RngStream ps = make_stream(seed, {kStreamPatchSample, epoch, i});
        b.patch_tokens.push_back(sample_patches(source.patch_tokens[i], train_patches, ps));
        b.pathway_tokens.push_back(source.pathway_tokens[i]);
        b.labels.push_back(binned_labels[i]);
        b.sample_ids.push_back(source.sample_ids[i]);
    }
    return b;
}

struct StepTerms {
    double nll = 0.0, degraded = 0.0, kl = 0.0, total = 0.0;
};

StepTerms train_step(Model& model, Optimizer& opt, const ModalityBatch& batch,
                     const ExperimentConfig& cfg, const KernelSpec& kernel,
                     std::uint64_t noise_key, std::size_t epoch, std::size_t step) {
    ForwardResult clean = forward(batch, model.backbone, model.dirac, ForwardMode::Clean, 0.0,
                                  kernel, 0);
    Tensor loss = discrete_nll_logits(clean.logits, batch.labels);
    StepTerms terms;
    terms.nll = loss.item();

    if (cfg.sdir.enabled) {
        ForwardResult deg = forward(batch, model.backbone, model.dirac, ForwardMode::Sdir,
                                    cfg.sdir.alpha, kernel, noise_key, cfg.sdir.apply_to_both);
        Tensor t2 = discrete_nll_logits(deg.logits, batch.labels);
        terms.degraded = t2.item();
        loss = add(loss, t2);
    }

    if (cfg.cade.enabled) {
        const std::size_t d = cfg.latent_dim;
        Tensor latents = clean.clean_latents; // n x 2d
        Tensor pooled_image = slice_cols(latents, 0, d);
        Tensor pooled_gene = slice_cols(latents, d, 2 * d);
        Tensor i_stats = batch_stats_floored(pooled_image);
        Tensor g_stats = batch_stats_floored(pooled_gene);
        RngStream kernel_rng(mix64(noise_key ^ mix64(kStreamKernel)));
        const double t = draw_interpolant(kernel, kernel_rng);
        Tensor p_ent = block_product(interpolate_stats(t, g_stats, i_stats));
        Tensor p_model = batch_stats_floored(latents);
        Tensor t3 = gaussian_kl_graph(p_model, p_ent);
        terms.kl = t3.item();
        if (terms.kl < -1e-9)
            fail(ErrorCategory::Numeric,
                 "distribution term went negative (" + full(terms.kl) + ") at epoch " +
                     std::to_string(epoch) + " step " + std::to_string(step));
        if (terms.kl < 0.0) terms.kl = 0.0; // rounding guard; logs stay non-negative
        loss = add(loss, t3);
    }

    terms.total = terms.nll + terms.degraded + terms.kl;
    if (!std::isfinite(terms.total))
        fail(ErrorCategory::Numeric,
             "non-finite loss at epoch " + std::to_string(epoch) + " step " +
                 std::to_string(step) + ": clean=" + full(terms.nll) +
                 " degraded=" + full(terms.degraded) + " kl=" + full(terms.kl));

    loss.backward();
    opt.step();
    return terms;
}

std::string sanitize(const std::string& s) {
    std::string out;
    for (char ch : s) {
        const unsigned char u = static_cast<unsigned char>(ch);
        if (std::isalnum(u) || ch == '.' || ch == '-')
            out += static_cast<char>(std::tolower(u));
        else if (!out.empty() && out.back() != '-')
            out += '-';
    }
    while (!out.empty() && out.front() == '-') out.erase(out.begin());
    while (!out.empty() && out.back() == '-') out.pop_back();
    return out.empty() ? std::string("x") : out;
}

json curve_to_json(const KMCurve& c) {
    return json{{"times", c.times},
                {"survival", c.survival},
                {"at_risk", c.at_risk},
                {"deaths", c.deaths}};
}

KMCurve curve_from_json(const json& j) {
    KMCurve c;
    c.times = j.at("times").get<std::vector<double>>();
    c.survival = j.at("survival").get<std::vector<double>>();
    c.at_risk = j.at("at_risk").get<std::vector<std::size_t>>();
    c.deaths = j.at("deaths").get<std::vector<std::size_t>>();
    if (c.survival.size() != c.times.size() || c.at_risk.size() != c.times.size() ||
        c.deaths.size() != c.times.size())
        fail(ErrorCategory::Schema, "KM curve arrays disagree in length");
    return c;
}

// Labels appearing under one sweep, in first-appearance order.
std::vector<std::string> sweep_labels(const RunReport& report, const std::string& sweep) {
    std::vector<std::string> labels;
    for (const RunRecord& r : report.runs) {
        if (r.sweep != sweep) continue;
        if (std::find(labels.begin(), labels.end(), r.label) == labels.end())
            labels.push_back(r.label);
    }
    return labels;
}

std::string cell_text(const CellAggregate& agg) {
    if (agg.count == 0) return "undefined (n=0)";
    return fmt("%.4f", agg.mean) + " +/- " + fmt("%.4f", agg.stddev) + " (n=" +
           std::to_string(agg.count) + ")";
}

std::string pad(const std::string& s, std::size_t width) {
    std::string out = s;
    while (out.size() < width) out += ' ';
    return out;
}

// Long-format aggregate table: one row per (label, domain).
std::string table_csv(const RunReport& report, const std::string& sweep,
                      const std::string& key_col) {
    std::ostringstream out;
    out << file_stamp(report.config_hash);
    out << key_col << ",domain,mean,stddev,seeds\n";
    for (const std::string& label : sweep_labels(report, sweep)) {
        auto scores = collect_target_scores(report, label);
        std::string key = label;
        if (!sweep.empty()) {
            for (const RunRecord& r : report.runs)
                if (r.label == label) {
                    key = fmt("%g", r.sweep_value);
                    break;
                }
        }
        std::vector<std::string> domains = report.targets;
        domains.push_back("Average");
        for (const std::string& domain : domains) {
            const CellAggregate agg = aggregate(scores[domain]);
            out << key << "," << domain << ",";
            if (agg.count == 0)
                out << ",,0\n";
            else
                out << full(agg.mean) << "," << full(agg.stddev) << "," << agg.count << "\n";
        }
    }
    return out.str();
}

std::string table_text(const RunReport& report, const std::string& sweep,
                       const std::string& key_col) {
    const std::vector<std::string> labels = sweep_labels(report, sweep);
    std::size_t label_w = key_col.size();
    for (const std::string& l : labels) label_w = std::max(label_w, l.size());
    label_w += 2;
    const std::size_t cell_w = 26;

    std::ostringstream out;
    out << pad(key_col, label_w);
    for (const std::string& t : report.targets) out << pad(t, cell_w);
    out << "Average\n";
    for (const std::string& label : labels) {
        auto scores = collect_target_scores(report, label);
        out << pad(label, label_w);
        for (const std::string& t : report.targets) out << pad(cell_text(aggregate(scores[t])), cell_w);
        out << cell_text(aggregate(scores["Average"])) << "\n";
    }
    return out.str();
}

// Mean of each term per epoch over every run bearing the label.
std::vector<TermLog> mean_epoch_log(const RunReport& report, const std::string& label) {
    std::vector<TermLog> acc;
    std::size_t count = 0;
    for (const RunRecord& r : report.runs) {
        if (r.label != label || r.epoch_log.empty()) continue;
        if (acc.size() < r.epoch_log.size()) acc.resize(r.epoch_log.size());
        for (std::size_t e = 0; e < r.epoch_log.size(); ++e) {
            acc[e].nll += r.epoch_log[e].nll;
            acc[e].degraded += r.epoch_log[e].degraded;
            acc[e].kl += r.epoch_log[e].kl;
            acc[e].total += r.epoch_log[e].total;
        }
        ++count;
    }
    if (count > 1)
        for (TermLog& t : acc) {
            t.nll /= static_cast<double>(count);
            t.degraded /= static_cast<double>(count);
            t.kl /= static_cast<double>(count);
            t.total /= static_cast<double>(count);
        }
    return acc;
}

std::string loss_breakdown_text(const RunReport& report) {
    std::vector<std::string> labels;
    for (const RunRecord& r : report.runs)
        if (std::find(labels.begin(), labels.end(), r.label) == labels.end())
            labels.push_back(r.label);

    std::ostringstream out;
    out << "loss terms, mean per epoch over seeds\n";
    for (const std::string& label : labels) {
        const std::vector<TermLog> log = mean_epoch_log(report, label);
        if (log.empty()) continue;
        out << "[" << label << "]\n";
        out << "epoch,clean_nll,degraded_nll,kl,total\n";
        for (std::size_t e = 0; e < log.size(); ++e)
            out << e << "," << fmt("%.6f", log[e].nll) << "," << fmt("%.6f", log[e].degraded)
                << "," << fmt("%.6f", log[e].kl) << "," << fmt("%.6f", log[e].total) << "\n";
    }
    return out.str();
}

std::string fmt2(double v) { return fmt("%.2f", v); }

void append_km_artifacts(const RunReport& report, const std::string& out_dir) {
    namespace fs = std::filesystem;
    const std::string stamp = file_stamp(report.config_hash);
    for (const RunRecord& r : report.runs) {
        for (const EvalReport& e : r.evals) {
            if (!e.has_km) continue;
            std::string base = "km";
            if (!r.label.empty() && r.label != "evaluate") base += "_" + sanitize(r.label);
            base += "_" + sanitize(e.domain) + "_seed" + std::to_string(r.seed);
            auto curve_csv = [&](const KMCurve& c) {
                std::ostringstream out;
                out << stamp << "time,survival,at_risk,deaths\n";
                for (std::size_t k = 0; k < c.times.size(); ++k)
                    out << full(c.times[k]) << "," << full(c.survival[k]) << "," << c.at_risk[k]
                        << "," << c.deaths[k] << "\n";
                return out.str();
            };
            write_text_file((fs::path(out_dir) / (base + "_low.csv")).string(),
                            curve_csv(e.km_low));
            write_text_file((fs::path(out_dir) / (base + "_high.csv")).string(),
                            curve_csv(e.km_high));
            write_text_file((fs::path(out_dir) / (base + ".svg")).string(),
                            km_svg(e.km_low, e.km_high,
                                   "config=" + report.config_hash + " version=" + kToolVersion));
        }
    }
}

} // namespace

TrainOutput train_on(const ExperimentConfig& cfg, std::uint64_t seed,
                     const LoadedDataset& source) {
    const ModalityBatch& data = source.batch;
    validate_batch(data);
    const std::size_t n = data.n();
    if (n < 2)
        fail(ErrorCategory::Batch,
             "training needs at least 2 samples, got " + std::to_string(n));

    const std::size_t f_image = data.patch_tokens.front().cols();
    const std::size_t f_gene = data.pathway_tokens.front().cols();
    // A disabled module keeps its defaults, so the run is bit-identical to a
    // config that never mentions the module.
    const bool anchor_trainable = !cfg.sdir.enabled || cfg.sdir.learnable_anchor;
    const KernelSpec kernel = cfg.cade.enabled ? kernel_spec(cfg.cade) : KernelSpec{};

    TrainOutput out;
    out.seed = seed;
    out.model = make_model(f_image, f_gene, cfg.hidden_dim, cfg.latent_dim, cfg.bins, seed,
                           anchor_trainable);
    out.bin_edges = quartile_bin_edges(data.labels, cfg.bins);

    std::vector<SurvivalRecord> binned = data.labels;
    for (SurvivalRecord& r : binned) r.bin = assign_bin(r.time, out.bin_edges);

    Optimizer opt(cfg.optimizer, cfg.learning_rate, trainable_parameters(out.model));

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        RngStream shuffle = make_stream(seed, {kStreamShuffle, epoch});
        const std::vector<std::size_t> order = shuffle.permutation(n);

        // Chunks of batch_size; a trailing single sample folds into the
        // previous chunk so batch statistics always see >= 2 rows.
        std::vector<std::pair<std::size_t, std::size_t>> spans;
        for (std::size_t begin = 0; begin < n; begin += cfg.batch_size)
            spans.emplace_back(begin, std::min(begin + cfg.batch_size, n));
        if (spans.size() >= 2 && spans.back().second - spans.back().first == 1) {
            spans[spans.size() - 2].second = n;
            spans.pop_back();
        }

        TermLog epoch_sum;
        for (std::size_t step = 0; step < spans.size(); ++step) {
            const auto [begin, end] = spans[step];
            const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                               order.begin() + static_cast<std::ptrdiff_t>(end));
            const ModalityBatch batch =
                make_training_batch(data, binned, idx, seed, epoch, cfg.train_patches);
            const std::uint64_t noise_key = derive_key(seed, {kStreamMask, epoch, step});
            const StepTerms terms =
                train_step(out.model, opt, batch, cfg, kernel, noise_key, epoch, step);
            epoch_sum.nll += terms.nll;
            epoch_sum.degraded += terms.degraded;
            epoch_sum.kl += terms.kl;
            epoch_sum.total += terms.total;
        }
        const double steps = static_cast<double>(spans.size());
        out.epoch_log.push_back(TermLog{epoch_sum.nll / steps, epoch_sum.degraded / steps,
                                        epoch_sum.kl / steps, epoch_sum.total / steps});
    }
    return out;
}

TrainOutput train_run(const ExperimentConfig& cfg, std::uint64_t seed) {
    validate_config(cfg);
    const LoadedDataset source = load_domain(cfg, cfg.source);
    return train_on(cfg, seed, source);
}

EvalOutput evaluate_model(const Model& model, const ModalityBatch& data,
                          const std::vector<double>& bin_edges) {
    validate_batch(data);
    if (data.patch_tokens.front().cols() != model.backbone.f_image ||
        data.pathway_tokens.front().cols() != model.backbone.f_gene)
        fail(ErrorCategory::Shape,
             "model expects feature widths " + std::to_string(model.backbone.f_image) + "/" +
                 std::to_string(model.backbone.f_gene) + ", dataset has " +
                 std::to_string(data.patch_tokens.front().cols()) + "/" +
                 std::to_string(data.pathway_tokens.front().cols()));

    ModalityBatch binned = data;
    for (SurvivalRecord& r : binned.labels) r.bin = assign_bin(r.time, bin_edges);

    const KernelSpec kernel{}; // unused in clean mode
    const ForwardResult fr =
        forward(binned, model.backbone, model.dirac, ForwardMode::Clean, 0.0, kernel, 0);

    EvalOutput out;
    const std::vector<double>& hz = fr.hazards.value();
    const std::size_t bins = fr.hazards.cols();
    out.risks.resize(binned.n());
    for (std::size_t i = 0; i < binned.n(); ++i) {
        const std::vector<double> row(hz.begin() + static_cast<std::ptrdiff_t>(i * bins),
                                      hz.begin() + static_cast<std::ptrdiff_t>((i + 1) * bins));
        out.risks[i] = risk_score(row);
    }

    try {
        out.cindex = concordance_index(out.risks, binned.labels);
        out.defined = true;
    } catch (const Error& e) {
        if (e.category() != ErrorCategory::Metric) throw;
        out.defined = false; // no comparable pairs: reported missing, never 0
    }

    auto split = median_risk_split(out.risks);
    out.low_idx = std::move(split.first);
    out.high_idx = std::move(split.second);
    auto subset = [&](const std::vector<std::size_t>& idx) {
        std::vector<SurvivalRecord> rs;
        rs.reserve(idx.size());
        for (std::size_t i : idx) rs.push_back(binned.labels[i]);
        return rs;
    };
    if (!out.low_idx.empty()) out.km_low = km_estimator(subset(out.low_idx));
    if (!out.high_idx.empty()) out.km_high = km_estimator(subset(out.high_idx));
    return out;
}

RunReport run_ablation(const ExperimentConfig& cfg) {
    validate_config(cfg);
    const auto started = std::chrono::steady_clock::now();

    std::map<std::string, LoadedDataset> data;
    data.emplace(cfg.source, load_domain(cfg, cfg.source));
    for (const std::string& t : cfg.targets) data.emplace(t, load_domain(cfg, t));

    RunReport report;
    report.kind = "ablate";
    report.config_hash = config_hash(cfg);
    report.source = cfg.source;
    report.targets = cfg.targets;

    struct Row {
        const char* label;
        bool sdir, cade;
    };
    const Row rows[] = {{"backbone", false, false},
                        {"+SDIR", true, false},
                        {"+CADE", false, true},
                        {"+both", true, true}};
    for (const Row& row : rows) {
        ExperimentConfig rc = cfg;
        rc.sdir.enabled = row.sdir;
        rc.cade.enabled = row.cade;
        for (std::uint64_t seed : cfg.seeds) {
            const TrainOutput trained = train_on(rc, seed, data.at(cfg.source));
            RunRecord rec;
            rec.label = row.label;
            rec.seed = seed;
            rec.epoch_log = trained.epoch_log;
            std::vector<std::string> domains;
            domains.push_back(cfg.source);
            domains.insert(domains.end(), cfg.targets.begin(), cfg.targets.end());
            for (const std::string& domain : domains) {
                const EvalOutput e =
                    evaluate_model(trained.model, data.at(domain).batch, trained.bin_edges);
                EvalReport er;
                er.domain = domain;
                er.defined = e.defined;
                er.cindex = e.cindex;
                rec.evals.push_back(er);
            }
            report.runs.push_back(std::move(rec));
        }
    }

    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

RunReport run_grid(const ExperimentConfig& cfg, const std::vector<double>& alphas,
                   const std::vector<double>& gammas) {
    validate_config(cfg);
    if (alphas.empty() || gammas.empty())
        fail(ErrorCategory::Param, "grid sweeps need at least one value per parameter");
    const auto started = std::chrono::steady_clock::now();

    std::map<std::string, LoadedDataset> data;
    data.emplace(cfg.source, load_domain(cfg, cfg.source));
    for (const std::string& t : cfg.targets) data.emplace(t, load_domain(cfg, t));

    RunReport report;
    report.kind = "grid";
    report.config_hash = config_hash(cfg);
    report.source = cfg.source;
    report.targets = cfg.targets;

    auto run_cell = [&](const ExperimentConfig& rc, const std::string& label,
                        const std::string& sweep, double value) {
        validate_config(rc);
        for (std::uint64_t seed : cfg.seeds) {
            const TrainOutput trained = train_on(rc, seed, data.at(cfg.source));
            RunRecord rec;
            rec.label = label;
            rec.sweep = sweep;
            rec.sweep_value = value;
            rec.seed = seed;
            rec.epoch_log = trained.epoch_log;
            std::vector<std::string> domains;
            domains.push_back(cfg.source);
            domains.insert(domains.end(), cfg.targets.begin(), cfg.targets.end());
            for (const std::string& domain : domains) {
                const EvalOutput e =
                    evaluate_model(trained.model, data.at(domain).batch, trained.bin_edges);
                EvalReport er;
                er.domain = domain;
                er.defined = e.defined;
                er.cindex = e.cindex;
                rec.evals.push_back(er);
            }
            report.runs.push_back(std::move(rec));
        }
    };

    // Sweep alpha with gamma pinned, then gamma with alpha pinned.
    for (double a : alphas) {
        ExperimentConfig rc = cfg;
        rc.sdir.enabled = true;
        rc.sdir.alpha = a;
        rc.cade.enabled = true;
        rc.cade.gamma = 0.5;
        run_cell(rc, "alpha=" + fmt("%g", a), "alpha", a);
    }
    for (double g : gammas) {
        ExperimentConfig rc = cfg;
        rc.sdir.enabled = true;
        rc.sdir.alpha = 0.5;
        rc.cade.enabled = true;
        rc.cade.gamma = g;
        run_cell(rc, "gamma=" + fmt("%g", g), "gamma", g);
    }

    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

CellAggregate aggregate(const std::vector<double>& values) {
    CellAggregate agg;
    std::vector<double> kept;
    for (double v : values)
        if (!std::isnan(v)) kept.push_back(v);
    agg.count = kept.size();
    if (kept.empty()) return agg;
    double sum = 0.0;
    for (double v : kept) sum += v;
    agg.mean = sum / static_cast<double>(kept.size());
    if (kept.size() >= 2) {
        double ss = 0.0;
        for (double v : kept) ss += (v - agg.mean) * (v - agg.mean);
        agg.stddev = std::sqrt(ss / static_cast<double>(kept.size() - 1));
    }
    return agg;
}

std::map<std::string, std::vector<double>> collect_target_scores(const RunReport& report,
                                                                 const std::string& label) {
    std::map<std::string, std::vector<double>> scores;
    for (const RunRecord& r : report.runs) {
        if (r.label != label) continue;
        double avg_sum = 0.0;
        std::size_t avg_n = 0;
        for (const std::string& t : report.targets) {
            double v = std::nan("");
            for (const EvalReport& e : r.evals)
                if (e.domain == t && e.defined) v = e.cindex;
            scores[t].push_back(v);
            if (!std::isnan(v)) {
                avg_sum += v;
                ++avg_n;
            }
        }
        scores["Average"].push_back(avg_n ? avg_sum / static_cast<double>(avg_n) : std::nan(""));
    }
    return scores;
}

void write_metrics(const RunReport& report, const std::string& path) {
    json j;
    j["tool_version"] = kToolVersion;
    j["kind"] = report.kind;
    j["config_hash"] = report.config_hash;
    j["source"] = report.source;
    j["targets"] = report.targets;
    json runs = json::array();
    for (const RunRecord& r : report.runs) {
        json jr;
        jr["label"] = r.label;
        jr["sweep"] = r.sweep;
        jr["sweep_value"] = r.sweep_value;
        jr["seed"] = r.seed;
        json logs = json::array();
        for (const TermLog& t : r.epoch_log)
            logs.push_back(json{{"nll", t.nll},
                                {"degraded", t.degraded},
                                {"kl", t.kl},
                                {"total", t.total}});
        jr["epoch_log"] = logs;
        json evals = json::array();
        for (const EvalReport& e : r.evals) {
            json je{{"domain", e.domain}, {"defined", e.defined}, {"cindex", e.cindex}};
            if (e.has_km) {
                je["km_low"] = curve_to_json(e.km_low);
                je["km_high"] = curve_to_json(e.km_high);
            }
            evals.push_back(je);
        }
        jr["evals"] = evals;
        runs.push_back(jr);
    }
    j["runs"] = runs;
    write_text_file(path, j.dump(2) + "\n");
}

RunReport read_metrics(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCategory::Io, "cannot open " + path);
    RunReport report;
    try {
        const json j = json::parse(in);
        report.kind = j.at("kind").get<std::string>();
        report.config_hash = j.at("config_hash").get<std::string>();
        report.source = j.at("source").get<std::string>();
        report.targets = j.at("targets").get<std::vector<std::string>>();
        for (const json& jr : j.at("runs")) {
            RunRecord r;
            r.label = jr.at("label").get<std::string>();
            r.sweep = jr.at("sweep").get<std::string>();
            r.sweep_value = jr.at("sweep_value").get<double>();
            r.seed = jr.at("seed").get<std::uint64_t>();
            for (const json& jl : jr.at("epoch_log")) {
                TermLog t;
                t.nll = jl.at("nll").get<double>();
                t.degraded = jl.at("degraded").get<double>();
                t.kl = jl.at("kl").get<double>();
                t.total = jl.at("total").get<double>();
                r.epoch_log.push_back(t);
            }
            for (const json& je : jr.at("evals")) {
                EvalReport e;
                e.domain = je.at("domain").get<std::string>();
                e.defined = je.at("defined").get<bool>();
                e.cindex = je.at("cindex").get<double>();
                if (je.contains("km_low")) {
                    e.has_km = true;
                    e.km_low = curve_from_json(je.at("km_low"));
                    e.km_high = curve_from_json(je.at("km_high"));
                }
                r.evals.push_back(std::move(e));
            }
            report.runs.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        fail(ErrorCategory::Schema, "bad metrics file " + path + ": " + e.what());
    }
    return report;
}

void emit_report(const RunReport& report, const std::string& out_dir) {
    if (report.runs.empty()) fail(ErrorCategory::Param, "nothing to report");
    check_writable_dir(out_dir);
    namespace fs = std::filesystem;
    const std::string stamp = file_stamp(report.config_hash);

    std::ostringstream summary;
    summary << "survgen summary\n" << stamp;
    summary << "kind=" << report.kind << " source=" << report.source << " targets=";
    for (std::size_t i = 0; i < report.targets.size(); ++i)
        summary << (i ? "," : "") << report.targets[i];
    summary << "\n\n";

    if (report.kind == "ablate") {
        write_text_file((fs::path(out_dir) / "ablation.csv").string(),
                        table_csv(report, "", "label"));
        summary << "C-index by configuration (mean +/- std over seeds)\n"
                << table_text(report, "", "label") << "\n";
    } else if (report.kind == "grid") {
        write_text_file((fs::path(out_dir) / "alpha_sweep.csv").string(),
                        table_csv(report, "alpha", "alpha"));
        write_text_file((fs::path(out_dir) / "gamma_sweep.csv").string(),
                        table_csv(report, "gamma", "gamma"));
        summary << "C-index, drop rate sweep (mixing pinned at 0.5)\n"
                << table_text(report, "alpha", "alpha") << "\n";
        summary << "C-index, mixing sweep (drop rate pinned at 0.5)\n"
                << table_text(report, "gamma", "gamma") << "\n";
    } else if (report.kind == "evaluate") {
        std::ostringstream csv;
        csv << stamp << "domain,seed,defined,cindex\n";
        for (const RunRecord& r : report.runs)
            for (const EvalReport& e : r.evals)
                csv << e.domain << "," << r.seed << "," << (e.defined ? 1 : 0) << ","
                    << (e.defined ? full(e.cindex) : std::string()) << "\n";
        write_text_file((fs::path(out_dir) / "evaluate.csv").string(), csv.str());
        summary << "C-index per domain\n";
        for (const RunRecord& r : report.runs)
            for (const EvalReport& e : r.evals)
                summary << pad(e.domain, 12) << pad("seed " + std::to_string(r.seed), 12)
                        << (e.defined ? fmt("%.4f", e.cindex) : std::string("undefined")) << "\n";
        summary << "\n";
    }

    const std::string breakdown = loss_breakdown_text(report);
    if (!breakdown.empty()) summary << breakdown;
    write_text_file((fs::path(out_dir) / "summary.txt").string(), summary.str());

    append_km_artifacts(report, out_dir);
}

void write_train_log(const std::string& path, const std::vector<TermLog>& log,
                     const std::string& config_hash) {
    std::ostringstream out;
    out << file_stamp(config_hash);
    out << "epoch,clean_nll,degraded_nll,kl,total\n";
    for (std::size_t e = 0; e < log.size(); ++e)
        out << e << "," << full(log[e].nll) << "," << full(log[e].degraded) << ","
            << full(log[e].kl) << "," << full(log[e].total) << "\n";
    write_text_file(path, out.str());
}

void check_writable_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        fail(ErrorCategory::Io, "cannot create output directory " + dir + ": " + ec.message());
    const fs::path probe = fs::path(dir) / ".write_probe";
    {
        std::ofstream out(probe, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCategory::Io, "output directory " + dir + " is not writable");
        out << "probe";
        out.flush();
        if (!out) fail(ErrorCategory::Io, "output directory " + dir + " is not writable");
    }
    fs::remove(probe, ec);
}

std::string km_svg(const KMCurve& low, const KMCurve& high, const std::string& stamp) {
    double tmax = 1.0;
    if (!low.times.empty()) tmax = std::max(tmax, low.times.back());
    if (!high.times.empty()) tmax = std::max(tmax, high.times.back());
    const double x0 = 60.0, x1 = 610.0, y0 = 20.0, y1 = 370.0;
    auto X = [&](double t) { return x0 + (x1 - x0) * t / tmax; };
    auto Y = [&](double s) { return y0 + (y1 - y0) * (1.0 - s); };

    auto step_path = [&](const KMCurve& c) {
        std::string d = "M " + fmt2(X(0.0)) + " " + fmt2(Y(1.0));
        double s = 1.0;
        for (std::size_t k = 0; k < c.times.size(); ++k) {
            d += " L " + fmt2(X(c.times[k])) + " " + fmt2(Y(s));
            s = c.survival[k];
            d += " L " + fmt2(X(c.times[k])) + " " + fmt2(Y(s));
        }
        d += " L " + fmt2(X(tmax)) + " " + fmt2(Y(s));
        return d;
    };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 640 420\">\n";
    svg << "<!-- " << stamp << " -->\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"640\" height=\"420\" fill=\"white\"/>\n";
    // axes
    svg << "<line x1=\"" << fmt2(x0) << "\" y1=\"" << fmt2(y1) << "\" x2=\"" << fmt2(x1)
        << "\" y2=\"" << fmt2(y1) << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << fmt2(x0) << "\" y1=\"" << fmt2(y0) << "\" x2=\"" << fmt2(x0)
        << "\" y2=\"" << fmt2(y1) << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double t = tmax * static_cast<double>(i) / 4.0;
        svg << "<line x1=\"" << fmt2(X(t)) << "\" y1=\"" << fmt2(y1) << "\" x2=\"" << fmt2(X(t))
            << "\" y2=\"" << fmt2(y1 + 5.0) << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << fmt2(X(t)) << "\" y=\"" << fmt2(y1 + 20.0)
            << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">"
            << fmt("%.3g", t) << "</text>\n";
        const double s = static_cast<double>(i) / 4.0;
        svg << "<line x1=\"" << fmt2(x0 - 5.0) << "\" y1=\"" << fmt2(Y(s)) << "\" x2=\""
            << fmt2(x0) << "\" y2=\"" << fmt2(Y(s)) << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << fmt2(x0 - 10.0) << "\" y=\"" << fmt2(Y(s) + 4.0)
            << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">"
            << fmt("%.2g", s) << "</text>\n";
    }
    svg << "<text x=\"" << fmt2((x0 + x1) / 2.0) << "\" y=\"410\" font-family=\"sans-serif\" "
        << "font-size=\"12\" text-anchor=\"middle\">time</text>\n";
    svg << "<text x=\"15\" y=\"" << fmt2((y0 + y1) / 2.0) << "\" font-family=\"sans-serif\" "
        << "font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
        << fmt2((y0 + y1) / 2.0) << ")\">survival</text>\n";
    if (!low.times.empty())
        svg << "<path d=\"" << step_path(low)
            << "\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n";
    if (!high.times.empty())
        svg << "<path d=\"" << step_path(high)
            << "\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
    svg << "<rect x=\"480\" y=\"30\" width=\"18\" height=\"4\" fill=\"#1f77b4\"/>\n";
    svg << "<text x=\"504\" y=\"36\" font-family=\"sans-serif\" font-size=\"12\">low risk</text>\n";
    svg << "<rect x=\"480\" y=\"48\" width=\"18\" height=\"4\" fill=\"#d62728\"/>\n";
    svg << "<text x=\"504\" y=\"54\" font-family=\"sans-serif\" font-size=\"12\">high risk</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

} // namespace survgen
