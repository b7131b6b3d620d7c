// survgen: deterministic multimodal survival experiments on synthetic domains.

#include <survgen/checkpoint.hpp>
#include <survgen/config.hpp>
#include <survgen/dataio.hpp>
#include <survgen/errors.hpp>
#include <survgen/harness.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;
using namespace survgen;

struct GenerateArgs {
    std::string out;
    std::size_t domains = 2;
    std::size_t samples = 400;
    std::size_t patches = 16;
    std::size_t pathways = 8;
    std::size_t dim = 24;
    double signal_fraction = 0.25;
    double offset_scale = 0.8;
    double gene_noise = 1.0;
    double censor = 0.25;
    std::uint64_t seed = 7;
};

std::string domain_name(std::size_t k) { return std::string(1, static_cast<char>('A' + k)); }

int cmd_generate(const GenerateArgs& a) {
    if (a.domains < 2 || a.domains > 26)
        fail(ErrorCategory::Param, "generate: domains must lie in [2, 26]");
    check_writable_dir(a.out);

    ExperimentConfig cfg;
    cfg.source = domain_name(0);
    for (std::size_t k = 0; k < a.domains; ++k) {
        const std::string name = domain_name(k);
        DomainSpec spec;
        spec.domain_id = name;
        spec.n_samples = a.samples;
        spec.patches_per_sample = a.patches;
        spec.pathways = a.pathways;
        spec.signal_dim = a.dim;
        spec.patch_signal_fraction = a.signal_fraction;
        // Domain 0 is the clean source; later domains shift every patch
        // feature by a constant that grows with the domain index.
        if (k > 0)
            spec.domain_shift_offset.assign(a.dim, a.offset_scale * static_cast<double>(k));
        spec.gene_noise_scale = a.gene_noise;
        spec.censor_fraction = a.censor;
        spec.seed = a.seed + k;
        const ModalityBatch batch = generate_domain(spec);
        const std::string dir = (fs::path(a.out) / name).string();
        save_dataset(dir, batch, spec);
        cfg.datasets[name] = dir;
        if (k > 0) cfg.targets.push_back(name);
        std::printf("generated domain %s: %zu samples -> %s\n", name.c_str(), batch.n(),
                    dir.c_str());
    }

    cfg.sdir.enabled = true;
    cfg.cade.enabled = true;
    cfg.epochs = 30;
    // The adaptive optimizer balances the likelihood and distribution terms'
    // very different gradient scales; fixed-step descent needs a much smaller
    // rate on this objective.
    cfg.optimizer = "adam";
    cfg.learning_rate = 0.01;
    cfg.seeds = {1, 2, 3, 4, 5};
    cfg.output_dir = (fs::path(a.out) / "out").string();

    nlohmann::json j;
    j["source"] = cfg.source;
    j["targets"] = cfg.targets;
    j["datasets"] = cfg.datasets;
    j["sdir"] = {{"alpha", cfg.sdir.alpha}};
    j["cade"] = {{"gamma", cfg.cade.gamma}};
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["learning_rate"] = cfg.learning_rate;
    j["optimizer"] = cfg.optimizer;
    j["seeds"] = cfg.seeds;
    j["latent_dim"] = cfg.latent_dim;
    j["hidden_dim"] = cfg.hidden_dim;
    j["bins"] = cfg.bins;
    j["train_patches"] = cfg.train_patches;
    j["output_dir"] = cfg.output_dir;
    const std::string cfg_path = (fs::path(a.out) / "config.json").string();
    {
        std::ofstream out(cfg_path, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCategory::Io, "cannot write " + cfg_path);
        out << j.dump(2) << "\n";
    }
    std::printf("wrote %s (hash %s)\n", cfg_path.c_str(), config_hash(cfg).c_str());
    return 0;
}

std::string resolve_out(const ExperimentConfig& cfg, const std::string& out_flag) {
    return out_flag.empty() ? cfg.output_dir : out_flag;
}

int cmd_train(const std::string& config_path, std::uint64_t seed_flag, bool seed_given,
              const std::string& out_flag) {
    const ExperimentConfig cfg = load_config(config_path);
    validate_config(cfg);
    const std::string out = resolve_out(cfg, out_flag);
    check_writable_dir(out);

    std::vector<std::uint64_t> seeds = cfg.seeds;
    if (seed_given) seeds = {seed_flag};
    const std::string hash = config_hash(cfg);

    RunReport report;
    report.kind = "train";
    report.config_hash = hash;
    report.source = cfg.source;
    report.targets = cfg.targets;

    const LoadedDataset source = load_dataset(cfg.datasets.at(cfg.source));
    for (std::uint64_t seed : seeds) {
        const TrainOutput trained = train_on(cfg, seed, source);
        const std::string run_dir = (fs::path(out) / ("train_seed" + std::to_string(seed))).string();
        check_writable_dir(run_dir);
        save_checkpoint((fs::path(run_dir) / "checkpoint.txt").string(), trained.model, hash);
        write_train_log((fs::path(run_dir) / "train_log.csv").string(), trained.epoch_log, hash);
        RunRecord rec;
        rec.label = "train";
        rec.seed = seed;
        rec.epoch_log = trained.epoch_log;
        report.runs.push_back(std::move(rec));
        std::printf("seed %llu: final loss %.6f -> %s\n",
                    static_cast<unsigned long long>(seed),
                    trained.epoch_log.empty() ? 0.0 : trained.epoch_log.back().total,
                    run_dir.c_str());
    }

    const std::string report_dir = (fs::path(out) / "train").string();
    check_writable_dir(report_dir);
    write_metrics(report, (fs::path(report_dir) / "metrics.json").string());
    emit_report(report, report_dir);
    return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& checkpoint_path,
                 std::vector<std::string> domains, std::uint64_t seed_label,
                 const std::string& out_flag) {
    const ExperimentConfig cfg = load_config(config_path);
    validate_config(cfg);
    const std::string out = resolve_out(cfg, out_flag);
    check_writable_dir(out);

    const LoadedCheckpoint ckpt = load_checkpoint(checkpoint_path);
    const std::string hash = config_hash(cfg);
    if (ckpt.config_hash != hash)
        std::fprintf(stderr, "warning: checkpoint hash %s differs from config hash %s\n",
                     ckpt.config_hash.c_str(), hash.c_str());

    // Bin edges always come from the source domain the model was trained on.
    const LoadedDataset source = load_dataset(cfg.datasets.at(cfg.source));
    const std::vector<double> edges =
        quartile_bin_edges(source.batch.labels, ckpt.model.backbone.bins);

    if (domains.empty()) {
        domains.push_back(cfg.source);
        domains.insert(domains.end(), cfg.targets.begin(), cfg.targets.end());
    }

    RunReport report;
    report.kind = "evaluate";
    report.config_hash = hash;
    report.source = cfg.source;
    report.targets = cfg.targets;
    RunRecord rec;
    rec.seed = seed_label;
    for (const std::string& domain : domains) {
        auto it = cfg.datasets.find(domain);
        if (it == cfg.datasets.end())
            fail(ErrorCategory::Param, "no dataset path configured for domain '" + domain + "'");
        const LoadedDataset ds =
            domain == cfg.source ? source : load_dataset(it->second);
        const EvalOutput e = evaluate_model(ckpt.model, ds.batch, edges);
        EvalReport er;
        er.domain = domain;
        er.defined = e.defined;
        er.cindex = e.cindex;
        er.has_km = true;
        er.km_low = e.km_low;
        er.km_high = e.km_high;
        rec.evals.push_back(er);
        if (e.defined)
            std::printf("%s: C-index %.4f (n=%zu)\n", domain.c_str(), e.cindex, ds.batch.n());
        else
            std::printf("%s: C-index undefined (no comparable pairs, n=%zu)\n", domain.c_str(),
                        ds.batch.n());
    }
    report.runs.push_back(std::move(rec));

    const std::string report_dir = (fs::path(out) / "evaluate").string();
    check_writable_dir(report_dir);
    write_metrics(report, (fs::path(report_dir) / "metrics.json").string());
    emit_report(report, report_dir);
    return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& out_flag) {
    const ExperimentConfig cfg = load_config(config_path);
    validate_config(cfg);
    const std::string out = resolve_out(cfg, out_flag);
    check_writable_dir(out); // fail before any training starts

    const RunReport report = run_ablation(cfg);
    const std::string report_dir = (fs::path(out) / "ablation").string();
    check_writable_dir(report_dir);
    write_metrics(report, (fs::path(report_dir) / "metrics.json").string());
    emit_report(report, report_dir);
    std::printf("ablation finished in %.1f s -> %s\n", report.wall_clock_seconds,
                report_dir.c_str());
    return 0;
}

int cmd_grid(const std::string& config_path, const std::vector<double>& alphas,
             const std::vector<double>& gammas, const std::string& out_flag) {
    const ExperimentConfig cfg = load_config(config_path);
    validate_config(cfg);
    const std::string out = resolve_out(cfg, out_flag);
    check_writable_dir(out);

    const RunReport report = run_grid(cfg, alphas, gammas);
    const std::string report_dir = (fs::path(out) / "grid").string();
    check_writable_dir(report_dir);
    write_metrics(report, (fs::path(report_dir) / "metrics.json").string());
    emit_report(report, report_dir);
    std::printf("grid finished in %.1f s -> %s\n", report.wall_clock_seconds, report_dir.c_str());
    return 0;
}

int cmd_report(const std::vector<std::string>& metrics_paths, const std::string& out) {
    if (metrics_paths.empty()) fail(ErrorCategory::Param, "report: at least one --metrics file");
    check_writable_dir(out);
    for (const std::string& path : metrics_paths) {
        const RunReport report = read_metrics(path);
        const std::string dir = (fs::path(out) / report.kind).string();
        check_writable_dir(dir);
        emit_report(report, dir);
        std::printf("rendered %s report -> %s\n", report.kind.c_str(), dir.c_str());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic multimodal survival experiments on synthetic domains"};
    app.require_subcommand(1);

    GenerateArgs gen;
    CLI::App* generate = app.add_subcommand("generate", "write synthetic domains plus a config");
    generate->add_option("--out", gen.out, "output directory")->required();
    generate->add_option("--domains", gen.domains, "number of domains (first is the source)");
    generate->add_option("--samples", gen.samples, "samples per domain");
    generate->add_option("--patches", gen.patches, "patches per sample");
    generate->add_option("--pathways", gen.pathways, "pathway tokens per sample");
    generate->add_option("--dim", gen.dim, "feature width of both modalities");
    generate->add_option("--signal-fraction", gen.signal_fraction, "fraction of signal patches");
    generate->add_option("--offset-scale", gen.offset_scale, "patch shift per domain step");
    generate->add_option("--gene-noise", gen.gene_noise, "gene-side noise scale");
    generate->add_option("--censor", gen.censor, "censored fraction");
    generate->add_option("--seed", gen.seed, "base seed (domain k uses seed+k)");

    std::string config_path, out_flag, checkpoint_path;
    std::uint64_t seed_flag = 0;
    std::vector<std::string> eval_domains;
    std::vector<double> alphas{0.1, 0.3, 0.5, 0.7, 0.9};
    std::vector<double> gammas{0.1, 0.3, 0.5, 0.7, 0.9};
    std::vector<std::string> metrics_paths;

    CLI::App* train = app.add_subcommand("train", "train one model per seed");
    train->add_option("--config", config_path, "experiment config")->required();
    CLI::Option* train_seed = train->add_option("--seed", seed_flag, "train this seed only");
    train->add_option("--out", out_flag, "output directory (default: config output_dir)");

    CLI::App* evaluate = app.add_subcommand("evaluate", "score a checkpoint on domains");
    evaluate->add_option("--config", config_path, "experiment config")->required();
    evaluate->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    evaluate->add_option("--domain", eval_domains, "domain to score (repeatable; default all)");
    evaluate->add_option("--seed", seed_flag, "seed label for artifact names");
    evaluate->add_option("--out", out_flag, "output directory (default: config output_dir)");

    CLI::App* ablate = app.add_subcommand("ablate", "backbone / +SDIR / +CADE / +both table");
    ablate->add_option("--config", config_path, "experiment config")->required();
    ablate->add_option("--out", out_flag, "output directory (default: config output_dir)");

    CLI::App* grid = app.add_subcommand("grid", "alpha and gamma sweeps");
    grid->add_option("--config", config_path, "experiment config")->required();
    grid->add_option("--alphas", alphas, "drop rates to sweep")->delimiter(',');
    grid->add_option("--gammas", gammas, "mixing parameters to sweep")->delimiter(',');
    grid->add_option("--out", out_flag, "output directory (default: config output_dir)");

    CLI::App* report = app.add_subcommand("report", "re-render artifacts from metrics files");
    report->add_option("--metrics", metrics_paths, "metrics.json path (repeatable)")->required();
    report->add_option("--out", out_flag, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) return cmd_generate(gen);
        if (train->parsed())
            return cmd_train(config_path, seed_flag, train_seed->count() > 0, out_flag);
        if (evaluate->parsed())
            return cmd_evaluate(config_path, checkpoint_path, eval_domains, seed_flag, out_flag);
        if (ablate->parsed()) return cmd_ablate(config_path, out_flag);
        if (grid->parsed()) return cmd_grid(config_path, alphas, gammas, out_flag);
        if (report->parsed()) return cmd_report(metrics_paths, out_flag);
    } catch (const survgen::Error& e) {
        std::fprintf(stderr, "error (%s): %s\n", category_name(e.category()), e.what());
        return exit_code(e.category());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
