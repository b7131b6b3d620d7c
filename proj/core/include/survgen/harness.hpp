#pragma once

#include "survgen/checkpoint.hpp"
#include "survgen/config.hpp"
#include "survgen/dataio.hpp"
#include "survgen/fusion.hpp"
#include "survgen/survmetrics.hpp"

#include <map>
#include <string>
#include <vector>

namespace survgen {

// Mean objective terms over one epoch. Disabled terms stay 0.
struct TermLog {
    double nll = 0.0;      // clean-path likelihood
    double degraded = 0.0; // sparsified-path likelihood
    double kl = 0.0;       // distribution-matching term
    double total = 0.0;
};

struct TrainOutput {
    Model model;
    std::vector<double> bin_edges;
    std::vector<TermLog> epoch_log;
    std::uint64_t seed = 0;
};

// Trains on the source domain with the summed objective. Deterministic in
// (cfg, seed); module randomness lives on disjoint substreams, so toggling
// one module never changes another module's draws.
TrainOutput train_run(const ExperimentConfig& cfg, std::uint64_t seed);

// Same, on an already-loaded dataset (no filesystem access).
TrainOutput train_on(const ExperimentConfig& cfg, std::uint64_t seed,
                     const LoadedDataset& source);

struct EvalOutput {
    bool defined = false; // false: no comparable pairs, metric reported missing
    double cindex = 0.0;
    std::vector<double> risks;
    std::vector<std::size_t> low_idx, high_idx;
    KMCurve km_low, km_high;
};

// Clean-mode scoring with every patch; no randomness consumed.
EvalOutput evaluate_model(const Model& model, const ModalityBatch& data,
                          const std::vector<double>& bin_edges);

struct EvalReport {
    std::string domain;
    bool defined = false;
    double cindex = 0.0;
    bool has_km = false;
    KMCurve km_low, km_high;
};

// One trained seed inside one labeled configuration row/cell.
struct RunRecord {
    std::string label;
    std::string sweep; // "", "alpha", or "gamma"
    double sweep_value = 0.0;
    std::uint64_t seed = 0;
    std::vector<TermLog> epoch_log;
    std::vector<EvalReport> evals;
};

// Everything one command produced; serialized as metrics.json. Wall clock is
// console-only and deliberately kept out of every emitted file, which must be
// byte-identical across reruns.
struct RunReport {
    std::string kind; // "train", "evaluate", "ablate", "grid"
    std::string config_hash;
    std::string source;
    std::vector<std::string> targets;
    std::vector<RunRecord> runs;
    double wall_clock_seconds = 0.0;
};

// Four rows: backbone, +SDIR, +CADE, +both; every row trains each seed and
// scores every target.
RunReport run_ablation(const ExperimentConfig& cfg);

// Two sweeps: alpha with gamma pinned at 0.5, gamma with alpha pinned at 0.5.
RunReport run_grid(const ExperimentConfig& cfg, const std::vector<double>& alphas,
                   const std::vector<double>& gammas);

void write_metrics(const RunReport& report, const std::string& path);
RunReport read_metrics(const std::string& path);

// Writes the aggregated CSV table(s), a human-readable summary with the
// per-term loss breakdown, and KM CSV/SVG artifacts for every evaluation
// that carries curves. Every file is stamped with the config hash and tool
// version; identical reports overwrite byte-identically.
void emit_report(const RunReport& report, const std::string& out_dir);

// Mean and standard deviation over the defined entries of one table cell.
struct CellAggregate {
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t count = 0;
};

CellAggregate aggregate(const std::vector<double>& values);

// Per-seed target scores for one run label: one row per seed holding each
// target's C-index and the across-target average.
std::map<std::string, std::vector<double>> collect_target_scores(const RunReport& report,
                                                                 const std::string& label);

void write_train_log(const std::string& path, const std::vector<TermLog>& log,
                     const std::string& config_hash);

// Fails eagerly (category io) if the directory cannot be created or written.
void check_writable_dir(const std::string& dir);

std::string km_svg(const KMCurve& low, const KMCurve& high, const std::string& stamp);

} // namespace survgen
