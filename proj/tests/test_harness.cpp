#include <survgen/dataio.hpp>
#include <survgen/errors.hpp>
#include <survgen/harness.hpp>

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace survgen;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "survgen_harness_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

LoadedDataset tiny_source(std::uint64_t seed) {
    LoadedDataset ds;
    ds.spec.domain_id = "A";
    ds.spec.n_samples = 24;
    ds.spec.patches_per_sample = 4;
    ds.spec.pathways = 3;
    ds.spec.signal_dim = 5;
    ds.spec.censor_fraction = 0.25;
    ds.spec.seed = seed;
    ds.batch = generate_domain(ds.spec);
    return ds;
}

ExperimentConfig tiny_config() {
    ExperimentConfig cfg;
    cfg.source = "A";
    cfg.targets = {"B"};
    cfg.datasets = {{"A", "unused/A"}, {"B", "unused/B"}};
    cfg.seeds = {1};
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.01;
    cfg.optimizer = "adam";
    cfg.latent_dim = 4;
    cfg.hidden_dim = 6;
    cfg.bins = 3;
    cfg.train_patches = 4;
    return cfg;
}

bool models_identical(const Model& a, const Model& b) {
    const auto pa = named_parameters(a);
    const auto pb = named_parameters(b);
    if (pa.size() != pb.size()) return false;
    for (std::size_t k = 0; k < pa.size(); ++k)
        if (pa[k].first != pb[k].first || pa[k].second.value() != pb[k].second.value())
            return false;
    return true;
}

} // namespace

TEST_CASE("training is deterministic in config and seed") {
    const LoadedDataset src = tiny_source(3);
    const ExperimentConfig cfg = tiny_config();
    const TrainOutput a = train_on(cfg, 5, src);
    const TrainOutput b = train_on(cfg, 5, src);
    CHECK(models_identical(a.model, b.model));
    REQUIRE(a.epoch_log.size() == 3);
    for (std::size_t e = 0; e < 3; ++e) {
        CHECK(a.epoch_log[e].total == b.epoch_log[e].total);
        CHECK(a.epoch_log[e].nll == b.epoch_log[e].nll);
    }
    CHECK(a.bin_edges == b.bin_edges);

    const TrainOutput c = train_on(cfg, 6, src);
    CHECK_FALSE(models_identical(a.model, c.model));
}

TEST_CASE("disabled modules leave only the likelihood term") {
    const LoadedDataset src = tiny_source(7);
    const ExperimentConfig cfg = tiny_config();
    const TrainOutput out = train_on(cfg, 2, src);
    for (const TermLog& t : out.epoch_log) {
        CHECK(t.degraded == 0.0);
        CHECK(t.kl == 0.0);
        CHECK(t.total == t.nll);
        CHECK(std::isfinite(t.total));
    }
}

TEST_CASE("enabled modules contribute nonnegative terms that sum to the total") {
    const LoadedDataset src = tiny_source(9);
    ExperimentConfig cfg = tiny_config();
    cfg.sdir.enabled = true;
    cfg.sdir.alpha = 0.5;
    cfg.cade.enabled = true;
    cfg.cade.gamma = 0.3;
    const TrainOutput out = train_on(cfg, 4, src);
    for (const TermLog& t : out.epoch_log) {
        CHECK(t.degraded > 0.0);
        CHECK(t.kl >= 0.0);
        CHECK(t.total == doctest::Approx(t.nll + t.degraded + t.kl).epsilon(1e-12));
    }
}

TEST_CASE("the full objective still reduces the training loss") {
    const LoadedDataset src = tiny_source(11);
    ExperimentConfig cfg = tiny_config();
    cfg.epochs = 12;
    cfg.sdir.enabled = true;
    cfg.cade.enabled = true;
    const TrainOutput out = train_on(cfg, 1, src);
    CHECK(out.epoch_log.back().total < out.epoch_log.front().total);
}

TEST_CASE("toggling a module off reproduces the never-configured run exactly") {
    const LoadedDataset src = tiny_source(13);
    ExperimentConfig plain = tiny_config();
    ExperimentConfig toggled = tiny_config();
    toggled.sdir.enabled = false;
    toggled.sdir.alpha = 0.9; // must be inert when disabled
    toggled.cade.enabled = false;
    toggled.cade.gamma = 0.7;
    const TrainOutput a = train_on(plain, 8, src);
    const TrainOutput b = train_on(toggled, 8, src);
    CHECK(models_identical(a.model, b.model));
    for (std::size_t e = 0; e < a.epoch_log.size(); ++e)
        CHECK(a.epoch_log[e].total == b.epoch_log[e].total);
}

TEST_CASE("evaluation is deterministic and splits risks at the median") {
    const LoadedDataset src = tiny_source(15);
    const ExperimentConfig cfg = tiny_config();
    const TrainOutput trained = train_on(cfg, 3, src);

    const EvalOutput e1 = evaluate_model(trained.model, src.batch, trained.bin_edges);
    const EvalOutput e2 = evaluate_model(trained.model, src.batch, trained.bin_edges);
    REQUIRE(e1.defined);
    CHECK(e1.cindex == e2.cindex);
    CHECK(e1.risks == e2.risks);
    CHECK(e1.cindex >= 0.0);
    CHECK(e1.cindex <= 1.0);
    REQUIRE(e1.risks.size() == src.batch.n());
    CHECK(e1.low_idx.size() + e1.high_idx.size() == src.batch.n());
    CHECK_FALSE(e1.km_low.times.empty());

    // Mismatched feature width is a shape error.
    DomainSpec wide_spec = src.spec;
    wide_spec.domain_id = "W";
    wide_spec.signal_dim = 7;
    wide_spec.domain_shift_offset.clear();
    const ModalityBatch wide = generate_domain(wide_spec);
    CHECK_THROWS_AS(evaluate_model(trained.model, wide, trained.bin_edges), Error);
}

TEST_CASE("fully censored evaluation reports the metric as undefined") {
    const LoadedDataset src = tiny_source(17);
    const ExperimentConfig cfg = tiny_config();
    const TrainOutput trained = train_on(cfg, 2, src);
    ModalityBatch censored = src.batch;
    for (SurvivalRecord& r : censored.labels) r.event = false;
    const EvalOutput out = evaluate_model(trained.model, censored, trained.bin_edges);
    CHECK_FALSE(out.defined);
    CHECK(out.risks.size() == censored.n());
}

TEST_CASE("aggregate computes mean and spread of defined values") {
    const CellAggregate one = aggregate({0.7});
    CHECK(one.mean == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(one.stddev == 0.0);
    CHECK(one.count == 1);

    const CellAggregate few = aggregate({0.6, 0.8});
    CHECK(few.mean == doctest::Approx(0.7).epsilon(1e-12));
    // Sample standard deviation over n-1.
    CHECK(few.stddev == doctest::Approx(std::sqrt(0.02 / 1.0)).epsilon(1e-12));
    CHECK(few.count == 2);

    const CellAggregate none = aggregate({});
    CHECK(none.count == 0);
}

TEST_CASE("metrics survive a write read write cycle byte for byte") {
    RunReport report;
    report.kind = "evaluate";
    report.config_hash = "00ff00ff00ff00ff";
    report.source = "A";
    report.targets = {"B"};
    RunRecord rec;
    rec.label = "full";
    rec.seed = 4;
    TermLog t;
    t.nll = 1.25;
    t.degraded = 0.5;
    t.kl = 0.125;
    t.total = 1.875;
    rec.epoch_log.push_back(t);
    EvalReport ev;
    ev.domain = "B";
    ev.defined = true;
    ev.cindex = 0.6728394455667789;
    ev.has_km = true;
    ev.km_low.times = {1.0, 2.5};
    ev.km_low.survival = {0.75, 0.5};
    ev.km_low.at_risk = {4, 2};
    ev.km_low.deaths = {1, 1};
    ev.km_high = ev.km_low;
    rec.evals.push_back(ev);
    report.runs.push_back(rec);
    report.wall_clock_seconds = 123.456; // must never be serialized

    const fs::path dir = fresh_dir("metrics");
    const std::string p1 = (dir / "metrics.json").string();
    write_metrics(report, p1);
    const std::string text = slurp(p1);
    CHECK(text.find("wall_clock") == std::string::npos);
    CHECK(text.find("123.456") == std::string::npos);

    const RunReport back = read_metrics(p1);
    CHECK(back.kind == report.kind);
    CHECK(back.config_hash == report.config_hash);
    REQUIRE(back.runs.size() == 1);
    CHECK(back.runs[0].label == "full");
    CHECK(back.runs[0].evals[0].cindex == ev.cindex);
    CHECK(back.runs[0].evals[0].km_low.survival == ev.km_low.survival);
    CHECK(back.wall_clock_seconds == 0.0);

    const std::string p2 = (dir / "metrics2.json").string();
    write_metrics(back, p2);
    CHECK(slurp(p1) == slurp(p2));

    std::ofstream(dir / "garbage.json") << "{\"kind\": 7}";
    CHECK_THROWS_AS(read_metrics((dir / "garbage.json").string()), Error);
    CHECK_THROWS_AS(read_metrics((dir / "absent.json").string()), Error);
}

TEST_CASE("collect_target_scores groups by domain plus the across-target average") {
    RunReport report;
    report.kind = "ablate";
    report.targets = {"B", "C"};
    for (std::uint64_t seed : {1, 2}) {
        RunRecord rec;
        rec.label = "row";
        rec.seed = seed;
        for (const std::string& dom : {std::string("B"), std::string("C")}) {
            EvalReport ev;
            ev.domain = dom;
            ev.defined = true;
            ev.cindex = seed == 1 ? (dom == "B" ? 0.6 : 0.8) : (dom == "B" ? 0.7 : 0.9);
            rec.evals.push_back(ev);
        }
        report.runs.push_back(rec);
    }
    const auto scores = collect_target_scores(report, "row");
    REQUIRE(scores.count("B"));
    REQUIRE(scores.count("C"));
    REQUIRE(scores.count("Average"));
    CHECK(scores.at("B") == std::vector<double>{0.6, 0.7});
    CHECK(scores.at("C") == std::vector<double>{0.8, 0.9});
    REQUIRE(scores.at("Average").size() == 2);
    CHECK(scores.at("Average")[0] == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(scores.at("Average")[1] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(collect_target_scores(report, "missing").empty());
}

TEST_CASE("train log file carries the stamp and one row per epoch") {
    const fs::path dir = fresh_dir("trainlog");
    std::vector<TermLog> log(2);
    log[0] = TermLog{1.5, 0.25, 0.125, 1.875};
    log[1] = TermLog{1.25, 0.2, 0.1, 1.55};
    const std::string path = (dir / "train_log.csv").string();
    write_train_log(path, log, "1234123412341234");
    const std::string text = slurp(path);
    CHECK(text.find("# config=1234123412341234") != std::string::npos);
    CHECK(text.find("epoch,clean_nll,degraded_nll,kl,total") != std::string::npos);
    std::size_t lines = 0;
    for (char c : text) lines += c == '\n' ? 1 : 0;
    CHECK(lines == 4); // stamp, header, two epochs

    write_train_log((dir / "again.csv").string(), log, "1234123412341234");
    CHECK(slurp(dir / "again.csv") == text);
}

TEST_CASE("writable-dir check fails on a path blocked by a file") {
    const fs::path dir = fresh_dir("writable");
    CHECK_NOTHROW(check_writable_dir((dir / "sub" / "deeper").string()));
    CHECK(fs::is_directory(dir / "sub" / "deeper"));

    std::ofstream(dir / "blocker") << "x";
    try {
        check_writable_dir((dir / "blocker" / "child").string());
        FAIL("expected an io error");
    } catch (const Error& e) {
        CHECK(e.category() == ErrorCategory::Io);
    }
}

TEST_CASE("km svg embeds the stamp and one path per risk group") {
    KMCurve low, high;
    low.times = {1.0, 2.0};
    low.survival = {0.8, 0.6};
    low.at_risk = {10, 8};
    low.deaths = {2, 2};
    high.times = {1.0, 3.0};
    high.survival = {0.5, 0.1};
    high.at_risk = {10, 5};
    high.deaths = {5, 4};
    const std::string svg = km_svg(low, high, "config=abc version=1");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("config=abc") != std::string::npos);
    CHECK(svg.find("#1f77b4") != std::string::npos);
    CHECK(svg.find("#d62728") != std::string::npos);
    CHECK(km_svg(low, high, "s") == km_svg(low, high, "s"));
}

TEST_CASE("report emission is idempotent and fails on an empty report") {
    const LoadedDataset src = tiny_source(19);
    ExperimentConfig cfg = tiny_config();
    cfg.sdir.enabled = true;
    const TrainOutput trained = train_on(cfg, 1, src);
    const EvalOutput eval = evaluate_model(trained.model, src.batch, trained.bin_edges);

    RunReport report;
    report.kind = "evaluate";
    report.config_hash = "aaaabbbbccccdddd";
    report.source = "A";
    report.targets = {"B"};
    RunRecord rec;
    rec.label = "full";
    rec.seed = 1;
    rec.epoch_log = trained.epoch_log;
    EvalReport ev;
    ev.domain = "A";
    ev.defined = eval.defined;
    ev.cindex = eval.cindex;
    ev.has_km = true;
    ev.km_low = eval.km_low;
    ev.km_high = eval.km_high;
    rec.evals.push_back(ev);
    report.runs.push_back(rec);

    const fs::path d1 = fresh_dir("emit1");
    const fs::path d2 = fresh_dir("emit2");
    emit_report(report, d1.string());
    emit_report(report, d2.string());
    CHECK(fs::exists(d1 / "summary.txt"));
    CHECK(fs::exists(d1 / "evaluate.csv"));

    std::size_t files = 0;
    for (const auto& entry : fs::recursive_directory_iterator(d1)) {
        if (!entry.is_regular_file()) continue;
        ++files;
        const fs::path rel = fs::relative(entry.path(), d1);
        INFO("file ", rel.string());
        CHECK(slurp(entry.path()) == slurp(d2 / rel));
    }
    CHECK(files >= 4); // summary, csv, km csv/svg artifacts

    const std::string summary = slurp(d1 / "summary.txt");
    CHECK(summary.find("aaaabbbbccccdddd") != std::string::npos);
    CHECK(summary.find("clean_nll") != std::string::npos);

    RunReport empty;
    empty.kind = "evaluate";
    CHECK_THROWS_AS(emit_report(empty, (fresh_dir("emit3")).string()), Error);
}
