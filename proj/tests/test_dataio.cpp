#include <survgen/dataio.hpp>
#include <survgen/errors.hpp>
#include <survgen/rng.hpp>

#include <doctest.h>

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace survgen;
namespace fs = std::filesystem;

namespace {

DomainSpec small_spec(const std::string& id, std::uint64_t seed) {
    DomainSpec spec;
    spec.domain_id = id;
    spec.n_samples = 12;
    spec.patches_per_sample = 5;
    spec.pathways = 3;
    spec.signal_dim = 4;
    spec.patch_signal_fraction = 0.4;
    spec.gene_noise_scale = 0.5;
    spec.censor_fraction = 0.25;
    spec.seed = seed;
    return spec;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "survgen_dataio_tests" / name;
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

void expect_identical_trees(const fs::path& a, const fs::path& b) {
    std::vector<fs::path> rel;
    for (const auto& entry : fs::recursive_directory_iterator(a))
        if (entry.is_regular_file()) rel.push_back(fs::relative(entry.path(), a));
    REQUIRE(!rel.empty());
    std::size_t b_files = 0;
    for (const auto& entry : fs::recursive_directory_iterator(b))
        if (entry.is_regular_file()) ++b_files;
    CHECK(b_files == rel.size());
    for (const fs::path& r : rel) {
        INFO("file ", r.string());
        CHECK(slurp(a / r) == slurp(b / r));
    }
}

} // namespace

TEST_CASE("generation is a pure function of the domain settings") {
    const DomainSpec spec = small_spec("A", 11);
    const ModalityBatch one = generate_domain(spec);
    const ModalityBatch two = generate_domain(spec);
    REQUIRE(one.n() == spec.n_samples);
    for (std::size_t i = 0; i < one.n(); ++i) {
        CHECK(one.sample_ids[i] == two.sample_ids[i]);
        CHECK(one.patch_tokens[i].value() == two.patch_tokens[i].value());
        CHECK(one.pathway_tokens[i].value() == two.pathway_tokens[i].value());
        CHECK(one.labels[i].time == two.labels[i].time);
        CHECK(one.labels[i].event == two.labels[i].event);
    }

    const ModalityBatch other = generate_domain(small_spec("A", 12));
    CHECK(one.patch_tokens[0].value() != other.patch_tokens[0].value());
}

TEST_CASE("shapes ids and finiteness") {
    const DomainSpec spec = small_spec("Q", 3);
    const ModalityBatch batch = generate_domain(spec);
    REQUIRE(batch.sample_ids.size() == 12);
    CHECK(batch.sample_ids[0] == "Q-s0000");
    CHECK(batch.sample_ids[11] == "Q-s0011");
    for (std::size_t i = 0; i < batch.n(); ++i) {
        CHECK(batch.patch_tokens[i].rows() == 5);
        CHECK(batch.patch_tokens[i].cols() == 4);
        CHECK(batch.pathway_tokens[i].rows() == 3);
        CHECK(batch.pathway_tokens[i].cols() == 4);
        CHECK(batch.labels[i].time > 0.0);
        for (double v : batch.patch_tokens[i].value()) CHECK(std::isfinite(v));
        for (double v : batch.pathway_tokens[i].value()) CHECK(std::isfinite(v));
    }
}

TEST_CASE("noise-free pathway rows are collinear across samples") {
    // With zero gene noise every pathway row is the shared direction scaled
    // by the sample's latent risk, so cross-sample ratios agree across all
    // coordinates and pathways simultaneously.
    DomainSpec spec = small_spec("C", 19);
    spec.gene_noise_scale = 0.0;
    spec.censor_fraction = 0.0;
    const ModalityBatch batch = generate_domain(spec);

    std::size_t ref = 0;
    double best = 0;
    for (std::size_t i = 0; i < batch.n(); ++i) {
        double norm = 0;
        for (double v : batch.pathway_tokens[i].value()) norm += v * v;
        if (norm > best) {
            best = norm;
            ref = i;
        }
    }
    const std::vector<double>& g_ref = batch.pathway_tokens[ref].value();

    for (std::size_t i = 0; i < batch.n(); ++i) {
        const std::vector<double>& g = batch.pathway_tokens[i].value();
        double ratio = 0;
        bool have_ratio = false;
        for (std::size_t k = 0; k < g.size(); ++k) {
            if (std::abs(g_ref[k]) < 1e-6) continue;
            const double r = g[k] / g_ref[k];
            if (!have_ratio) {
                ratio = r;
                have_ratio = true;
            } else {
                CHECK(r == doctest::Approx(ratio).epsilon(1e-10));
            }
        }
        CHECK(have_ratio);
    }
}

TEST_CASE("pooled patches regress onto the gene-derived risk score") {
    // All patches carry signal and the offset is zero, so the patch pool mean
    // is linear in the latent risk up to averaged noise. The score here is
    // read off the noise-free gene side, making this an independent check
    // that both modalities encode the same scalar.
    DomainSpec spec;
    spec.domain_id = "R";
    spec.n_samples = 80;
    spec.patches_per_sample = 128;
    spec.pathways = 2;
    spec.signal_dim = 8;
    spec.patch_signal_fraction = 1.0;
    spec.gene_noise_scale = 0.0;
    spec.censor_fraction = 0.0;
    spec.seed = 29;
    const ModalityBatch batch = generate_domain(spec);
    const std::size_t n = batch.n(), p = spec.patches_per_sample, d = spec.signal_dim;

    std::size_t ref = 0;
    double best = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double norm = 0;
        for (double v : batch.pathway_tokens[i].value()) norm += v * v;
        if (norm > best) {
            best = norm;
            ref = i;
        }
    }
    std::vector<double> score(n);
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0;
        const auto& g = batch.pathway_tokens[i].value();
        const auto& gr = batch.pathway_tokens[ref].value();
        for (std::size_t k = 0; k < g.size(); ++k) dot += g[k] * gr[k];
        score[i] = dot;
    }

    std::vector<double> pooled(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& pv = batch.patch_tokens[i].value();
        for (std::size_t j = 0; j < d; ++j) {
            double m = 0;
            for (std::size_t r = 0; r < p; ++r) m += pv[r * d + j];
            pooled[i * d + j] = m / static_cast<double>(p);
        }
    }

    double s_mean = 0;
    for (double s : score) s_mean += s;
    s_mean /= n;
    double s_var = 0;
    for (double s : score) s_var += (s - s_mean) * (s - s_mean);
    REQUIRE(s_var > 0);

    double ss_res = 0, ss_tot = 0;
    for (std::size_t j = 0; j < d; ++j) {
        double m_mean = 0;
        for (std::size_t i = 0; i < n; ++i) m_mean += pooled[i * d + j];
        m_mean /= n;
        double cov = 0;
        for (std::size_t i = 0; i < n; ++i)
            cov += (score[i] - s_mean) * (pooled[i * d + j] - m_mean);
        const double slope = cov / s_var;
        for (std::size_t i = 0; i < n; ++i) {
            const double centered = pooled[i * d + j] - m_mean;
            const double resid = centered - slope * (score[i] - s_mean);
            ss_res += resid * resid;
            ss_tot += centered * centered;
        }
    }
    REQUIRE(ss_tot > 0);
    CHECK(1.0 - ss_res / ss_tot > 0.99);
}

TEST_CASE("a domain offset shifts every patch feature and nothing else") {
    DomainSpec base = small_spec("S", 23);
    base.censor_fraction = 0.0;
    DomainSpec shifted = base;
    shifted.domain_shift_offset = {0.8, -0.3, 0.0, 1.2};

    const ModalityBatch b0 = generate_domain(base);
    const ModalityBatch b1 = generate_domain(shifted);
    for (std::size_t i = 0; i < b0.n(); ++i) {
        const auto& p0 = b0.patch_tokens[i].value();
        const auto& p1 = b1.patch_tokens[i].value();
        for (std::size_t r = 0; r < 5; ++r)
            for (std::size_t j = 0; j < 4; ++j)
                CHECK(p1[r * 4 + j] - p0[r * 4 + j] ==
                      doctest::Approx(shifted.domain_shift_offset[j]).epsilon(1e-12));
        CHECK(b0.pathway_tokens[i].value() == b1.pathway_tokens[i].value());
        CHECK(b0.labels[i].time == b1.labels[i].time);
        CHECK(b0.labels[i].event == b1.labels[i].event);
    }
}

TEST_CASE("censoring cuts strictly below the latent event time") {
    DomainSpec spec = small_spec("T", 31);
    spec.n_samples = 40;
    spec.censor_fraction = 0.25;
    DomainSpec latent_spec = spec;
    latent_spec.censor_fraction = 0.0;

    const ModalityBatch observed = generate_domain(spec);
    const ModalityBatch latent = generate_domain(latent_spec);

    std::size_t censored = 0;
    for (std::size_t i = 0; i < observed.n(); ++i) {
        if (observed.labels[i].event) {
            CHECK(observed.labels[i].time == latent.labels[i].time);
        } else {
            ++censored;
            CHECK(observed.labels[i].time < latent.labels[i].time);
            CHECK(observed.labels[i].time > 0.0);
        }
    }
    CHECK(censored == 10); // exactly round(0.25 * 40)
}

TEST_CASE("patch subsampling keeps original rows in order") {
    DomainSpec spec = small_spec("U", 37);
    const ModalityBatch batch = generate_domain(spec);
    const Tensor& patches = batch.patch_tokens[0]; // 5 x 4

    RngStream rng(99);
    const Tensor sub = sample_patches(patches, 3, rng);
    REQUIRE(sub.rows() == 3);
    REQUIRE(sub.cols() == 4);
    // Every kept row appears verbatim in the source, in ascending order.
    std::size_t cursor = 0;
    for (std::size_t r = 0; r < 3; ++r) {
        bool found = false;
        for (; cursor < 5 && !found; ++cursor) {
            bool same = true;
            for (std::size_t j = 0; j < 4; ++j)
                same = same && sub.at(r, j) == patches.at(cursor, j);
            found = same;
        }
        CHECK(found);
    }

    RngStream rng2(100);
    const Tensor whole = sample_patches(patches, 5, rng2);
    CHECK(whole.value() == patches.value());
    const Tensor more = sample_patches(patches, 9, rng2);
    CHECK(more.value() == patches.value());
    CHECK_THROWS_AS(sample_patches(patches, 0, rng2), Error);
}

TEST_CASE("save then load returns the same data and re-saving is byte-stable") {
    const DomainSpec spec = small_spec("V", 41);
    const ModalityBatch batch = generate_domain(spec);

    const fs::path d1 = fresh_dir("roundtrip1");
    const fs::path d2 = fresh_dir("roundtrip2");
    save_dataset(d1.string(), batch, spec);
    const LoadedDataset loaded = load_dataset(d1.string());

    CHECK(loaded.spec.domain_id == spec.domain_id);
    CHECK(loaded.spec.seed == spec.seed);
    CHECK(loaded.spec.censor_fraction == spec.censor_fraction);
    REQUIRE(loaded.batch.n() == batch.n());
    for (std::size_t i = 0; i < batch.n(); ++i) {
        CHECK(loaded.batch.sample_ids[i] == batch.sample_ids[i]);
        CHECK(loaded.batch.patch_tokens[i].value() == batch.patch_tokens[i].value());
        CHECK(loaded.batch.pathway_tokens[i].value() == batch.pathway_tokens[i].value());
        CHECK(loaded.batch.labels[i].time == batch.labels[i].time);
        CHECK(loaded.batch.labels[i].event == batch.labels[i].event);
        CHECK(loaded.batch.labels[i].bin == 0);
    }

    save_dataset(d2.string(), loaded.batch, loaded.spec);
    expect_identical_trees(d1, d2);
}

TEST_CASE("loader rejects broken inputs with the right categories") {
    const DomainSpec spec = small_spec("W", 43);
    const ModalityBatch batch = generate_domain(spec);

    {
        const fs::path dir = fresh_dir("missing");
        fs::remove_all(dir);
        CHECK_THROWS_AS(load_dataset(dir.string()), Error);
        try {
            load_dataset(dir.string());
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::Io);
        }
    }
    {
        const fs::path dir = fresh_dir("badjson");
        save_dataset(dir.string(), batch, spec);
        std::ofstream(dir / "manifest", std::ios::trunc) << "{not json";
        try {
            load_dataset(dir.string());
            FAIL("expected a schema error");
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::Schema);
        }
    }
    {
        const fs::path dir = fresh_dir("shortpatch");
        save_dataset(dir.string(), batch, spec);
        const fs::path target = dir / "patches" / (batch.sample_ids[0] + ".csv");
        const std::string content = slurp(target);
        const std::size_t last_line = content.rfind('\n', content.size() - 2);
        std::ofstream(target, std::ios::trunc | std::ios::binary)
            << content.substr(0, last_line + 1);
        try {
            load_dataset(dir.string());
            FAIL("expected a schema error");
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::Schema);
        }
    }
    {
        const fs::path dir = fresh_dir("nonfinite");
        save_dataset(dir.string(), batch, spec);
        const fs::path target = dir / "patches" / (batch.sample_ids[1] + ".csv");
        std::string content = slurp(target);
        const std::size_t header_end = content.find('\n');
        const std::size_t first_comma = content.find(',', header_end);
        const std::size_t value_start = header_end + 1;
        content.replace(value_start, first_comma - value_start, "nan");
        std::ofstream(target, std::ios::trunc | std::ios::binary) << content;
        try {
            load_dataset(dir.string());
            FAIL("expected a data error");
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::Data);
        }
    }
    {
        const fs::path dir = fresh_dir("badmember");
        save_dataset(dir.string(), batch, spec);
        std::ofstream(dir / "membership.csv", std::ios::trunc)
            << "# schema=1 genes=1 pathways=3\ngene_id,pathway\ng00000,9\n";
        try {
            load_dataset(dir.string());
            FAIL("expected a schema error");
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::Schema);
        }
    }
}

TEST_CASE("membership table covers every pathway with a fixed gene fan-out") {
    const DomainSpec spec = small_spec("X", 47);
    const ModalityBatch batch = generate_domain(spec);
    const fs::path dir = fresh_dir("membership");
    save_dataset(dir.string(), batch, spec);

    std::ifstream in(dir / "membership.csv");
    REQUIRE(in.good());
    std::string line;
    std::getline(in, line); // header comment
    std::getline(in, line); // column names
    CHECK(line == "gene_id,pathway");
    std::vector<std::size_t> counts(spec.pathways, 0);
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        REQUIRE(comma != std::string::npos);
        const std::size_t pw = std::stoul(line.substr(comma + 1));
        REQUIRE(pw < spec.pathways);
        ++counts[pw];
    }
    for (std::size_t c : counts) CHECK(c == 4);
}

TEST_CASE("spec validation rejects nonsense") {
    DomainSpec spec = small_spec("Y", 53);
    spec.n_samples = 0;
    CHECK_THROWS_AS(validate_spec(spec), Error);
    spec = small_spec("Y", 53);
    spec.censor_fraction = 1.0;
    CHECK_THROWS_AS(validate_spec(spec), Error);
    spec = small_spec("Y", 53);
    spec.patch_signal_fraction = 0.0;
    CHECK_THROWS_AS(validate_spec(spec), Error);
    spec = small_spec("Y", 53);
    spec.domain_shift_offset = {1.0};
    CHECK_THROWS_AS(validate_spec(spec), Error);
    spec = small_spec("Y", 53);
    spec.domain_id = "";
    CHECK_THROWS_AS(validate_spec(spec), Error);
    try {
        validate_spec(spec);
    } catch (const Error& e) {
        CHECK(e.category() == ErrorCategory::Param);
    }
}
