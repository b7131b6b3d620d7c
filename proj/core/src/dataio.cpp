#include "survgen/dataio.hpp"

#include "survgen/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

namespace survgen {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Signal geometry is drawn from this fixed constant, not the domain seed, so
// every domain shares the same risk directions and differs only in nuisance.
constexpr std::uint64_t kGeometrySeed = 0x27b1e503a4c9f86dULL;
constexpr double kPatchNoiseSigma = 0.25;
constexpr int kSchemaVersion = 1;
constexpr std::size_t kGenesPerPathway = 4;

std::vector<double> unit_vector(std::size_t d, RngStream& rng) {
    std::vector<double> v(d);
    double norm = 0.0;
    for (double& x : v) {
        x = rng.normal();
        norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) {
        v[0] = 1.0;
    } else {
        for (double& x : v) x /= norm;
    }
    return v;
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& tok, const std::string& file, std::size_t line_no) {
    const char* begin = tok.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0')
        fail(ErrorCategory::Schema, file + ": line " + std::to_string(line_no) +
                                        ": not a number: '" + tok + "'");
    if (!std::isfinite(v))
        fail(ErrorCategory::Data, file + ": line " + std::to_string(line_no) +
                                      ": non-finite value '" + tok + "'");
    return v;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCategory::Io, "cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

// Headers look like: "# schema=1 rows=16 cols=24". Returns key->value.
std::map<std::string, std::size_t> parse_header(const std::string& line, const std::string& file) {
    if (line.rfind("# ", 0) != 0)
        fail(ErrorCategory::Schema, file + ": missing '# ' header line");
    std::map<std::string, std::size_t> kv;
    std::istringstream in(line.substr(2));
    std::string field;
    while (in >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos)
            fail(ErrorCategory::Schema, file + ": malformed header field '" + field + "'");
        kv[field.substr(0, eq)] = static_cast<std::size_t>(std::stoull(field.substr(eq + 1)));
    }
    if (!kv.count("schema") || kv["schema"] != kSchemaVersion)
        fail(ErrorCategory::Schema, file + ": unsupported schema version");
    return kv;
}

void require_field(const std::map<std::string, std::size_t>& kv, const char* key,
                   std::size_t expected, const std::string& file) {
    const auto it = kv.find(key);
    if (it == kv.end())
        fail(ErrorCategory::Schema, file + ": header missing '" + key + "'");
    if (it->second != expected)
        fail(ErrorCategory::Schema, file + ": header " + key + "=" + std::to_string(it->second) +
                                        " but expected " + std::to_string(expected));
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCategory::Io, "cannot write " + path);
    out << content;
    if (!out) fail(ErrorCategory::Io, "short write to " + path);
}

} // namespace

void validate_spec(const DomainSpec& spec) {
    if (spec.domain_id.empty()) fail(ErrorCategory::Param, "domain: empty id");
    if (spec.n_samples < 1 || spec.patches_per_sample < 1 || spec.pathways < 1 ||
        spec.signal_dim < 1)
        fail(ErrorCategory::Param, "domain " + spec.domain_id + ": all sizes must be positive");
    if (!(spec.patch_signal_fraction > 0.0 && spec.patch_signal_fraction <= 1.0))
        fail(ErrorCategory::Param, "domain " + spec.domain_id +
                                       ": patch_signal_fraction must lie in (0,1]");
    if (!(spec.censor_fraction >= 0.0 && spec.censor_fraction < 1.0))
        fail(ErrorCategory::Param, "domain " + spec.domain_id + ": censor_fraction must lie in [0,1)");
    if (spec.gene_noise_scale < 0.0)
        fail(ErrorCategory::Param, "domain " + spec.domain_id + ": gene_noise_scale must be >= 0");
    if (!spec.domain_shift_offset.empty() && spec.domain_shift_offset.size() != spec.signal_dim)
        fail(ErrorCategory::Param, "domain " + spec.domain_id + ": offset length " +
                                       std::to_string(spec.domain_shift_offset.size()) +
                                       " vs signal_dim " + std::to_string(spec.signal_dim));
    for (double v : spec.domain_shift_offset)
        if (!std::isfinite(v))
            fail(ErrorCategory::Param, "domain " + spec.domain_id + ": non-finite offset entry");
}

ModalityBatch generate_domain(const DomainSpec& spec) {
    validate_spec(spec);
    const std::size_t n = spec.n_samples, p = spec.patches_per_sample, q = spec.pathways,
                      d = spec.signal_dim;
    const std::size_t signal_count = std::min(
        p, static_cast<std::size_t>(std::ceil(spec.patch_signal_fraction * static_cast<double>(p))));
    std::vector<double> offset = spec.domain_shift_offset;
    offset.resize(d, 0.0);

    RngStream geom = make_stream(kGeometrySeed, {kStreamGeometry, 1});
    const std::vector<double> patch_dir = unit_vector(d, geom);
    std::vector<std::vector<double>> gene_dirs(q);
    for (std::size_t t = 0; t < q; ++t) {
        RngStream gs = make_stream(kGeometrySeed, {kStreamGeometry, 2, t});
        gene_dirs[t] = unit_vector(d, gs);
    }

    ModalityBatch batch;
    batch.patch_tokens.reserve(n);
    batch.pathway_tokens.reserve(n);
    batch.labels.reserve(n);
    batch.sample_ids.reserve(n);

    for (std::size_t i = 0; i < n; ++i) {
        RngStream risk = make_stream(spec.seed, {kStreamRisk, i});
        const double u = risk.normal();
        const double event_time = risk.exponential(std::exp(u));

        RngStream pick = make_stream(spec.seed, {kStreamSignalPick, i});
        const std::vector<std::size_t> signal_rows =
            pick.sample_without_replacement(p, signal_count);
        std::unordered_set<std::size_t> is_signal(signal_rows.begin(), signal_rows.end());

        RngStream pnoise = make_stream(spec.seed, {kStreamPatchNoise, i});
        std::vector<double> patches(p * d);
        for (std::size_t r = 0; r < p; ++r) {
            const bool sig = is_signal.count(r) > 0;
            for (std::size_t j = 0; j < d; ++j) {
                const double noise = pnoise.normal();
                patches[r * d + j] = offset[j] + (sig ? u * patch_dir[j] + kPatchNoiseSigma * noise
                                                      : noise);
            }
        }

        RngStream gnoise = make_stream(spec.seed, {kStreamGeneNoise, i});
        std::vector<double> pathways(q * d);
        for (std::size_t t = 0; t < q; ++t)
            for (std::size_t j = 0; j < d; ++j)
                pathways[t * d + j] = u * gene_dirs[t][j] + spec.gene_noise_scale * gnoise.normal();

        char id[64];
        std::snprintf(id, sizeof(id), "%s-s%04zu", spec.domain_id.c_str(), i);
        batch.sample_ids.emplace_back(id);
        batch.patch_tokens.emplace_back(Shape{p, d}, std::move(patches), false);
        batch.pathway_tokens.emplace_back(Shape{q, d}, std::move(pathways), false);
        batch.labels.push_back(SurvivalRecord{event_time, true, 0});
    }

    const std::size_t n_censored =
        static_cast<std::size_t>(std::llround(spec.censor_fraction * static_cast<double>(n)));
    if (n_censored > 0) {
        RngStream censor = make_stream(spec.seed, {kStreamCensor});
        for (std::size_t idx : censor.sample_without_replacement(n, n_censored)) {
            double cut;
            do {
                cut = censor.uniform();
            } while (cut == 0.0);
            batch.labels[idx].time *= cut; // strictly below the latent event time
            batch.labels[idx].event = false;
        }
    }
    return batch;
}

Tensor sample_patches(const Tensor& patches, std::size_t n_train, RngStream& rng) {
    if (n_train < 1) fail(ErrorCategory::Param, "sample_patches: n_train must be >= 1");
    const std::size_t p = patches.rows(), d = patches.cols();
    if (p <= n_train) return patches;
    const std::vector<std::size_t> keep = rng.sample_without_replacement(p, n_train);
    std::vector<double> out(n_train * d);
    for (std::size_t r = 0; r < keep.size(); ++r)
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = patches.at(keep[r], j);
    return Tensor(Shape{n_train, d}, std::move(out), false);
}

FeatureFileSchema dataset_layout(const std::string& dir) {
    FeatureFileSchema schema;
    schema.manifest_path = (fs::path(dir) / "manifest").string();
    schema.patches_dir = (fs::path(dir) / "patches").string();
    schema.pathways_path = (fs::path(dir) / "pathways.csv").string();
    schema.labels_path = (fs::path(dir) / "labels.csv").string();
    schema.membership_path = (fs::path(dir) / "membership.csv").string();
    return schema;
}

void save_dataset(const std::string& dir, const ModalityBatch& batch, const DomainSpec& spec) {
    validate_spec(spec);
    validate_batch(batch);
    const std::size_t n = batch.n(), p = spec.patches_per_sample, q = spec.pathways,
                      d = spec.signal_dim;
    if (n != spec.n_samples)
        fail(ErrorCategory::Shape, "save_dataset: batch has " + std::to_string(n) +
                                       " samples, spec says " + std::to_string(spec.n_samples));
    for (std::size_t i = 0; i < n; ++i) {
        if (batch.patch_tokens[i].rows() != p || batch.patch_tokens[i].cols() != d)
            fail(ErrorCategory::Shape, "save_dataset: sample " + batch.sample_ids[i] +
                                           " patch shape " + shape_str(batch.patch_tokens[i].shape()));
        if (batch.pathway_tokens[i].rows() != q || batch.pathway_tokens[i].cols() != d)
            fail(ErrorCategory::Shape, "save_dataset: sample " + batch.sample_ids[i] +
                                           " pathway shape " +
                                           shape_str(batch.pathway_tokens[i].shape()));
    }

    const FeatureFileSchema schema = dataset_layout(dir);
    fs::create_directories(schema.patches_dir);

    json manifest;
    manifest["schema_version"] = kSchemaVersion;
    manifest["domain_id"] = spec.domain_id;
    manifest["n_samples"] = spec.n_samples;
    manifest["patches_per_sample"] = spec.patches_per_sample;
    manifest["pathways"] = spec.pathways;
    manifest["signal_dim"] = spec.signal_dim;
    manifest["patch_signal_fraction"] = spec.patch_signal_fraction;
    std::vector<double> offset = spec.domain_shift_offset;
    offset.resize(d, 0.0);
    manifest["domain_shift_offset"] = offset;
    manifest["gene_noise_scale"] = spec.gene_noise_scale;
    manifest["censor_fraction"] = spec.censor_fraction;
    manifest["seed"] = spec.seed;
    manifest["samples"] = batch.sample_ids;
    write_file(schema.manifest_path, manifest.dump(2) + "\n");

    for (std::size_t i = 0; i < n; ++i) {
        std::ostringstream out;
        out << "# schema=" << kSchemaVersion << " rows=" << p << " cols=" << d << "\n";
        const auto& v = batch.patch_tokens[i].value();
        for (std::size_t r = 0; r < p; ++r) {
            for (std::size_t j = 0; j < d; ++j)
                out << (j ? "," : "") << fmt_double(v[r * d + j]);
            out << "\n";
        }
        write_file((fs::path(schema.patches_dir) / (batch.sample_ids[i] + ".csv")).string(),
                   out.str());
    }

    {
        std::ostringstream out;
        out << "# schema=" << kSchemaVersion << " samples=" << n << " pathways=" << q
            << " cols=" << d << "\n";
        out << "sample_id,pathway";
        for (std::size_t j = 0; j < d; ++j) out << ",f" << j;
        out << "\n";
        for (std::size_t i = 0; i < n; ++i) {
            const auto& v = batch.pathway_tokens[i].value();
            for (std::size_t t = 0; t < q; ++t) {
                out << batch.sample_ids[i] << "," << t;
                for (std::size_t j = 0; j < d; ++j) out << "," << fmt_double(v[t * d + j]);
                out << "\n";
            }
        }
        write_file(schema.pathways_path, out.str());
    }

    {
        std::ostringstream out;
        out << "# schema=" << kSchemaVersion << " rows=" << n << "\n";
        out << "sample_id,time,event\n";
        for (std::size_t i = 0; i < n; ++i)
            out << batch.sample_ids[i] << "," << fmt_double(batch.labels[i].time) << ","
                << (batch.labels[i].event ? 1 : 0) << "\n";
        write_file(schema.labels_path, out.str());
    }

    {
        const std::size_t genes = q * kGenesPerPathway;
        std::ostringstream out;
        out << "# schema=" << kSchemaVersion << " genes=" << genes << " pathways=" << q << "\n";
        out << "gene_id,pathway\n";
        for (std::size_t g = 0; g < genes; ++g) {
            char gid[32];
            std::snprintf(gid, sizeof(gid), "g%05zu", g);
            out << gid << "," << g / kGenesPerPathway << "\n";
        }
        write_file(schema.membership_path, out.str());
    }
}

LoadedDataset load_features(const FeatureFileSchema& schema) {
    LoadedDataset ds;

    std::ifstream mf(schema.manifest_path);
    if (!mf) fail(ErrorCategory::Io, "cannot open " + schema.manifest_path);
    json manifest;
    try {
        manifest = json::parse(mf);
    } catch (const json::exception& e) {
        fail(ErrorCategory::Schema, schema.manifest_path + ": " + e.what());
    }
    try {
        if (manifest.at("schema_version").get<int>() != kSchemaVersion)
            fail(ErrorCategory::Schema, schema.manifest_path + ": unsupported schema version");
        ds.spec.domain_id = manifest.at("domain_id").get<std::string>();
        ds.spec.n_samples = manifest.at("n_samples").get<std::size_t>();
        ds.spec.patches_per_sample = manifest.at("patches_per_sample").get<std::size_t>();
        ds.spec.pathways = manifest.at("pathways").get<std::size_t>();
        ds.spec.signal_dim = manifest.at("signal_dim").get<std::size_t>();
        ds.spec.patch_signal_fraction = manifest.at("patch_signal_fraction").get<double>();
        ds.spec.domain_shift_offset = manifest.at("domain_shift_offset").get<std::vector<double>>();
        ds.spec.gene_noise_scale = manifest.at("gene_noise_scale").get<double>();
        ds.spec.censor_fraction = manifest.at("censor_fraction").get<double>();
        ds.spec.seed = manifest.at("seed").get<std::uint64_t>();
        ds.batch.sample_ids = manifest.at("samples").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        fail(ErrorCategory::Schema, schema.manifest_path + ": " + e.what());
    }
    validate_spec(ds.spec);
    const std::size_t n = ds.spec.n_samples, p = ds.spec.patches_per_sample,
                      q = ds.spec.pathways, d = ds.spec.signal_dim;
    if (ds.batch.sample_ids.size() != n)
        fail(ErrorCategory::Schema, schema.manifest_path + ": sample list length " +
                                        std::to_string(ds.batch.sample_ids.size()) +
                                        " vs n_samples " + std::to_string(n));

    // Membership first: it is the authority on the pathway count.
    {
        const auto lines = read_lines(schema.membership_path);
        if (lines.size() < 2)
            fail(ErrorCategory::Schema, schema.membership_path + ": truncated");
        auto kv = parse_header(lines[0], schema.membership_path);
        require_field(kv, "pathways", q, schema.membership_path);
        const std::size_t genes = kv.count("genes") ? kv["genes"] : 0;
        if (lines.size() != genes + 2)
            fail(ErrorCategory::Schema, schema.membership_path + ": expected " +
                                            std::to_string(genes) + " gene rows, found " +
                                            std::to_string(lines.size() - 2));
        std::unordered_set<std::size_t> seen;
        for (std::size_t r = 2; r < lines.size(); ++r) {
            const auto toks = split_csv(lines[r]);
            if (toks.size() != 2)
                fail(ErrorCategory::Schema, schema.membership_path + ": line " +
                                                std::to_string(r + 1) + ": expected 2 columns");
            const std::size_t pw = static_cast<std::size_t>(std::stoull(toks[1]));
            if (pw >= q)
                fail(ErrorCategory::Schema, schema.membership_path + ": line " +
                                                std::to_string(r + 1) + ": pathway " + toks[1] +
                                                " out of range");
            seen.insert(pw);
        }
        if (seen.size() != q)
            fail(ErrorCategory::Schema, schema.membership_path + ": " +
                                            std::to_string(seen.size()) +
                                            " distinct pathways, manifest says " + std::to_string(q));
    }

    for (std::size_t i = 0; i < n; ++i) {
        const std::string path =
            (fs::path(schema.patches_dir) / (ds.batch.sample_ids[i] + ".csv")).string();
        const auto lines = read_lines(path);
        if (lines.empty()) fail(ErrorCategory::Schema, path + ": empty file");
        auto kv = parse_header(lines[0], path);
        require_field(kv, "rows", p, path);
        require_field(kv, "cols", d, path);
        if (lines.size() != p + 1)
            fail(ErrorCategory::Schema, path + ": header promises " + std::to_string(p) +
                                            " rows, file has " + std::to_string(lines.size() - 1));
        std::vector<double> vals(p * d);
        for (std::size_t r = 0; r < p; ++r) {
            const auto toks = split_csv(lines[r + 1]);
            if (toks.size() != d)
                fail(ErrorCategory::Schema, path + ": line " + std::to_string(r + 2) + ": " +
                                                std::to_string(toks.size()) + " columns, expected " +
                                                std::to_string(d));
            for (std::size_t j = 0; j < d; ++j)
                vals[r * d + j] = parse_double(toks[j], path, r + 2);
        }
        ds.batch.patch_tokens.emplace_back(Shape{p, d}, std::move(vals), false);
    }

    {
        const auto lines = read_lines(schema.pathways_path);
        if (lines.size() < 2) fail(ErrorCategory::Schema, schema.pathways_path + ": truncated");
        auto kv = parse_header(lines[0], schema.pathways_path);
        require_field(kv, "samples", n, schema.pathways_path);
        require_field(kv, "pathways", q, schema.pathways_path);
        require_field(kv, "cols", d, schema.pathways_path);
        if (lines.size() != n * q + 2)
            fail(ErrorCategory::Schema, schema.pathways_path + ": expected " +
                                            std::to_string(n * q) + " data rows, found " +
                                            std::to_string(lines.size() - 2));
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> vals(q * d);
            for (std::size_t t = 0; t < q; ++t) {
                const std::size_t line_no = 2 + i * q + t;
                const auto toks = split_csv(lines[line_no]);
                if (toks.size() != d + 2)
                    fail(ErrorCategory::Schema, schema.pathways_path + ": line " +
                                                    std::to_string(line_no + 1) + ": " +
                                                    std::to_string(toks.size()) +
                                                    " columns, expected " + std::to_string(d + 2));
                if (toks[0] != ds.batch.sample_ids[i])
                    fail(ErrorCategory::Schema, schema.pathways_path + ": line " +
                                                    std::to_string(line_no + 1) +
                                                    ": sample id '" + toks[0] + "' out of order");
                if (static_cast<std::size_t>(std::stoull(toks[1])) != t)
                    fail(ErrorCategory::Schema, schema.pathways_path + ": line " +
                                                    std::to_string(line_no + 1) +
                                                    ": pathway index out of order");
                for (std::size_t j = 0; j < d; ++j)
                    vals[t * d + j] = parse_double(toks[j + 2], schema.pathways_path, line_no + 1);
            }
            ds.batch.pathway_tokens.emplace_back(Shape{q, d}, std::move(vals), false);
        }
    }

    {
        const auto lines = read_lines(schema.labels_path);
        if (lines.size() < 2) fail(ErrorCategory::Schema, schema.labels_path + ": truncated");
        auto kv = parse_header(lines[0], schema.labels_path);
        require_field(kv, "rows", n, schema.labels_path);
        if (lines.size() != n + 2)
            fail(ErrorCategory::Schema, schema.labels_path + ": expected " + std::to_string(n) +
                                            " data rows, found " + std::to_string(lines.size() - 2));
        for (std::size_t i = 0; i < n; ++i) {
            const auto toks = split_csv(lines[i + 2]);
            if (toks.size() != 3)
                fail(ErrorCategory::Schema, schema.labels_path + ": line " +
                                                std::to_string(i + 3) + ": expected 3 columns");
            if (toks[0] != ds.batch.sample_ids[i])
                fail(ErrorCategory::Schema, schema.labels_path + ": line " + std::to_string(i + 3) +
                                                ": sample id '" + toks[0] + "' out of order");
            SurvivalRecord rec;
            rec.time = parse_double(toks[1], schema.labels_path, i + 3);
            if (rec.time < 0.0)
                fail(ErrorCategory::Data, schema.labels_path + ": line " + std::to_string(i + 3) +
                                              ": negative time");
            if (toks[2] != "0" && toks[2] != "1")
                fail(ErrorCategory::Data, schema.labels_path + ": line " + std::to_string(i + 3) +
                                              ": event must be 0 or 1");
            rec.event = toks[2] == "1";
            ds.batch.labels.push_back(rec);
        }
    }

    validate_batch(ds.batch);
    return ds;
}

LoadedDataset load_dataset(const std::string& dir) {
    return load_features(dataset_layout(dir));
}

} // namespace survgen
