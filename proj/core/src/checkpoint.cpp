#include "survgen/checkpoint.hpp"

#include "survgen/errors.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace survgen {

namespace {

constexpr const char* kMagic = "survgen-checkpoint v1";

std::string hexfloat(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

double parse_hexfloat(const std::string& tok, const std::string& path) {
    const char* begin = tok.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0')
        fail(ErrorCategory::Schema, path + ": bad value '" + tok + "'");
    return v;
}

} // namespace

void save_checkpoint(const std::string& path, const Model& model, const std::string& config_hash) {
    const auto params = named_parameters(model);
    std::ostringstream out;
    out << kMagic << "\n";
    out << "config_hash " << config_hash << "\n";
    out << "f_image " << model.backbone.f_image << "\n";
    out << "f_gene " << model.backbone.f_gene << "\n";
    out << "hidden " << model.backbone.hidden << "\n";
    out << "latent " << model.backbone.d << "\n";
    out << "bins " << model.backbone.bins << "\n";
    out << "anchor_trainable " << (model.dirac.anchor.requires_grad() ? 1 : 0) << "\n";
    out << "tensors " << params.size() << "\n";
    for (const auto& [name, t] : params) {
        out << "tensor " << name << " " << t.rows() << " " << t.cols() << "\n";
        const auto& v = t.value();
        for (std::size_t r = 0; r < t.rows(); ++r) {
            for (std::size_t c = 0; c < t.cols(); ++c)
                out << (c ? " " : "") << hexfloat(v[r * t.cols() + c]);
            out << "\n";
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(ErrorCategory::Io, "cannot write checkpoint " + path);
    f << out.str();
    if (!f) fail(ErrorCategory::Io, "short write to checkpoint " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail(ErrorCategory::Io, "cannot open checkpoint " + path);
    std::string line;
    if (!std::getline(f, line) || line != kMagic)
        fail(ErrorCategory::Schema, path + ": not a checkpoint file");

    std::map<std::string, std::string> header;
    std::size_t tensor_count = 0;
    while (std::getline(f, line)) {
        std::istringstream in(line);
        std::string key;
        in >> key;
        if (key == "tensors") {
            in >> tensor_count;
            break;
        }
        std::string value;
        in >> value;
        header[key] = value;
    }
    for (const char* key :
         {"config_hash", "f_image", "f_gene", "hidden", "latent", "bins", "anchor_trainable"})
        if (!header.count(key))
            fail(ErrorCategory::Schema, path + ": header missing '" + std::string(key) + "'");

    const std::size_t f_image = std::stoull(header["f_image"]);
    const std::size_t f_gene = std::stoull(header["f_gene"]);
    const std::size_t hidden = std::stoull(header["hidden"]);
    const std::size_t latent = std::stoull(header["latent"]);
    const std::size_t bins = std::stoull(header["bins"]);
    const bool anchor_trainable = header["anchor_trainable"] == "1";

    std::map<std::string, Tensor> tensors;
    for (std::size_t k = 0; k < tensor_count; ++k) {
        if (!std::getline(f, line))
            fail(ErrorCategory::Schema, path + ": truncated at tensor " + std::to_string(k));
        std::istringstream in(line);
        std::string word, name;
        std::size_t rows = 0, cols = 0;
        in >> word >> name >> rows >> cols;
        if (word != "tensor" || name.empty() || rows == 0 || cols == 0)
            fail(ErrorCategory::Schema, path + ": bad tensor record '" + line + "'");
        std::vector<double> vals;
        vals.reserve(rows * cols);
        for (std::size_t r = 0; r < rows; ++r) {
            if (!std::getline(f, line))
                fail(ErrorCategory::Schema, path + ": truncated inside tensor " + name);
            std::istringstream row(line);
            std::string tok;
            std::size_t c = 0;
            while (row >> tok) {
                vals.push_back(parse_hexfloat(tok, path));
                ++c;
            }
            if (c != cols)
                fail(ErrorCategory::Schema, path + ": tensor " + name + " row " +
                                                std::to_string(r) + " has " + std::to_string(c) +
                                                " values, expected " + std::to_string(cols));
        }
        tensors.emplace(name, Tensor(Shape{rows, cols}, std::move(vals), true));
    }

    LoadedCheckpoint out;
    out.config_hash = header["config_hash"];
    // Build the model skeleton, then swap in the stored tensors by name.
    out.model = make_model(f_image, f_gene, hidden, latent, bins, 0, anchor_trainable);
    auto take = [&](const std::string& name, std::size_t rows, std::size_t cols) {
        const auto it = tensors.find(name);
        if (it == tensors.end())
            fail(ErrorCategory::Schema, path + ": missing tensor '" + name + "'");
        if (it->second.rows() != rows || it->second.cols() != cols)
            fail(ErrorCategory::Schema, path + ": tensor '" + name + "' is " +
                                            shape_str(it->second.shape()) + ", expected " +
                                            std::to_string(rows) + "x" + std::to_string(cols));
        return it->second;
    };
    BackboneParams& b = out.model.backbone;
    b.enc_image.w1 = take("enc_image.w1", f_image, hidden);
    b.enc_image.b1 = take("enc_image.b1", 1, hidden);
    b.enc_image.w2 = take("enc_image.w2", hidden, hidden);
    b.enc_image.b2 = take("enc_image.b2", 1, hidden);
    b.enc_gene.w1 = take("enc_gene.w1", f_gene, hidden);
    b.enc_gene.b1 = take("enc_gene.b1", 1, hidden);
    b.enc_gene.w2 = take("enc_gene.w2", hidden, hidden);
    b.enc_gene.b2 = take("enc_gene.b2", 1, hidden);
    b.proj_image = take("proj_image", hidden, latent);
    b.proj_gene = take("proj_gene", hidden, latent);
    b.wq = take("attn.wq", latent, latent);
    b.wk = take("attn.wk", latent, latent);
    b.wv = take("attn.wv", latent, latent);
    b.wo = take("attn.wo", latent, latent);
    b.head_w = take("head.w", latent, bins);
    b.head_b = take("head.b", 1, bins);
    out.model.dirac.phi_weights = take("dirac.phi", latent, latent);
    Tensor anchor = take("dirac.anchor", 1, latent);
    if (!anchor_trainable) anchor = Tensor(anchor.shape(), anchor.value(), false);
    out.model.dirac.anchor = anchor;
    if (tensors.size() != named_parameters(out.model).size())
        fail(ErrorCategory::Schema, path + ": unexpected extra tensors in checkpoint");
    return out;
}

} // namespace survgen
