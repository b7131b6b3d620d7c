#include <survgen/checkpoint.hpp>
#include <survgen/errors.hpp>
#include <survgen/fusion.hpp>

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace survgen;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "survgen_checkpoint_tests" / name;
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

void expect_equal_models(const Model& a, const Model& b) {
    const auto pa = named_parameters(a);
    const auto pb = named_parameters(b);
    REQUIRE(pa.size() == pb.size());
    for (std::size_t k = 0; k < pa.size(); ++k) {
        REQUIRE(pa[k].first == pb[k].first);
        INFO("tensor ", pa[k].first);
        REQUIRE(pa[k].second.shape() == pb[k].second.shape());
        CHECK(pa[k].second.value() == pb[k].second.value()); // bit-exact
    }
}

} // namespace

TEST_CASE("round trip restores every parameter bit for bit") {
    const Model model = make_model(6, 5, 8, 4, 3, 77);
    const fs::path dir = fresh_dir("roundtrip");
    const std::string path = (dir / "model.txt").string();
    save_checkpoint(path, model, "0123456789abcdef");

    const LoadedCheckpoint back = load_checkpoint(path);
    CHECK(back.config_hash == "0123456789abcdef");
    CHECK(back.model.backbone.f_image == 6);
    CHECK(back.model.backbone.f_gene == 5);
    CHECK(back.model.backbone.hidden == 8);
    CHECK(back.model.backbone.d == 4);
    CHECK(back.model.backbone.bins == 3);
    CHECK(back.model.dirac.anchor.requires_grad());
    expect_equal_models(model, back.model);

    // Re-saving the loaded model writes the identical byte stream.
    const std::string path2 = (dir / "model2.txt").string();
    save_checkpoint(path2, back.model, back.config_hash);
    CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("frozen anchor survives the round trip as frozen") {
    const Model model = make_model(4, 4, 6, 3, 2, 13, false);
    REQUIRE_FALSE(model.dirac.anchor.requires_grad());
    const fs::path dir = fresh_dir("frozen");
    const std::string path = (dir / "model.txt").string();
    save_checkpoint(path, model, "ffffffffffffffff");
    const LoadedCheckpoint back = load_checkpoint(path);
    CHECK_FALSE(back.model.dirac.anchor.requires_grad());
    expect_equal_models(model, back.model);
    // Everything except the anchor still takes gradients.
    CHECK(back.model.backbone.head_w.requires_grad());
}

TEST_CASE("subnormal and negative-zero values reload exactly") {
    Model model = make_model(2, 2, 3, 2, 2, 5);
    auto& vals = model.backbone.head_b.mutable_value();
    vals[0] = -0.0;
    vals[1] = 5e-324; // smallest subnormal
    const fs::path dir = fresh_dir("edgevals");
    const std::string path = (dir / "model.txt").string();
    save_checkpoint(path, model, "0000000000000000");
    const LoadedCheckpoint back = load_checkpoint(path);
    CHECK(std::signbit(back.model.backbone.head_b.value()[0]));
    CHECK(back.model.backbone.head_b.value()[1] == 5e-324);
}

TEST_CASE("loader rejects damage with the right categories") {
    const Model model = make_model(3, 3, 4, 3, 2, 9);
    const fs::path dir = fresh_dir("damage");
    const std::string path = (dir / "model.txt").string();
    save_checkpoint(path, model, "abcdefabcdefabcd");
    const std::string good = slurp(path);

    {
        try {
            load_checkpoint((dir / "absent.txt").string());
            FAIL("expected an io error");
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::Io);
        }
    }
    {
        std::ofstream(dir / "magic.txt", std::ios::binary) << "something else\n" << good;
        try {
            load_checkpoint((dir / "magic.txt").string());
            FAIL("expected a schema error");
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::Schema);
        }
    }
    {
        // Drop the final line: last tensor becomes short.
        const std::size_t cut = good.rfind('\n', good.size() - 2);
        std::ofstream(dir / "truncated.txt", std::ios::binary) << good.substr(0, cut + 1);
        try {
            load_checkpoint((dir / "truncated.txt").string());
            FAIL("expected a schema error");
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::Schema);
        }
    }
    {
        // Rename a tensor record; the model build can no longer find it.
        std::string renamed = good;
        const std::size_t pos = renamed.find("tensor head.w ");
        REQUIRE(pos != std::string::npos);
        renamed.replace(pos, 14, "tensor head.x ");
        std::ofstream(dir / "renamed.txt", std::ios::binary) << renamed;
        try {
            load_checkpoint((dir / "renamed.txt").string());
            FAIL("expected a schema error");
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::Schema);
        }
    }
    {
        // Corrupt one value into a non-number.
        std::string bad = good;
        const std::size_t pos = bad.find("0x");
        REQUIRE(pos != std::string::npos);
        bad.replace(pos, 2, "zz");
        std::ofstream(dir / "badvalue.txt", std::ios::binary) << bad;
        try {
            load_checkpoint((dir / "badvalue.txt").string());
            FAIL("expected a schema error");
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::Schema);
        }
    }
    {
        // Append an extra tensor beyond the declared set.
        std::string extra = good;
        const std::size_t pos = extra.find("tensors ");
        const std::size_t eol = extra.find('\n', pos);
        extra.replace(pos, eol - pos, "tensors 19");
        extra += "tensor bogus 1 1\n0x1p+0\n";
        std::ofstream(dir / "extra.txt", std::ios::binary) << extra;
        try {
            load_checkpoint((dir / "extra.txt").string());
            FAIL("expected a schema error");
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::Schema);
        }
    }
}
