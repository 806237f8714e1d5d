#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "rip/data.hpp"
#include "rip/error.hpp"
#include "rip/rng.hpp"
#include "rip/synth.hpp"

using namespace rip;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("rip_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

FeatureSequence make_seq(std::uint32_t t, std::uint32_t dim, Rng& rng) {
    FeatureSequence seq;
    seq.t = t;
    seq.dim = dim;
    seq.frames.resize(std::size_t(t) * dim);
    for (auto& f : seq.frames) f = static_cast<float>(rng.normal());
    return seq;
}

std::vector<unsigned char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                      std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("labels parse and format") {
    CHECK(parse_label("ST") == ManeuverLabel::ST);
    CHECK(parse_label("SS") == ManeuverLabel::SS);
    CHECK(label_code(ManeuverLabel::LLC) == 4);
    CHECK_THROWS_AS(parse_label("LEFT"), DataError);
    try {
        parse_label("nope");
    } catch (const DataError& e) {
        CHECK(e.kind == DataError::Kind::bad_label);
    }
}

TEST_CASE("ripf round-trips bit-exactly") {
    Rng rng(1);
    fs::path dir = temp_dir("ripf");
    FeatureSequence seq = make_seq(7, 5, rng);
    write_ripf(dir / "a.ripf", seq);
    FeatureSequence loaded = read_ripf(dir / "a.ripf");
    CHECK(loaded.t == seq.t);
    CHECK(loaded.dim == seq.dim);
    CHECK(std::memcmp(loaded.frames.data(), seq.frames.data(), seq.frames.size() * 4) == 0);
}

TEST_CASE("ripf header fuzz: every single-byte mutation is a typed error") {
    Rng rng(2);
    fs::path dir = temp_dir("fuzz");
    FeatureSequence seq = make_seq(3, 4, rng);
    write_ripf(dir / "f.ripf", seq);
    std::vector<unsigned char> good = slurp(dir / "f.ripf");
    std::size_t rejected = 0, accepted = 0;
    for (std::size_t pos = 0; pos < kRipfHeaderBytes; ++pos) {
        for (int v = 0; v < 256; ++v) {
            if (static_cast<unsigned char>(v) == good[pos]) continue;
            std::vector<unsigned char> mutated = good;
            mutated[pos] = static_cast<unsigned char>(v);
            try {
                FeatureSequence out = parse_ripf(mutated, "fuzz");
                (void)out;
                ++accepted;
            } catch (const DataError&) {
                ++rejected;
            }
        }
    }
    CHECK(accepted == 0);
    CHECK(rejected == kRipfHeaderBytes * 255);
}

TEST_CASE("dataset write/load round-trip and negative cases") {
    Rng rng(3);
    fs::path dir = temp_dir("ds");
    Dataset ds;
    ds.dim = 6;
    ds.views = {"front"};
    Sample s;
    s.id = "sample0";
    s.label = ManeuverLabel::RT;
    s.views.emplace("front", make_seq(4, 6, rng));
    ds.samples.push_back(std::move(s));
    write_dataset(dir, ds);

    Dataset loaded = load_dataset(dir);
    CHECK(loaded.dim == 6);
    CHECK(loaded.samples.size() == 1);
    CHECK(loaded.samples[0].label == ManeuverLabel::RT);
    const auto& a = ds.samples[0].view("front").frames;
    const auto& b = loaded.samples[0].view("front").frames;
    CHECK(std::memcmp(a.data(), b.data(), a.size() * 4) == 0);

    SUBCASE("manifest dim mismatch names the sample") {
        // rewrite the feature file with another dim
        FeatureSequence other = make_seq(4, 3, rng);
        write_ripf(dir / "features" / "sample0.front.ripf", other);
        try {
            load_dataset(dir);
            FAIL("expected dim mismatch");
        } catch (const DataError& e) {
            CHECK(e.kind == DataError::Kind::dim_mismatch);
            CHECK(std::string(e.what()).find("sample0") != std::string::npos);
        }
    }
    SUBCASE("unknown label string") {
        std::ifstream in(dir / "manifest.json");
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        auto pos = text.find("\"RT\"");
        REQUIRE(pos != std::string::npos);
        text.replace(pos, 4, "\"XX\"");
        std::ofstream out(dir / "manifest.json", std::ios::trunc);
        out << text;
        out.close();
        CHECK_THROWS_AS(load_dataset(dir), DataError);
    }
}

TEST_CASE("zscore fit and apply") {
    SUBCASE("hand example") {
        Dataset ds;
        ds.dim = 1;
        ds.views = {"front"};
        Sample s;
        s.id = "a";
        FeatureSequence seq;
        seq.dim = 1;
        seq.t = 2;
        seq.frames = {1.0f, 3.0f};
        s.views.emplace("front", seq);
        ds.samples.push_back(s);
        NormStats stats = fit_zscore(ds);
        CHECK(stats.mean[0] == doctest::Approx(2.0));
        CHECK(stats.std[0] == doctest::Approx(1.0));
        auto out = apply_zscore(stats, ds.samples[0].view("front"));
        CHECK(out[0] == doctest::Approx(-1.0));
        CHECK(out[1] == doctest::Approx(1.0));
    }
    SUBCASE("pool is standardized after apply") {
        Rng rng(4);
        Dataset ds;
        ds.dim = 5;
        ds.views = {"front"};
        for (int i = 0; i < 8; ++i) {
            Sample s;
            s.id = "s" + std::to_string(i);
            s.views.emplace("front", make_seq(10 + i, 5, rng));
            ds.samples.push_back(std::move(s));
        }
        NormStats stats = fit_zscore(ds);
        std::vector<double> mean(5, 0.0), var(5, 0.0);
        std::size_t n = 0;
        for (const auto& s : ds.samples) {
            auto rows = apply_zscore(stats, s.view("front"));
            const std::size_t t = s.view("front").t;
            for (std::size_t r = 0; r < t; ++r) {
                for (int j = 0; j < 5; ++j) mean[j] += rows[r * 5 + j];
            }
            n += t;
        }
        for (auto& v : mean) v /= double(n);
        for (const auto& s : ds.samples) {
            auto rows = apply_zscore(stats, s.view("front"));
            const std::size_t t = s.view("front").t;
            for (std::size_t r = 0; r < t; ++r) {
                for (int j = 0; j < 5; ++j) {
                    const double c = rows[r * 5 + j] - mean[j];
                    var[j] += c * c;
                }
            }
        }
        for (int j = 0; j < 5; ++j) {
            CHECK(std::fabs(mean[j]) < 1e-9);
            CHECK(std::fabs(std::sqrt(var[j] / double(n)) - 1.0) < 1e-6);
        }
    }
    SUBCASE("constant dimension floors to zero output") {
        Dataset ds;
        ds.dim = 1;
        ds.views = {"front"};
        Sample s;
        s.id = "c";
        FeatureSequence seq;
        seq.dim = 1;
        seq.t = 3;
        seq.frames = {2.5f, 2.5f, 2.5f};
        s.views.emplace("front", seq);
        ds.samples.push_back(s);
        NormStats stats = fit_zscore(ds);
        auto out = apply_zscore(stats, ds.samples[0].view("front"));
        for (double v : out) CHECK(v == 0.0);
    }
}

TEST_CASE("pad_batch and unpad round-trip") {
    Rng rng(5);
    FeatureSequence a = make_seq(2, 3, rng);
    FeatureSequence b = make_seq(5, 3, rng);
    SUBCASE("equal lengths mean no padding") {
        FeatureSequence c = make_seq(2, 3, rng);
        PaddedBatch batch = pad_batch({&a, &c});
        CHECK(batch.x.shape() == Shape{2, 2, 3});
        CHECK(batch.lengths == std::vector<int>{2, 2});
    }
    SUBCASE("tail rows are zero") {
        PaddedBatch batch = pad_batch({&a, &b});
        CHECK(batch.x.shape() == Shape{2, 5, 3});
        for (std::size_t t = 2; t < 5; ++t) {
            for (std::size_t j = 0; j < 3; ++j) CHECK(batch.x.at({0, t, j}) == 0.0);
        }
    }
    SUBCASE("unpad(pad(x)) == x bitwise") {
        PaddedBatch batch = pad_batch({&a, &b});
        auto seqs = unpad_batch(batch);
        REQUIRE(seqs.size() == 2);
        CHECK(std::memcmp(seqs[0].frames.data(), a.frames.data(), a.frames.size() * 4) == 0);
        CHECK(std::memcmp(seqs[1].frames.data(), b.frames.data(), b.frames.size() * 4) == 0);
    }
    SUBCASE("empty batch rejected") {
        CHECK_THROWS_AS(pad_batch({}), ShapeError);
    }
}

namespace {

Dataset label_only_dataset(const std::vector<int>& class_counts) {
    Dataset ds;
    ds.dim = 2;
    ds.views = {"front"};
    Rng rng(11);
    int id = 0;
    for (int c = 0; c < int(class_counts.size()); ++c) {
        for (int i = 0; i < class_counts[c]; ++i) {
            Sample s;
            s.id = "s" + std::to_string(id++);
            s.label = static_cast<ManeuverLabel>(c);
            s.views.emplace("front", make_seq(2, 2, rng));
            ds.samples.push_back(std::move(s));
        }
    }
    return ds;
}

}  // namespace

TEST_CASE("split_dataset allocations and determinism") {
    SUBCASE("1000 samples split 500/200/300") {
        Dataset ds = label_only_dataset({300, 250, 200, 100, 50, 100});
        SplitIndices s = split_dataset(ds, {0.5, 0.2, 0.3}, 42);
        CHECK(s.train.size() == 500);
        CHECK(s.val.size() == 200);
        CHECK(s.test.size() == 300);
    }
    SUBCASE("10 samples of one class split 5/2/3") {
        Dataset ds = label_only_dataset({10});
        SplitIndices s = split_dataset(ds, {0.5, 0.2, 0.3}, 1);
        CHECK(s.train.size() == 5);
        CHECK(s.val.size() == 2);
        CHECK(s.test.size() == 3);
    }
    SUBCASE("deterministic in seed, different across seeds") {
        Dataset ds = label_only_dataset({40, 30, 20, 10, 10, 10});
        SplitIndices a = split_dataset(ds, {0.5, 0.2, 0.3}, 7);
        SplitIndices b = split_dataset(ds, {0.5, 0.2, 0.3}, 7);
        CHECK(a.train == b.train);
        CHECK(a.val == b.val);
        CHECK(a.test == b.test);
        SplitIndices c = split_dataset(ds, {0.5, 0.2, 0.3}, 8);
        CHECK(a.train != c.train);
        CHECK(a.train.size() == c.train.size());
        // per-class counts match across seeds
        for (int cls = 0; cls < 6; ++cls) {
            auto count = [&](const std::vector<std::size_t>& idx) {
                std::size_t n = 0;
                for (auto i : idx) {
                    if (label_code(ds.samples[i].label) == cls) ++n;
                }
                return n;
            };
            CHECK(count(a.train) == count(c.train));
            CHECK(count(a.test) == count(c.test));
        }
    }
    SUBCASE("partition property") {
        Dataset ds = label_only_dataset({13, 17, 9, 5, 3, 8});
        SplitIndices s = split_dataset(ds, {0.5, 0.2, 0.3}, 9);
        std::set<std::size_t> seen;
        for (const auto* part : {&s.train, &s.val, &s.test}) {
            for (auto i : *part) CHECK(seen.insert(i).second);
        }
        CHECK(seen.size() == ds.samples.size());
    }
    SUBCASE("bad ratios rejected") {
        Dataset ds = label_only_dataset({4});
        CHECK_THROWS_AS(split_dataset(ds, {0.5, 0.2, 0.2}, 1), ConfigError);
    }
}

TEST_CASE("synthetic generator") {
    SUBCASE("class mix lands near the configured distribution") {
        GenConfig cfg;
        cfg.n_samples = 1000;
        cfg.dim = 16;
        cfg.views = 1;
        Dataset ds = generate_synthetic(cfg, 7);
        std::array<std::size_t, 6> counts{};
        for (const auto& s : ds.samples) ++counts[label_code(s.label)];
        const std::size_t straight_turn = counts[0] + counts[1] + counts[2];
        CHECK(straight_turn >= 735);
        CHECK(straight_turn <= 765);
        // frozen fixture of the seed-7 run (label draws are dim-independent)
        CHECK(counts == std::array<std::size_t, 6>{327, 223, 196, 97, 35, 122});
    }
    SUBCASE("zero noise makes same-class same-length samples identical") {
        GenConfig cfg;
        cfg.n_samples = 40;
        cfg.dim = 8;
        cfg.noise_scale = 0.0;
        cfg.len_min_s = 5.0;
        cfg.len_max_s = 5.0;  // fixed length
        cfg.views = 3;
        Dataset ds = generate_synthetic(cfg, 3);
        for (std::size_t i = 1; i < ds.samples.size(); ++i) {
            for (std::size_t j = 0; j < i; ++j) {
                if (ds.samples[i].label != ds.samples[j].label) continue;
                for (const auto& v : ds.views) {
                    const auto& a = ds.samples[i].view(v).frames;
                    const auto& b = ds.samples[j].view(v).frames;
                    REQUIRE(a.size() == b.size());
                    CHECK(std::memcmp(a.data(), b.data(), a.size() * 4) == 0);
                }
            }
        }
    }
    SUBCASE("probe beats chance comfortably") {
        GenConfig cfg;
        cfg.n_samples = 300;
        cfg.dim = 64;
        Dataset ds = generate_synthetic(cfg, 7);
        CHECK(nearest_centroid_probe(ds) > 0.6);
    }
    SUBCASE("bad distribution rejected") {
        GenConfig cfg;
        cfg.class_dist = {0.5, 0.5, 0.5, 0, 0, 0};
        CHECK_THROWS_AS(generate_synthetic(cfg, 1), ConfigError);
    }
    SUBCASE("deterministic in seed") {
        GenConfig cfg;
        cfg.n_samples = 10;
        cfg.dim = 4;
        Dataset a = generate_synthetic(cfg, 5);
        Dataset b = generate_synthetic(cfg, 5);
        for (std::size_t i = 0; i < a.samples.size(); ++i) {
            CHECK(a.samples[i].label == b.samples[i].label);
            for (const auto& v : a.views) {
                const auto& fa = a.samples[i].view(v).frames;
                const auto& fb = b.samples[i].view(v).frames;
                CHECK(std::memcmp(fa.data(), fb.data(), fa.size() * 4) == 0);
            }
        }
    }
}
