#include <catch2/catch.hpp>

#include <filesystem>

#include "ganpr/features.hpp"
#include "testutil.hpp"

using namespace ganpr;

namespace {

std::vector<double> random_unit(size_t dim, Rng& rng) {
    std::vector<double> v(dim);
    double norm = 0.0;
    for (auto& x : v) {
        x = rng.normal();
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
}

FeatureVector fv(std::vector<double> values, int64_t frame) {
    FeatureVector f;
    f.values = std::move(values);
    f.source_frame = frame;
    f.domain = "A";
    return f;
}

// independent dot-product oracle
double cosine_direct(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return 1.0 - dot / std::sqrt(na * nb);
}

}  // namespace

TEST_CASE("extract_feature matches the discriminator forward output", "[features]") {
    auto cfg = testutil::tiny_disc_config(16, {4, 8}, 10);
    Discriminator disc(cfg);
    Rng rng(1);
    disc.init_params(rng);
    Tensor image({3, 16, 16});
    for (size_t i = 0; i < image.numel(); ++i) image[i] = rng.uniform(-0.9, 0.9);

    FeatureVector f = extract_feature(disc, image, 7, "A");
    REQUIRE(f.values.size() == 10);
    REQUIRE(f.source_frame == 7);

    Tensor batch = Tensor::from_values({1, 3, 16, 16}, image.values());
    auto fwd = disc.forward(batch, Mode::eval);
    for (size_t i = 0; i < 10; ++i) REQUIRE(f.values[i] == fwd.features[i]);

    // identical image, identical feature
    FeatureVector again = extract_feature(disc, image, 7, "A");
    REQUIRE(again.values == f.values);

    REQUIRE_THROWS_AS(extract_feature(disc, Tensor({3, 8, 8})), Error);
}

TEST_CASE("batched extraction equals one-by-one extraction", "[features]") {
    auto cfg = testutil::tiny_disc_config(16, {4, 8}, 10);
    Discriminator disc(cfg);
    Rng rng(2);
    disc.init_params(rng);
    std::vector<Tensor> images;
    for (int i = 0; i < 5; ++i) {
        Tensor img({3, 16, 16});
        for (size_t j = 0; j < img.numel(); ++j) img[j] = rng.uniform(-0.9, 0.9);
        images.push_back(std::move(img));
    }
    auto batched = extract_features(disc, images, "A", 2);
    REQUIRE(batched.size() == 5);
    for (size_t i = 0; i < 5; ++i) {
        auto single = extract_feature(disc, images[i], static_cast<int64_t>(i), "A");
        REQUIRE(batched[i].values == single.values);
        REQUIRE(batched[i].source_frame == static_cast<int64_t>(i));
    }
}

TEST_CASE("normalize scales to unit length and preserves direction", "[features]") {
    FeatureVector f = fv({3.0, 4.0}, 0);
    auto n = normalize(f);
    REQUIRE(n.values[0] == Approx(0.6).margin(1e-15));
    REQUIRE(n.values[1] == Approx(0.8).margin(1e-15));

    // idempotence
    auto nn = normalize(n);
    REQUIRE(nn.values[0] == Approx(n.values[0]).margin(1e-12));
    REQUIRE(nn.values[1] == Approx(n.values[1]).margin(1e-12));

    // positive rescaling is invisible after normalization
    Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        FeatureVector g = fv(random_unit(8, rng), 0);
        for (auto& v : g.values) v *= 3.7;
        const double c = rng.uniform(0.01, 100.0);
        FeatureVector scaled = g;
        for (auto& v : scaled.values) v *= c;
        auto na = normalize(g), nb = normalize(scaled);
        for (size_t i = 0; i < na.values.size(); ++i)
            REQUIRE(na.values[i] == Approx(nb.values[i]).margin(1e-12));
    }

    REQUIRE_THROWS_WITH(normalize(fv({0.0, 0.0}, 5)), Catch::Contains("zero"));
}

TEST_CASE("stack_sequence concatenates ascending windows", "[features]") {
    std::vector<FeatureVector> feats = {fv({1, 0, 0}, 0), fv({0, 1, 0}, 1), fv({0, 0, 1}, 2)};

    auto single = stack_sequence(feats, 1, 1);
    REQUIRE(single.values == feats[1].values);
    REQUIRE(single.start_frame == 1);
    REQUIRE(single.length == 1);

    auto seq = stack_sequence(feats, 3, 2);
    REQUIRE(seq.values == std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1});
    REQUIRE(seq.start_frame == 0);

    REQUIRE_THROWS_WITH(stack_sequence(feats, 2, 4), Catch::Contains("missing frame"));
    std::vector<FeatureVector> gap = {fv({1, 0}, 0), fv({0, 1}, 2)};
    REQUIRE_THROWS_WITH(stack_sequence(gap, 3, 2), Catch::Contains("missing frame"));
}

TEST_CASE("stacking is injective on ordered inputs", "[features]") {
    std::vector<FeatureVector> feats = {fv({1, 0}, 0), fv({0, 1}, 1)};
    std::vector<FeatureVector> swapped = {fv({0, 1}, 0), fv({1, 0}, 1)};
    auto a = stack_sequence(feats, 2, 1);
    auto b = stack_sequence(swapped, 2, 1);
    REQUIRE(a.values != b.values);
    std::vector<FeatureVector> equal = {fv({1, 0}, 0), fv({1, 0}, 1)};
    auto c = stack_sequence(equal, 2, 1);
    auto d = stack_sequence(equal, 2, 1);
    REQUIRE(c.values == d.values);
}

TEST_CASE("cosine_distance definition and oracle equivalence", "[features]") {
    FeatureVector f = fv({0.3, -0.7, 0.2}, 0);
    REQUIRE(cosine_distance(f, f) == Approx(0.0).margin(1e-15));
    REQUIRE(cosine_distance(fv({1, 0}, 0), fv({0, 1}, 1)) == Approx(1.0).margin(1e-15));
    REQUIRE(cosine_distance(fv({1, 0}, 0), fv({-1, 0}, 1)) == Approx(2.0).margin(1e-15));

    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> a(6), b(6);
        for (auto& v : a) v = rng.uniform(-2, 2);
        for (auto& v : b) v = rng.uniform(-2, 2);
        const double got = cosine_distance(a, b);
        REQUIRE(got == Approx(cosine_direct(a, b)).margin(1e-12));
        REQUIRE(got >= 0.0);
        REQUIRE(got <= 2.0);
        // symmetry
        REQUIRE(cosine_distance(b, a) == Approx(got).margin(1e-15));
        // scale invariance with independent positive factors
        std::vector<double> a2 = a, b2 = b;
        const double c1 = rng.uniform(0.01, 50.0), c2 = rng.uniform(0.01, 50.0);
        for (auto& v : a2) v *= c1;
        for (auto& v : b2) v *= c2;
        REQUIRE(cosine_distance(a2, b2) == Approx(got).margin(1e-12));
    }

    REQUIRE_THROWS_WITH(cosine_distance(fv({0, 0}, 0), fv({1, 0}, 1)), Catch::Contains("zero"));
    REQUIRE_THROWS_WITH(cosine_distance(fv({1, 0, 0}, 0), fv({1, 0}, 1)),
                        Catch::Contains("dimension mismatch"));
}

TEST_CASE("stacked cosine distance decomposes into member similarities", "[features]") {
    Rng rng(5);
    for (int trial = 0; trial < 25; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(4));
        const size_t dim = 5;
        std::vector<FeatureVector> qa, qb;
        for (int i = 0; i < n; ++i) {
            qa.push_back(fv(random_unit(dim, rng), i));
            qb.push_back(fv(random_unit(dim, rng), i));
        }
        auto sa = stack_sequence(qa, n, n - 1);
        auto sb = stack_sequence(qb, n, n - 1);
        // 1 - (1/n) * sum of member cosine similarities, via the raw dot product
        double sim_sum = 0.0;
        for (int i = 0; i < n; ++i) {
            double dot = 0.0;
            for (size_t d = 0; d < dim; ++d) dot += qa[static_cast<size_t>(i)].values[d] *
                                                    qb[static_cast<size_t>(i)].values[d];
            sim_sum += dot;
        }
        const double expected = 1.0 - sim_sum / n;
        REQUIRE(cosine_distance(sa, sb) == Approx(expected).margin(1e-12));
    }
}

TEST_CASE("build_sequence_features emits one window per admissible end frame", "[features]") {
    Rng rng(6);
    std::vector<FeatureVector> frames;
    for (int i = 0; i < 6; ++i) frames.push_back(fv(random_unit(4, rng), i));
    auto seqs = build_sequence_features(frames, 3);
    REQUIRE(seqs.size() == 4);  // t = 2..5
    REQUIRE(seqs.front().start_frame == 0);
    REQUIRE(seqs.back().start_frame == 3);
    for (const auto& s : seqs) REQUIRE(vector_norm(s.values) == Approx(1.0).margin(1e-9));

    // both normalization orders produce unit stacked vectors
    SequenceOptions raw;
    raw.normalize_before_stack = false;
    auto seqs_raw = build_sequence_features(frames, 3, raw);
    for (const auto& s : seqs_raw) REQUIRE(vector_norm(s.values) == Approx(1.0).margin(1e-9));
}

TEST_CASE("feature files round-trip and export as text", "[features]") {
    Rng rng(7);
    std::vector<FeatureVector> feats;
    for (int i = 0; i < 4; ++i) {
        auto f = fv(random_unit(5, rng), i);
        f.domain = i % 2 ? "winter" : "summer";
        feats.push_back(f);
    }
    const std::string path =
        (std::filesystem::temp_directory_path() / "ganpr_features_test.bin").string();
    featfile::write(path, feats, 5, true);
    auto loaded = featfile::read(path);
    REQUIRE(loaded.feature_dim == 5);
    REQUIRE(loaded.normalized);
    REQUIRE(loaded.features.size() == 4);
    for (size_t i = 0; i < 4; ++i) {
        REQUIRE(loaded.features[i].values == feats[i].values);
        REQUIRE(loaded.features[i].source_frame == feats[i].source_frame);
        REQUIRE(loaded.features[i].domain == feats[i].domain);
    }
    std::ostringstream os;
    featfile::write_text(os, feats);
    REQUIRE(os.str().find("frame\tdomain") == 0);
    REQUIRE(os.str().find("winter") != std::string::npos);
    std::filesystem::remove(path);

    // corrupting the magic makes the reader refuse
    const std::string bad =
        (std::filesystem::temp_directory_path() / "ganpr_features_bad.bin").string();
    std::ofstream(bad, std::ios::binary) << "NOTAFEATUREFILE";
    REQUIRE_THROWS_WITH(featfile::read(bad), Catch::Contains("magic"));
    std::filesystem::remove(bad);
}
