#include <catch2/catch.hpp>

#include <filesystem>
#include <set>

#include "ganpr/placerec.hpp"

using namespace ganpr;

namespace {

SequenceFeature sf(std::vector<double> values, int n = 1, int64_t start = 0) {
    SequenceFeature s;
    s.values = std::move(values);
    s.length = n;
    s.start_frame = start;
    return s;
}

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

FeatureVector frame_feature(std::vector<double> values, int64_t frame) {
    FeatureVector f;
    f.values = std::move(values);
    f.source_frame = frame;
    return f;
}

// brute-force counting oracle over one threshold
struct PrCounts {
    size_t accepted = 0, correct = 0;
};
PrCounts count_pr(const std::vector<FrameMatch>& matches, const GroundTruth& gt, double tau) {
    PrCounts c;
    for (const auto& m : matches) {
        if (m.distance <= tau) {
            c.accepted++;
            if (std::llabs(m.matched_db_frame - gt.alignment[static_cast<size_t>(m.query_frame)]) <=
                gt.tolerance)
                c.correct++;
        }
    }
    return c;
}

}  // namespace

TEST_CASE("distance_matrix basics and per-pair oracle", "[placerec]") {
    Rng rng(1);
    std::vector<SequenceFeature> db;
    for (int i = 0; i < 7; ++i) db.push_back(sf(random_unit(6, rng)));

    // identical query and database sets have an exactly zero diagonal
    auto m = distance_matrix(db, db);
    for (int i = 0; i < 7; ++i) REQUIRE(m.at(i, i) == 0.0);

    // single query, single db entry
    auto one = distance_matrix({db[0]}, {db[1]});
    REQUIRE(one.rows == 1);
    REQUIRE(one.cols == 1);
    REQUIRE(one.at(0, 0) == cosine_distance(db[0], db[1]));

    // random 5x7 against an independent per-pair loop
    std::vector<SequenceFeature> queries;
    for (int i = 0; i < 5; ++i) queries.push_back(sf(random_unit(6, rng)));
    auto big = distance_matrix(queries, db);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 7; ++j) {
            double dot = 0, nq = 0, nd = 0;
            for (size_t d = 0; d < 6; ++d) {
                dot += queries[static_cast<size_t>(i)].values[d] * db[static_cast<size_t>(j)].values[d];
                nq += queries[static_cast<size_t>(i)].values[d] * queries[static_cast<size_t>(i)].values[d];
                nd += db[static_cast<size_t>(j)].values[d] * db[static_cast<size_t>(j)].values[d];
            }
            REQUIRE(big.at(i, j) == Approx(1.0 - dot / std::sqrt(nq * nd)).margin(1e-12));
        }

    auto short_seq = sf(random_unit(4, rng));
    REQUIRE_THROWS_WITH(distance_matrix(queries, {short_seq}), Catch::Contains("disagree"));
}

TEST_CASE("nearest_neighbor argmin semantics", "[placerec]") {
    DistanceMatrix m;
    m.rows = 1;
    m.cols = 3;
    m.values = {0.5, 0.2, 0.9};
    auto nn = nearest_neighbor(m);
    REQUIRE(nn[0].best_index == 1);
    REQUIRE(nn[0].best_distance == 0.2);

    // zero diagonal matches i -> i
    DistanceMatrix diag;
    diag.rows = diag.cols = 4;
    diag.values.assign(16, 0.7);
    for (int i = 0; i < 4; ++i) diag.at(i, i) = 0.0;
    auto matches = nearest_neighbor(diag);
    for (int i = 0; i < 4; ++i) REQUIRE(matches[static_cast<size_t>(i)].best_index == i);

    // ties break toward the lowest index
    DistanceMatrix tie;
    tie.rows = 1;
    tie.cols = 4;
    tie.values = {0.4, 0.1, 0.1, 0.3};
    REQUIRE(nearest_neighbor(tie)[0].best_index == 1);

    // brute force comparison on random matrices
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        DistanceMatrix r;
        r.rows = 1 + static_cast<int>(rng.below(6));
        r.cols = 1 + static_cast<int>(rng.below(8));
        r.values.resize(static_cast<size_t>(r.rows) * r.cols);
        for (auto& v : r.values) v = rng.uniform(0, 2);
        auto got = nearest_neighbor(r);
        for (int i = 0; i < r.rows; ++i) {
            int best = 0;
            for (int j = 0; j < r.cols; ++j)
                if (r.at(i, j) < r.at(i, best)) best = j;
            REQUIRE(got[static_cast<size_t>(i)].best_index == best);
        }
    }
}

TEST_CASE("nearest_neighbor is invariant under monotone transforms", "[placerec]") {
    Rng rng(3);
    DistanceMatrix m;
    m.rows = 6;
    m.cols = 9;
    m.values.resize(54);
    for (auto& v : m.values) v = rng.uniform(0, 2);
    auto base = nearest_neighbor(m);
    DistanceMatrix warped = m;
    for (auto& v : warped.values) v = std::exp(1.7 * v) - 0.5;  // strictly increasing
    auto after = nearest_neighbor(warped);
    for (size_t i = 0; i < base.size(); ++i) REQUIRE(base[i].best_index == after[i].best_index);
}

TEST_CASE("evaluate_pr endpoints", "[placerec]") {
    GroundTruth gt = GroundTruth::identity(4, 2);
    std::vector<FrameMatch> all_correct = {
        {0, 0, 0.1}, {1, 2, 0.4}, {2, 2, 0.2}, {3, 4, 0.6}};
    auto curve = evaluate_pr(all_correct, gt, make_threshold_grid(50));
    for (const auto& p : curve.points) REQUIRE(p.precision == 1.0);
    REQUIRE(curve.points.back().recall == 1.0);

    std::vector<FrameMatch> all_wrong = {{0, 3, 0.1}, {1, 30, 0.4}, {2, 9, 0.2}, {3, 11, 0.6}};
    auto curve2 = evaluate_pr(all_wrong, gt, make_threshold_grid(50));
    for (const auto& p : curve2.points) {
        if (p.threshold >= 0.1) REQUIRE(p.precision == 0.0);
        REQUIRE(p.recall == 0.0);
    }

    // empty accepted set pins precision at 1
    REQUIRE(curve2.points.front().precision == 1.0);
    REQUIRE_THROWS_WITH(evaluate_pr({}, gt, make_threshold_grid(10)), Catch::Contains("empty"));
}

TEST_CASE("evaluate_pr equals the brute-force counting oracle", "[placerec]") {
    Rng rng(4);
    const auto grid = make_threshold_grid(200);
    for (int trial = 0; trial < 60; ++trial) {
        const int nq = 1 + static_cast<int>(rng.below(30));
        GroundTruth gt;
        gt.tolerance = static_cast<int>(rng.below(3));
        std::vector<FrameMatch> matches;
        for (int i = 0; i < nq; ++i) {
            gt.alignment.push_back(static_cast<int64_t>(rng.below(40)));
            FrameMatch m;
            m.query_frame = i;
            m.matched_db_frame = static_cast<int64_t>(rng.below(40));
            m.distance = rng.uniform(0, 2);
            matches.push_back(m);
        }
        auto curve = evaluate_pr(matches, gt, grid);
        REQUIRE(curve.points.size() == grid.size());
        double prev_recall = -1.0;
        for (size_t k = 0; k < grid.size(); ++k) {
            const auto counts = count_pr(matches, gt, grid[k]);
            const auto& p = curve.points[k];
            if (counts.accepted == 0) {
                REQUIRE(p.precision == 1.0);
            } else {
                REQUIRE(p.precision == static_cast<double>(counts.correct) / counts.accepted);
            }
            REQUIRE(p.recall == static_cast<double>(counts.correct) / nq);
            REQUIRE(p.recall >= prev_recall);  // monotone in the threshold
            prev_recall = p.recall;
        }
    }
}

TEST_CASE("sweep_sequence_lengths respects window exclusion", "[placerec]") {
    Rng rng(5);
    const int frames = 12;
    // perfect features: identical per-frame descriptors in query and database
    std::vector<FeatureVector> qf, dbf;
    for (int i = 0; i < frames; ++i) {
        auto v = random_unit(8, rng);
        qf.push_back(frame_feature(v, i));
        dbf.push_back(frame_feature(v, i));
    }
    GroundTruth gt = GroundTruth::identity(frames, 0);
    const auto grid = make_threshold_grid(100);
    auto curves = sweep_sequence_lengths(qf, dbf, {1, 4}, gt, grid);
    REQUIRE(curves.size() == 2);

    // n = 1: every query matches itself exactly; full recall at tau >= 0
    REQUIRE(curves[0].sequence_length == 1);
    REQUIRE(curves[0].points.back().recall == 1.0);
    // n = 4: the first three frames cannot be queried
    const double max_recall = static_cast<double>(frames - 4 + 1) / frames;
    REQUIRE(curves[1].points.back().recall == Approx(max_recall).margin(1e-12));
    for (const auto& p : curves[1].points) REQUIRE(p.recall <= max_recall + 1e-12);

    // n = 1 sweep equals direct single-feature evaluation
    auto seqs_q = build_sequence_features(qf, 1);
    auto seqs_db = build_sequence_features(dbf, 1);
    auto nn = nearest_neighbor(distance_matrix(seqs_q, seqs_db));
    std::vector<FrameMatch> direct;
    for (const auto& m : nn) direct.push_back({m.query, m.best_index, m.best_distance});
    auto direct_curve = evaluate_pr(direct, gt, grid, static_cast<size_t>(frames), 1);
    for (size_t k = 0; k < grid.size(); ++k) {
        REQUIRE(curves[0].points[k].precision == direct_curve.points[k].precision);
        REQUIRE(curves[0].points[k].recall == direct_curve.points[k].recall);
    }

    REQUIRE_THROWS_WITH(sweep_sequence_lengths(qf, dbf, {frames + 1}, gt, grid),
                        Catch::Contains("exceeds"));
}

TEST_CASE("longer sequences beat single frames under feature noise", "[placerec]") {
    Rng rng(99);
    const int frames = 60;
    std::vector<FeatureVector> dbf, qf;
    for (int i = 0; i < frames; ++i) {
        auto v = random_unit(16, rng);
        dbf.push_back(frame_feature(v, i));
        auto noisy = v;
        for (auto& x : noisy) x += 0.55 * rng.normal();
        qf.push_back(frame_feature(noisy, i));
    }
    GroundTruth gt = GroundTruth::identity(frames, 2);
    const auto grid = make_threshold_grid(200);
    auto curves = sweep_sequence_lengths(qf, dbf, {1, 5}, gt, grid);
    const double auc1 = pr_auc(curves[0]);
    const double auc5 = pr_auc(curves[1]);
    REQUIRE(auc5 >= auc1);
    REQUIRE(auc5 > 0.5);  // sequences must actually localize on this instance
}

TEST_CASE("heatmap export writes the affine clip formula", "[placerec]") {
    const std::string path =
        (std::filesystem::temp_directory_path() / "ganpr_heatmap_test.png").string();

    DistanceMatrix constant;
    constant.rows = 4;
    constant.cols = 5;
    constant.values.assign(20, 0.35);
    matrix_heatmap_export(constant, 0.7, path);
    auto img = imageio::read_image(path);
    REQUIRE(img.width == 5);
    REQUIRE(img.height == 4);
    REQUIRE(img.channels == 1);
    for (auto p : img.pixels) REQUIRE(static_cast<int>(p) == 128);  // 0.35/0.7 * 255

    Rng rng(6);
    DistanceMatrix m;
    m.rows = 6;
    m.cols = 6;
    m.values.resize(36);
    for (auto& v : m.values) v = rng.uniform(0, 2);
    for (int i = 0; i < 6; ++i) m.at(i, i) = 0.0;
    const double clip = 0.8;
    matrix_heatmap_export(m, clip, path);
    auto heat = imageio::read_image(path);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) {
            const double expect = std::lround(255.0 * std::min(m.at(i, j), clip) / clip);
            REQUIRE(static_cast<double>(heat.pixels[heat.index(i, j, 0)]) == expect);
        }
    // zero diagonal renders black
    for (int i = 0; i < 6; ++i) REQUIRE(heat.pixels[heat.index(i, i, 0)] == 0);

    REQUIRE_THROWS_AS(matrix_heatmap_export(m, 0.0, path), Error);
    std::filesystem::remove(path);
}

TEST_CASE("PR curve files round-trip", "[placerec]") {
    PRCurve curve;
    curve.sequence_length = 3;
    curve.points = {{0.0, 1.0, 0.0}, {0.5, 0.875, 0.25}, {1.0, 0.5, 0.625}, {2.0, 0.25, 0.75}};
    const std::string path =
        (std::filesystem::temp_directory_path() / "ganpr_pr_test.tsv").string();
    write_pr_curve(path, curve);
    auto loaded = read_pr_curve(path);
    REQUIRE(loaded.sequence_length == 3);
    REQUIRE(loaded.points.size() == 4);
    for (size_t i = 0; i < 4; ++i) {
        REQUIRE(loaded.points[i].threshold == curve.points[i].threshold);
        REQUIRE(loaded.points[i].precision == curve.points[i].precision);
        REQUIRE(loaded.points[i].recall == curve.points[i].recall);
    }
    std::filesystem::remove(path);
}
