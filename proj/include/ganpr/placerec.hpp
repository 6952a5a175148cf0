#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "ganpr/features.hpp"
#include "ganpr/image_io.hpp"
#include "ganpr/parallel.hpp"

namespace ganpr {

struct DistanceMatrix {
    int rows = 0;  // queries
    int cols = 0;  // database entries
    std::vector<double> values;

    double at(int i, int j) const { return values[static_cast<size_t>(i) * cols + j]; }
    double& at(int i, int j) { return values[static_cast<size_t>(i) * cols + j]; }
};

// Exhaustive pairwise cosine distances; rows are computed independently so
// parallel evaluation is bit-identical to sequential.
inline DistanceMatrix distance_matrix(const std::vector<SequenceFeature>& queries,
                                      const std::vector<SequenceFeature>& database) {
    check(!queries.empty() && !database.empty(), "distance_matrix: empty feature set");
    const size_t dim = queries.front().values.size();
    for (const auto& q : queries)
        check(q.values.size() == dim && q.length == queries.front().length,
              "distance_matrix: query features disagree in dimension or sequence length");
    for (const auto& d : database)
        check(d.values.size() == dim && d.length == queries.front().length,
              "distance_matrix: database features disagree with queries (dim ",
              d.values.size(), " vs ", dim, ")");
    DistanceMatrix m;
    m.rows = static_cast<int>(queries.size());
    m.cols = static_cast<int>(database.size());
    m.values.resize(static_cast<size_t>(m.rows) * m.cols);
    parallel_for(0, m.rows, [&](int64_t i) {
        for (int j = 0; j < m.cols; ++j)
            m.at(static_cast<int>(i), j) =
                cosine_distance(queries[static_cast<size_t>(i)], database[static_cast<size_t>(j)]);
    });
    return m;
}

struct Match {
    int query = 0;
    int best_index = 0;
    double best_distance = 0.0;
};

// Per-row argmin; ties break toward the lowest index.
inline std::vector<Match> nearest_neighbor(const DistanceMatrix& m) {
    check(m.rows > 0 && m.cols > 0, "nearest_neighbor: empty matrix");
    std::vector<Match> out(static_cast<size_t>(m.rows));
    for (int i = 0; i < m.rows; ++i) {
        int best = 0;
        double best_d = m.at(i, 0);
        for (int j = 1; j < m.cols; ++j) {
            if (m.at(i, j) < best_d) {
                best_d = m.at(i, j);
                best = j;
            }
        }
        out[static_cast<size_t>(i)] = {i, best, best_d};
    }
    return out;
}

/// Frame-index alignment: query frame i corresponds to database frame
/// alignment[i]; a match within +/- tolerance frames counts as correct.
struct GroundTruth {
    std::vector<int64_t> alignment;
    int tolerance = 2;

    int64_t expected(int64_t query_frame) const {
        check(query_frame >= 0 && static_cast<size_t>(query_frame) < alignment.size(),
              "ground truth: no alignment for query frame ", query_frame);
        return alignment[static_cast<size_t>(query_frame)];
    }

    static GroundTruth identity(size_t frames, int tolerance = 2) {
        GroundTruth gt;
        gt.alignment.resize(frames);
        for (size_t i = 0; i < frames; ++i) gt.alignment[i] = static_cast<int64_t>(i);
        gt.tolerance = tolerance;
        return gt;
    }
};

struct FrameMatch {
    int64_t query_frame = 0;
    int64_t matched_db_frame = 0;
    double distance = 0.0;
};

struct PRPoint {
    double threshold = 0.0;
    double precision = 1.0;
    double recall = 0.0;
};

struct PRCurve {
    std::vector<PRPoint> points;
    int sequence_length = 1;
};

inline std::vector<double> make_threshold_grid(int count = 200, double max_value = 2.0) {
    check(count >= 2, "threshold grid needs at least two points");
    std::vector<double> out(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i)
        out[static_cast<size_t>(i)] = max_value * static_cast<double>(i) / (count - 1);
    return out;
}

// Precision/recall sweep over a global distance threshold. total_queries sets
// the recall denominator; 0 means every query produced a match. Precision at
// an empty accepted set is defined as 1.
inline PRCurve evaluate_pr(const std::vector<FrameMatch>& matches, const GroundTruth& gt,
                           const std::vector<double>& thresholds, size_t total_queries = 0,
                           int sequence_length = 1) {
    check(!matches.empty(), "evaluate_pr: empty query set");
    if (total_queries == 0) total_queries = matches.size();
    check(total_queries >= matches.size(), "evaluate_pr: total_queries ", total_queries,
          " is smaller than the match count ", matches.size());
    PRCurve curve;
    curve.sequence_length = sequence_length;
    for (double tau : thresholds) {
        size_t accepted = 0, correct = 0;
        for (const auto& m : matches) {
            if (m.distance > tau) continue;
            accepted++;
            const int64_t expect = gt.expected(m.query_frame);
            if (std::llabs(m.matched_db_frame - expect) <= gt.tolerance) correct++;
        }
        PRPoint p;
        p.threshold = tau;
        p.precision = accepted == 0 ? 1.0 : static_cast<double>(correct) / accepted;
        p.recall = static_cast<double>(correct) / static_cast<double>(total_queries);
        curve.points.push_back(p);
    }
    return curve;
}

// Trapezoidal area under the (recall, precision) curve, anchored at recall 0.
inline double pr_auc(const PRCurve& curve) {
    double auc = 0.0;
    double prev_r = 0.0, prev_p = curve.points.empty() ? 1.0 : curve.points.front().precision;
    for (const auto& pt : curve.points) {
        auc += (pt.recall - prev_r) * 0.5 * (pt.precision + prev_p);
        prev_r = pt.recall;
        prev_p = pt.precision;
    }
    return auc;
}

// One PR curve per sequence length. Queries and database are per-frame
// features in frame order; for length n the first n-1 frames of each side
// produce no sequence, which caps attainable recall at (N-n+1)/N.
inline std::vector<PRCurve> sweep_sequence_lengths(const std::vector<FeatureVector>& query_frames,
                                                   const std::vector<FeatureVector>& db_frames,
                                                   const std::vector<int>& lengths,
                                                   const GroundTruth& gt,
                                                   const std::vector<double>& thresholds,
                                                   const SequenceOptions& opts = {}) {
    std::vector<PRCurve> curves;
    for (int n : lengths) {
        check(n >= 1, "sweep_sequence_lengths: lengths must be >= 1, got ", n);
        check(static_cast<size_t>(n) <= query_frames.size() &&
                  static_cast<size_t>(n) <= db_frames.size(),
              "sweep_sequence_lengths: length ", n, " exceeds available frames");
        const auto q_seqs = build_sequence_features(query_frames, n, opts);
        const auto db_seqs = build_sequence_features(db_frames, n, opts);
        const DistanceMatrix m = distance_matrix(q_seqs, db_seqs);
        const auto nn = nearest_neighbor(m);
        std::vector<FrameMatch> matches;
        for (const auto& match : nn) {
            FrameMatch fm;
            fm.query_frame = match.query + n - 1;  // trailing-window end frame
            fm.matched_db_frame = match.best_index + n - 1;
            fm.distance = match.best_distance;
            matches.push_back(fm);
        }
        curves.push_back(evaluate_pr(matches, gt, thresholds, query_frames.size(), n));
    }
    return curves;
}

// Clipped grayscale rendering of the matrix: pixel = 255 * min(d, clip) / clip.
inline void matrix_heatmap_export(const DistanceMatrix& m, double clip_max,
                                  const std::string& path) {
    check(clip_max > 0.0, "matrix_heatmap_export: clip_max must be positive, got ", clip_max);
    ImageU8 img;
    img.width = m.cols;
    img.height = m.rows;
    img.channels = 1;
    img.pixels.resize(static_cast<size_t>(m.rows) * m.cols);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) {
            const double clipped = std::min(m.at(i, j), clip_max);
            img.pixels[img.index(i, j, 0)] =
                static_cast<uint8_t>(std::lround(255.0 * clipped / clip_max));
        }
    imageio::write_image(img, path);
}

// ---- PR curve files -------------------------------------------------------------

inline void write_pr_curve(const std::string& path, const PRCurve& curve) {
    std::ofstream out(path, std::ios::trunc);
    check(out.good(), "write_pr_curve: cannot open '", path, "'");
    out << "threshold\tprecision\trecall\tn\n";
    char buf[128];
    for (const auto& p : curve.points) {
        std::snprintf(buf, sizeof(buf), "%.17g\t%.17g\t%.17g\t%d\n", p.threshold, p.precision,
                      p.recall, curve.sequence_length);
        out << buf;
    }
    check(out.good(), "write_pr_curve: write to '", path, "' failed");
}

inline PRCurve read_pr_curve(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), "read_pr_curve: cannot open '", path, "'");
    std::string header;
    std::getline(in, header);
    check(header.rfind("threshold\tprecision\trecall", 0) == 0, "read_pr_curve: '", path,
          "' is not a PR curve file");
    PRCurve curve;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        PRPoint p;
        int n = 1;
        check(std::sscanf(line.c_str(), "%lg\t%lg\t%lg\t%d", &p.threshold, &p.precision, &p.recall,
                          &n) == 4,
              "read_pr_curve: malformed line in '", path, "': ", line);
        curve.points.push_back(p);
        curve.sequence_length = n;
    }
    return curve;
}

}  // namespace ganpr
