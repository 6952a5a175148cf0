#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "ganpr/nets.hpp"

namespace ganpr {

/// One discriminator descriptor: the terminal fully-connected-layer
/// activations for a single frame.
struct FeatureVector {
    std::vector<double> values;
    int64_t source_frame = -1;
    std::string domain;
};

/// Trailing-window concatenation [f_{t-n+1}; ...; f_t].
struct SequenceFeature {
    std::vector<double> values;
    int64_t start_frame = 0;  // t - n + 1
    int length = 1;           // n
};

inline double vector_norm(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

// Terminal FC activations from the discriminator's forward pass (eval-mode
// batch statistics, so extraction is a pure function of the image).
inline FeatureVector extract_feature(Discriminator& d, const Tensor& image, int64_t frame = -1,
                                     const std::string& domain = "") {
    check(image.ndim() == 3, "extract_feature: image must be [C,S,S], got ", image.shape_str());
    Tensor batch = Tensor::from_values({1, image.dim(0), image.dim(1), image.dim(2)},
                                       image.values());
    auto out = d.forward(batch, Mode::eval);
    FeatureVector f;
    f.values = out.features.values();
    f.source_frame = frame;
    f.domain = domain;
    return f;
}

// Batched extraction in frame order.
inline std::vector<FeatureVector> extract_features(Discriminator& d,
                                                   const std::vector<Tensor>& images,
                                                   const std::string& domain = "",
                                                   int batch_size = 16) {
    std::vector<FeatureVector> out;
    const size_t count = images.size();
    for (size_t begin = 0; begin < count; begin += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(count, begin + static_cast<size_t>(batch_size));
        const auto& shape = images[begin].shape();
        Tensor batch({static_cast<int>(end - begin), shape[0], shape[1], shape[2]});
        for (size_t i = begin; i < end; ++i) {
            check(images[i].numel() == images[begin].numel(),
                  "extract_features: image shapes are inconsistent");
            std::copy(images[i].values().begin(), images[i].values().end(),
                      batch.values().begin() + static_cast<long>((i - begin) * images[i].numel()));
        }
        auto fwd = d.forward(batch, Mode::eval);
        const int fd = d.config.feature_dim;
        for (size_t i = begin; i < end; ++i) {
            FeatureVector f;
            f.values.assign(
                fwd.features.values().begin() + static_cast<long>((i - begin) * fd),
                fwd.features.values().begin() + static_cast<long>((i - begin + 1) * fd));
            f.source_frame = static_cast<int64_t>(i);
            f.domain = domain;
            out.push_back(std::move(f));
        }
    }
    return out;
}

inline FeatureVector normalize(const FeatureVector& f) {
    const double norm = vector_norm(f.values);
    check(norm > 0.0, "normalize: zero feature vector (frame ", f.source_frame, ")");
    FeatureVector out = f;
    for (double& v : out.values) v /= norm;
    return out;
}

// Ascending concatenation of frames t-n+1 ... t. Frames are located by their
// source_frame field; any gap in the window is an error.
inline SequenceFeature stack_sequence(const std::vector<FeatureVector>& features, int n,
                                      int64_t t) {
    check(n >= 1, "stack_sequence: sequence length must be >= 1, got ", n);
    std::map<int64_t, const FeatureVector*> by_frame;
    for (const auto& f : features) by_frame[f.source_frame] = &f;
    SequenceFeature seq;
    seq.start_frame = t - n + 1;
    seq.length = n;
    for (int64_t frame = t - n + 1; frame <= t; ++frame) {
        auto it = by_frame.find(frame);
        check(it != by_frame.end(), "stack_sequence: missing frame ", frame, " in window [",
              t - n + 1, ",", t, "]");
        seq.values.insert(seq.values.end(), it->second->values.begin(),
                          it->second->values.end());
    }
    return seq;
}

// noinline: GCC 11 miscompiles this three-way reduction when it is inlined
// and re-vectorized inside some callers; a single out-of-line instance is
// compiled correctly (verified against the scalar oracle in the test suite).
#if defined(__GNUC__)
[[gnu::noinline]]
#endif
inline double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
    check(a.size() == b.size(), "cosine_distance: dimension mismatch, ", a.size(), " vs ",
          b.size());
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    check(na > 0.0 && nb > 0.0, "cosine_distance: zero vector");
    double d = 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
    if (d < 0.0) d = 0.0;
    if (d > 2.0) d = 2.0;
    return d;
}

inline double cosine_distance(const FeatureVector& a, const FeatureVector& b) {
    return cosine_distance(a.values, b.values);
}

inline double cosine_distance(const SequenceFeature& a, const SequenceFeature& b) {
    check(a.length == b.length, "cosine_distance: sequence lengths differ, ", a.length, " vs ",
          b.length);
    return cosine_distance(a.values, b.values);
}

struct SequenceOptions {
    // normalize each member feature before stacking (the default), or stack
    // raw features first; the stacked vector is re-normalized either way
    bool normalize_before_stack = true;
};

// Sequence features for every admissible trailing window: t = n-1 ... N-1.
// The first n-1 frames produce no query.
inline std::vector<SequenceFeature> build_sequence_features(
    const std::vector<FeatureVector>& per_frame, int n, const SequenceOptions& opts = {}) {
    check(n >= 1, "build_sequence_features: sequence length must be >= 1");
    check(static_cast<size_t>(n) <= per_frame.size(), "build_sequence_features: length ", n,
          " exceeds frame count ", per_frame.size());
    std::vector<FeatureVector> members = per_frame;
    if (opts.normalize_before_stack)
        for (auto& f : members) f = normalize(f);
    std::vector<SequenceFeature> out;
    for (size_t t = static_cast<size_t>(n) - 1; t < members.size(); ++t) {
        SequenceFeature seq = stack_sequence(members, n, static_cast<int64_t>(t));
        const double norm = vector_norm(seq.values);
        check(norm > 0.0, "build_sequence_features: zero stacked vector at t=", t);
        for (double& v : seq.values) v /= norm;
        out.push_back(std::move(seq));
    }
    return out;
}

// ---- feature files ---------------------------------------------------------

namespace featfile {

constexpr char kMagic[8] = {'G', 'A', 'N', 'P', 'R', 'F', 'T', '1'};
constexpr uint32_t kVersion = 1;

inline void write(const std::string& path, const std::vector<FeatureVector>& features,
                  uint32_t feature_dim, bool normalized) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    check(out.good(), "feature file: cannot open '", path, "' for writing");
    out.write(kMagic, sizeof(kMagic));
    const uint32_t version = kVersion;
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&feature_dim), 4);
    const uint8_t norm_flag = normalized ? 1 : 0;
    out.write(reinterpret_cast<const char*>(&norm_flag), 1);
    const uint64_t count = features.size();
    out.write(reinterpret_cast<const char*>(&count), 8);
    for (const auto& f : features) {
        check(f.values.size() == feature_dim, "feature file: feature for frame ", f.source_frame,
              " has length ", f.values.size(), ", expected ", feature_dim);
        out.write(reinterpret_cast<const char*>(&f.source_frame), 8);
        const uint32_t dlen = static_cast<uint32_t>(f.domain.size());
        out.write(reinterpret_cast<const char*>(&dlen), 4);
        out.write(f.domain.data(), dlen);
        out.write(reinterpret_cast<const char*>(&feature_dim), 4);
        out.write(reinterpret_cast<const char*>(f.values.data()),
                  static_cast<std::streamsize>(feature_dim * sizeof(double)));
    }
    check(out.good(), "feature file: write to '", path, "' failed");
}

struct FileContents {
    uint32_t feature_dim = 0;
    bool normalized = false;
    std::vector<FeatureVector> features;
};

inline FileContents read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "feature file: cannot open '", path, "'");
    char magic[8];
    in.read(magic, 8);
    check(in.gcount() == 8 && std::memcmp(magic, kMagic, 8) == 0, "feature file: '", path,
          "' has bad magic");
    const auto read_pod = [&](auto& v) {
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        check(in.gcount() == sizeof(v), "feature file: truncated '", path, "'");
    };
    uint32_t version;
    read_pod(version);
    check(version == kVersion, "feature file: version ", version, " unsupported");
    FileContents c;
    read_pod(c.feature_dim);
    uint8_t norm_flag;
    read_pod(norm_flag);
    c.normalized = norm_flag != 0;
    uint64_t count;
    read_pod(count);
    for (uint64_t i = 0; i < count; ++i) {
        FeatureVector f;
        read_pod(f.source_frame);
        uint32_t dlen;
        read_pod(dlen);
        f.domain.resize(dlen);
        in.read(f.domain.data(), dlen);
        check(in.gcount() == static_cast<std::streamsize>(dlen), "feature file: truncated");
        uint32_t dim;
        read_pod(dim);
        check(dim == c.feature_dim, "feature file: record ", i, " has dim ", dim, ", expected ",
              c.feature_dim);
        f.values.resize(dim);
        in.read(reinterpret_cast<char*>(f.values.data()),
                static_cast<std::streamsize>(dim * sizeof(double)));
        check(in.gcount() == static_cast<std::streamsize>(dim * sizeof(double)),
              "feature file: truncated values in '", path, "'");
        c.features.push_back(std::move(f));
    }
    return c;
}

// tab-separated debug dump: frame, domain, then the raw values
inline void write_text(std::ostream& os, const std::vector<FeatureVector>& features) {
    os << "frame\tdomain\tvalues...\n";
    for (const auto& f : features) {
        os << f.source_frame << '\t' << f.domain;
        char buf[32];
        for (double v : f.values) {
            std::snprintf(buf, sizeof(buf), "\t%.17g", v);
            os << buf;
        }
        os << '\n';
    }
}

}  // namespace featfile
}  // namespace ganpr
