#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "ganpr/batching.hpp"
#include "ganpr/image_io.hpp"
#include "ganpr/rng.hpp"
#include "ganpr/tensor.hpp"

namespace ganpr {

/// One time-ordered frame: [3,S,S] pixels in [-1,1].
struct ImageRecord {
    int64_t frame_index = 0;
    std::string domain;
    Tensor pixels;
    std::string source_name;  // original filename when loaded from disk
};

// ---- resizing -----------------------------------------------------------------

// Half-pixel-center bilinear sampling; an identity when sizes already match.
inline Tensor bilinear_resize(const Tensor& img, int out_h, int out_w) {
    check(img.ndim() == 3, "bilinear_resize: expected [C,H,W], got ", img.shape_str());
    const int C = img.dim(0), H = img.dim(1), W = img.dim(2);
    check(out_h >= 1 && out_w >= 1, "bilinear_resize: output size must be positive");
    Tensor out({C, out_h, out_w});
    const double sy = static_cast<double>(H) / out_h;
    const double sx = static_cast<double>(W) / out_w;
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < out_h; ++y) {
            double fy = (y + 0.5) * sy - 0.5;
            fy = std::min(std::max(fy, 0.0), static_cast<double>(H - 1));
            const int y0 = static_cast<int>(fy);
            const int y1 = std::min(y0 + 1, H - 1);
            const double wy = fy - y0;
            for (int x = 0; x < out_w; ++x) {
                double fx = (x + 0.5) * sx - 0.5;
                fx = std::min(std::max(fx, 0.0), static_cast<double>(W - 1));
                const int x0 = static_cast<int>(fx);
                const int x1 = std::min(x0 + 1, W - 1);
                const double wx = fx - x0;
                const double v00 = img[(static_cast<size_t>(c) * H + y0) * W + x0];
                const double v01 = img[(static_cast<size_t>(c) * H + y0) * W + x1];
                const double v10 = img[(static_cast<size_t>(c) * H + y1) * W + x0];
                const double v11 = img[(static_cast<size_t>(c) * H + y1) * W + x1];
                out[(static_cast<size_t>(c) * out_h + y) * out_w + x] =
                    (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
            }
        }
    return out;
}

// ---- loading -------------------------------------------------------------------

struct LoadResult {
    std::vector<ImageRecord> records;
    size_t skipped = 0;
};

// Decodes every supported image in lexicographic filename order (temporal
// order by convention), resizes to size x size, and maps pixels to [-1,1].
// Undecodable files are skipped with a warning; stride keeps every k-th frame.
inline LoadResult load_image_dir(const std::string& path, int size,
                                 const std::string& domain = "", int stride = 1,
                                 std::ostream& warnings = std::cerr) {
    check(stride >= 1, "load_image_dir: stride must be >= 1, got ", stride);
    check(std::filesystem::is_directory(path), "load_image_dir: '", path,
          "' is not a directory");
    std::vector<std::string> names;
    for (const auto& entry : std::filesystem::directory_iterator(path)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (imageio::is_supported_image(name)) names.push_back(name);
    }
    check(!names.empty(), "load_image_dir: no supported images in '", path, "'");
    std::sort(names.begin(), names.end());

    LoadResult out;
    int64_t next_frame = 0;
    for (size_t i = 0; i < names.size(); i += static_cast<size_t>(stride)) {
        const std::string full = (std::filesystem::path(path) / names[i]).string();
        ImageU8 raw;
        try {
            raw = imageio::read_image(full);
        } catch (const Error& e) {
            warnings << "warning: skipping undecodable image: " << e.what() << "\n";
            out.skipped++;
            continue;
        }
        Tensor t = tensor_from_u8(raw);
        if (t.dim(0) == 1) {  // replicate grayscale into three channels
            Tensor rgb({3, t.dim(1), t.dim(2)});
            for (int c = 0; c < 3; ++c)
                std::copy(t.values().begin(), t.values().end(),
                          rgb.values().begin() + static_cast<long>(c * t.numel()));
            t = std::move(rgb);
        }
        ImageRecord rec;
        rec.frame_index = next_frame++;
        rec.domain = domain;
        rec.pixels = bilinear_resize(t, size, size);
        rec.source_name = names[i];
        out.records.push_back(std::move(rec));
    }
    check(!out.records.empty(), "load_image_dir: no decodable images in '", path, "'");
    return out;
}

// ---- train/test split -------------------------------------------------------------

/// First halves of both domains are the frame-aligned test set. The second
/// half is split again: A trains on its first quarter, B on its last, so the
/// two training sets never overlap in time and contain no cross-domain pairs.
struct DatasetSplit {
    std::vector<ImageRecord> test_a, test_b;
    std::vector<ImageRecord> train_a, train_b;
};

inline DatasetSplit split_dataset(const std::vector<ImageRecord>& seq_a,
                                  const std::vector<ImageRecord>& seq_b,
                                  double train_fraction = 1.0) {
    check(seq_a.size() == seq_b.size(), "split_dataset: sequence lengths differ, ", seq_a.size(),
          " vs ", seq_b.size());
    check(seq_a.size() >= 4, "split_dataset: need at least 4 frames, got ", seq_a.size());
    check(train_fraction > 0.0 && train_fraction <= 1.0,
          "split_dataset: train_fraction must be in (0,1], got ", train_fraction);
    const size_t total = seq_a.size();
    const size_t half = total / 2;
    const size_t quarter = (total - half) / 2;

    DatasetSplit split;
    split.test_a.assign(seq_a.begin(), seq_a.begin() + static_cast<long>(half));
    split.test_b.assign(seq_b.begin(), seq_b.begin() + static_cast<long>(half));
    const int keep_every = std::max(1, static_cast<int>(std::lround(1.0 / train_fraction)));
    for (size_t i = half; i < half + quarter; i += static_cast<size_t>(keep_every))
        split.train_a.push_back(seq_a[i]);
    for (size_t i = half + quarter; i < total; i += static_cast<size_t>(keep_every))
        split.train_b.push_back(seq_b[i]);
    return split;
}

// ---- synthetic paired domains ----------------------------------------------------

struct SynthOptions {
    int stationary_runs = 0;  // repeated-frame segments emulating a stopped camera
    int run_length = 4;
};

namespace synth_detail {

struct Shape {
    bool circle = false;
    double cx = 0, cy = 0, sx = 0, sy = 0;
    double material = 0;  // drives the per-domain palette
};

struct Scene {
    double bg = 0;
    std::vector<Shape> shapes;
};

inline Scene make_scene(uint64_t seed, int64_t scene_idx) {
    Rng rng = Rng::stream(seed, 0x5C33, static_cast<uint64_t>(scene_idx));
    Scene s;
    s.bg = rng.uniform();
    const int count = 4 + static_cast<int>(rng.below(4));
    for (int i = 0; i < count; ++i) {
        Shape sh;
        sh.circle = rng.uniform() < 0.5;
        sh.cx = rng.uniform(0.1, 0.9);
        sh.cy = rng.uniform(0.1, 0.9);
        sh.sx = rng.uniform(0.06, 0.22);
        sh.sy = sh.circle ? sh.sx : rng.uniform(0.06, 0.22);
        sh.material = rng.uniform();
        s.shapes.push_back(sh);
    }
    return s;
}

struct Rgb {
    double r, g, b;
};

// two fixed palettes; same material, different appearance
inline Rgb palette(int domain, double m) {
    if (domain == 0) return {0.15 + 0.75 * m, 0.90 - 0.60 * m, 0.25 + 0.40 * m};
    return {0.95 - 0.80 * m, 0.15 + 0.50 * m, 0.80 - 0.50 * m};
}

inline Rgb background(int domain, double bg, double v) {
    if (domain == 0) {
        const double base = 0.78 + 0.08 * bg;
        return {base - 0.05 + 0.04 * v, base + 0.02 - 0.03 * v, base + 0.06 + 0.05 * v};
    }
    const double base = 0.16 + 0.08 * bg;
    return {base + 0.04 - 0.03 * v, base - 0.02 + 0.02 * v, base + 0.10 + 0.06 * v};
}

inline Tensor render(const Scene& scene, int domain, int size, uint64_t seed, int64_t frame) {
    Tensor img({3, size, size});
    Rng noise = Rng::stream(seed, domain == 0 ? 0xA11CE : 0xB0B, static_cast<uint64_t>(frame));
    const double wobble = noise.uniform(-0.02, 0.02);
    for (int y = 0; y < size; ++y) {
        const double fy = (y + 0.5) / size;
        for (int x = 0; x < size; ++x) {
            const double fx = (x + 0.5) / size;
            Rgb c = background(domain, scene.bg, fy);
            for (const auto& sh : scene.shapes) {
                bool inside;
                if (sh.circle) {
                    const double dx = fx - sh.cx, dy = fy - sh.cy;
                    inside = dx * dx + dy * dy <= sh.sx * sh.sx;
                } else {
                    inside = std::abs(fx - sh.cx) <= sh.sx && std::abs(fy - sh.cy) <= sh.sy;
                }
                if (inside) c = palette(domain, sh.material);
            }
            const double nr = noise.uniform(-0.015, 0.015);
            const double ng = noise.uniform(-0.015, 0.015);
            const double nb = noise.uniform(-0.015, 0.015);
            const auto clamp11 = [](double v) { return std::min(1.0, std::max(-1.0, v)); };
            img[(0 * static_cast<size_t>(size) + y) * size + x] =
                clamp11((c.r + wobble + nr) * 2.0 - 1.0);
            img[(1 * static_cast<size_t>(size) + y) * size + x] =
                clamp11((c.g + wobble + ng) * 2.0 - 1.0);
            img[(2 * static_cast<size_t>(size) + y) * size + x] =
                clamp11((c.b + wobble + nb) * 2.0 - 1.0);
        }
    }
    return img;
}

inline std::vector<int64_t> scene_assignment(uint64_t seed, int64_t count,
                                             const SynthOptions& opts) {
    std::vector<int64_t> scene_of(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) scene_of[static_cast<size_t>(i)] = i;
    if (opts.stationary_runs > 0 && opts.run_length > 1) {
        Rng rng = Rng::stream(seed, 0x57A7);
        for (int r = 0; r < opts.stationary_runs; ++r) {
            if (count <= opts.run_length) break;
            const int64_t start =
                static_cast<int64_t>(rng.below(static_cast<uint64_t>(count - opts.run_length)));
            for (int64_t k = 1; k < opts.run_length; ++k)
                scene_of[static_cast<size_t>(start + k)] = scene_of[static_cast<size_t>(start)];
        }
    }
    return scene_of;
}

}  // namespace synth_detail

// Procedurally renders `count` scenes under two appearance transforms.
// Frame i depicts identical geometry in both domains; palettes, brightness,
// and per-domain noise differ. A pure function of (seed, count, size, opts).
inline std::pair<std::vector<ImageRecord>, std::vector<ImageRecord>> synthesize_paired_domains(
    uint64_t seed, int64_t count, int size, const SynthOptions& opts = {}) {
    check(count >= 1, "synthesize_paired_domains: count must be >= 1");
    check(size >= 8, "synthesize_paired_domains: size must be >= 8, got ", size);
    std::vector<ImageRecord> seq_a, seq_b;
    const auto scene_of = synth_detail::scene_assignment(seed, count, opts);
    for (int64_t i = 0; i < count; ++i) {
        const auto scene = synth_detail::make_scene(seed, scene_of[static_cast<size_t>(i)]);
        ImageRecord a, b;
        a.frame_index = i;
        a.domain = "A";
        a.pixels = synth_detail::render(scene, 0, size, seed, scene_of[static_cast<size_t>(i)]);
        b.frame_index = i;
        b.domain = "B";
        b.pixels = synth_detail::render(scene, 1, size, seed, scene_of[static_cast<size_t>(i)]);
        seq_a.push_back(std::move(a));
        seq_b.push_back(std::move(b));
    }
    return {std::move(seq_a), std::move(seq_b)};
}

// ---- Canny edge extraction ---------------------------------------------------------

// Grayscale conversion, Gaussian smoothing (sigma 1.4), Sobel gradients,
// non-maximum suppression, hysteresis linking. Output is [1,S,S] in {-1,+1}.
inline Tensor canny_edges(const Tensor& image, double low_threshold, double high_threshold) {
    check(image.ndim() == 3, "canny_edges: expected [C,H,W], got ", image.shape_str());
    check(low_threshold > 0.0 && low_threshold < high_threshold,
          "canny_edges: thresholds must satisfy 0 < low < high, got low=", low_threshold,
          " high=", high_threshold);
    const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
    check(C == 1 || C == 3, "canny_edges: expected 1 or 3 channels, got ", C);

    // luminance in [0,1]
    std::vector<double> gray(static_cast<size_t>(H) * W);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double v;
            if (C == 3) {
                const double r = image[(0 * static_cast<size_t>(H) + y) * W + x];
                const double g = image[(1 * static_cast<size_t>(H) + y) * W + x];
                const double b = image[(2 * static_cast<size_t>(H) + y) * W + x];
                v = 0.299 * r + 0.587 * g + 0.114 * b;
            } else {
                v = image[static_cast<size_t>(y) * W + x];
            }
            gray[static_cast<size_t>(y) * W + x] = (v + 1.0) * 0.5;
        }

    // separable Gaussian, sigma 1.4, radius 3*sigma, clamped borders
    const double sigma = 1.4;
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
    double ksum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[static_cast<size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
        ksum += kernel[static_cast<size_t>(i + radius)];
    }
    for (auto& k : kernel) k /= ksum;
    const auto clampi = [](int v, int hi) { return std::min(std::max(v, 0), hi - 1); };
    std::vector<double> tmp(gray.size()), smooth(gray.size());
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[static_cast<size_t>(i + radius)] *
                       gray[static_cast<size_t>(y) * W + clampi(x + i, W)];
            tmp[static_cast<size_t>(y) * W + x] = acc;
        }
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[static_cast<size_t>(i + radius)] *
                       tmp[static_cast<size_t>(clampi(y + i, H)) * W + x];
            smooth[static_cast<size_t>(y) * W + x] = acc;
        }

    // Sobel
    std::vector<double> mag(gray.size()), dir_bin(gray.size());
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const auto s = [&](int dy, int dx) {
                return smooth[static_cast<size_t>(clampi(y + dy, H)) * W + clampi(x + dx, W)];
            };
            const double gx = (s(-1, 1) + 2 * s(0, 1) + s(1, 1)) -
                              (s(-1, -1) + 2 * s(0, -1) + s(1, -1));
            const double gy = (s(1, -1) + 2 * s(1, 0) + s(1, 1)) -
                              (s(-1, -1) + 2 * s(-1, 0) + s(-1, 1));
            mag[static_cast<size_t>(y) * W + x] = std::hypot(gx, gy);
            double angle = std::atan2(gy, gx) * 180.0 / 3.14159265358979323846;
            if (angle < 0) angle += 180.0;
            int bin;
            if (angle < 22.5 || angle >= 157.5)
                bin = 0;  // horizontal gradient: compare x-1 / x+1
            else if (angle < 67.5)
                bin = 1;  // diagonal down-right
            else if (angle < 112.5)
                bin = 2;  // vertical gradient: compare y-1 / y+1
            else
                bin = 3;  // diagonal down-left
            dir_bin[static_cast<size_t>(y) * W + x] = bin;
        }

    // non-maximum suppression
    std::vector<uint8_t> strength(gray.size(), 0);  // 0 none, 1 weak, 2 strong
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double m = mag[static_cast<size_t>(y) * W + x];
            if (m < low_threshold) continue;
            const int bin = static_cast<int>(dir_bin[static_cast<size_t>(y) * W + x]);
            static const int offs[4][2][2] = {{{0, -1}, {0, 1}},
                                              {{-1, -1}, {1, 1}},
                                              {{-1, 0}, {1, 0}},
                                              {{-1, 1}, {1, -1}}};
            const auto neighbor = [&](int which) {
                const int ny = y + offs[bin][which][0];
                const int nx = x + offs[bin][which][1];
                if (ny < 0 || ny >= H || nx < 0 || nx >= W) return 0.0;
                return mag[static_cast<size_t>(ny) * W + nx];
            };
            // strict on the negative side so an exact two-pixel tie thins to one
            if (m > neighbor(0) && m >= neighbor(1))
                strength[static_cast<size_t>(y) * W + x] = m >= high_threshold ? 2 : 1;
        }

    // hysteresis: weak pixels survive only when 8-connected to a strong one
    Tensor out({1, H, W}, -1.0);
    std::deque<std::pair<int, int>> frontier;
    std::vector<uint8_t> visited(gray.size(), 0);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            if (strength[static_cast<size_t>(y) * W + x] == 2) {
                frontier.emplace_back(y, x);
                visited[static_cast<size_t>(y) * W + x] = 1;
            }
    while (!frontier.empty()) {
        const auto [y, x] = frontier.front();
        frontier.pop_front();
        out[static_cast<size_t>(y) * W + x] = 1.0;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int ny = y + dy, nx = x + dx;
                if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                const size_t idx = static_cast<size_t>(ny) * W + nx;
                if (!visited[idx] && strength[idx] >= 1) {
                    visited[idx] = 1;
                    frontier.emplace_back(ny, nx);
                }
            }
    }
    return out;
}

}  // namespace ganpr
