#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "ganpr/placerec.hpp"

namespace ganpr {

// Vector plot of PR curves on a fixed [0,1]x[0,1] frame, recall on the x
// axis, one polyline per curve, legend keyed by sequence length.
namespace svgplot {

struct Layout {
    int width = 640;
    int height = 480;
    int margin_left = 70;
    int margin_right = 30;
    int margin_top = 30;
    int margin_bottom = 60;

    double plot_w() const { return width - margin_left - margin_right; }
    double plot_h() const { return height - margin_top - margin_bottom; }
    double x_of(double recall) const { return margin_left + recall * plot_w(); }
    double y_of(double precision) const { return margin_top + (1.0 - precision) * plot_h(); }
};

inline const char* curve_color(size_t idx) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    return palette[idx % 8];
}

inline void write_pr_plot(const std::vector<PRCurve>& curves, const std::string& path) {
    check(!curves.empty(), "plot: need at least one PR curve");
    const Layout ly;
    std::ostringstream os;
    os.precision(10);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << ly.width << "\" height=\""
       << ly.height << "\" viewBox=\"0 0 " << ly.width << " " << ly.height << "\">\n";
    os << "<rect width=\"" << ly.width << "\" height=\"" << ly.height << "\" fill=\"white\"/>\n";

    // frame and grid
    os << "<rect x=\"" << ly.margin_left << "\" y=\"" << ly.margin_top << "\" width=\""
       << ly.plot_w() << "\" height=\"" << ly.plot_h()
       << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double frac = i / 5.0;
        const double x = ly.x_of(frac);
        const double y = ly.y_of(frac);
        os << "<line x1=\"" << x << "\" y1=\"" << ly.margin_top << "\" x2=\"" << x << "\" y2=\""
           << ly.margin_top + ly.plot_h() << "\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>\n";
        os << "<line x1=\"" << ly.margin_left << "\" y1=\"" << y << "\" x2=\""
           << ly.margin_left + ly.plot_w() << "\" y2=\"" << y
           << "\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>\n";
        os << "<text x=\"" << x << "\" y=\"" << ly.height - ly.margin_bottom + 20
           << "\" font-size=\"12\" text-anchor=\"middle\">" << frac << "</text>\n";
        os << "<text x=\"" << ly.margin_left - 8 << "\" y=\"" << y + 4
           << "\" font-size=\"12\" text-anchor=\"end\">" << frac << "</text>\n";
    }
    os << "<text x=\"" << ly.margin_left + ly.plot_w() / 2 << "\" y=\"" << ly.height - 15
       << "\" font-size=\"14\" text-anchor=\"middle\">Recall</text>\n";
    os << "<text x=\"18\" y=\"" << ly.margin_top + ly.plot_h() / 2
       << "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
       << ly.margin_top + ly.plot_h() / 2 << ")\">Precision</text>\n";

    for (size_t c = 0; c < curves.size(); ++c) {
        const auto& curve = curves[c];
        os << "<polyline fill=\"none\" stroke=\"" << curve_color(c)
           << "\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < curve.points.size(); ++i) {
            if (i) os << ' ';
            os << ly.x_of(curve.points[i].recall) << ',' << ly.y_of(curve.points[i].precision);
        }
        os << "\"/>\n";
        const double lx = ly.margin_left + ly.plot_w() - 110;
        const double lyy = ly.margin_top + 18 + 18.0 * static_cast<double>(c);
        os << "<line x1=\"" << lx << "\" y1=\"" << lyy - 4 << "\" x2=\"" << lx + 28 << "\" y2=\""
           << lyy - 4 << "\" stroke=\"" << curve_color(c) << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << lx + 34 << "\" y=\"" << lyy
           << "\" font-size=\"12\">n = " << curve.sequence_length << "</text>\n";
    }
    os << "</svg>\n";

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        check(out.good(), "plot: cannot open '", tmp, "'");
        out << os.str();
        check(out.good(), "plot: write to '", tmp, "' failed");
    }
    std::filesystem::rename(tmp, path);
}

// Recovers the data-space sample points of each plotted polyline; used by
// tests to confirm the plot reproduces its input files.
inline std::vector<std::vector<PRPoint>> parse_plot_points(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), "plot: cannot open '", path, "'");
    const std::string text((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    const Layout ly;
    std::vector<std::vector<PRPoint>> curves;
    size_t pos = 0;
    while ((pos = text.find("<polyline", pos)) != std::string::npos) {
        const size_t pts = text.find("points=\"", pos);
        check(pts != std::string::npos, "plot: malformed polyline");
        const size_t end = text.find('"', pts + 8);
        std::istringstream ps(text.substr(pts + 8, end - pts - 8));
        std::vector<PRPoint> curve;
        std::string pair;
        while (ps >> pair) {
            const size_t comma = pair.find(',');
            const double px = std::stod(pair.substr(0, comma));
            const double py = std::stod(pair.substr(comma + 1));
            PRPoint p;
            p.recall = (px - ly.margin_left) / ly.plot_w();
            p.precision = 1.0 - (py - ly.margin_top) / ly.plot_h();
            curve.push_back(p);
        }
        curves.push_back(std::move(curve));
        pos = end;
    }
    return curves;
}

}  // namespace svgplot
}  // namespace ganpr
