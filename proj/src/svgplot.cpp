#include "slmtl/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace slmtl {

namespace {

constexpr int kWidth = 760;
constexpr int kHeight = 480;
constexpr int kMarginLeft = 70;
constexpr int kMarginRight = 20;
constexpr int kMarginTop = 40;
constexpr int kMarginBottom = 55;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                          "#8c564b", "#17becf", "#7f7f7f", "#bcbd22", "#e377c2"};
constexpr int kPaletteSize = 10;

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void absorb(double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void pad() {
        if (!(lo < hi)) {
            lo -= 0.5;
            hi += 0.5;
        } else {
            const double d = 0.05 * (hi - lo);
            lo -= d;
            hi += d;
        }
    }
};

std::string fmt(double v) {
    std::ostringstream out;
    out.precision(4);
    out << v;
    return out.str();
}

void axes(std::ostringstream& svg, const Range& xr, const Range& yr, const PlotOptions& opts,
          bool log_y) {
    const int x0 = kMarginLeft, x1 = kWidth - kMarginRight;
    const int y0 = kHeight - kMarginBottom, y1 = kMarginTop;
    svg << "<rect x='" << x0 << "' y='" << y1 << "' width='" << (x1 - x0) << "' height='" << (y0 - y1)
        << "' fill='none' stroke='#333'/>\n";
    svg << "<text x='" << kWidth / 2 << "' y='20' text-anchor='middle' font-size='15'>" << opts.title
        << "</text>\n";
    svg << "<text x='" << (x0 + x1) / 2 << "' y='" << (kHeight - 12)
        << "' text-anchor='middle' font-size='12'>" << opts.x_label << "</text>\n";
    svg << "<text x='16' y='" << (y0 + y1) / 2 << "' text-anchor='middle' font-size='12' transform='rotate(-90 16 "
        << (y0 + y1) / 2 << ")'>" << opts.y_label << (log_y ? " (log)" : "") << "</text>\n";
    for (int k = 0; k <= 4; ++k) {
        const double fx = xr.lo + (xr.hi - xr.lo) * k / 4.0;
        const double px = x0 + (x1 - x0) * k / 4.0;
        svg << "<line x1='" << px << "' y1='" << y0 << "' x2='" << px << "' y2='" << (y0 + 4)
            << "' stroke='#333'/>\n";
        svg << "<text x='" << px << "' y='" << (y0 + 18) << "' text-anchor='middle' font-size='11'>"
            << fmt(fx) << "</text>\n";
        const double fy = yr.lo + (yr.hi - yr.lo) * k / 4.0;
        const double py = y0 - (y0 - y1) * k / 4.0;
        svg << "<line x1='" << (x0 - 4) << "' y1='" << py << "' x2='" << x0 << "' y2='" << py
            << "' stroke='#333'/>\n";
        svg << "<text x='" << (x0 - 8) << "' y='" << (py + 4) << "' text-anchor='end' font-size='11'>"
            << fmt(log_y ? std::pow(10.0, fy) : fy) << "</text>\n";
    }
}

}  // namespace

std::string render_line_chart(const std::vector<PlotSeries>& series, const PlotOptions& opts) {
    Range xr, yr;
    const bool log_y = opts.log_y;
    for (const auto& s : series) {
        for (size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
            double y = s.y[k];
            if (!std::isfinite(s.x[k]) || !std::isfinite(y)) continue;
            if (log_y) {
                if (y <= 0.0) continue;
                y = std::log10(y);
            }
            xr.absorb(s.x[k]);
            yr.absorb(y);
        }
    }
    xr.pad();
    yr.pad();

    std::ostringstream svg;
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kWidth << "' height='" << kHeight
        << "' font-family='sans-serif'>\n";
    axes(svg, xr, yr, opts, log_y);

    const int x0 = kMarginLeft, x1 = kWidth - kMarginRight;
    const int y0 = kHeight - kMarginBottom, y1 = kMarginTop;
    int color = 0;
    int legend_y = kMarginTop + 14;
    for (const auto& s : series) {
        const char* c = kPalette[color % kPaletteSize];
        std::ostringstream pts;
        for (size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
            double y = s.y[k];
            if (!std::isfinite(s.x[k]) || !std::isfinite(y)) continue;
            if (log_y) {
                if (y <= 0.0) continue;
                y = std::log10(y);
            }
            const double px = x0 + (x1 - x0) * (s.x[k] - xr.lo) / (xr.hi - xr.lo);
            const double py = y0 - (y0 - y1) * (y - yr.lo) / (yr.hi - yr.lo);
            pts << px << "," << py << " ";
        }
        svg << "<polyline points='" << pts.str() << "' fill='none' stroke='" << c
            << "' stroke-width='1.6'/>\n";
        svg << "<line x1='" << (x1 - 150) << "' y1='" << legend_y << "' x2='" << (x1 - 130) << "' y2='"
            << legend_y << "' stroke='" << c << "' stroke-width='3'/>\n";
        svg << "<text x='" << (x1 - 124) << "' y='" << (legend_y + 4) << "' font-size='12'>" << s.label
            << "</text>\n";
        legend_y += 16;
        ++color;
    }
    svg << "</svg>\n";
    return svg.str();
}

std::string render_histogram(const std::vector<HistSeries>& series, int bins, const PlotOptions& opts) {
    require(bins >= 1, "histogram: bins must be >= 1");
    Range vr;
    for (const auto& s : series) {
        for (double v : s.values) {
            if (std::isfinite(v)) vr.absorb(v);
        }
    }
    vr.pad();

    std::vector<Vec> counts(series.size(), Vec(bins, 0.0));
    double max_count = 1.0;
    for (size_t si = 0; si < series.size(); ++si) {
        for (double v : series[si].values) {
            if (!std::isfinite(v)) continue;
            int b = static_cast<int>((v - vr.lo) / (vr.hi - vr.lo) * bins);
            b = std::clamp(b, 0, bins - 1);
            counts[si][b] += 1.0;
            max_count = std::max(max_count, counts[si][b]);
        }
    }

    Range xr = vr;
    Range yr;
    yr.absorb(0.0);
    yr.absorb(max_count * 1.05);

    std::ostringstream svg;
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kWidth << "' height='" << kHeight
        << "' font-family='sans-serif'>\n";
    PlotOptions ax = opts;
    axes(svg, xr, yr, ax, false);

    const int x0 = kMarginLeft, x1 = kWidth - kMarginRight;
    const int y0 = kHeight - kMarginBottom, y1 = kMarginTop;
    const double bin_w = static_cast<double>(x1 - x0) / bins;
    int legend_y = kMarginTop + 14;
    for (size_t si = 0; si < series.size(); ++si) {
        const char* c = kPalette[si % kPaletteSize];
        for (int b = 0; b < bins; ++b) {
            if (counts[si][b] <= 0.0) continue;
            const double h = (y0 - y1) * counts[si][b] / yr.hi;
            svg << "<rect x='" << (x0 + b * bin_w) << "' y='" << (y0 - h) << "' width='" << bin_w
                << "' height='" << h << "' fill='" << c << "' fill-opacity='0.45'/>\n";
        }
        svg << "<rect x='" << (x1 - 150) << "' y='" << (legend_y - 8)
            << "' width='20' height='10' fill='" << c << "' fill-opacity='0.45'/>\n";
        svg << "<text x='" << (x1 - 124) << "' y='" << (legend_y + 2) << "' font-size='12'>"
            << series[si].label << "</text>\n";
        legend_y += 16;
    }
    svg << "</svg>\n";
    return svg.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    require(out.good(), "cannot write " + path);
    out << content;
}

}  // namespace slmtl
