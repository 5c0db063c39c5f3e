#pragma once

#include <string>
#include <vector>

#include "slmtl/tensor.hpp"

namespace slmtl {

/// One named curve for a line chart.
struct PlotSeries {
    std::string label;
    Vec x;
    Vec y;
};

struct PlotOptions {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_y = false;
};

/// Self-contained SVG line chart; series are clipped to finite values.
std::string render_line_chart(const std::vector<PlotSeries>& series, const PlotOptions& opts);

/// Overlaid histograms with shared binning.
struct HistSeries {
    std::string label;
    Vec values;
};

std::string render_histogram(const std::vector<HistSeries>& series, int bins, const PlotOptions& opts);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace slmtl
