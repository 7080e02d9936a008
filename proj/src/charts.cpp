#include "valigen/charts.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace valigen {

namespace {

std::string escape_xml(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

// white -> dark blue
std::string heat_colour(double t) {
    t = std::clamp(t, 0.0, 1.0);
    const int r = static_cast<int>(247 - t * (247 - 8));
    const int g = static_cast<int>(251 - t * (251 - 48));
    const int b = static_cast<int>(255 - t * (255 - 107));
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

}  // namespace

std::string render_f1_bars(const EvalReport& report) {
    const std::size_t n = report.per_class.size();
    const double left = 60, right = 20, top = 40, plot_h = 300, bottom = 150;
    const double bar_w = 40, gap = 16;
    const double plot_w = std::max(1.0, static_cast<double>(n) * (bar_w + gap) + gap);
    const double width = left + plot_w + right;
    const double height = top + plot_h + bottom;
    const double axis_y = top + plot_h;

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
        << "\" viewBox=\"0 0 " << num(width) << " " << num(height) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"" << num(width) << "\" height=\"" << num(height) << "\" fill=\"white\"/>\n";
    svg << "<text x=\"" << num(width / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">Per-class F1</text>\n";
    for (int i = 0; i <= 5; ++i) {
        const double v = i / 5.0;
        const double y = axis_y - v * plot_h;
        svg << "<line x1=\"" << num(left) << "\" y1=\"" << num(y) << "\" x2=\"" << num(left + plot_w) << "\" y2=\""
            << num(y) << "\" stroke=\"#dddddd\"/>\n";
        svg << "<text x=\"" << num(left - 6) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">" << num(v)
            << "</text>\n";
    }
    svg << "<line x1=\"" << num(left) << "\" y1=\"" << num(top) << "\" x2=\"" << num(left) << "\" y2=\"" << num(axis_y)
        << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << num(left) << "\" y1=\"" << num(axis_y) << "\" x2=\"" << num(left + plot_w) << "\" y2=\""
        << num(axis_y) << "\" stroke=\"black\"/>\n";
    for (std::size_t i = 0; i < n; ++i) {
        const auto& m = report.per_class[i];
        const double f1 = std::clamp(m.f1, 0.0, 1.0);
        const double x = left + gap + static_cast<double>(i) * (bar_w + gap);
        const double h = f1 * plot_h;
        const auto id = static_cast<std::size_t>(m.class_id);
        const std::string name = id < report.class_names.size() ? report.class_names[id] : std::to_string(m.class_id);
        svg << "<rect class=\"bar\" data-class=\"" << escape_xml(name) << "\" data-f1=\"" << num(f1) << "\" x=\""
            << num(x) << "\" y=\"" << num(axis_y - h) << "\" width=\"" << num(bar_w) << "\" height=\"" << num(h)
            << "\" fill=\"#4c72b0\"/>\n";
        svg << "<text x=\"" << num(x + bar_w / 2) << "\" y=\"" << num(axis_y - h - 4)
            << "\" text-anchor=\"middle\" font-size=\"10\">" << num(f1) << "</text>\n";
        svg << "<text x=\"" << num(x + bar_w / 2) << "\" y=\"" << num(axis_y + 12) << "\" text-anchor=\"end\" transform=\"rotate(-45 "
            << num(x + bar_w / 2) << " " << num(axis_y + 12) << ")\">" << escape_xml(name) << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

std::string render_confusion_heatmap(const EvalReport& report, bool transpose) {
    const std::size_t k = report.confusion.k();
    const double cell = 48, left = 190, top = 60, right = 20, bottom = 190;
    const double width = left + cell * static_cast<double>(k) + right;
    const double height = top + cell * static_cast<double>(k) + bottom;
    std::uint64_t peak = 0;
    for (std::size_t t = 0; t < k; ++t) {
        for (std::size_t p = 0; p < k; ++p) peak = std::max(peak, report.confusion.at(t, p));
    }
    auto label = [&](std::size_t i) {
        return escape_xml(i < report.class_names.size() ? report.class_names[i] : std::to_string(i));
    };
    const char* row_axis = transpose ? "predicted class" : "prompted (true) class";
    const char* col_axis = transpose ? "prompted (true) class" : "predicted class";

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
        << "\" viewBox=\"0 0 " << num(width) << " " << num(height) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"" << num(width) << "\" height=\"" << num(height) << "\" fill=\"white\"/>\n";
    svg << "<text x=\"" << num(width / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">Confusion matrix</text>\n";
    for (std::size_t r = 0; r < k; ++r) {
        const double y = top + cell * static_cast<double>(r);
        svg << "<text x=\"" << num(left - 6) << "\" y=\"" << num(y + cell / 2 + 4) << "\" text-anchor=\"end\">"
            << label(r) << "</text>\n";
        for (std::size_t c = 0; c < k; ++c) {
            const std::uint64_t v = transpose ? report.confusion.at(c, r) : report.confusion.at(r, c);
            const double t = peak ? static_cast<double>(v) / static_cast<double>(peak) : 0.0;
            const double x = left + cell * static_cast<double>(c);
            svg << "<rect class=\"cell\" data-row=\"" << r << "\" data-col=\"" << c << "\" x=\"" << num(x) << "\" y=\""
                << num(y) << "\" width=\"" << num(cell) << "\" height=\"" << num(cell) << "\" fill=\"" << heat_colour(t)
                << "\" stroke=\"#ffffff\"/>\n";
            svg << "<text class=\"count\" x=\"" << num(x + cell / 2) << "\" y=\"" << num(y + cell / 2 + 4)
                << "\" text-anchor=\"middle\" fill=\"" << (t > 0.5 ? "white" : "black") << "\">" << v << "</text>\n";
        }
    }
    const double grid_bottom = top + cell * static_cast<double>(k);
    for (std::size_t c = 0; c < k; ++c) {
        const double x = left + cell * static_cast<double>(c) + cell / 2;
        svg << "<text x=\"" << num(x) << "\" y=\"" << num(grid_bottom + 12) << "\" text-anchor=\"end\" transform=\"rotate(-45 "
            << num(x) << " " << num(grid_bottom + 12) << ")\">" << label(c) << "</text>\n";
    }
    svg << "<text x=\"" << num(left + cell * static_cast<double>(k) / 2) << "\" y=\"" << num(height - 10)
        << "\" text-anchor=\"middle\">" << col_axis << "</text>\n";
    svg << "<text x=\"14\" y=\"" << num(top + cell * static_cast<double>(k) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
        << num(top + cell * static_cast<double>(k) / 2) << ")\">" << row_axis << "</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

ChartSet render_charts(const EvalReport& report, bool transpose) {
    return {render_f1_bars(report), render_confusion_heatmap(report, transpose)};
}

}  // namespace valigen
