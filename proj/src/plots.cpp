#include "fedprune/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fedprune/errors.hpp"

namespace fedprune {

namespace {

constexpr double kWidth = 800.0;
constexpr double kHeight = 500.0;
constexpr double kLeft = 80.0;
constexpr double kRight = 24.0;
constexpr double kTop = 48.0;
constexpr double kBottom = 56.0;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                          "#9467bd", "#ff7f0e", "#8c564b"};
constexpr std::size_t kPaletteSize = sizeof(kPalette) / sizeof(kPalette[0]);

struct Series {
    std::string label;
    std::vector<double> xs;
    std::vector<double> ys;
    bool line = true;
};

std::string esc(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '&') out += "&amp;";
        else if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else out += c;
    }
    return out;
}

std::string num(double v, const char* fmt = "%.6g") {
    char buf[48];
    std::snprintf(buf, sizeof(buf), fmt, v);
    return buf;
}

void span(const std::vector<Series>& series, double& xmin, double& xmax,
          double& ymin, double& ymax) {
    bool first = true;
    for (const Series& s : series) {
        for (std::size_t i = 0; i < s.xs.size(); ++i) {
            if (first) {
                xmin = xmax = s.xs[i];
                ymin = ymax = s.ys[i];
                first = false;
            } else {
                xmin = std::min(xmin, s.xs[i]);
                xmax = std::max(xmax, s.xs[i]);
                ymin = std::min(ymin, s.ys[i]);
                ymax = std::max(ymax, s.ys[i]);
            }
        }
    }
    if (xmax == xmin) {
        xmin -= 1.0;
        xmax += 1.0;
    }
    if (ymax == ymin) {
        ymin -= 1.0;
        ymax += 1.0;
    } else {
        const double pad = (ymax - ymin) * 0.05;
        ymin -= pad;
        ymax += pad;
    }
}

void write_chart(const std::vector<Series>& series, const std::string& x_label,
                 const std::string& y_label, const std::string& title,
                 const std::string& source_table, const std::string& path) {
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    span(series, xmin, xmax, ymin, ymax);
    const double plot_w = kWidth - kLeft - kRight;
    const double plot_h = kHeight - kTop - kBottom;
    const auto px = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * plot_w; };
    const auto py = [&](double y) {
        return kHeight - kBottom - (y - ymin) / (ymax - ymin) * plot_h;
    };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
       << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " "
       << kHeight << "\">\n";
    os << "<metadata id=\"source-table\"><![CDATA[\n" << source_table << "]]></metadata>\n";
    os << "<rect width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" fill=\"#ffffff\"/>\n";
    os << "<text x=\"" << kWidth / 2 << "\" y=\"28\" text-anchor=\"middle\" "
          "font-family=\"sans-serif\" font-size=\"17\">"
       << esc(title) << "</text>\n";

    // frame and ticks
    os << "<g stroke=\"#222222\" fill=\"none\">\n";
    os << "<path d=\"M" << kLeft << " " << kTop << " V" << kHeight - kBottom << " H"
       << kWidth - kRight << "\"/>\n";
    os << "</g>\n";
    os << "<g font-family=\"sans-serif\" font-size=\"12\" fill=\"#222222\">\n";
    constexpr int kTicks = 5;
    for (int t = 0; t < kTicks; ++t) {
        const double fx = xmin + (xmax - xmin) * t / (kTicks - 1);
        const double fy = ymin + (ymax - ymin) * t / (kTicks - 1);
        os << "<line x1=\"" << num(px(fx), "%.2f") << "\" y1=\"" << kHeight - kBottom
           << "\" x2=\"" << num(px(fx), "%.2f") << "\" y2=\"" << kHeight - kBottom + 5
           << "\" stroke=\"#222222\"/>\n";
        os << "<text x=\"" << num(px(fx), "%.2f") << "\" y=\"" << kHeight - kBottom + 20
           << "\" text-anchor=\"middle\">" << esc(num(fx)) << "</text>\n";
        os << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << num(py(fy), "%.2f")
           << "\" x2=\"" << kLeft << "\" y2=\"" << num(py(fy), "%.2f")
           << "\" stroke=\"#222222\"/>\n";
        os << "<text x=\"" << kLeft - 9 << "\" y=\"" << num(py(fy) + 4, "%.2f")
           << "\" text-anchor=\"end\">" << esc(num(fy)) << "</text>\n";
    }
    os << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 12
       << "\" text-anchor=\"middle\">" << esc(x_label) << "</text>\n";
    os << "<text x=\"18\" y=\"" << kTop + plot_h / 2
       << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << kTop + plot_h / 2
       << ")\">" << esc(y_label) << "</text>\n";
    os << "</g>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
        const Series& s = series[si];
        const char* color = kPalette[si % kPaletteSize];
        if (s.line && s.xs.size() > 1) {
            os << "<polyline fill=\"none\" stroke=\"" << color
               << "\" stroke-width=\"1.8\" points=\"";
            for (std::size_t i = 0; i < s.xs.size(); ++i) {
                if (i != 0) os << ' ';
                os << num(px(s.xs[i]), "%.2f") << ',' << num(py(s.ys[i]), "%.2f");
            }
            os << "\"/>\n";
        }
        for (std::size_t i = 0; i < s.xs.size(); ++i) {
            os << "<circle cx=\"" << num(px(s.xs[i]), "%.2f") << "\" cy=\""
               << num(py(s.ys[i]), "%.2f") << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        }
        if (!s.line) {
            // scatter charts carry the label next to each marker
            for (std::size_t i = 0; i < s.xs.size(); ++i) {
                os << "<text x=\"" << num(px(s.xs[i]) + 6, "%.2f") << "\" y=\""
                   << num(py(s.ys[i]) - 6, "%.2f")
                   << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#222222\">"
                   << esc(s.label) << "</text>\n";
            }
        }
    }

    if (series.size() > 1 || (series.size() == 1 && series[0].line)) {
        double ly = kTop + 8;
        for (std::size_t si = 0; si < series.size(); ++si) {
            const char* color = kPalette[si % kPaletteSize];
            os << "<rect x=\"" << kWidth - kRight - 150 << "\" y=\"" << ly - 9
               << "\" width=\"12\" height=\"12\" fill=\"" << color << "\"/>\n";
            os << "<text x=\"" << kWidth - kRight - 132 << "\" y=\"" << ly + 2
               << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#222222\">"
               << esc(series[si].label) << "</text>\n";
            ly += 18;
        }
    }
    os << "</svg>\n";

    std::ofstream file(path, std::ios::binary);
    if (!file) throw ConfigError("plot: cannot open " + path);
    file << os.str();
    if (!file.flush()) throw ConfigError("plot: write to " + path + " failed");
}

std::vector<double> column_values(const MetricsLedger& ledger,
                                  const std::string& column) {
    std::vector<double> out;
    out.reserve(ledger.rows.size());
    unsigned long long running = 0;
    for (const LedgerRow& r : ledger.rows) {
        if (column == "accuracy") out.push_back(r.accuracy);
        else if (column == "best_accuracy") out.push_back(r.best_accuracy);
        else if (column == "params_end") out.push_back(static_cast<double>(r.params_end));
        else if (column == "flops") out.push_back(static_cast<double>(r.flops));
        else if (column == "wall_ms") out.push_back(r.wall_ms);
        else if (column == "cumulative_bytes") {
            running += r.bytes_down + r.bytes_up;
            out.push_back(static_cast<double>(running));
        } else {
            throw ConfigError("plot: unknown column '" + column + "'");
        }
    }
    return out;
}

}  // namespace

void plot_metric(const std::vector<MetricsLedger>& ledgers,
                 const std::string& column, const std::string& title,
                 const std::string& path) {
    if (ledgers.empty()) throw ConfigError("plot: no ledgers given");
    std::vector<Series> series;
    std::ostringstream table;
    table << "series\tround\t" << column << "\n";
    for (const MetricsLedger& lg : ledgers) {
        if (lg.rows.empty()) {
            throw ConfigError("plot: ledger '" + lg.label +
                              "' has no rounds; nothing to plot");
        }
        Series s;
        s.label = lg.label.empty() ? "run" : lg.label;
        s.ys = column_values(lg, column);
        for (const LedgerRow& r : lg.rows) s.xs.push_back(static_cast<double>(r.round));
        for (std::size_t i = 0; i < s.xs.size(); ++i) {
            table << s.label << '\t' << num(s.xs[i], "%.17g") << '\t'
                  << num(s.ys[i], "%.17g") << "\n";
        }
        series.push_back(std::move(s));
    }
    write_chart(series, "round", column, title, table.str(), path);
}

void plot_scatter(const std::vector<ScatterPoint>& points,
                  const std::string& x_label, const std::string& y_label,
                  const std::string& title, const std::string& path) {
    if (points.empty()) throw ConfigError("plot: no points given");
    std::vector<Series> series;
    std::ostringstream table;
    table << "label\t" << x_label << '\t' << y_label << "\n";
    for (const ScatterPoint& p : points) {
        Series s;
        s.label = p.label;
        s.line = false;
        s.xs.push_back(p.x);
        s.ys.push_back(p.y);
        series.push_back(std::move(s));
        table << p.label << '\t' << num(p.x, "%.17g") << '\t' << num(p.y, "%.17g")
              << "\n";
    }
    write_chart(series, x_label, y_label, title, table.str(), path);
}

}  // namespace fedprune
