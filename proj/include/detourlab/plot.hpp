// Minimal static SVG plots: line series and scatter over a framed axis box.
// The CSVs are the data contract; these files are for eyeballing results.
#pragma once

#include <algorithm>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "detourlab/common.hpp"

namespace detourlab {

struct PlotSeries {
    std::string label;
    std::string color = "#1f77b4";
    std::vector<double> x;
    std::vector<double> y;
    bool points_only = false;
};

class SvgPlot {
  public:
    SvgPlot(std::string title, std::string xlabel, std::string ylabel)
        : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)) {}

    void add(PlotSeries s) {
        if (s.x.size() != s.y.size()) throw ContractViolation("plot: x/y size mismatch");
        series_.push_back(std::move(s));
    }

    void write(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw ConfigError("cannot write plot: " + path);
        const double W = 720, H = 420, L = 70, R = 20, T = 40, B = 50;
        double xmin = std::numeric_limits<double>::max(), xmax = -xmin;
        double ymin = xmin, ymax = -xmin;
        for (const auto& s : series_)
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                xmin = std::min(xmin, s.x[i]);
                xmax = std::max(xmax, s.x[i]);
                ymin = std::min(ymin, s.y[i]);
                ymax = std::max(ymax, s.y[i]);
            }
        if (!(xmax > xmin)) xmax = xmin + 1;
        if (!(ymax > ymin)) ymax = ymin + 1;
        const double ypad = 0.05 * (ymax - ymin);
        ymin -= ypad;
        ymax += ypad;
        auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
        auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

        os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
        os << "<rect width='100%' height='100%' fill='white'/>\n";
        os << "<text x='" << W / 2 << "' y='22' text-anchor='middle' font-size='15'>" << title_
           << "</text>\n";
        os << "<rect x='" << L << "' y='" << T << "' width='" << W - L - R << "' height='"
           << H - T - B << "' fill='none' stroke='black'/>\n";
        for (int k = 0; k <= 4; ++k) {
            const double xv = xmin + k * (xmax - xmin) / 4;
            const double yv = ymin + k * (ymax - ymin) / 4;
            os << "<text x='" << px(xv) << "' y='" << H - B + 18
               << "' text-anchor='middle' font-size='11'>" << format(xv) << "</text>\n";
            os << "<text x='" << L - 8 << "' y='" << py(yv) + 4
               << "' text-anchor='end' font-size='11'>" << format(yv) << "</text>\n";
            os << "<line x1='" << L << "' y1='" << py(yv) << "' x2='" << W - R << "' y2='" << py(yv)
               << "' stroke='#dddddd'/>\n";
        }
        os << "<text x='" << (L + W - R) / 2 << "' y='" << H - 12
           << "' text-anchor='middle' font-size='12'>" << xlabel_ << "</text>\n";
        os << "<text x='16' y='" << (T + H - B) / 2
           << "' text-anchor='middle' font-size='12' transform='rotate(-90 16 " << (T + H - B) / 2
           << ")'>" << ylabel_ << "</text>\n";

        double ly = T + 14;
        for (const auto& s : series_) {
            if (s.points_only) {
                for (std::size_t i = 0; i < s.x.size(); ++i)
                    os << "<circle cx='" << px(s.x[i]) << "' cy='" << py(s.y[i])
                       << "' r='1.6' fill='" << s.color << "' fill-opacity='0.5'/>\n";
            } else {
                os << "<polyline fill='none' stroke='" << s.color << "' stroke-width='1.8' points='";
                for (std::size_t i = 0; i < s.x.size(); ++i)
                    os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
                os << "'/>\n";
            }
            os << "<rect x='" << W - R - 150 << "' y='" << ly - 9 << "' width='12' height='4' fill='"
               << s.color << "'/>\n";
            os << "<text x='" << W - R - 132 << "' y='" << ly - 2 << "' font-size='11'>" << s.label
               << "</text>\n";
            ly += 16;
        }
        os << "</svg>\n";
    }

  private:
    static std::string format(double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", v);
        return buf;
    }

    std::string title_, xlabel_, ylabel_;
    std::vector<PlotSeries> series_;
};

}  // namespace detourlab
