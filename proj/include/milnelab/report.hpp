#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "milnelab/numerics.hpp"

namespace milnelab {

/// Simple CSV table with stable formatting so identical runs produce
/// byte-identical files.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> columns) : cols_(std::move(columns)) {}

    void add_row(const std::vector<double>& vals) {
        if (vals.size() != cols_.size()) throw std::invalid_argument("CsvTable: row width");
        rows_.push_back(vals);
    }

    void write(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("CsvTable: cannot open " + path);
        for (std::size_t c = 0; c < cols_.size(); ++c)
            out << cols_[c] << (c + 1 < cols_.size() ? "," : "\n");
        out << std::setprecision(17);
        for (const auto& r : rows_) {
            for (std::size_t c = 0; c < r.size(); ++c)
                out << r[c] << (c + 1 < r.size() ? "," : "\n");
        }
    }

    const std::vector<std::string>& columns() const { return cols_; }
    const std::vector<std::vector<double>>& rows() const { return rows_; }

private:
    std::vector<std::string> cols_;
    std::vector<std::vector<double>> rows_;
};

/// Log-log scatter with one fitted line; intentionally minimal SVG.
class LogLogPlot {
public:
    LogLogPlot(std::string title, std::string xlabel, std::string ylabel)
        : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)) {}

    void add_point(double x, double y) {
        if (x > 0.0 && y > 0.0) pts_.push_back({std::log10(x), std::log10(y)});
    }

    void set_fit(double slope, double intercept_ln) {
        // fit provided in natural-log space: ln y = slope ln x + intercept
        slope_ = slope;
        intercept10_ = intercept_ln / std::log(10.0);
        has_fit_ = true;
    }

    void write(const std::string& path) const {
        const double W = 560, H = 420, ml = 70, mr = 20, mt = 40, mb = 50;
        double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
        for (auto& p : pts_) {
            x0 = std::min(x0, p[0]); x1 = std::max(x1, p[0]);
            y0 = std::min(y0, p[1]); y1 = std::max(y1, p[1]);
        }
        if (pts_.empty()) { x0 = y0 = -1.0; x1 = y1 = 1.0; }
        const double padx = std::max(0.08 * (x1 - x0), 0.05);
        const double pady = std::max(0.08 * (y1 - y0), 0.05);
        x0 -= padx; x1 += padx; y0 -= pady; y1 += pady;
        auto px = [&](double lx) { return ml + (lx - x0) / (x1 - x0) * (W - ml - mr); };
        auto py = [&](double ly) { return H - mb - (ly - y0) / (y1 - y0) * (H - mt - mb); };

        std::ostringstream s;
        s << std::setprecision(8);
        s << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
          << "' viewBox='0 0 " << W << " " << H << "'>\n";
        s << "<rect width='" << W << "' height='" << H << "' fill='white'/>\n";
        s << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-size='15'>" << title_
          << "</text>\n";
        // axes
        s << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr << "' y2='" << H - mb
          << "' stroke='black'/>\n";
        s << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << H - mb
          << "' stroke='black'/>\n";
        s << "<text x='" << (ml + W - mr) / 2 << "' y='" << H - 12
          << "' text-anchor='middle' font-size='12'>" << xlabel_ << "</text>\n";
        s << "<text x='16' y='" << (mt + H - mb) / 2 << "' text-anchor='middle' font-size='12' "
          << "transform='rotate(-90 16 " << (mt + H - mb) / 2 << ")'>" << ylabel_ << "</text>\n";
        // decade ticks
        for (int d = int(std::ceil(x0)); d <= int(std::floor(x1)); ++d) {
            s << "<line x1='" << px(d) << "' y1='" << H - mb << "' x2='" << px(d) << "' y2='"
              << H - mb + 5 << "' stroke='black'/>\n";
            s << "<text x='" << px(d) << "' y='" << H - mb + 18
              << "' text-anchor='middle' font-size='10'>1e" << d << "</text>\n";
        }
        for (int d = int(std::ceil(y0)); d <= int(std::floor(y1)); ++d) {
            s << "<line x1='" << ml - 5 << "' y1='" << py(d) << "' x2='" << ml << "' y2='"
              << py(d) << "' stroke='black'/>\n";
            s << "<text x='" << ml - 8 << "' y='" << py(d) + 4
              << "' text-anchor='end' font-size='10'>1e" << d << "</text>\n";
        }
        // single fitted line across the data range
        if (has_fit_) {
            const double lx_a = x0 + padx / 2, lx_b = x1 - padx / 2;
            const double ly_a = slope_ * lx_a + intercept10_;
            const double ly_b = slope_ * lx_b + intercept10_;
            s << "<line class='fit' x1='" << px(lx_a) << "' y1='" << py(ly_a) << "' x2='"
              << px(lx_b) << "' y2='" << py(ly_b) << "' stroke='#c22' stroke-width='1.5'/>\n";
            s << "<text x='" << W - mr - 4 << "' y='" << mt + 14
              << "' text-anchor='end' font-size='12' fill='#c22'>slope " << std::setprecision(4)
              << slope_ << "</text>\n" << std::setprecision(8);
        }
        for (auto& p : pts_)
            s << "<circle class='pt' cx='" << px(p[0]) << "' cy='" << py(p[1])
              << "' r='4' fill='#226' />\n";
        s << "</svg>\n";

        std::ofstream out(path);
        if (!out) throw std::runtime_error("LogLogPlot: cannot open " + path);
        out << s.str();
    }

private:
    std::string title_, xlabel_, ylabel_;
    std::vector<std::array<double, 2>> pts_;
    double slope_ = 0.0, intercept10_ = 0.0;
    bool has_fit_ = false;
};

} // namespace milnelab
