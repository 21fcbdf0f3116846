#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtnprobe/errors.hpp"
#include "dtnprobe/fit.hpp"

namespace dtnprobe {

using Json = nlohmann::json;

/// Fixed-format CSV so identical runs are byte-identical.
inline std::string format_cell(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12e", v);
    return buf;
}

inline void write_csv(const std::string& path, const std::vector<std::string>& columns,
                      const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
    out << "\n";
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << format_cell(row[c]);
        out << "\n";
    }
}

struct CsvData {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

inline CsvData read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read '" + path + "'");
    CsvData data;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        if (header) {
            while (std::getline(ss, cell, ',')) data.columns.push_back(cell);
            header = false;
            continue;
        }
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        data.rows.push_back(std::move(row));
    }
    return data;
}

/// Minimal SVG log-log scatter with a fitted slope annotation.
inline void write_loglog_svg(const std::string& path, const std::string& title,
                             const std::string& xlabel, const std::string& ylabel,
                             const std::vector<double>& xs, const std::vector<double>& ys,
                             const SlopeFit* fit = nullptr) {
    if (xs.size() != ys.size() || xs.empty()) throw ConfigError("plot: bad series");
    for (std::size_t i = 0; i < xs.size(); ++i)
        if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) throw ConfigError("plot: nonpositive point");

    const int W = 640, H = 480, ML = 70, MR = 20, MT = 40, MB = 55;
    double lx0 = std::log10(xs[0]), lx1 = lx0, ly0 = std::log10(ys[0]), ly1 = ly0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        lx0 = std::min(lx0, std::log10(xs[i]));
        lx1 = std::max(lx1, std::log10(xs[i]));
        ly0 = std::min(ly0, std::log10(ys[i]));
        ly1 = std::max(ly1, std::log10(ys[i]));
    }
    if (lx1 - lx0 < 1e-9) lx1 = lx0 + 1.0;
    if (ly1 - ly0 < 1e-9) ly1 = ly0 + 1.0;
    const double padx = 0.06 * (lx1 - lx0), pady = 0.08 * (ly1 - ly0);
    lx0 -= padx;
    lx1 += padx;
    ly0 -= pady;
    ly1 += pady;
    auto px = [&](double x) { return ML + (std::log10(x) - lx0) / (lx1 - lx0) * (W - ML - MR); };
    auto py = [&](double y) { return H - MB - (std::log10(y) - ly0) / (ly1 - ly0) * (H - MT - MB); };

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    out << "<rect width='100%' height='100%' fill='white'/>\n";
    out << "<text x='" << W / 2 << "' y='22' text-anchor='middle' font-size='15'>" << title
        << "</text>\n";
    // axes
    out << "<line x1='" << ML << "' y1='" << H - MB << "' x2='" << W - MR << "' y2='" << H - MB
        << "' stroke='black'/>\n";
    out << "<line x1='" << ML << "' y1='" << MT << "' x2='" << ML << "' y2='" << H - MB
        << "' stroke='black'/>\n";
    out << "<text x='" << (ML + W - MR) / 2 << "' y='" << H - 14
        << "' text-anchor='middle' font-size='12'>" << xlabel << " (log)</text>\n";
    out << "<text x='16' y='" << (MT + H - MB) / 2
        << "' text-anchor='middle' font-size='12' transform='rotate(-90 16 " << (MT + H - MB) / 2
        << ")'>" << ylabel << " (log)</text>\n";
    // decade ticks
    for (int d = static_cast<int>(std::ceil(lx0)); d <= static_cast<int>(std::floor(lx1)); ++d) {
        const double x = ML + (d - lx0) / (lx1 - lx0) * (W - ML - MR);
        out << "<line x1='" << x << "' y1='" << H - MB << "' x2='" << x << "' y2='" << H - MB + 5
            << "' stroke='black'/>\n";
        out << "<text x='" << x << "' y='" << H - MB + 18
            << "' text-anchor='middle' font-size='10'>1e" << d << "</text>\n";
    }
    for (int d = static_cast<int>(std::ceil(ly0)); d <= static_cast<int>(std::floor(ly1)); ++d) {
        const double y = H - MB - (d - ly0) / (ly1 - ly0) * (H - MT - MB);
        out << "<line x1='" << ML - 5 << "' y1='" << y << "' x2='" << ML << "' y2='" << y
            << "' stroke='black'/>\n";
        out << "<text x='" << ML - 8 << "' y='" << y + 3
            << "' text-anchor='end' font-size='10'>1e" << d << "</text>\n";
    }
    // fitted line
    if (fit) {
        const double xa = std::pow(10.0, lx0 + padx / 2), xb = std::pow(10.0, lx1 - padx / 2);
        const double ya = std::exp(fit->intercept + fit->slope * std::log(xa));
        const double yb = std::exp(fit->intercept + fit->slope * std::log(xb));
        out << "<line x1='" << px(xa) << "' y1='" << py(ya) << "' x2='" << px(xb) << "' y2='"
            << py(yb) << "' stroke='#d62728' stroke-dasharray='6,3'/>\n";
        char ann[80];
        std::snprintf(ann, sizeof(ann), "fitted slope %.3f (R2 %.4f)", fit->slope, fit->r2);
        out << "<text x='" << W - MR - 6 << "' y='" << MT + 14
            << "' text-anchor='end' font-size='12' fill='#d62728'>" << ann << "</text>\n";
    }
    // points and polyline
    out << "<polyline fill='none' stroke='#1f77b4' points='";
    for (std::size_t i = 0; i < xs.size(); ++i) out << px(xs[i]) << "," << py(ys[i]) << " ";
    out << "'/>\n";
    for (std::size_t i = 0; i < xs.size(); ++i)
        out << "<circle cx='" << px(xs[i]) << "' cy='" << py(ys[i])
            << "' r='3.4' fill='#1f77b4'/>\n";
    out << "</svg>\n";
}

/// Per-run summary: configuration echo, per-experiment metrics and pass
/// flags, solver statistics and artifact paths. Schema is versioned.
struct RunReport {
    Json summary = Json::object();

    RunReport() {
        summary["schema_version"] = 1;
        summary["experiments"] = Json::object();
        summary["artifacts"] = Json::array();
        summary["rng_algorithm"] = "splitmix64";
    }

    void add_experiment(const std::string& name, bool pass, Json metrics, double wall_seconds) {
        metrics["pass"] = pass;
        metrics["wall_seconds"] = wall_seconds;
        summary["experiments"][name] = std::move(metrics);
    }

    void add_artifact(const std::string& path) { summary["artifacts"].push_back(path); }

    bool all_pass() const {
        for (const auto& [name, exp] : summary["experiments"].items())
            if (!exp.value("pass", false)) return false;
        return true;
    }

    void write(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw ConfigError("cannot write '" + path + "'");
        out << summary.dump(2) << "\n";
    }
};

} // namespace dtnprobe
