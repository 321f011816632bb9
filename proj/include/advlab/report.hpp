#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "advlab/metrics.hpp"

namespace advlab {

// Fixed, versioned report schema: one row per (seed, checkpoint).
inline constexpr const char* kCsvSchemaTag = "#schema=advlab/1";
inline constexpr const char* kCsvHeader =
    "seed,t,std_train_err,std_test_err,rob_train_err,rob_test_err,gap,"
    "ide_train_err,ide_test_err,eld,eld_se,mean_d,mean_phi,bound_value";

struct ReportRow {
    std::uint64_t seed = 0;
    int t = 0;
    double std_train_err = 0, std_test_err = 0;
    double rob_train_err = 0, rob_test_err = 0;
    double gap = 0;
    double ide_train_err = 0, ide_test_err = 0;
    double eld = 0, eld_se = 0;
    double mean_d = 0, mean_phi = 0;
    double bound_value = 0;
};

inline void write_report_csv(const std::string& path, const std::vector<ReportRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("report: cannot open " + path);
    out.precision(12);
    out << kCsvSchemaTag << '\n' << kCsvHeader << '\n';
    for (const auto& r : rows) {
        out << r.seed << ',' << r.t << ',' << r.std_train_err << ',' << r.std_test_err << ','
            << r.rob_train_err << ',' << r.rob_test_err << ',' << r.gap << ',' << r.ide_train_err << ','
            << r.ide_test_err << ',' << r.eld << ',' << r.eld_se << ',' << r.mean_d << ',' << r.mean_phi
            << ',' << r.bound_value << '\n';
    }
}

inline std::vector<ReportRow> read_report_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("report: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != kCsvSchemaTag)
        throw std::runtime_error("report: missing schema tag in " + path);
    if (!std::getline(in, line) || line != kCsvHeader)
        throw std::runtime_error("report: unexpected header in " + path);
    std::vector<ReportRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> vals;
        while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
        if (vals.size() != 14) throw std::runtime_error("report: malformed row in " + path);
        ReportRow r;
        r.seed = static_cast<std::uint64_t>(vals[0]);
        r.t = static_cast<int>(vals[1]);
        r.std_train_err = vals[2];
        r.std_test_err = vals[3];
        r.rob_train_err = vals[4];
        r.rob_test_err = vals[5];
        r.gap = vals[6];
        r.ide_train_err = vals[7];
        r.ide_test_err = vals[8];
        r.eld = vals[9];
        r.eld_se = vals[10];
        r.mean_d = vals[11];
        r.mean_phi = vals[12];
        r.bound_value = vals[13];
        rows.push_back(r);
    }
    return rows;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("pearson: need matched series, n >= 2");
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double num = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (va == 0 || vb == 0) return 0.0;
    return num / std::sqrt(va * vb);
}

// Histogram rows accumulated across the run: seed,t,metric,edge_lo,edge_hi,count.
struct HistogramRecord {
    std::uint64_t seed = 0;
    int t = 0;
    std::string metric;
    Histogram hist;
};

inline void write_histograms_csv(const std::string& path, const std::vector<HistogramRecord>& recs) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("report: cannot open " + path);
    out.precision(12);
    out << kCsvSchemaTag << '\n' << "seed,t,metric,edge_lo,edge_hi,count\n";
    for (const auto& r : recs)
        for (std::size_t i = 0; i + 1 < r.hist.edges.size(); ++i)
            out << r.seed << ',' << r.t << ',' << r.metric << ',' << r.hist.edges[i] << ','
                << r.hist.edges[i + 1] << ',' << r.hist.counts[i] << '\n';
}

// ---- minimal SVG plotting -------------------------------------------------

namespace svg {

struct Series {
    std::string label;
    std::string color;
    std::vector<double> xs, ys;
};

inline void write_curves(const std::string& path, const std::string& title,
                         const std::vector<Series>& series) {
    const int W = 720, H = 440, ML = 60, MR = 150, MT = 40, MB = 50;
    double xmin = 1e300, xmax = -1e300, ymin = 0.0, ymax = -1e300;
    bool any = false;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.xs.size(); ++i) {
            xmin = std::min(xmin, s.xs[i]);
            xmax = std::max(xmax, s.xs[i]);
            ymax = std::max(ymax, s.ys[i]);
            any = true;
        }
    if (!any) {
        xmin = 0;
        xmax = 1;
        ymax = 1;
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax <= ymin) ymax = ymin + 1;
    ymax *= 1.05;

    auto X = [&](double x) { return ML + (x - xmin) / (xmax - xmin) * (W - ML - MR); };
    auto Y = [&](double y) { return H - MB - (y - ymin) / (ymax - ymin) * (H - MT - MB); };

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("plot: cannot open " + path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n"
        << "<rect width='100%' height='100%' fill='white'/>\n"
        << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title << "</text>\n"
        << "<line x1='" << ML << "' y1='" << H - MB << "' x2='" << W - MR << "' y2='" << H - MB
        << "' stroke='black'/>\n"
        << "<line x1='" << ML << "' y1='" << MT << "' x2='" << ML << "' y2='" << H - MB
        << "' stroke='black'/>\n";
    // x ticks at data points of the first series
    if (!series.empty())
        for (double x : series.front().xs)
            out << "<line x1='" << X(x) << "' y1='" << H - MB << "' x2='" << X(x) << "' y2='" << H - MB + 5
                << "' stroke='black'/><text x='" << X(x) << "' y='" << H - MB + 20
                << "' text-anchor='middle' font-size='11'>" << x << "</text>\n";
    for (int i = 0; i <= 4; ++i) {
        const double y = ymin + (ymax - ymin) * i / 4.0;
        out << "<text x='" << ML - 8 << "' y='" << Y(y) + 4 << "' text-anchor='end' font-size='11'>";
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3g", y);
        out << buf << "</text>\n";
    }
    int li = 0;
    for (const auto& s : series) {
        if (s.xs.empty()) continue;
        out << "<polyline fill='none' stroke='" << s.color << "' stroke-width='2' points='";
        for (std::size_t i = 0; i < s.xs.size(); ++i) out << X(s.xs[i]) << ',' << Y(s.ys[i]) << ' ';
        out << "'/>\n";
        out << "<text x='" << W - MR + 10 << "' y='" << MT + 16 * li << "' font-size='12' fill='"
            << s.color << "'>" << s.label << "</text>\n";
        ++li;
    }
    out << "</svg>\n";
}

inline void write_histogram(const std::string& path, const std::string& title,
                            const std::vector<HistogramRecord>& recs) {
    const int W = 720, H = 440, ML = 60, MR = 150, MT = 40, MB = 50;
    static const char* colors[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e"};
    double xmin = 1e300, xmax = -1e300;
    long cmax = 1;
    for (const auto& r : recs) {
        if (r.hist.edges.empty()) continue;
        xmin = std::min(xmin, r.hist.edges.front());
        xmax = std::max(xmax, r.hist.edges.back());
        for (long c : r.hist.counts) cmax = std::max(cmax, c);
    }
    if (recs.empty() || xmax <= xmin) {
        xmin = 0;
        xmax = 1;
    }
    auto X = [&](double x) { return ML + (x - xmin) / (xmax - xmin) * (W - ML - MR); };
    auto Y = [&](double c) { return H - MB - c / static_cast<double>(cmax) * (H - MT - MB); };

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("plot: cannot open " + path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n"
        << "<rect width='100%' height='100%' fill='white'/>\n"
        << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title << "</text>\n";
    int ci = 0;
    for (const auto& r : recs) {
        const char* color = colors[ci % 5];
        for (std::size_t i = 0; i + 1 < r.hist.edges.size(); ++i) {
            const double x0 = X(r.hist.edges[i]), x1 = X(r.hist.edges[i + 1]);
            const double y = Y(static_cast<double>(r.hist.counts[i]));
            out << "<rect x='" << x0 << "' y='" << y << "' width='" << (x1 - x0) << "' height='"
                << (H - MB - y) << "' fill='" << color << "' fill-opacity='0.35' stroke='" << color
                << "'/>\n";
        }
        out << "<text x='" << W - MR + 10 << "' y='" << MT + 16 * ci << "' font-size='12' fill='" << color
            << "'>t=" << r.t << " seed=" << r.seed << "</text>\n";
        ++ci;
    }
    out << "<line x1='" << ML << "' y1='" << H - MB << "' x2='" << W - MR << "' y2='" << H - MB
        << "' stroke='black'/>\n</svg>\n";
}

}  // namespace svg

}  // namespace advlab
