#include "ipld/plot.hpp"

#include "ipld/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace ipld::plot {

namespace {

constexpr double kWidth = 800.0;
constexpr double kHeight = 450.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 160.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

// Comments may not contain "--".
std::string comment_safe(const std::string& s) {
    std::string out = s;
    for (std::size_t i = out.find("--"); i != std::string::npos; i = out.find("--")) out.replace(i, 2, "- -");
    return out;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

double nice_step(double span) {
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double f = raw / mag;
    return (f < 1.5 ? 1.0 : f < 3.5 ? 2.0 : f < 7.5 ? 5.0 : 10.0) * mag;
}

void bounds(const std::vector<double>& v, double& lo, double& hi) {
    for (double d : v) {
        if (!std::isfinite(d)) continue;
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
}

}  // namespace

std::string render_svg(const std::string& title, const std::string& x_label, const std::vector<double>& x,
                       const std::vector<Line>& lines, const Provenance& provenance) {
    if (x.empty()) throw InvalidArgument("plot: no samples");
    for (const auto& l : lines) {
        if (l.y.size() != x.size()) throw InvalidArgument("plot: line '" + l.name + "' length differs from x");
    }
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0;
    double y0 = x0, y1 = -x0;
    bounds(x, x0, x1);
    for (const auto& l : lines) bounds(l.y, y0, y1);
    if (!(x1 >= x0)) throw InvalidArgument("plot: x has no finite values");
    if (!(y1 >= y0)) y0 = 0.0, y1 = 1.0;
    if (x1 == x0) x0 -= 0.5, x1 += 0.5;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;

    const double pw = kWidth - kLeft - kRight;
    const double ph = kHeight - kTop - kBottom;
    auto sx = [&](double v) { return kLeft + (v - x0) / (x1 - x0) * pw; };
    auto sy = [&](double v) { return kTop + (y1 - v) / (y1 - y0) * ph; };

    std::ostringstream out;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<!--\n  source: " << comment_safe(provenance.source) << "\n  seed: " << provenance.seed
        << "\n  config-hash: " << comment_safe(provenance.config_hash) << "\n-->\n";
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
        << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
        << "</text>\n";

    const double xs = nice_step(x1 - x0);
    for (double t = std::ceil(x0 / xs) * xs; t <= x1 + 1e-9 * xs; t += xs) {
        out << "<line x1=\"" << num(sx(t)) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(sx(t)) << "\" y2=\""
            << num(kTop + ph) << "\" stroke=\"#e0e0e0\"/>\n";
        out << "<text x=\"" << num(sx(t)) << "\" y=\"" << num(kTop + ph + 16) << "\" text-anchor=\"middle\">" << num(t)
            << "</text>\n";
    }
    const double ys = nice_step(y1 - y0);
    for (double t = std::ceil(y0 / ys) * ys; t <= y1 + 1e-9 * ys; t += ys) {
        out << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(sy(t)) << "\" x2=\"" << num(kLeft + pw) << "\" y2=\""
            << num(sy(t)) << "\" stroke=\"#e0e0e0\"/>\n";
        out << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(sy(t) + 4) << "\" text-anchor=\"end\">" << num(t)
            << "</text>\n";
    }
    out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    out << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << num(kHeight - 12) << "\" text-anchor=\"middle\">"
        << escape(x_label) << "</text>\n";

    for (std::size_t i = 0; i < lines.size(); ++i) {
        const char* colour = kPalette[i % std::size(kPalette)];
        std::string pts;
        auto flush = [&] {
            if (!pts.empty()) {
                out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"" << pts
                    << "\"/>\n";
            }
            pts.clear();
        };
        for (std::size_t j = 0; j < x.size(); ++j) {
            if (!std::isfinite(x[j]) || !std::isfinite(lines[i].y[j])) {
                flush();
                continue;
            }
            if (!pts.empty()) pts += ' ';
            pts += num(sx(x[j])) + ',' + num(sy(lines[i].y[j]));
        }
        flush();
        const double ly = kTop + 14.0 + 18.0 * static_cast<double>(i);
        out << "<line x1=\"" << num(kLeft + pw + 12) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(kLeft + pw + 36)
            << "\" y2=\"" << num(ly) << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << num(kLeft + pw + 42) << "\" y=\"" << num(ly + 4) << "\">" << escape(lines[i].name)
            << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

std::vector<std::filesystem::path> write_line_chart(const std::filesystem::path& stem, const std::string& title,
                                                    const std::string& x_label, const std::vector<double>& x,
                                                    const std::vector<Line>& lines, const Provenance& provenance) {
    const std::string svg = render_svg(title, x_label, x, lines, provenance);
    auto csv_path = stem;
    csv_path += ".csv";
    auto svg_path = stem;
    svg_path += ".svg";

    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw InvalidArgument("cannot open " + csv_path.string() + " for writing");
    csv << (x_label.empty() ? "x" : x_label);
    for (const auto& l : lines) csv << ',' << l.name;
    csv << '\n';
    char buf[32];
    for (std::size_t j = 0; j < x.size(); ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", x[j]);
        csv << buf;
        for (const auto& l : lines) {
            csv << ',';
            if (std::isfinite(l.y[j])) {
                std::snprintf(buf, sizeof buf, "%.17g", l.y[j]);
                csv << buf;
            }
        }
        csv << '\n';
    }

    std::ofstream out(svg_path, std::ios::trunc);
    if (!out) throw InvalidArgument("cannot open " + svg_path.string() + " for writing");
    out << svg;
    return {csv_path, svg_path};
}

}  // namespace ipld::plot
