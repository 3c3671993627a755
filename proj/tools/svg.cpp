#include "svg.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace gcttt::cli::svg {

namespace {

constexpr double kW = 640, kH = 420;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 70;
constexpr double kPlotW = kW - kLeft - kRight, kPlotH = kH - kTop - kBottom;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

double ypix(double y) { return kTop + kPlotH * (1.0 - std::clamp(y, 0.0, 1.0)); }

void header(std::ostringstream& o, const std::string& title, const std::string& y_label) {
    o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" viewBox=\"0 0 "
      << kW << ' ' << kH << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title) << "</text>\n";
    o << "<text transform=\"translate(18 " << num(kTop + kPlotH / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(y_label) << "</text>\n";
    for (int i = 0; i <= 4; ++i) {
        const double y = i / 4.0;
        o << "<line x1=\"" << kLeft << "\" y1=\"" << num(ypix(y)) << "\" x2=\"" << kLeft + kPlotW << "\" y2=\""
          << num(ypix(y)) << "\" stroke=\"#ddd\"/>\n"
          << "<text x=\"" << kLeft - 6 << "\" y=\"" << num(ypix(y) + 4) << "\" text-anchor=\"end\">" << tick(y)
          << "</text>\n";
    }
    o << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + kPlotH
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + kPlotH << "\" x2=\"" << kLeft + kPlotW << "\" y2=\""
      << kTop + kPlotH << "\" stroke=\"black\"/>\n";
}

void whisker(std::ostringstream& o, double x, double y, double e) {
    if (e <= 0.0) return;
    const double lo = ypix(y - e), hi = ypix(y + e);
    o << "<line x1=\"" << num(x) << "\" y1=\"" << num(lo) << "\" x2=\"" << num(x) << "\" y2=\"" << num(hi)
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << num(x - 5) << "\" y1=\"" << num(lo) << "\" x2=\"" << num(x + 5) << "\" y2=\"" << num(lo)
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << num(x - 5) << "\" y1=\"" << num(hi) << "\" x2=\"" << num(x + 5) << "\" y2=\"" << num(hi)
      << "\" stroke=\"black\"/>\n";
}

double err_at(const Series& s, std::size_t i) { return i < s.err.size() ? s.err[i] : 0.0; }

}  // namespace

std::string escape(const std::string& text) {
    std::string out;
    for (char c : text) {
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

std::string bar_chart(const std::string& title, const std::string& y_label, const Series& s) {
    std::ostringstream o;
    header(o, title, y_label);
    const std::size_t n = s.y.size();
    const double slot = n > 0 ? kPlotW / static_cast<double>(n) : kPlotW;
    for (std::size_t i = 0; i < n; ++i) {
        const double cx = kLeft + slot * (static_cast<double>(i) + 0.5);
        const double top = ypix(s.y[i]);
        o << "<rect x=\"" << num(cx - slot * 0.3) << "\" y=\"" << num(top) << "\" width=\"" << num(slot * 0.6)
          << "\" height=\"" << num(kTop + kPlotH - top) << "\" fill=\"#4878a8\"/>\n";
        whisker(o, cx, s.y[i], err_at(s, i));
        o << "<text x=\"" << num(cx) << "\" y=\"" << kTop + kPlotH + 18 << "\" text-anchor=\"middle\">"
          << escape(i < s.labels.size() ? s.labels[i] : "") << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const Series& s) {
    std::ostringstream o;
    header(o, title, y_label);
    const std::size_t n = s.y.size();
    double lo = 0.0, hi = 1.0;
    if (!s.x.empty()) {
        lo = *std::min_element(s.x.begin(), s.x.end());
        hi = *std::max_element(s.x.begin(), s.x.end());
        if (hi <= lo) {
            lo -= 0.5;
            hi += 0.5;
        }
        const double pad = 0.05 * (hi - lo);
        lo -= pad;
        hi += pad;
    }
    auto xpix = [&](double x) { return kLeft + kPlotW * (x - lo) / (hi - lo); };
    for (int i = 0; i <= 4; ++i) {
        const double x = lo + (hi - lo) * i / 4.0;
        o << "<text x=\"" << num(xpix(x)) << "\" y=\"" << kTop + kPlotH + 18 << "\" text-anchor=\"middle\">" << tick(x)
          << "</text>\n";
    }
    o << "<text x=\"" << num(kLeft + kPlotW / 2) << "\" y=\"" << kH - 18 << "\" text-anchor=\"middle\">"
      << escape(x_label) << "</text>\n";
    if (n > 0) {
        o << "<polyline fill=\"none\" stroke=\"#4878a8\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < n; ++i) o << (i ? " " : "") << num(xpix(s.x[i])) << ',' << num(ypix(s.y[i]));
        o << "\"/>\n";
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double px = xpix(s.x[i]);
        whisker(o, px, s.y[i], err_at(s, i));
        o << "<circle cx=\"" << num(px) << "\" cy=\"" << num(ypix(s.y[i])) << "\" r=\"4\" fill=\"#4878a8\"/>\n";
        if (i < s.labels.size()) {
            o << "<text x=\"" << num(px + 6) << "\" y=\"" << num(ypix(s.y[i]) - 8) << "\">" << escape(s.labels[i])
              << "</text>\n";
        }
    }
    o << "</svg>\n";
    return o.str();
}

}  // namespace gcttt::cli::svg
