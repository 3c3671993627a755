#pragma once

#include <string>
#include <vector>

namespace gcttt::cli::svg {

struct Series {
    std::vector<std::string> labels;
    std::vector<double> x;    // line charts only
    std::vector<double> y;
    std::vector<double> err;  // half-width of the whisker; may be empty
};

/// Vertical bars with error whiskers; y axis fixed to [0, 1].
std::string bar_chart(const std::string& title, const std::string& y_label, const Series& s);

/// Points joined in the given order; x axis spans the data, y axis [0, 1].
std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const Series& s);

std::string escape(const std::string& text);

}  // namespace gcttt::cli::svg
