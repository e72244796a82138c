#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ipld::plot {

struct Line {
    std::string name;
    std::vector<double> y;  // NaN entries break the line
};

struct Provenance {
    std::string source;
    std::uint64_t seed = 0;
    std::string config_hash;
};

/// Writes <stem>.csv (x then one column per line) and <stem>.svg. Returns the two paths.
std::vector<std::filesystem::path> write_line_chart(const std::filesystem::path& stem, const std::string& title,
                                                    const std::string& x_label, const std::vector<double>& x,
                                                    const std::vector<Line>& lines, const Provenance& provenance);

std::string render_svg(const std::string& title, const std::string& x_label, const std::vector<double>& x,
                       const std::vector<Line>& lines, const Provenance& provenance);

}  // namespace ipld::plot
