#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace sigan {

/// Minimal static SVG line chart. Non-finite points are skipped.
void write_line_plot(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                     const std::string& y_label, const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace sigan
