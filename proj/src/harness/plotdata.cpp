#include "apex/harness/plotdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace apex::harness {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name,
                         const std::filesystem::path& path) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::runtime_error(path.string() + ": no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

Curve read_curve(const std::filesystem::path& path, const std::string& column) {
    const auto file = std::filesystem::is_directory(path) ? path / "eval.csv" : path;
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(file.string() + ": empty file");
    const auto header = split_csv(line);
    const auto run_col = column_index(header, "run_id", file);
    const auto time_col = column_index(header, "wall_clock_s", file);
    const auto value_col = column_index(header, column, file);
    Curve c;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size()) throw std::runtime_error(file.string() + ": ragged row");
        if (c.run.empty()) c.run = cells[run_col];
        c.points.emplace_back(std::stod(cells[time_col]), std::stod(cells[value_col]));
    }
    if (c.run.empty()) c.run = path.filename().string();
    return c;
}

std::string aligned_table(const std::vector<Curve>& curves, double step_s, const std::string& column) {
    if (!(step_s > 0)) throw std::invalid_argument("step must be positive");
    double end = 0;
    for (const auto& c : curves) {
        if (!c.points.empty()) end = std::max(end, c.points.back().first);
    }
    std::ostringstream o;
    o << "wall_clock_s";
    for (const auto& c : curves) o << "," << c.run << ":" << column;
    o << "\n" << std::setprecision(6);
    std::vector<std::size_t> cursor(curves.size(), 0);
    const auto rows = static_cast<std::size_t>(std::ceil(end / step_s));
    for (std::size_t r = 0; r <= rows; ++r) {
        const double t = static_cast<double>(r) * step_s;
        o << t;
        for (std::size_t i = 0; i < curves.size(); ++i) {
            const auto& pts = curves[i].points;
            while (cursor[i] < pts.size() && pts[cursor[i]].first <= t) ++cursor[i];
            o << ",";
            if (cursor[i] > 0) o << pts[cursor[i] - 1].second;
        }
        o << "\n";
    }
    return o.str();
}

}  // namespace apex::harness
