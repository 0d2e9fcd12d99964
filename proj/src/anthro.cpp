#include "hrtfp/anthro.hpp"

#include "hrtfp/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hrtfp {

std::vector<std::string> default_anthro_columns() {
  std::vector<std::string> cols;
  for (int i = 1; i <= 13; ++i) cols.push_back("x" + std::to_string(i));
  return cols;
}

double AnthroRecord::get(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return values[static_cast<Eigen::Index>(i)];
  }
  throw DomainError("subject " + subject_id + " has no measurement " + name);
}

double equivalent_head_radius(const AnthroRecord& anthro, const HeadRadiusModel& model) {
  return model.width_coeff * anthro.get(model.width) / 2.0 +
         model.height_coeff * anthro.get(model.height) / 2.0 +
         model.depth_coeff * anthro.get(model.depth) / 2.0 + model.offset;
}

double normalization_factor(const AnthroRecord& subject, const AnthroRecord& reference,
                            const HeadRadiusModel& model) {
  const double r = equivalent_head_radius(reference, model);
  if (!(r > 0.0)) throw DomainError("reference head radius must be positive");
  return equivalent_head_radius(subject, model) / r;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ls(line);
  while (std::getline(ls, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

}  // namespace

void write_anthro_csv(const std::filesystem::path& path, const std::vector<AnthroRecord>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "subject_id";
  if (!rows.empty()) {
    for (const auto& n : rows.front().names) out << ',' << n;
  }
  out << '\n';
  char buf[32];
  for (const auto& r : rows) {
    out << r.subject_id;
    for (Eigen::Index i = 0; i < r.values.size(); ++i) {
      std::snprintf(buf, sizeof buf, ",%.9g", r.values[i]);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<AnthroRecord> read_anthro_csv(const std::filesystem::path& path,
                                          const std::vector<std::string>& columns) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": missing header");
  const auto header = split_csv(line);
  if (header.empty() || header[0] != "subject_id") {
    throw ParseError(path.string() + ": first column must be subject_id");
  }
  std::vector<std::size_t> pick;
  for (const auto& c : columns) {
    std::size_t j = 1;
    while (j < header.size() && header[j] != c) ++j;
    if (j == header.size()) throw ParseError(path.string() + ": missing column " + c);
    pick.push_back(j);
  }
  std::vector<AnthroRecord> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": wrong cell count");
    }
    AnthroRecord r{cells[0], columns, Eigen::VectorXd(static_cast<Eigen::Index>(columns.size()))};
    for (std::size_t k = 0; k < pick.size(); ++k) {
      double v = 0.0;
      std::istringstream cs(cells[pick[k]]);
      if (!(cs >> v) || !std::isfinite(v) || v <= 0.0) {
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad value for " + columns[k]);
      }
      r.values[static_cast<Eigen::Index>(k)] = v;
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace hrtfp
