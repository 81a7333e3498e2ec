#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pscn/geometry.hpp"

namespace pscn {

/// Parses `x y z [nx ny nz]` lines; blank lines and lines starting with '#'
/// are skipped. Normals are rescaled to unit length on read.
inline PointCloud read_xyz(std::istream& is, const std::string& source = "<stream>") {
  PointCloud cloud;
  std::vector<Vec3> normals;
  std::string line;
  std::size_t lineno = 0;
  int columns = -1;
  while (std::getline(is, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::vector<double> vals;
    double v = 0.0;
    while (ls >> v) vals.push_back(v);
    if (!ls.eof()) {
      throw InputError(source + ":" + std::to_string(lineno) + ": unparseable value");
    }
    if (vals.size() != 3 && vals.size() != 6) {
      throw InputError(source + ":" + std::to_string(lineno) + ": expected 3 or 6 columns, got " +
                       std::to_string(vals.size()));
    }
    if (columns >= 0 && static_cast<int>(vals.size()) != columns) {
      throw InputError(source + ":" + std::to_string(lineno) + ": column count changed");
    }
    columns = static_cast<int>(vals.size());
    cloud.positions.push_back({vals[0], vals[1], vals[2]});
    if (columns == 6) {
      const double len = std::sqrt(vals[3] * vals[3] + vals[4] * vals[4] + vals[5] * vals[5]);
      if (!(len > 0.0)) {
        throw InputError(source + ":" + std::to_string(lineno) + ": zero-length normal");
      }
      normals.push_back({vals[3] / len, vals[4] / len, vals[5] / len});
    }
  }
  if (columns == 6) cloud.normals = std::move(normals);
  validate(cloud);
  return cloud;
}

inline PointCloud read_xyz_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open " + path);
  return read_xyz(is, path);
}

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_xyz(std::ostream& os, const PointCloud& cloud) {
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.positions[i];
    os << format_real(p[0]) << ' ' << format_real(p[1]) << ' ' << format_real(p[2]);
    if (cloud.normals) {
      const auto& n = (*cloud.normals)[i];
      os << ' ' << format_real(n[0]) << ' ' << format_real(n[1]) << ' ' << format_real(n[2]);
    }
    os << '\n';
  }
}

struct Dataset {
  std::vector<std::string> class_names;  // sorted; index = label
  std::vector<PointCloud> clouds;        // each carries its label
};

/// Loads `<root>/<class-name>/<sample>.xyz`. Labels follow sorted class names.
inline Dataset load_dataset(const std::string& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw InputError("dataset root " + root + " is not a directory");
  Dataset ds;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) ds.class_names.push_back(entry.path().filename().string());
  }
  std::sort(ds.class_names.begin(), ds.class_names.end());
  for (std::size_t label = 0; label < ds.class_names.size(); ++label) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(fs::path(root) / ds.class_names[label])) {
      if (entry.is_regular_file() && entry.path().extension() == ".xyz") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      PointCloud cloud = read_xyz_file(f.string());
      cloud.label = static_cast<int>(label);
      ds.clouds.push_back(std::move(cloud));
    }
  }
  if (ds.clouds.empty()) throw InputError("dataset " + root + " contains no .xyz samples");
  return ds;
}

}  // namespace pscn
