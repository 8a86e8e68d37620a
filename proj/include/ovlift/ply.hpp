#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ovlift/common.hpp"
#include "ovlift/math.hpp"

namespace ovlift {

struct PlyCloud {
  std::vector<Vec3> points;
  std::vector<std::array<uint8_t, 3>> colors; // empty when the file has none
};

namespace ply_detail {

inline int type_size(const std::string& t) {
  if (t == "char" || t == "int8" || t == "uchar" || t == "uint8") return 1;
  if (t == "short" || t == "int16" || t == "ushort" || t == "uint16") return 2;
  if (t == "int" || t == "int32" || t == "uint" || t == "uint32" || t == "float" ||
      t == "float32")
    return 4;
  if (t == "double" || t == "float64" || t == "int64" || t == "uint64") return 8;
  return 0;
}

inline double read_scalar(std::istream& in, const std::string& t, const std::string& path) {
  char buf[8];
  int n = type_size(t);
  if (!in.read(buf, n)) throw io_error("unexpected end of binary data in " + path);
  if (t == "float" || t == "float32") {
    float f;
    std::memcpy(&f, buf, 4);
    return f;
  }
  if (t == "double" || t == "float64") {
    double d;
    std::memcpy(&d, buf, 8);
    return d;
  }
  if (t == "uchar" || t == "uint8") return static_cast<double>(static_cast<uint8_t>(buf[0]));
  if (t == "char" || t == "int8") return static_cast<double>(static_cast<int8_t>(buf[0]));
  if (t == "ushort" || t == "uint16") {
    uint16_t v;
    std::memcpy(&v, buf, 2);
    return v;
  }
  if (t == "short" || t == "int16") {
    int16_t v;
    std::memcpy(&v, buf, 2);
    return v;
  }
  if (t == "uint" || t == "uint32") {
    uint32_t v;
    std::memcpy(&v, buf, 4);
    return v;
  }
  if (t == "int" || t == "int32") {
    int32_t v;
    std::memcpy(&v, buf, 4);
    return v;
  }
  if (t == "uint64") {
    uint64_t v;
    std::memcpy(&v, buf, 8);
    return static_cast<double>(v);
  }
  int64_t v;
  std::memcpy(&v, buf, 8);
  return static_cast<double>(v);
}

struct Property {
  std::string name;
  std::string type;
  bool is_list = false;
  std::string count_type;
};

struct Element {
  std::string name;
  size_t count = 0;
  std::vector<Property> props;
};

} // namespace ply_detail

/// Reads ASCII or binary_little_endian PLY. Only the vertex element's x,y,z
/// (float or double) and optional red/green/blue (uchar) are kept; every other
/// element and property is skipped.
inline PlyCloud read_ply(const std::string& path) {
  using namespace ply_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open: " + path);

  std::string line;
  if (!std::getline(in, line)) throw io_error("empty file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "ply") throw consistency_error("not a PLY file: " + path);

  bool binary = false;
  std::vector<Element> elements;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "comment" || kw == "obj_info") continue;
    if (kw == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii")
        binary = false;
      else if (fmt == "binary_little_endian")
        binary = true;
      else
        throw consistency_error("unsupported PLY format '" + fmt + "' in " + path);
    } else if (kw == "element") {
      Element e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (kw == "property") {
      if (elements.empty()) throw consistency_error("property before element in " + path);
      Property p;
      std::string t;
      ls >> t;
      if (t == "list") {
        p.is_list = true;
        ls >> p.count_type >> p.type >> p.name;
      } else {
        p.type = t;
        ls >> p.name;
      }
      if (type_size(p.type) == 0 || (p.is_list && type_size(p.count_type) == 0))
        throw consistency_error("unknown PLY property type in " + path);
      elements.back().props.push_back(p);
    } else if (kw == "end_header") {
      break;
    } else if (!kw.empty()) {
      throw consistency_error("unexpected PLY header line '" + line + "' in " + path);
    }
  }

  PlyCloud cloud;
  for (const Element& e : elements) {
    const bool is_vertex = (e.name == "vertex");
    int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
    for (size_t i = 0; i < e.props.size(); ++i) {
      const std::string& n = e.props[i].name;
      if (n == "x") ix = static_cast<int>(i);
      if (n == "y") iy = static_cast<int>(i);
      if (n == "z") iz = static_cast<int>(i);
      if (n == "red") ir = static_cast<int>(i);
      if (n == "green") ig = static_cast<int>(i);
      if (n == "blue") ib = static_cast<int>(i);
    }
    if (is_vertex && (ix < 0 || iy < 0 || iz < 0))
      throw consistency_error("vertex element lacks x,y,z in " + path);
    const bool has_color = is_vertex && ir >= 0 && ig >= 0 && ib >= 0;

    std::vector<double> values(e.props.size());
    for (size_t row = 0; row < e.count; ++row) {
      if (binary) {
        for (size_t i = 0; i < e.props.size(); ++i) {
          const Property& p = e.props[i];
          if (p.is_list) {
            double cnt = read_scalar(in, p.count_type, path);
            for (long long k = 0; k < static_cast<long long>(cnt); ++k)
              read_scalar(in, p.type, path);
            values[i] = 0;
          } else {
            values[i] = read_scalar(in, p.type, path);
          }
        }
      } else {
        if (!std::getline(in, line)) throw io_error("unexpected end of ASCII data in " + path);
        std::istringstream ls(line);
        for (size_t i = 0; i < e.props.size(); ++i) {
          const Property& p = e.props[i];
          if (p.is_list) {
            long long cnt;
            if (!(ls >> cnt)) throw consistency_error("bad list count in " + path);
            double dummy;
            for (long long k = 0; k < cnt; ++k) ls >> dummy;
            values[i] = 0;
          } else if (!(ls >> values[i])) {
            throw consistency_error("short data row in " + path);
          }
        }
      }
      if (is_vertex) {
        cloud.points.push_back({values[ix], values[iy], values[iz]});
        if (has_color)
          cloud.colors.push_back({static_cast<uint8_t>(values[ir]),
                                  static_cast<uint8_t>(values[ig]),
                                  static_cast<uint8_t>(values[ib])});
      }
    }
  }
  if (cloud.points.empty()) throw consistency_error("PLY file has no vertices: " + path);
  return cloud;
}

inline void write_ply(const std::string& path, const std::vector<Vec3>& points,
                      const std::vector<std::array<uint8_t, 3>>& colors = {},
                      bool binary = true) {
  if (!colors.empty() && colors.size() != points.size())
    throw argument_error("write_ply: color count does not match point count");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open for writing: " + path);
  out << "ply\n";
  out << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n");
  out << "element vertex " << points.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  if (!colors.empty())
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";
  for (size_t i = 0; i < points.size(); ++i) {
    float xyz[3] = {static_cast<float>(points[i].x), static_cast<float>(points[i].y),
                    static_cast<float>(points[i].z)};
    if (binary) {
      out.write(reinterpret_cast<const char*>(xyz), 12);
      if (!colors.empty()) out.write(reinterpret_cast<const char*>(colors[i].data()), 3);
    } else {
      out << xyz[0] << ' ' << xyz[1] << ' ' << xyz[2];
      if (!colors.empty())
        out << ' ' << int(colors[i][0]) << ' ' << int(colors[i][1]) << ' ' << int(colors[i][2]);
      out << '\n';
    }
  }
  if (!out) throw io_error("write failed: " + path);
}

} // namespace ovlift
