#include "gmmscape/ply_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace gmmscape {

namespace {

void put_f32le(std::ostream& os, double v) {
  const std::uint32_t u = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  const char b[4] = {static_cast<char>(u & 0xff),
                     static_cast<char>((u >> 8) & 0xff),
                     static_cast<char>((u >> 16) & 0xff),
                     static_cast<char>((u >> 24) & 0xff)};
  os.write(b, 4);
}

struct Property {
  std::string name;
  int bytes = 4;      // size of one value
  bool is_float = false;
  bool is_double = false;
};

int scalar_size(const std::string& type) {
  if (type == "char" || type == "uchar" || type == "int8" || type == "uint8")
    return 1;
  if (type == "short" || type == "ushort" || type == "int16" ||
      type == "uint16")
    return 2;
  if (type == "int" || type == "uint" || type == "int32" || type == "uint32" ||
      type == "float" || type == "float32")
    return 4;
  if (type == "double" || type == "float64") return 8;
  return -1;
}

double parse_binary_value(const unsigned char* p, const Property& prop) {
  if (prop.is_double) {
    std::uint64_t u = 0;
    std::memcpy(&u, p, 8);
    return std::bit_cast<double>(u);
  }
  std::uint32_t u = 0;
  std::memcpy(&u, p, 4);
  return static_cast<double>(std::bit_cast<float>(u));
}

}  // namespace

void save_ply(const PointCloud4D& cloud, const std::string& path, bool binary,
              const VecX* variance) {
  const Eigen::Index n = cloud.size();
  if (variance && variance->size() != n) {
    throw std::invalid_argument("variance size mismatch");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "ply\nformat " << (binary ? "binary_little_endian" : "ascii")
     << " 1.0\nelement vertex " << n
     << "\nproperty float x\nproperty float y\nproperty float z\n"
        "property float intensity\n";
  if (variance) os << "property float variance\n";
  os << "end_header\n";

  if (binary) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int d = 0; d < 4; ++d) put_f32le(os, cloud.points(i, d));
      if (variance) put_f32le(os, (*variance)[i]);
    }
  } else {
    os.precision(9);
    for (Eigen::Index i = 0; i < n; ++i) {
      os << static_cast<float>(cloud.points(i, 0)) << " "
         << static_cast<float>(cloud.points(i, 1)) << " "
         << static_cast<float>(cloud.points(i, 2)) << " "
         << static_cast<float>(cloud.points(i, 3));
      if (variance) os << " " << static_cast<float>((*variance)[i]);
      os << "\n";
    }
  }
  if (!os) throw IoError("write failed for " + path);
}

PlyCloud load_ply(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line.substr(0, 3) != "ply") {
    throw IoError(path + ": not a PLY file");
  }

  bool binary = false;
  Eigen::Index count = -1;
  std::vector<Property> props;
  bool in_vertex = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "binary_little_endian") {
        binary = true;
      } else if (fmt != "ascii") {
        throw IoError(path + ": unsupported PLY format " + fmt);
      }
    } else if (word == "element") {
      std::string name;
      Eigen::Index n;
      ls >> name >> n;
      in_vertex = (name == "vertex");
      if (in_vertex) count = n;
    } else if (word == "property" && in_vertex) {
      std::string type, name;
      ls >> type >> name;
      if (type == "list") throw IoError(path + ": list property in vertex");
      Property p;
      p.name = name;
      const int sz = scalar_size(type);
      if (sz < 0) throw IoError(path + ": unknown property type " + type);
      p.bytes = sz;
      p.is_float = (type == "float" || type == "float32");
      p.is_double = (type == "double" || type == "float64");
      props.push_back(p);
    } else if (word == "end_header") {
      break;
    }
  }
  if (count < 0) throw IoError(path + ": no vertex element");

  int ix = -1, iy = -1, iz = -1, ii = -1;
  for (size_t k = 0; k < props.size(); ++k) {
    if (props[k].name == "x") ix = static_cast<int>(k);
    if (props[k].name == "y") iy = static_cast<int>(k);
    if (props[k].name == "z") iz = static_cast<int>(k);
    if (props[k].name == "intensity") ii = static_cast<int>(k);
  }
  if (ix < 0 || iy < 0 || iz < 0) {
    throw IoError(path + ": vertex element lacks x/y/z");
  }

  PlyCloud out;
  out.has_intensity = ii >= 0;
  out.cloud.points.resize(count, 4);
  out.cloud.points.col(3).setZero();

  if (binary) {
    size_t stride = 0;
    for (const auto& p : props) stride += p.bytes;
    std::vector<unsigned char> row(stride);
    for (Eigen::Index i = 0; i < count; ++i) {
      is.read(reinterpret_cast<char*>(row.data()),
              static_cast<std::streamsize>(stride));
      if (!is) throw IoError(path + ": truncated PLY payload");
      size_t off = 0;
      for (size_t k = 0; k < props.size(); ++k) {
        const auto& p = props[k];
        if (p.is_float || p.is_double) {
          const double v = parse_binary_value(row.data() + off, p);
          if (static_cast<int>(k) == ix) out.cloud.points(i, 0) = v;
          if (static_cast<int>(k) == iy) out.cloud.points(i, 1) = v;
          if (static_cast<int>(k) == iz) out.cloud.points(i, 2) = v;
          if (static_cast<int>(k) == ii) out.cloud.points(i, 3) = v;
        }
        off += p.bytes;
      }
    }
  } else {
    for (Eigen::Index i = 0; i < count; ++i) {
      for (size_t k = 0; k < props.size(); ++k) {
        double v;
        if (!(is >> v)) throw IoError(path + ": truncated PLY payload");
        if (static_cast<int>(k) == ix) out.cloud.points(i, 0) = v;
        if (static_cast<int>(k) == iy) out.cloud.points(i, 1) = v;
        if (static_cast<int>(k) == iz) out.cloud.points(i, 2) = v;
        if (static_cast<int>(k) == ii) out.cloud.points(i, 3) = v;
      }
    }
  }
  return out;
}

}  // namespace gmmscape
