#include "rhflow/field_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>

namespace rhflow {

namespace {

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int b = 0; b < 8; ++b) r |= ((v >> (8 * b)) & 0xffu) << (8 * (7 - b));
    return r;
  }
  return v;
}

}  // namespace

void write_field(const std::filesystem::path& path, const ScalarField& field) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const PeriodicGrid& g = field.grid();
  std::ostringstream header;
  header << std::setprecision(17) << "RHFLOW " << g.dim();
  for (int a = 0; a < g.dim(); ++a) header << ' ' << g.points(a);
  for (int a = 0; a < g.dim(); ++a) header << ' ' << g.length(a);
  header << '\n';
  out << header.str();
  for (double v : field.values()) {
    std::uint64_t bits = to_little(std::bit_cast<std::uint64_t>(v));
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

ScalarField read_field(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::istringstream header(line);
  std::string tag;
  int dim = 0;
  header >> tag >> dim;
  if (tag != "RHFLOW" || (dim != 2 && dim != 3)) throw std::runtime_error("bad field header");
  std::array<int, 3> points{1, 1, 1};
  std::array<double, 3> lengths{1.0, 1.0, 1.0};
  for (int a = 0; a < dim; ++a) header >> points[a];
  for (int a = 0; a < dim; ++a) header >> lengths[a];
  if (!header) throw std::runtime_error("bad field header");
  PeriodicGrid grid(dim, points, lengths);
  ScalarField field(grid);
  for (auto& v : field.values()) {
    std::uint64_t bits = 0;
    in.read(reinterpret_cast<char*>(&bits), sizeof bits);
    if (!in) throw std::runtime_error("truncated field payload in " + path.string());
    v = std::bit_cast<double>(to_little(bits));
  }
  return field;
}

}  // namespace rhflow
