#include <charconv>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "lameeig/mesh.hpp"

namespace lameeig {

namespace {

// Shortest decimal string that round-trips to the same double.
std::string shortest(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

}  // namespace

void write_vtk(std::ostream& out, const Mesh& mesh, std::span<const double> cell_field, const std::string& field_name) {
  if (!cell_field.empty() && static_cast<int>(cell_field.size()) != mesh.num_cells()) {
    throw std::invalid_argument("write_vtk: cell field size does not match the number of cells");
  }
  const int nv = mesh.vertices_per_cell();
  out << "# vtk DataFile Version 3.0\n";
  out << "lameeig mesh\n";
  out << "ASCII\n";
  out << "DATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.num_vertices() << " double\n";
  for (const Point& p : mesh.vertices()) {
    out << shortest(p[0]) << ' ' << shortest(p[1]) << ' ' << shortest(p[2]) << '\n';
  }
  out << "CELLS " << mesh.num_cells() << ' ' << mesh.num_cells() * (nv + 1) << '\n';
  for (const auto& c : mesh.cells()) {
    out << nv;
    for (int i = 0; i < nv; ++i) out << ' ' << c[i];
    out << '\n';
  }
  out << "CELL_TYPES " << mesh.num_cells() << '\n';
  const int type = mesh.dim() == 2 ? 5 : 10;  // VTK_TRIANGLE, VTK_TETRA
  for (int c = 0; c < mesh.num_cells(); ++c) out << type << '\n';
  if (!cell_field.empty()) {
    out << "CELL_DATA " << mesh.num_cells() << '\n';
    out << "SCALARS " << field_name << " double 1\n";
    out << "LOOKUP_TABLE default\n";
    for (double v : cell_field) out << shortest(v) << '\n';
  }
}

void write_vtk(const std::string& path, const Mesh& mesh, std::span<const double> cell_field,
               const std::string& field_name) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_vtk: cannot open " + path);
  write_vtk(out, mesh, cell_field, field_name);
  if (!out) throw std::runtime_error("write_vtk: write failed for " + path);
}

}  // namespace lameeig
