#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace lameeig {

/// Cartesian point. In 2D the third coordinate is always zero.
using Point = std::array<double, 3>;

/// Vertex indices of a simplex; only the first dim+1 entries are used.
using CellVertices = std::array<int, 4>;

inline constexpr int kBoundary = -1;

/// A facet (edge in 2D, triangle in 3D) with its one or two neighbouring cells.
///
/// `plus` is always the adjacent cell with the smaller index; `minus` is
/// kBoundary on the domain boundary. `local_in_plus`/`local_in_minus` give
/// the local facet number (= index of the opposite vertex) within each cell.
struct Facet {
  std::array<int, 3> vertices{};  // sorted ascending
  int plus = kBoundary;
  int minus = kBoundary;
  int local_in_plus = -1;
  int local_in_minus = -1;

  [[nodiscard]] bool on_boundary() const { return minus == kBoundary; }
};

/// Bisection bookkeeping for newest-vertex / Maubach refinement.
///
/// The refinement edge of the cell is (ordered[0], ordered[tag]); `tag`
/// cycles dim, dim-1, ..., 1, dim, ... as the cell is bisected.
struct BisectionState {
  CellVertices ordered{};
  int tag = 0;
};

/// Conforming simplicial mesh in two or three dimensions.
///
/// Cells are stored positively oriented. Facet connectivity and the per-cell
/// facet table are derived on construction; a Mesh is immutable afterwards.
class Mesh {
 public:
  Mesh() = default;

  /// Builds a mesh from vertex coordinates and bisection-ordered cells. Cells
  /// are re-oriented as needed; throws on degenerate cells or non-conformity
  /// (a facet shared by more than two cells).
  Mesh(int dim, std::vector<Point> vertices, std::vector<BisectionState> cells);

  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] int num_vertices() const { return static_cast<int>(vertices_.size()); }
  [[nodiscard]] int num_cells() const { return static_cast<int>(cells_.size()); }
  [[nodiscard]] int num_facets() const { return static_cast<int>(facets_.size()); }
  [[nodiscard]] int vertices_per_cell() const { return dim_ + 1; }

  [[nodiscard]] const std::vector<Point>& vertices() const { return vertices_; }
  [[nodiscard]] const Point& vertex(int v) const { return vertices_[v]; }
  [[nodiscard]] const std::vector<CellVertices>& cells() const { return cells_; }
  [[nodiscard]] const CellVertices& cell(int c) const { return cells_[c]; }
  [[nodiscard]] const std::vector<Facet>& facets() const { return facets_; }
  [[nodiscard]] const Facet& facet(int f) const { return facets_[f]; }
  [[nodiscard]] const std::vector<BisectionState>& bisection() const { return bisection_; }

  /// Facet opposite local vertex `i` of cell `c`.
  [[nodiscard]] int cell_facet(int c, int i) const { return cell_facets_[c * (dim_ + 1) + i]; }

  [[nodiscard]] bool boundary_facet(int f) const { return facets_[f].on_boundary(); }

  /// Global vertex pair of the refinement edge of cell `c`.
  [[nodiscard]] std::array<int, 2> refinement_edge(int c) const;

  [[nodiscard]] double cell_volume(int c) const;
  [[nodiscard]] double signed_volume(int c) const;
  [[nodiscard]] Point cell_centroid(int c) const;
  /// Longest edge of the cell.
  [[nodiscard]] double cell_diameter(int c) const;
  [[nodiscard]] double inradius(int c) const;
  /// Length (2D) or area (3D) of a facet.
  [[nodiscard]] double facet_measure(int f) const;
  /// Longest edge of the facet (the facet length in 2D).
  [[nodiscard]] double facet_diameter(int f) const;
  /// Unit normal of facet `f` pointing out of `cell`, which must be adjacent.
  [[nodiscard]] Point outward_normal(int f, int cell) const;

  [[nodiscard]] double total_volume() const;
  [[nodiscard]] double max_diameter() const;
  /// max over cells of h_T / inradius_T.
  [[nodiscard]] double max_shape_ratio() const;

 private:
  void build_topology();

  int dim_ = 0;
  std::vector<Point> vertices_;
  std::vector<CellVertices> cells_;
  std::vector<BisectionState> bisection_;
  std::vector<Facet> facets_;
  std::vector<int> cell_facets_;
};

/// Unit normals, facet diameters and cell diameters, computed in one pass.
struct FacetGeometry {
  /// normals[f][0] is the outward normal w.r.t. facet(f).plus, normals[f][1]
  /// w.r.t. facet(f).minus (equal to the negated first entry; zero on the
  /// boundary).
  std::vector<std::array<Point, 2>> normals;
  std::vector<double> facet_diameters;
  std::vector<double> cell_diameters;
};

FacetGeometry facet_geometry(const Mesh& mesh);

// Geometry catalog -----------------------------------------------------------

/// Unit square (0,1)^2 split into N x N squares, each cut by one diagonal in
/// an alternating ("union jack") pattern; 2 N^2 cells.
Mesh build_unit_square(int n);

/// Unit square rotated by pi/4 about (1/2, 1/2) minus the hole
/// (129/400, 271/400)^2. `density` subdivides each of the eight quadrilateral
/// blocks between the hole and the outer boundary into density^2 quads.
Mesh build_square_with_hole(int density = 2);

/// (-1/2,1/2) x (0,1) x (-1/2,1/2) minus (0,1/2) x (0,1) x (0,1/2), built from
/// cubes of side 1/(2 density), each split into six Kuhn tetrahedra.
Mesh build_lshape_3d(int density = 2);

// Refinement -----------------------------------------------------------------

/// Splits every cell into 2^dim children: red refinement in 2D, three
/// bisection sweeps in 3D (equal to Bey's red refinement on Kuhn meshes).
Mesh uniform_refine(const Mesh& mesh);

/// Result of a marked refinement together with its ancestry.
struct RefinementTrace {
  Mesh mesh;
  /// For every cell of the new mesh, the index of its ancestor in the input.
  std::vector<int> ancestor;
  /// For every input cell, whether it was bisected (marked or by closure).
  std::vector<bool> refined;
};

/// Bisects every marked cell at least once and closes the mesh so no hanging
/// nodes remain. Throws std::out_of_range on an invalid cell index.
Mesh refine_marked(const Mesh& mesh, std::span<const int> marked);
RefinementTrace refine_marked_traced(const Mesh& mesh, std::span<const int> marked);

/// Re-labels every cell's refinement edge as its longest edge; ties are
/// broken by a global order on vertex-index pairs.
Mesh relabel_longest_edge(const Mesh& mesh);

// Export ---------------------------------------------------------------------

/// Legacy ASCII VTK unstructured grid. `cell_field`, when non-empty, is
/// written as CELL_DATA scalars named `field_name`.
void write_vtk(std::ostream& out, const Mesh& mesh, std::span<const double> cell_field = {},
               const std::string& field_name = "zeta_sq");
void write_vtk(const std::string& path, const Mesh& mesh, std::span<const double> cell_field = {},
               const std::string& field_name = "zeta_sq");

}  // namespace lameeig
