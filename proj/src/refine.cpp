#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lameeig/mesh.hpp"

namespace lameeig {

namespace {

// Mutable bisection workspace. Cell slots are reused: the first child of a
// bisected cell keeps the parent's slot, the second child is appended.
class Bisector {
 public:
  explicit Bisector(const Mesh& mesh)
      : dim_(mesh.dim()),
        vertices_(mesh.vertices()),
        cells_(mesh.bisection()),
        ancestor_(mesh.num_cells()),
        original_split_(mesh.num_cells(), false),
        vertex_cells_(mesh.num_vertices()) {
    for (int c = 0; c < mesh.num_cells(); ++c) {
      ancestor_[c] = c;
      for (int i = 0; i <= dim_; ++i) vertex_cells_[cells_[c].ordered[i]].push_back(c);
    }
    split_budget_ = 1000 + 200LL * static_cast<long long>(mesh.num_cells());
  }

  void refine(int c) {
    if (original_split_[c]) return;
    bisect(c, 0);
  }

  RefinementTrace finish() && {
    RefinementTrace out;
    out.refined = original_split_;
    out.ancestor = std::move(ancestor_);
    out.mesh = Mesh(dim_, std::move(vertices_), std::move(cells_));
    return out;
  }

 private:
  [[nodiscard]] std::pair<int, int> edge_of(int c) const {
    const auto& s = cells_[c];
    return std::minmax(s.ordered[0], s.ordered[s.tag]);
  }

  [[nodiscard]] bool contains(int c, int v) const {
    const auto& o = cells_[c].ordered;
    for (int i = 0; i <= dim_; ++i) {
      if (o[i] == v) return true;
    }
    return false;
  }

  [[nodiscard]] std::vector<int> patch(std::pair<int, int> e) const {
    std::vector<int> out;
    for (int c : vertex_cells_[e.first]) {
      if (contains(c, e.second)) out.push_back(c);
    }
    return out;
  }

  void bisect(int c, int depth) {
    if (depth > 10000) throw std::runtime_error("refine: bisection recursion did not terminate");
    const auto e = edge_of(c);
    for (;;) {
      bool clean = true;
      for (int d : patch(e)) {
        if (edge_of(d) != e) {
          bisect(d, depth + 1);
          clean = false;
          break;
        }
      }
      if (clean) break;
    }
    const int z = midpoint(e);
    for (int d : patch(e)) split(d, z);
  }

  int midpoint(std::pair<int, int> e) {
    auto [it, inserted] = midpoints_.try_emplace(e, static_cast<int>(vertices_.size()));
    if (inserted) {
      const Point& a = vertices_[e.first];
      const Point& b = vertices_[e.second];
      vertices_.push_back({0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])});
      vertex_cells_.emplace_back();
    }
    return it->second;
  }

  // Maubach's rule: for T = (x0..xn) with tag k, z = mid(x0, xk),
  // T1 = (x0..x_{k-1}, z, x_{k+1}..xn), T2 = (x1..xk, z, x_{k+1}..xn).
  void split(int c, int z) {
    if (--split_budget_ < 0) throw std::runtime_error("refine: bisection budget exhausted");
    const BisectionState parent = cells_[c];
    const int k = parent.tag;
    const int next_tag = k > 1 ? k - 1 : dim_;
    BisectionState first;
    BisectionState second;
    first.ordered = {-1, -1, -1, -1};
    second.ordered = {-1, -1, -1, -1};
    for (int i = 0; i < k; ++i) first.ordered[i] = parent.ordered[i];
    for (int i = 0; i < k; ++i) second.ordered[i] = parent.ordered[i + 1];
    first.ordered[k] = z;
    second.ordered[k] = z;
    for (int i = k + 1; i <= dim_; ++i) {
      first.ordered[i] = parent.ordered[i];
      second.ordered[i] = parent.ordered[i];
    }
    first.tag = next_tag;
    second.tag = next_tag;

    const int removed = parent.ordered[k];  // vertex missing from the first child
    auto& list = vertex_cells_[removed];
    list.erase(std::find(list.begin(), list.end(), c));
    vertex_cells_[z].push_back(c);
    cells_[c] = first;

    const int id = static_cast<int>(cells_.size());
    cells_.push_back(second);
    ancestor_.push_back(ancestor_[c]);
    for (int i = 0; i <= dim_; ++i) vertex_cells_[second.ordered[i]].push_back(id);

    original_split_[ancestor_[c]] = true;
  }

  int dim_;
  std::vector<Point> vertices_;
  std::vector<BisectionState> cells_;
  std::vector<int> ancestor_;
  std::vector<bool> original_split_;
  std::vector<std::vector<int>> vertex_cells_;
  std::map<std::pair<int, int>, int> midpoints_;
  long long split_budget_ = 0;
};

Mesh red_refine_2d(const Mesh& mesh) {
  std::vector<Point> vertices = mesh.vertices();
  std::map<std::pair<int, int>, int> midpoints;
  auto mid = [&](int a, int b) {
    const auto key = std::minmax(a, b);
    auto [it, inserted] = midpoints.try_emplace(key, static_cast<int>(vertices.size()));
    if (inserted) {
      const Point& pa = vertices[a];
      const Point& pb = vertices[b];
      vertices.push_back({0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1]), 0.0});
    }
    return it->second;
  };
  std::vector<BisectionState> cells;
  cells.reserve(4 * static_cast<std::size_t>(mesh.num_cells()));
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto& t = mesh.cell(c);
    const int a = t[0], b = t[1], d = t[2];
    const int ab = mid(a, b), bd = mid(b, d), da = mid(d, a);
    for (const CellVertices& child : {CellVertices{a, ab, da, -1}, CellVertices{ab, b, bd, -1},
                                      CellVertices{da, bd, d, -1}, CellVertices{ab, bd, da, -1}}) {
      BisectionState s;
      s.ordered = child;
      s.tag = 2;
      cells.push_back(s);
    }
  }
  return relabel_longest_edge(Mesh(2, std::move(vertices), std::move(cells)));
}

}  // namespace

RefinementTrace refine_marked_traced(const Mesh& mesh, std::span<const int> marked) {
  for (int c : marked) {
    if (c < 0 || c >= mesh.num_cells()) {
      throw std::out_of_range("refine_marked: cell index " + std::to_string(c) + " out of range");
    }
  }
  if (marked.empty()) {
    RefinementTrace out;
    out.mesh = mesh;
    out.ancestor.resize(mesh.num_cells());
    for (int c = 0; c < mesh.num_cells(); ++c) out.ancestor[c] = c;
    out.refined.assign(mesh.num_cells(), false);
    return out;
  }
  std::vector<int> order(marked.begin(), marked.end());
  std::sort(order.begin(), order.end());
  order.erase(std::unique(order.begin(), order.end()), order.end());
  Bisector bisector(mesh);
  for (int c : order) bisector.refine(c);
  return std::move(bisector).finish();
}

Mesh refine_marked(const Mesh& mesh, std::span<const int> marked) {
  return refine_marked_traced(mesh, marked).mesh;
}

Mesh uniform_refine(const Mesh& mesh) {
  if (mesh.dim() == 2) return red_refine_2d(mesh);
  Mesh current = mesh;
  for (int sweep = 0; sweep < 3; ++sweep) {
    std::vector<int> all(current.num_cells());
    for (int c = 0; c < current.num_cells(); ++c) all[c] = c;
    current = refine_marked(current, all);
  }
  return current;
}

}  // namespace lameeig
