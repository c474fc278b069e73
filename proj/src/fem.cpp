#include "aanse/fem.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace aanse::fem {

namespace testhooks {
bool flip_trilinear_sign = false;
}

Mesh build_cavity_mesh(int n, DiagonalDirection dir) {
  if (n < 2) throw std::invalid_argument("build_cavity_mesh: n must be >= 2");
  Mesh mesh;
  mesh.n = n;
  mesh.h = 1.0 / n;
  mesh.diagonal = dir;
  mesh.nodes.reserve(static_cast<size_t>((n + 1) * (n + 1)));
  mesh.boundary_tags.reserve(mesh.nodes.capacity());
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) {
      mesh.nodes.push_back({i * mesh.h, j * mesh.h});
      BoundaryTag tag = BoundaryTag::Interior;
      if (j == n)
        tag = BoundaryTag::Lid;  // y = 1 including both corners
      else if (i == 0 || i == n || j == 0)
        tag = BoundaryTag::Wall;
      mesh.boundary_tags.push_back(tag);
    }
  }
  mesh.triangles.reserve(static_cast<size_t>(2 * n * n));
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const int a = mesh.vertex_id(i, j);
      const int b = mesh.vertex_id(i + 1, j);
      const int c = mesh.vertex_id(i + 1, j + 1);
      const int d = mesh.vertex_id(i, j + 1);
      if (dir == DiagonalDirection::Slash) {
        mesh.triangles.push_back({a, b, c});
        mesh.triangles.push_back({a, c, d});
      } else {
        mesh.triangles.push_back({a, b, d});
        mesh.triangles.push_back({b, c, d});
      }
    }
  }
  return mesh;
}

DofMap::DofMap(const Mesh& mesh, BoundaryCondition bc) : n_(mesh.n), bc_(bc) {
  const int f = fine();
  constrained_.assign(static_cast<size_t>(total_dofs()), 0);
  constrained_value_.assign(static_cast<size_t>(total_dofs()), 0.0);

  auto constrain = [&](int dof, double value) {
    dirichlet_.emplace_back(dof, value);
    constrained_[static_cast<size_t>(dof)] = 1;
    constrained_value_[static_cast<size_t>(dof)] = value;
  };

  for (int fy = 0; fy < f; ++fy) {
    for (int fx = 0; fx < f; ++fx) {
      if (fx != 0 && fx != f - 1 && fy != 0 && fy != f - 1) continue;
      const int node = vnode(fx, fy);
      double ux = 0.0;
      if (bc_.kind == BoundaryCondition::Kind::CavityLid && fy == f - 1)
        ux = bc_.lid_speed;
      constrain(velocity_dof(0, node), ux);
      constrain(velocity_dof(1, node), 0.0);
    }
  }
  constrain(pressure_pin_dof(), 0.0);

  pressure_weights_.assign(static_cast<size_t>(n_pressure_dofs()), 0.0);
  for (const auto& tri : mesh.triangles) {
    const auto& p0 = mesh.nodes[static_cast<size_t>(tri[0])];
    const auto& p1 = mesh.nodes[static_cast<size_t>(tri[1])];
    const auto& p2 = mesh.nodes[static_cast<size_t>(tri[2])];
    const double area = 0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) -
                               (p2[0] - p0[0]) * (p1[1] - p0[1]));
    for (int v : tri) pressure_weights_[static_cast<size_t>(v)] += area / 3.0;
  }
}

std::array<double, 2> DofMap::vnode_coords(int node) const {
  const int f = fine();
  const int fx = node % f;
  const int fy = node / f;
  const double hf = 0.5 / n_;
  return {fx * hf, fy * hf};
}

bool DofMap::vnode_on_boundary(int node) const {
  const int f = fine();
  const int fx = node % f;
  const int fy = node / f;
  return fx == 0 || fy == 0 || fx == f - 1 || fy == f - 1;
}

bool DofMap::vnode_on_lid(int node) const {
  const int f = fine();
  return node / f == f - 1;
}

void DofMap::impose_dirichlet(CoeffVector& state) const {
  for (const auto& [dof, value] : dirichlet_) state[dof] = value;
}

double DofMap::pressure_integral(const CoeffVector& state) const {
  double s = 0.0;
  for (int i = 0; i < n_pressure_dofs(); ++i)
    s += pressure_weights_[static_cast<size_t>(i)] * state[pressure_offset() + i];
  return s;
}

void DofMap::project_pressure_zero_mean(CoeffVector& state) const {
  const double mean = pressure_integral(state);  // domain area is 1
  for (int i = 0; i < n_pressure_dofs(); ++i) state[pressure_offset() + i] -= mean;
}

const QuadRule& triangle_rule_degree5() {
  static const QuadRule rule = [] {
    QuadRule r;
    const double s15 = std::sqrt(15.0);
    const double wa = (155.0 - s15) / 1200.0;
    const double la = (6.0 - s15) / 21.0;
    const double wb = (155.0 + s15) / 1200.0;
    const double lb = (6.0 + s15) / 21.0;
    r.points.push_back({1.0 / 3.0, 1.0 / 3.0});
    r.weights.push_back(9.0 / 40.0);
    // orbits: (l, l), (1-2l, l), (l, 1-2l) in (xi. eta) coordinates
    for (auto [w, l] : {std::pair{wa, la}, std::pair{wb, lb}}) {
      r.points.push_back({l, l});
      r.points.push_back({1.0 - 2.0 * l, l});
      r.points.push_back({l, 1.0 - 2.0 * l});
      r.weights.insert(r.weights.end(), {w, w, w});
    }
    return r;
  }();
  return rule;
}

const QuadRule& triangle_rule_degree12() {
  static const QuadRule rule = [] {
    // Collapsed 7x7 Gauss-Legendre (Duffy) rule.
    const double gx[7] = {-0.9491079123427585245261897,
                          -0.7415311855993944398638648,
                          -0.4058451513773971669066064,
                          0.0,
                          0.4058451513773971669066064,
                          0.7415311855993944398638648,
                          0.9491079123427585245261897};
    const double gw[7] = {0.1294849661688696932706114,
                          0.2797053914892766679014678,
                          0.3818300505051189449503698,
                          0.4179591836734693877551020,
                          0.3818300505051189449503698,
                          0.2797053914892766679014678,
                          0.1294849661688696932706114};
    QuadRule r;
    for (int i = 0; i < 7; ++i) {
      const double xi = 0.5 * (gx[i] + 1.0);
      const double ai = 0.5 * gw[i];
      for (int j = 0; j < 7; ++j) {
        const double eta = 0.5 * (gx[j] + 1.0) * (1.0 - xi);
        const double aj = 0.5 * gw[j];
        r.points.push_back({xi, eta});
        r.weights.push_back(2.0 * ai * aj * (1.0 - xi));
      }
    }
    return r;
  }();
  return rule;
}

namespace mms {

std::array<double, 2> velocity(double x, double y) {
  const double pi = M_PI;
  const double s1 = std::sin(pi * x), t2 = std::sin(2.0 * pi * y);
  const double s2 = std::sin(2.0 * pi * x), t1 = std::sin(pi * y);
  return {pi * s1 * s1 * t2, -pi * s2 * t1 * t1};
}

std::array<std::array<double, 2>, 2> velocity_gradient(double x, double y) {
  const double pi = M_PI;
  const double s1 = std::sin(pi * x), s2 = std::sin(2.0 * pi * x),
               c2 = std::cos(2.0 * pi * x);
  const double t1 = std::sin(pi * y), t2 = std::sin(2.0 * pi * y),
               d2 = std::cos(2.0 * pi * y);
  const double pi2 = pi * pi;
  return {{{pi2 * s2 * t2, 2.0 * pi2 * s1 * s1 * d2},
           {-2.0 * pi2 * c2 * t1 * t1, -pi2 * s2 * t2}}};
}

std::array<double, 2> velocity_laplacian(double x, double y) {
  const double pi = M_PI;
  const double s1 = std::sin(pi * x), s2 = std::sin(2.0 * pi * x),
               c2 = std::cos(2.0 * pi * x);
  const double t1 = std::sin(pi * y), t2 = std::sin(2.0 * pi * y),
               d2 = std::cos(2.0 * pi * y);
  const double pi3 = pi * pi * pi;
  return {2.0 * pi3 * t2 * (c2 - 2.0 * s1 * s1),
          2.0 * pi3 * s2 * (2.0 * t1 * t1 - d2)};
}

double pressure(double x, double y) {
  return std::cos(M_PI * x) * std::cos(M_PI * y);
}

std::array<double, 2> pressure_gradient(double x, double y) {
  const double pi = M_PI;
  return {-pi * std::sin(pi * x) * std::cos(pi * y),
          -pi * std::cos(pi * x) * std::sin(pi * y)};
}

std::array<double, 2> forcing(double x, double y, double nu, double scale) {
  const auto u = velocity(x, y);
  const auto g = velocity_gradient(x, y);
  const auto lap = velocity_laplacian(x, y);
  const auto gp = pressure_gradient(x, y);
  const double s = scale;
  std::array<double, 2> f{};
  for (int d = 0; d < 2; ++d) {
    const double conv = u[0] * g[d][0] + u[1] * g[d][1];
    f[d] = -nu * s * lap[d] + s * s * conv + s * gp[d];
  }
  return f;
}

}  // namespace mms

namespace {

struct ElementGeometry {
  std::array<int, 6> nodes;      // scalar P2 node ids
  std::array<int, 3> pvertices;  // P1 vertex ids
  double area;
  // rows of J^{-T}: physical gradient = Jit * ref gradient
  double jit[2][2];
  std::array<double, 2> origin;
  double jac[2][2];  // columns (b-a), (c-a) for mapping ref -> physical
};

ElementGeometry element_geometry(const Mesh& mesh, const DofMap& dm, size_t t) {
  const auto& tri = mesh.triangles[t];
  ElementGeometry g;
  g.pvertices = {tri[0], tri[1], tri[2]};
  const auto& p0 = mesh.nodes[static_cast<size_t>(tri[0])];
  const auto& p1 = mesh.nodes[static_cast<size_t>(tri[1])];
  const auto& p2 = mesh.nodes[static_cast<size_t>(tri[2])];
  const double bx = p1[0] - p0[0], by = p1[1] - p0[1];
  const double cx = p2[0] - p0[0], cy = p2[1] - p0[1];
  const double det = bx * cy - cx * by;
  g.area = 0.5 * det;
  g.jit[0][0] = cy / det;
  g.jit[0][1] = -by / det;
  g.jit[1][0] = -cx / det;
  g.jit[1][1] = bx / det;
  g.origin = {p0[0], p0[1]};
  g.jac[0][0] = bx;
  g.jac[0][1] = cx;
  g.jac[1][0] = by;
  g.jac[1][1] = cy;

  const int n1 = mesh.n + 1;
  auto fine_of_vertex = [&](int v) {
    return std::array<int, 2>{2 * (v % n1), 2 * (v / n1)};
  };
  const auto f0 = fine_of_vertex(tri[0]);
  const auto f1 = fine_of_vertex(tri[1]);
  const auto f2 = fine_of_vertex(tri[2]);
  auto mid = [&](const std::array<int, 2>& a, const std::array<int, 2>& b) {
    return dm.vnode((a[0] + b[0]) / 2, (a[1] + b[1]) / 2);
  };
  g.nodes = {dm.vnode(f0[0], f0[1]), dm.vnode(f1[0], f1[1]),
             dm.vnode(f2[0], f2[1]), mid(f0, f1), mid(f1, f2), mid(f2, f0)};
  return g;
}

void p2_shape(double xi, double eta, double N[6]) {
  const double l0 = 1.0 - xi - eta, l1 = xi, l2 = eta;
  N[0] = l0 * (2.0 * l0 - 1.0);
  N[1] = l1 * (2.0 * l1 - 1.0);
  N[2] = l2 * (2.0 * l2 - 1.0);
  N[3] = 4.0 * l0 * l1;
  N[4] = 4.0 * l1 * l2;
  N[5] = 4.0 * l2 * l0;
}

void p2_grad_phys(const ElementGeometry& g, double xi, double eta, double dN[6][2]) {
  const double l0 = 1.0 - xi - eta, l1 = xi, l2 = eta;
  const double gl[3][2] = {{-1.0, -1.0}, {1.0, 0.0}, {0.0, 1.0}};
  double ref[6][2];
  for (int d = 0; d < 2; ++d) {
    ref[0][d] = (4.0 * l0 - 1.0) * gl[0][d];
    ref[1][d] = (4.0 * l1 - 1.0) * gl[1][d];
    ref[2][d] = (4.0 * l2 - 1.0) * gl[2][d];
    ref[3][d] = 4.0 * (l1 * gl[0][d] + l0 * gl[1][d]);
    ref[4][d] = 4.0 * (l2 * gl[1][d] + l1 * gl[2][d]);
    ref[5][d] = 4.0 * (l0 * gl[2][d] + l2 * gl[0][d]);
  }
  for (int a = 0; a < 6; ++a) {
    dN[a][0] = g.jit[0][0] * ref[a][0] + g.jit[0][1] * ref[a][1];
    dN[a][1] = g.jit[1][0] * ref[a][0] + g.jit[1][1] * ref[a][1];
  }
}

std::array<double, 2> physical_point(const ElementGeometry& g, double xi, double eta) {
  return {g.origin[0] + g.jac[0][0] * xi + g.jac[0][1] * eta,
          g.origin[1] + g.jac[1][0] * xi + g.jac[1][1] * eta};
}

using linalg::Triplet;

void emit_scalar_stiffness(const Mesh& mesh, const DofMap& dm,
                           std::vector<Triplet>& out, double scale,
                           int row_offset, int col_offset) {
  const QuadRule& rule = triangle_rule_degree5();
  for (size_t t = 0; t < mesh.triangles.size(); ++t) {
    const ElementGeometry g = element_geometry(mesh, dm, t);
    double Ke[6][6] = {};
    for (size_t q = 0; q < rule.points.size(); ++q) {
      double dN[6][2];
      p2_grad_phys(g, rule.points[q][0], rule.points[q][1], dN);
      const double w = rule.weights[q] * g.area;
      for (int a = 0; a < 6; ++a)
        for (int b = a; b < 6; ++b)
          Ke[a][b] += w * (dN[a][0] * dN[b][0] + dN[a][1] * dN[b][1]);
    }
    for (int a = 0; a < 6; ++a)
      for (int b = a; b < 6; ++b) {
        const double v = scale * Ke[a][b];
        out.push_back({row_offset + g.nodes[a], col_offset + g.nodes[b], v});
        if (a != b)
          out.push_back({row_offset + g.nodes[b], col_offset + g.nodes[a], v});
      }
  }
}

// Skew part of the convective form linearized at w:
// C[b][a] = 0.5 (w . grad psi_a, psi_b) - 0.5 (w . grad psi_b, psi_a).
// Emitted into both diagonal component blocks.
void emit_trilinear(const Mesh& mesh, const DofMap& dm, const CoeffVector& w_state,
                    std::vector<Triplet>& out) {
  const QuadRule& rule = triangle_rule_degree5();
  const int nv = dm.n_velocity_nodes();
  const double sign = testhooks::flip_trilinear_sign ? 1.0 : -1.0;
  for (size_t t = 0; t < mesh.triangles.size(); ++t) {
    const ElementGeometry g = element_geometry(mesh, dm, t);
    double E[6][6] = {};
    for (size_t q = 0; q < rule.points.size(); ++q) {
      double N[6], dN[6][2];
      p2_shape(rule.points[q][0], rule.points[q][1], N);
      p2_grad_phys(g, rule.points[q][0], rule.points[q][1], dN);
      double wq[2] = {0.0, 0.0};
      for (int a = 0; a < 6; ++a) {
        wq[0] += w_state[dm.velocity_dof(0, g.nodes[a])] * N[a];
        wq[1] += w_state[dm.velocity_dof(1, g.nodes[a])] * N[a];
      }
      const double wgt = rule.weights[q] * g.area;
      for (int a = 0; a < 6; ++a) {
        const double conv = wq[0] * dN[a][0] + wq[1] * dN[a][1];
        for (int b = 0; b < 6; ++b) E[b][a] += wgt * conv * N[b];
      }
    }
    for (int a = 0; a < 6; ++a)
      for (int b = 0; b < 6; ++b) {
        const double v = 0.5 * E[b][a] + sign * 0.5 * E[a][b];
        if (v == 0.0) continue;
        out.push_back({g.nodes[b], g.nodes[a], v});
        out.push_back({nv + g.nodes[b], nv + g.nodes[a], v});
      }
  }
}

void emit_divergence(const Mesh& mesh, const DofMap& dm, std::vector<Triplet>& out,
                     double scale, int row_offset, bool transpose,
                     int vel_offset_as_rows) {
  const QuadRule& rule = triangle_rule_degree5();
  const int nv = dm.n_velocity_nodes();
  for (size_t t = 0; t < mesh.triangles.size(); ++t) {
    const ElementGeometry g = element_geometry(mesh, dm, t);
    double De[3][12] = {};  // pressure vertex x (component, node)
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const double xi = rule.points[q][0], eta = rule.points[q][1];
      double dN[6][2];
      p2_grad_phys(g, xi, eta, dN);
      const double lambda[3] = {1.0 - xi - eta, xi, eta};
      const double wgt = rule.weights[q] * g.area;
      for (int p = 0; p < 3; ++p)
        for (int c = 0; c < 2; ++c)
          for (int a = 0; a < 6; ++a)
            De[p][c * 6 + a] += wgt * lambda[p] * dN[a][c];
    }
    for (int p = 0; p < 3; ++p) {
      const int prow = row_offset + g.pvertices[p];
      for (int c = 0; c < 2; ++c)
        for (int a = 0; a < 6; ++a) {
          const int vdof = c * nv + g.nodes[a];
          const double v = scale * De[p][c * 6 + a];
          if (transpose)
            out.push_back({vel_offset_as_rows + vdof, prow, v});
          else
            out.push_back({prow, vdof, v});
        }
    }
  }
}

void emit_graddiv(const Mesh& mesh, const DofMap& dm, std::vector<Triplet>& out,
                  double gamma) {
  const QuadRule& rule = triangle_rule_degree5();
  const int nv = dm.n_velocity_nodes();
  for (size_t t = 0; t < mesh.triangles.size(); ++t) {
    const ElementGeometry g = element_geometry(mesh, dm, t);
    double Ge[12][12] = {};
    for (size_t q = 0; q < rule.points.size(); ++q) {
      double dN[6][2];
      p2_grad_phys(g, rule.points[q][0], rule.points[q][1], dN);
      const double wgt = rule.weights[q] * g.area;
      for (int c = 0; c < 2; ++c)
        for (int a = 0; a < 6; ++a)
          for (int d = 0; d < 2; ++d)
            for (int b = 0; b < 6; ++b)
              Ge[d * 6 + b][c * 6 + a] += wgt * dN[a][c] * dN[b][d];
    }
    for (int c = 0; c < 2; ++c)
      for (int a = 0; a < 6; ++a)
        for (int d = 0; d < 2; ++d)
          for (int b = 0; b < 6; ++b)
            out.push_back({d * nv + g.nodes[b], c * nv + g.nodes[a],
                           gamma * Ge[d * 6 + b][c * 6 + a]});
  }
}

// Reaction block b*(u, W, v) of the Newton linearization at W.
void emit_reaction(const Mesh& mesh, const DofMap& dm, const CoeffVector& w_state,
                   std::vector<Triplet>& out) {
  const QuadRule& rule = triangle_rule_degree5();
  const int nv = dm.n_velocity_nodes();
  for (size_t t = 0; t < mesh.triangles.size(); ++t) {
    const ElementGeometry g = element_geometry(mesh, dm, t);
    double Re[12][12] = {};
    for (size_t q = 0; q < rule.points.size(); ++q) {
      double N[6], dN[6][2];
      p2_shape(rule.points[q][0], rule.points[q][1], N);
      p2_grad_phys(g, rule.points[q][0], rule.points[q][1], dN);
      double Uq[2] = {0.0, 0.0};
      double gradU[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
      for (int a = 0; a < 6; ++a) {
        for (int d = 0; d < 2; ++d) {
          const double coef = w_state[dm.velocity_dof(d, g.nodes[a])];
          Uq[d] += coef * N[a];
          gradU[d][0] += coef * dN[a][0];
          gradU[d][1] += coef * dN[a][1];
        }
      }
      const double wgt = rule.weights[q] * g.area;
      for (int c = 0; c < 2; ++c)
        for (int a = 0; a < 6; ++a)
          for (int d = 0; d < 2; ++d)
            for (int b = 0; b < 6; ++b)
              Re[d * 6 + b][c * 6 + a] +=
                  wgt * 0.5 * (N[a] * N[b] * gradU[d][c] - N[a] * dN[b][c] * Uq[d]);
    }
    for (int c = 0; c < 2; ++c)
      for (int a = 0; a < 6; ++a)
        for (int d = 0; d < 2; ++d)
          for (int b = 0; b < 6; ++b)
            out.push_back({d * nv + g.nodes[b], c * nv + g.nodes[a],
                           Re[d * 6 + b][c * 6 + a]});
  }
}

// rhs contribution b*(W, W, v) for the full-iterate Newton update.
void emit_newton_rhs(const Mesh& mesh, const DofMap& dm, const CoeffVector& w_state,
                     CoeffVector& rhs) {
  const QuadRule& rule = triangle_rule_degree5();
  for (size_t t = 0; t < mesh.triangles.size(); ++t) {
    const ElementGeometry g = element_geometry(mesh, dm, t);
    for (size_t q = 0; q < rule.points.size(); ++q) {
      double N[6], dN[6][2];
      p2_shape(rule.points[q][0], rule.points[q][1], N);
      p2_grad_phys(g, rule.points[q][0], rule.points[q][1], dN);
      double Uq[2] = {0.0, 0.0};
      double gradU[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
      for (int a = 0; a < 6; ++a) {
        for (int d = 0; d < 2; ++d) {
          const double coef = w_state[dm.velocity_dof(d, g.nodes[a])];
          Uq[d] += coef * N[a];
          gradU[d][0] += coef * dN[a][0];
          gradU[d][1] += coef * dN[a][1];
        }
      }
      const double wgt = rule.weights[q] * g.area;
      for (int b = 0; b < 6; ++b) {
        const double ugradNb = Uq[0] * dN[b][0] + Uq[1] * dN[b][1];
        for (int d = 0; d < 2; ++d) {
          const double conv = Uq[0] * gradU[d][0] + Uq[1] * gradU[d][1];
          rhs[dm.velocity_dof(d, g.nodes[b])] +=
              wgt * 0.5 * (conv * N[b] - ugradNb * Uq[d]);
        }
      }
    }
  }
}

void emit_forcing(const Mesh& mesh, const DofMap& dm, const ForcingSpec& forcing,
                  double nu, CoeffVector& rhs) {
  if (forcing.kind == ForcingSpec::Kind::Zero) return;
  const QuadRule& rule = triangle_rule_degree12();
  for (size_t t = 0; t < mesh.triangles.size(); ++t) {
    const ElementGeometry g = element_geometry(mesh, dm, t);
    for (size_t q = 0; q < rule.points.size(); ++q) {
      double N[6];
      p2_shape(rule.points[q][0], rule.points[q][1], N);
      const auto xy = physical_point(g, rule.points[q][0], rule.points[q][1]);
      std::array<double, 2> f{};
      if (forcing.kind == ForcingSpec::Kind::Manufactured)
        f = mms::forcing(xy[0], xy[1], nu, forcing.scale);
      else
        f = forcing.fn(xy[0], xy[1]);
      const double wgt = rule.weights[q] * g.area;
      for (int b = 0; b < 6; ++b)
        for (int d = 0; d < 2; ++d)
          rhs[dm.velocity_dof(d, g.nodes[b])] += wgt * f[d] * N[b];
    }
  }
}

AssembledSystem finalize_with_dirichlet(const DofMap& dm,
                                        std::vector<Triplet>&& triplets,
                                        CoeffVector&& rhs) {
  const int n = dm.total_dofs();
  std::vector<Triplet> kept;
  kept.reserve(triplets.size() + dm.dirichlet().size());
  for (const auto& tr : triplets) {
    if (dm.is_constrained(tr.row)) continue;
    if (dm.is_constrained(tr.col)) {
      rhs[tr.row] -= tr.value * dm.constrained_value(tr.col);
      continue;
    }
    kept.push_back(tr);
  }
  for (const auto& [dof, value] : dm.dirichlet()) {
    kept.push_back({dof, dof, 1.0});
    rhs[dof] = value;
  }
  AssembledSystem sys;
  sys.matrix = SparseMatrix::from_triplets(n, n, std::move(kept));
  sys.rhs = std::move(rhs);
  return sys;
}

AssembledSystem assemble_saddle(const Mesh& mesh, const DofMap& dm,
                                const CoeffVector& state_prev, double nu,
                                const ForcingSpec& forcing, double gamma_gd,
                                bool newton) {
  const int n = dm.total_dofs();
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<size_t>(mesh.triangles.size()) * 300);

  emit_scalar_stiffness(mesh, dm, triplets, nu, 0, 0);
  emit_scalar_stiffness(mesh, dm, triplets, nu, dm.n_velocity_nodes(),
                        dm.n_velocity_nodes());
  emit_trilinear(mesh, dm, state_prev, triplets);
  if (gamma_gd != 0.0) emit_graddiv(mesh, dm, triplets, gamma_gd);
  if (newton) emit_reaction(mesh, dm, state_prev, triplets);
  // momentum-pressure coupling -(p, div v) and continuity rows (div u, q)
  emit_divergence(mesh, dm, triplets, -1.0, dm.pressure_offset(), true, 0);
  emit_divergence(mesh, dm, triplets, 1.0, dm.pressure_offset(), false, 0);

  CoeffVector rhs = CoeffVector::Zero(n);
  emit_forcing(mesh, dm, forcing, nu, rhs);
  if (newton) emit_newton_rhs(mesh, dm, state_prev, rhs);

  return finalize_with_dirichlet(dm, std::move(triplets), std::move(rhs));
}

}  // namespace

SparseMatrix assemble_scalar_stiffness(const Mesh& mesh, const DofMap& dm) {
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<size_t>(mesh.triangles.size()) * 36);
  emit_scalar_stiffness(mesh, dm, triplets, 1.0, 0, 0);
  const int nv = dm.n_velocity_nodes();
  return SparseMatrix::from_triplets(nv, nv, std::move(triplets));
}

SparseMatrix assemble_stiffness(const Mesh& mesh, const DofMap& dm) {
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<size_t>(mesh.triangles.size()) * 72);
  emit_scalar_stiffness(mesh, dm, triplets, 1.0, 0, 0);
  emit_scalar_stiffness(mesh, dm, triplets, 1.0, dm.n_velocity_nodes(),
                        dm.n_velocity_nodes());
  const int nd = dm.n_velocity_dofs();
  return SparseMatrix::from_triplets(nd, nd, std::move(triplets));
}

SparseMatrix assemble_trilinear(const Mesh& mesh, const DofMap& dm,
                                const CoeffVector& w_state) {
  if (w_state.size() < dm.n_velocity_dofs())
    throw linalg::DimensionMismatch("assemble_trilinear: state too short");
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<size_t>(mesh.triangles.size()) * 72);
  emit_trilinear(mesh, dm, w_state, triplets);
  const int nd = dm.n_velocity_dofs();
  return SparseMatrix::from_triplets(nd, nd, std::move(triplets));
}

SparseMatrix assemble_divergence(const Mesh& mesh, const DofMap& dm) {
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<size_t>(mesh.triangles.size()) * 36);
  emit_divergence(mesh, dm, triplets, 1.0, 0, false, 0);
  return SparseMatrix::from_triplets(dm.n_pressure_dofs(), dm.n_velocity_dofs(),
                                     std::move(triplets));
}

CoeffVector assemble_forcing(const Mesh& mesh, const DofMap& dm,
                             const ForcingSpec& forcing, double nu) {
  CoeffVector rhs = CoeffVector::Zero(dm.total_dofs());
  emit_forcing(mesh, dm, forcing, nu, rhs);
  return rhs;
}

AssembledSystem assemble_picard_system(const Mesh& mesh, const DofMap& dm,
                                       const CoeffVector& state_prev, double nu,
                                       const ForcingSpec& forcing, double gamma_gd) {
  if (state_prev.size() < dm.n_velocity_dofs())
    throw linalg::DimensionMismatch("assemble_picard_system: state too short");
  if (gamma_gd < 0.0)
    throw std::invalid_argument("assemble_picard_system: gamma_gd must be >= 0");
  return assemble_saddle(mesh, dm, state_prev, nu, forcing, gamma_gd, false);
}

AssembledSystem assemble_newton_system(const Mesh& mesh, const DofMap& dm,
                                       const CoeffVector& state_prev, double nu,
                                       const ForcingSpec& forcing, double gamma_gd) {
  if (state_prev.size() < dm.n_velocity_dofs())
    throw linalg::DimensionMismatch("assemble_newton_system: state too short");
  return assemble_saddle(mesh, dm, state_prev, nu, forcing, gamma_gd, true);
}

Discretization::Discretization(int n, BoundaryCondition bc, DiagonalDirection dir)
    : mesh(build_cavity_mesh(n, dir)),
      dofmap(mesh, bc),
      stiffness_scalar(assemble_scalar_stiffness(mesh, dofmap)),
      stiffness_velocity(assemble_stiffness(mesh, dofmap)),
      divergence(assemble_divergence(mesh, dofmap)),
      h1_ip(stiffness_velocity) {}

double h1_seminorm(const CoeffVector& v, const Discretization& disc) {
  const int nd = disc.dofmap.n_velocity_dofs();
  if (v.size() != nd && v.size() != disc.dofmap.total_dofs())
    throw linalg::DimensionMismatch("h1_seminorm: unexpected vector length");
  return disc.h1_ip.norm(v);
}

double h1_seminorm_quadrature(const Discretization& disc, const CoeffVector& state,
                              const QuadRule& rule) {
  const DofMap& dm = disc.dofmap;
  const Mesh& mesh = disc.mesh;
  double total = 0.0;
  for (size_t t = 0; t < mesh.triangles.size(); ++t) {
    const ElementGeometry g = element_geometry(mesh, dm, t);
    for (size_t q = 0; q < rule.points.size(); ++q) {
      double dN[6][2];
      p2_grad_phys(g, rule.points[q][0], rule.points[q][1], dN);
      double grad[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
      for (int a = 0; a < 6; ++a)
        for (int d = 0; d < 2; ++d) {
          const double coef = state[dm.velocity_dof(d, g.nodes[a])];
          grad[d][0] += coef * dN[a][0];
          grad[d][1] += coef * dN[a][1];
        }
      total += rule.weights[q] * g.area *
               (grad[0][0] * grad[0][0] + grad[0][1] * grad[0][1] +
                grad[1][0] * grad[1][0] + grad[1][1] * grad[1][1]);
    }
  }
  return std::sqrt(total);
}

CoeffVector interpolate_velocity(
    const Discretization& disc,
    const std::function<std::array<double, 2>(double, double)>& u) {
  const DofMap& dm = disc.dofmap;
  CoeffVector state = CoeffVector::Zero(dm.total_dofs());
  for (int node = 0; node < dm.n_velocity_nodes(); ++node) {
    const auto xy = dm.vnode_coords(node);
    const auto val = u(xy[0], xy[1]);
    state[dm.velocity_dof(0, node)] = val[0];
    state[dm.velocity_dof(1, node)] = val[1];
  }
  return state;
}

void interpolate_pressure(const Discretization& disc,
                          const std::function<double(double, double)>& p,
                          CoeffVector& state) {
  const DofMap& dm = disc.dofmap;
  const int n1 = disc.mesh.n + 1;
  for (int v = 0; v < dm.n_pressure_dofs(); ++v) {
    const double x = (v % n1) * disc.mesh.h;
    const double y = (v / n1) * disc.mesh.h;
    state[dm.pressure_dof(v)] = p(x, y);
  }
}

double divergence_residual(const Discretization& disc, const CoeffVector& state) {
  const CoeffVector du =
      disc.divergence.multiply(state.head(disc.dofmap.n_velocity_dofs()));
  return du.norm();
}

MmsErrors mms_errors(const Discretization& disc, const CoeffVector& state,
                     double scale) {
  const QuadRule& rule = triangle_rule_degree12();
  const DofMap& dm = disc.dofmap;
  const Mesh& mesh = disc.mesh;

  double mean_ph = 0.0;
  for (int v = 0; v < dm.n_pressure_dofs(); ++v)
    mean_ph += dm.pressure_weights()[static_cast<size_t>(v)] * state[dm.pressure_dof(v)];

  double h1_sq = 0.0, l2p_sq = 0.0;
  for (size_t t = 0; t < mesh.triangles.size(); ++t) {
    const ElementGeometry g = element_geometry(mesh, dm, t);
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const double xi = rule.points[q][0], eta = rule.points[q][1];
      double N[6], dN[6][2];
      p2_shape(xi, eta, N);
      p2_grad_phys(g, xi, eta, dN);
      double grad_h[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
      for (int a = 0; a < 6; ++a)
        for (int d = 0; d < 2; ++d) {
          const double coef = state[dm.velocity_dof(d, g.nodes[a])];
          grad_h[d][0] += coef * dN[a][0];
          grad_h[d][1] += coef * dN[a][1];
        }
      const auto xy = physical_point(g, xi, eta);
      const auto ge = mms::velocity_gradient(xy[0], xy[1]);
      const double lambda[3] = {1.0 - xi - eta, xi, eta};
      double ph = 0.0;
      for (int p = 0; p < 3; ++p)
        ph += state[dm.pressure_dof(g.pvertices[p])] * lambda[p];
      const double pe = scale * mms::pressure(xy[0], xy[1]);
      const double wgt = rule.weights[q] * g.area;
      for (int d = 0; d < 2; ++d)
        for (int c = 0; c < 2; ++c) {
          const double diff = grad_h[d][c] - scale * ge[d][c];
          h1_sq += wgt * diff * diff;
        }
      const double pd = (ph - mean_ph) - pe;
      l2p_sq += wgt * pd * pd;
    }
  }
  return {std::sqrt(h1_sq), std::sqrt(l2p_sq)};
}

double trilinear_value(const Discretization& disc, const CoeffVector& u_state,
                       const CoeffVector& v_state, const CoeffVector& w_state,
                       const QuadRule& rule) {
  const DofMap& dm = disc.dofmap;
  const Mesh& mesh = disc.mesh;
  double total = 0.0;
  for (size_t t = 0; t < mesh.triangles.size(); ++t) {
    const ElementGeometry g = element_geometry(mesh, dm, t);
    for (size_t q = 0; q < rule.points.size(); ++q) {
      double N[6], dN[6][2];
      p2_shape(rule.points[q][0], rule.points[q][1], N);
      p2_grad_phys(g, rule.points[q][0], rule.points[q][1], dN);
      double uq[2] = {}, vq[2] = {}, wq[2] = {};
      double gv[2][2] = {}, gw[2][2] = {};
      for (int a = 0; a < 6; ++a)
        for (int d = 0; d < 2; ++d) {
          const double cu = u_state[dm.velocity_dof(d, g.nodes[a])];
          const double cv = v_state[dm.velocity_dof(d, g.nodes[a])];
          const double cw = w_state[dm.velocity_dof(d, g.nodes[a])];
          uq[d] += cu * N[a];
          vq[d] += cv * N[a];
          wq[d] += cw * N[a];
          gv[d][0] += cv * dN[a][0];
          gv[d][1] += cv * dN[a][1];
          gw[d][0] += cw * dN[a][0];
          gw[d][1] += cw * dN[a][1];
        }
      double t1 = 0.0, t2 = 0.0;
      for (int d = 0; d < 2; ++d) {
        t1 += (uq[0] * gv[d][0] + uq[1] * gv[d][1]) * wq[d];
        t2 += (uq[0] * gw[d][0] + uq[1] * gw[d][1]) * vq[d];
      }
      total += rule.weights[q] * g.area * 0.5 * (t1 - t2);
    }
  }
  return total;
}

void write_vtk(const Discretization& disc, const CoeffVector& state,
               const std::string& path) {
  std::ofstream out(path);
  if (!out) throw linalg::IoFailure("cannot open " + path);
  const DofMap& dm = disc.dofmap;
  const Mesh& mesh = disc.mesh;
  const int f = dm.fine();
  const int npts = dm.n_velocity_nodes();

  out << "# vtk DataFile Version 3.0\n";
  out << "cavity flow\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << npts << " double\n";
  for (int node = 0; node < npts; ++node) {
    const auto xy = dm.vnode_coords(node);
    out << xy[0] << " " << xy[1] << " 0\n";
  }

  const int ncells = static_cast<int>(mesh.triangles.size()) * 4;
  out << "CELLS " << ncells << " " << 4 * ncells << "\n";
  for (size_t t = 0; t < mesh.triangles.size(); ++t) {
    const ElementGeometry g = element_geometry(mesh, dm, t);
    const auto& nd = g.nodes;
    const int sub[4][3] = {{nd[0], nd[3], nd[5]},
                           {nd[1], nd[4], nd[3]},
                           {nd[2], nd[5], nd[4]},
                           {nd[3], nd[4], nd[5]}};
    for (const auto& s : sub) out << "3 " << s[0] << " " << s[1] << " " << s[2] << "\n";
  }
  out << "CELL_TYPES " << ncells << "\n";
  for (int i = 0; i < ncells; ++i) out << "5\n";

  out << "POINT_DATA " << npts << "\n";
  out << "VECTORS velocity double\n";
  for (int node = 0; node < npts; ++node)
    out << state[dm.velocity_dof(0, node)] << " " << state[dm.velocity_dof(1, node)]
        << " 0\n";

  // P1 pressure sampled on the fine grid: vertex values at even points,
  // edge/diagonal means at odd ones.
  out << "SCALARS pressure double 1\nLOOKUP_TABLE default\n";
  const int n1 = mesh.n + 1;
  auto pval = [&](int i, int j) {
    return state[dm.pressure_dof(j * n1 + i)];
  };
  for (int fy = 0; fy < f; ++fy) {
    for (int fx = 0; fx < f; ++fx) {
      double v;
      const bool ox = fx % 2, oy = fy % 2;
      if (!ox && !oy) {
        v = pval(fx / 2, fy / 2);
      } else if (ox && !oy) {
        v = 0.5 * (pval(fx / 2, fy / 2) + pval(fx / 2 + 1, fy / 2));
      } else if (!ox && oy) {
        v = 0.5 * (pval(fx / 2, fy / 2) + pval(fx / 2, fy / 2 + 1));
      } else if (mesh.diagonal == DiagonalDirection::Slash) {
        v = 0.5 * (pval(fx / 2, fy / 2) + pval(fx / 2 + 1, fy / 2 + 1));
      } else {
        v = 0.5 * (pval(fx / 2 + 1, fy / 2) + pval(fx / 2, fy / 2 + 1));
      }
      out << v << "\n";
    }
  }
  if (!out) throw linalg::IoFailure("write failed for " + path);
}

}  // namespace aanse::fem
