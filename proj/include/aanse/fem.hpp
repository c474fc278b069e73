#pragma once

#include "aanse/linalg.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace aanse::fem {

using linalg::CoeffVector;
using linalg::SparseMatrix;

enum class BoundaryTag : std::uint8_t { Interior, Wall, Lid };

/// Orientation of the cell diagonal. Slash runs lower-left to upper-right.
enum class DiagonalDirection { Slash, Backslash };

/// Structured triangulation of the unit square: n x n cells, each split by
/// one diagonal, 2n^2 triangles, (n+1)^2 vertices. Top corners carry the lid
/// tag (leaky-cavity convention).
struct Mesh {
  int n = 0;
  double h = 0.0;
  DiagonalDirection diagonal = DiagonalDirection::Slash;
  std::vector<std::array<double, 2>> nodes;
  std::vector<std::array<int, 3>> triangles;  // CCW vertex indices
  std::vector<BoundaryTag> boundary_tags;     // per vertex

  int vertex_id(int i, int j) const { return j * (n + 1) + i; }
};

Mesh build_cavity_mesh(int n, DiagonalDirection dir = DiagonalDirection::Slash);

struct BoundaryCondition {
  enum class Kind { CavityLid, Homogeneous };
  Kind kind = Kind::CavityLid;
  double lid_speed = 1.0;
};

/// Taylor-Hood (P2, P1) dof layout. Scalar velocity nodes coincide with the
/// (2n+1) x (2n+1) fine grid of the structured mesh. Dof order: all x
/// velocity components, all y components, then vertex pressures. The
/// pressure zero-mean constraint is handled by pinning one pressure dof and
/// projecting the solved pressure to zero mean, which keeps the dof count at
/// 2(2n+1)^2 + (n+1)^2.
class DofMap {
 public:
  DofMap(const Mesh& mesh, BoundaryCondition bc);

  int n() const { return n_; }
  int fine() const { return 2 * n_ + 1; }
  int n_velocity_nodes() const { return fine() * fine(); }
  int n_velocity_dofs() const { return 2 * n_velocity_nodes(); }
  int n_pressure_dofs() const { return (n_ + 1) * (n_ + 1); }
  int total_dofs() const { return n_velocity_dofs() + n_pressure_dofs(); }
  int pressure_offset() const { return n_velocity_dofs(); }

  int vnode(int fx, int fy) const { return fy * fine() + fx; }
  std::array<double, 2> vnode_coords(int node) const;
  bool vnode_on_boundary(int node) const;
  bool vnode_on_lid(int node) const;

  int velocity_dof(int component, int node) const {
    return component * n_velocity_nodes() + node;
  }
  int pressure_dof(int vertex) const { return pressure_offset() + vertex; }
  int pressure_pin_dof() const { return pressure_dof(0); }

  const BoundaryCondition& bc() const { return bc_; }

  /// Constrained dof -> prescribed value; covers boundary velocity dofs and
  /// the pinned pressure dof.
  const std::vector<std::pair<int, double>>& dirichlet() const { return dirichlet_; }
  bool is_constrained(int dof) const { return constrained_[static_cast<size_t>(dof)] != 0; }
  double constrained_value(int dof) const { return constrained_value_[static_cast<size_t>(dof)]; }

  /// Integral of each P1 vertex basis function (for pressure means).
  const std::vector<double>& pressure_weights() const { return pressure_weights_; }

  /// Overwrites constrained entries of a full state vector with their
  /// prescribed values.
  void impose_dirichlet(CoeffVector& state) const;

  /// Subtracts the weighted mean so that the integral of p vanishes.
  void project_pressure_zero_mean(CoeffVector& state) const;

  double pressure_integral(const CoeffVector& state) const;

 private:
  int n_;
  BoundaryCondition bc_;
  std::vector<std::pair<int, double>> dirichlet_;
  std::vector<char> constrained_;
  std::vector<double> constrained_value_;
  std::vector<double> pressure_weights_;
};

/// Quadrature on the reference triangle (0,0)-(1,0)-(0,1). Weights sum to 1;
/// a physical integral is |T| * sum_i w_i f(p_i).
struct QuadRule {
  std::vector<std::array<double, 2>> points;  // (xi, eta)
  std::vector<double> weights;
};

const QuadRule& triangle_rule_degree5();   // 7 points, exact to degree 5
const QuadRule& triangle_rule_degree12();  // collapsed 7x7 Gauss, for oracles

struct ForcingSpec {
  enum class Kind { Zero, Manufactured, Custom };
  Kind kind = Kind::Zero;
  double scale = 1.0;  // multiplies the manufactured solution fields
  std::function<std::array<double, 2>(double, double)> fn;  // Custom only

  static ForcingSpec zero() { return {}; }
  static ForcingSpec manufactured(double scale) {
    return {Kind::Manufactured, scale, nullptr};
  }
  static ForcingSpec custom(std::function<std::array<double, 2>(double, double)> f) {
    return {Kind::Custom, 1.0, std::move(f)};
  }
};

/// Manufactured divergence-free solution built from the stream function
/// sin^2(pi x) sin^2(pi y), with pressure cos(pi x) cos(pi y); vanishes on
/// the boundary of the unit square.
namespace mms {
std::array<double, 2> velocity(double x, double y);
std::array<std::array<double, 2>, 2> velocity_gradient(double x, double y);  // [i][j] = du_i/dx_j
std::array<double, 2> velocity_laplacian(double x, double y);
double pressure(double x, double y);
std::array<double, 2> pressure_gradient(double x, double y);
/// f = -nu s lap(u) + s^2 (u . grad) u + s grad(p)
std::array<double, 2> forcing(double x, double y, double nu, double scale);
}  // namespace mms

namespace testhooks {
/// Flips the sign of one half of the convective form; used by the
/// verification suite to prove the skew-symmetry check can fail.
extern bool flip_trilinear_sign;
}  // namespace testhooks

/// Scalar P2 stiffness (n_velocity_nodes square), no boundary conditions.
SparseMatrix assemble_scalar_stiffness(const Mesh& mesh, const DofMap& dofmap);

/// Vector velocity stiffness: two diagonal copies of the scalar one.
SparseMatrix assemble_stiffness(const Mesh& mesh, const DofMap& dofmap);

/// Convection matrix N(w) with v' N(w) u = 0.5 (w . grad u, v) - 0.5 (w . grad v, u)
/// for the velocity field w taken from the head of a full state vector.
SparseMatrix assemble_trilinear(const Mesh& mesh, const DofMap& dofmap,
                                const CoeffVector& w_state);

/// Divergence matrix D (pressure rows x velocity cols), no boundary conditions.
SparseMatrix assemble_divergence(const Mesh& mesh, const DofMap& dofmap);

/// Forcing load vector (f, v) over the full dof range, no boundary conditions.
CoeffVector assemble_forcing(const Mesh& mesh, const DofMap& dofmap,
                             const ForcingSpec& forcing, double nu);

struct AssembledSystem {
  SparseMatrix matrix;
  CoeffVector rhs;
};

/// Saddle-point system for one linearized step at state_prev:
///   nu (grad u, grad v) + b*(w, u, v) + gamma (div u, div v) - (p, div v) = (f, v)
///   (div u, q) = 0
/// with Dirichlet rows eliminated (boundary lifting into the rhs) and the
/// pressure pin imposed.
AssembledSystem assemble_picard_system(const Mesh& mesh, const DofMap& dofmap,
                                       const CoeffVector& state_prev, double nu,
                                       const ForcingSpec& forcing, double gamma_gd);

/// Picard system plus the reaction block b*(u, w, v); rhs gains b*(w, w, v)
/// so the solve yields the full next Newton iterate.
AssembledSystem assemble_newton_system(const Mesh& mesh, const DofMap& dofmap,
                                       const CoeffVector& state_prev, double nu,
                                       const ForcingSpec& forcing, double gamma_gd);

/// Shared discrete context: mesh, dofs, cached stiffness and the H1 inner
/// product on velocity dofs (pressure excluded from the mask).
struct Discretization {
  Mesh mesh;
  DofMap dofmap;
  SparseMatrix stiffness_scalar;
  SparseMatrix stiffness_velocity;
  SparseMatrix divergence;
  linalg::InnerProduct h1_ip;

  Discretization(int n, BoundaryCondition bc,
                 DiagonalDirection dir = DiagonalDirection::Slash);
};

using DiscretizationPtr = std::shared_ptr<const Discretization>;

/// sqrt of the velocity-stiffness energy of the leading velocity entries;
/// accepts full states or velocity-only vectors.
double h1_seminorm(const CoeffVector& state_or_velocity, const Discretization& disc);

/// Same seminorm by direct elementwise quadrature of |grad u_h|^2 with the
/// given rule; an independent route from the gram-matrix path.
double h1_seminorm_quadrature(const Discretization& disc, const CoeffVector& state,
                              const QuadRule& rule);

/// P2 interpolant of an analytic velocity field into a full state vector
/// (pressure entries zero).
CoeffVector interpolate_velocity(const Discretization& disc,
                                 const std::function<std::array<double, 2>(double, double)>& u);

/// P1 interpolant of an analytic pressure into the pressure block.
void interpolate_pressure(const Discretization& disc,
                          const std::function<double(double, double)>& p,
                          CoeffVector& state);

/// || D u ||_2 of the full state's velocity against all pressure test rows.
double divergence_residual(const Discretization& disc, const CoeffVector& state);

struct MmsErrors {
  double velocity_h1 = 0.0;
  double pressure_l2 = 0.0;
};

/// Quadrature errors (high-order rule) against the scaled manufactured fields.
MmsErrors mms_errors(const Discretization& disc, const CoeffVector& state, double scale);

/// b*(u, v, w) evaluated by quadrature with the given rule from three full
/// state vectors; independent of the matrix assembly path.
double trilinear_value(const Discretization& disc, const CoeffVector& u_state,
                       const CoeffVector& v_state, const CoeffVector& w_state,
                       const QuadRule& rule);

/// Legacy ASCII VTK export of velocity and pressure on the midpoint-refined
/// triangulation.
void write_vtk(const Discretization& disc, const CoeffVector& state,
               const std::string& path);

}  // namespace aanse::fem
