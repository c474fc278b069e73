#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace aanse::linalg {

/// Flat coefficient vector (velocity + pressure dofs, or any iterate).
using CoeffVector = Eigen::VectorXd;
using index_t = int;

struct DimensionMismatch : std::runtime_error {
  explicit DimensionMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct SingularMatrix : std::runtime_error {
  explicit SingularMatrix(const std::string& what) : std::runtime_error(what) {}
};

struct IoFailure : std::runtime_error {
  explicit IoFailure(const std::string& what) : std::runtime_error(what) {}
};

struct Triplet {
  index_t row;
  index_t col;
  double value;
};

/// Compressed-row sparse matrix. Rows are sorted by column index and hold
/// no duplicate entries; construction from triplets combines duplicates.
class SparseMatrix {
public:
  SparseMatrix() = default;
  SparseMatrix(index_t nrows, index_t ncols, std::vector<index_t> row_offsets,
               std::vector<index_t> col_indices, std::vector<double> values);

  /// Sorts triplets by (row, col), sums duplicates, drops nothing else.
  /// Deterministic for identical input order and values.
  static SparseMatrix from_triplets(index_t nrows, index_t ncols,
                                    std::vector<Triplet> triplets);

  index_t nrows() const { return nrows_; }
  index_t ncols() const { return ncols_; }
  index_t nnz() const { return static_cast<index_t>(values_.size()); }

  const std::vector<index_t>& row_offsets() const { return row_offsets_; }
  const std::vector<index_t>& col_indices() const { return col_indices_; }
  const std::vector<double>& values() const { return values_; }

  CoeffVector multiply(const CoeffVector& x) const;

  /// v' * A * w without forming intermediaries beyond one pass.
  double bilinear(const CoeffVector& v, const CoeffVector& w) const;

  double max_abs() const;

  /// Structural invariants: offsets nondecreasing, columns in range and
  /// strictly increasing within each row.
  bool well_formed() const;

  /// max |A_ij - A_ji| over stored entries (full scan; matrices here are small
  /// enough that sampling is unnecessary).
  double symmetry_error() const;

  Eigen::SparseMatrix<double> to_eigen() const;
  static SparseMatrix from_eigen(const Eigen::SparseMatrix<double>& m);

private:
  index_t nrows_ = 0;
  index_t ncols_ = 0;
  std::vector<index_t> row_offsets_ = {0};
  std::vector<index_t> col_indices_;
  std::vector<double> values_;
};

/// Opaque direct factorization (sparse LU). Immutable after construction and
/// safe to share read-only across threads; each solve is single-threaded.
class Factorization {
public:
  CoeffVector solve(const CoeffVector& b) const;
  index_t dim() const;

private:
  friend Factorization factorize(const SparseMatrix& A);
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

/// Sparse LU factorization of a square, structurally nonsingular matrix.
/// Throws SingularMatrix when a pivot falls below 1e-14 * max|A|.
Factorization factorize(const SparseMatrix& A);

/// Inner product <v,w> = v[mask]' * gram * w[mask]. An empty gram means the
/// Euclidean product; an empty mask means all indices of gram's dimension
/// (taken from the head of the argument vectors).
class InnerProduct {
public:
  InnerProduct() = default;  // Euclidean, no mask
  explicit InnerProduct(SparseMatrix gram, std::vector<index_t> mask = {});

  static InnerProduct euclidean() { return InnerProduct(); }

  double dot(const CoeffVector& v, const CoeffVector& w) const;
  double norm(const CoeffVector& v) const;

  const SparseMatrix& gram() const { return gram_; }
  const std::vector<index_t>& mask() const { return mask_; }

private:
  CoeffVector restrict_to_mask(const CoeffVector& v) const;

  SparseMatrix gram_;
  std::vector<index_t> mask_;
  bool has_gram_ = false;
  bool mask_contiguous_ = true;  // empty or [0, k) prefix
};

/// sqrt(v' * gram * v) restricted to the mask; nonnegative by clamping the
/// tiny negative values roundoff can produce.
double ip_norm(const CoeffVector& v, const InnerProduct& ip);

/// MatrixMarket coordinate format (1-based, general real).
void write_matrix_market(const SparseMatrix& A, const std::string& path);

}  // namespace aanse::linalg
