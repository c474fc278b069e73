#include "aanse/linalg.hpp"

#include <Eigen/UmfPackSupport>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace aanse::linalg {

SparseMatrix::SparseMatrix(index_t nrows, index_t ncols,
                           std::vector<index_t> row_offsets,
                           std::vector<index_t> col_indices,
                           std::vector<double> values)
    : nrows_(nrows),
      ncols_(ncols),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values)) {
  if (row_offsets_.size() != static_cast<size_t>(nrows_) + 1 ||
      col_indices_.size() != values_.size())
    throw DimensionMismatch("SparseMatrix: inconsistent CSR arrays");
}

SparseMatrix SparseMatrix::from_triplets(index_t nrows, index_t ncols,
                                         std::vector<Triplet> triplets) {
  for (const auto& t : triplets) {
    if (t.row < 0 || t.row >= nrows || t.col < 0 || t.col >= ncols)
      throw DimensionMismatch("from_triplets: entry out of range");
  }
  std::stable_sort(triplets.begin(), triplets.end(),
                   [](const Triplet& a, const Triplet& b) {
                     return a.row != b.row ? a.row < b.row : a.col < b.col;
                   });

  SparseMatrix m;
  m.nrows_ = nrows;
  m.ncols_ = ncols;
  m.row_offsets_.assign(static_cast<size_t>(nrows) + 1, 0);
  m.col_indices_.reserve(triplets.size());
  m.values_.reserve(triplets.size());

  size_t i = 0;
  while (i < triplets.size()) {
    const index_t r = triplets[i].row;
    const index_t c = triplets[i].col;
    double v = 0.0;
    while (i < triplets.size() && triplets[i].row == r && triplets[i].col == c) {
      v += triplets[i].value;
      ++i;
    }
    m.col_indices_.push_back(c);
    m.values_.push_back(v);
    m.row_offsets_[static_cast<size_t>(r) + 1]++;
  }
  for (index_t r = 0; r < nrows; ++r)
    m.row_offsets_[static_cast<size_t>(r) + 1] += m.row_offsets_[r];
  return m;
}

CoeffVector SparseMatrix::multiply(const CoeffVector& x) const {
  if (x.size() != ncols_) throw DimensionMismatch("multiply: size mismatch");
  CoeffVector y = CoeffVector::Zero(nrows_);
  for (index_t r = 0; r < nrows_; ++r) {
    double s = 0.0;
    for (index_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k)
      s += values_[k] * x[col_indices_[k]];
    y[r] = s;
  }
  return y;
}

double SparseMatrix::bilinear(const CoeffVector& v, const CoeffVector& w) const {
  if (v.size() != nrows_ || w.size() != ncols_)
    throw DimensionMismatch("bilinear: size mismatch");
  double s = 0.0;
  for (index_t r = 0; r < nrows_; ++r) {
    double row = 0.0;
    for (index_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k)
      row += values_[k] * w[col_indices_[k]];
    s += v[r] * row;
  }
  return s;
}

double SparseMatrix::max_abs() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

bool SparseMatrix::well_formed() const {
  if (row_offsets_.size() != static_cast<size_t>(nrows_) + 1) return false;
  if (row_offsets_.front() != 0 ||
      row_offsets_.back() != static_cast<index_t>(values_.size()))
    return false;
  for (index_t r = 0; r < nrows_; ++r) {
    if (row_offsets_[r] > row_offsets_[r + 1]) return false;
    for (index_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
      if (col_indices_[k] < 0 || col_indices_[k] >= ncols_) return false;
      if (k > row_offsets_[r] && col_indices_[k] <= col_indices_[k - 1]) return false;
    }
  }
  return true;
}

namespace {
double entry_or_zero(const SparseMatrix& a, index_t i, index_t j) {
  const auto& off = a.row_offsets();
  const auto& col = a.col_indices();
  auto first = col.begin() + off[i];
  auto last = col.begin() + off[i + 1];
  auto it = std::lower_bound(first, last, j);
  if (it == last || *it != j) return 0.0;
  return a.values()[static_cast<size_t>(it - col.begin())];
}
}  // namespace

double SparseMatrix::symmetry_error() const {
  double err = 0.0;
  for (index_t r = 0; r < nrows_; ++r) {
    for (index_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
      const index_t c = col_indices_[k];
      err = std::max(err, std::abs(values_[k] - entry_or_zero(*this, c, r)));
    }
  }
  return err;
}

Eigen::SparseMatrix<double> SparseMatrix::to_eigen() const {
  Eigen::SparseMatrix<double> m(nrows_, ncols_);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(values_.size());
  for (index_t r = 0; r < nrows_; ++r)
    for (index_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k)
      trips.emplace_back(r, col_indices_[k], values_[k]);
  m.setFromTriplets(trips.begin(), trips.end());
  m.makeCompressed();
  return m;
}

SparseMatrix SparseMatrix::from_eigen(const Eigen::SparseMatrix<double>& m) {
  std::vector<Triplet> trips;
  trips.reserve(static_cast<size_t>(m.nonZeros()));
  for (int k = 0; k < m.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it)
      trips.push_back({static_cast<index_t>(it.row()),
                       static_cast<index_t>(it.col()), it.value()});
  return from_triplets(static_cast<index_t>(m.rows()),
                       static_cast<index_t>(m.cols()), std::move(trips));
}

struct Factorization::Impl {
  // UMFPACK's numeric object references the matrix arrays during solves, so
  // the converted matrix lives alongside the factorization.
  Eigen::SparseMatrix<double> matrix;
  Eigen::UmfPackLU<Eigen::SparseMatrix<double>> lu;
  index_t n = 0;
};

CoeffVector Factorization::solve(const CoeffVector& b) const {
  if (!impl_) throw SingularMatrix("solve: empty factorization");
  if (b.size() != impl_->n) throw DimensionMismatch("solve: rhs size mismatch");
  return impl_->lu.solve(b);
}

index_t Factorization::dim() const { return impl_ ? impl_->n : 0; }

Factorization factorize(const SparseMatrix& A) {
  if (A.nrows() != A.ncols())
    throw DimensionMismatch("factorize: matrix not square");
  auto impl = std::make_shared<Factorization::Impl>();
  impl->n = A.nrows();
  impl->matrix = A.to_eigen();
  impl->lu.compute(impl->matrix);
  if (impl->lu.info() != Eigen::Success)
    throw SingularMatrix("factorize: zero pivot encountered");

  // Near-singularity probe: one solve with a fixed unit-norm vector gives a
  // lower bound on ||A^-1||_2, hence an upper bound sigma_est on the smallest
  // singular value. Threshold 1e-14 * max|A|.
  const double amax = A.max_abs();
  if (amax > 0.0 && impl->n > 0) {
    std::mt19937_64 rng(0x5eedu);
    CoeffVector probe(impl->n);
    for (index_t i = 0; i < impl->n; ++i)
      probe[i] = (rng() & 1u) ? 1.0 : -1.0;
    probe /= probe.norm();
    const CoeffVector x = impl->lu.solve(probe);
    const double inv_norm_lb = x.norm();
    if (!std::isfinite(inv_norm_lb) || inv_norm_lb * (1e-14 * amax) > 1.0)
      throw SingularMatrix("factorize: pivot below 1e-14 * max|A|");
  }

  Factorization f;
  f.impl_ = std::move(impl);
  return f;
}

InnerProduct::InnerProduct(SparseMatrix gram, std::vector<index_t> mask)
    : gram_(std::move(gram)), mask_(std::move(mask)), has_gram_(true) {
  if (gram_.nrows() != gram_.ncols())
    throw DimensionMismatch("InnerProduct: gram not square");
  if (!mask_.empty() && static_cast<index_t>(mask_.size()) != gram_.nrows())
    throw DimensionMismatch("InnerProduct: mask size != gram dimension");
  mask_contiguous_ = true;
  for (size_t i = 0; i < mask_.size(); ++i) {
    if (mask_[i] != static_cast<index_t>(i)) {
      mask_contiguous_ = false;
      break;
    }
  }
}

CoeffVector InnerProduct::restrict_to_mask(const CoeffVector& v) const {
  const index_t n = gram_.nrows();
  if (mask_.empty() || mask_contiguous_) {
    if (v.size() < n) throw DimensionMismatch("InnerProduct: vector shorter than gram");
    return v.head(n);
  }
  CoeffVector r(n);
  for (index_t i = 0; i < n; ++i) {
    if (mask_[i] < 0 || mask_[i] >= v.size())
      throw DimensionMismatch("InnerProduct: mask index out of range");
    r[i] = v[mask_[i]];
  }
  return r;
}

double InnerProduct::dot(const CoeffVector& v, const CoeffVector& w) const {
  if (!has_gram_) {
    if (v.size() != w.size()) throw DimensionMismatch("dot: size mismatch");
    return v.dot(w);
  }
  return gram_.bilinear(restrict_to_mask(v), restrict_to_mask(w));
}

double InnerProduct::norm(const CoeffVector& v) const {
  return std::sqrt(std::max(0.0, dot(v, v)));
}

double ip_norm(const CoeffVector& v, const InnerProduct& ip) { return ip.norm(v); }

void write_matrix_market(const SparseMatrix& A, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot open " + path);
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << A.nrows() << " " << A.ncols() << " " << A.nnz() << "\n";
  char buf[64];
  for (index_t r = 0; r < A.nrows(); ++r) {
    for (index_t k = A.row_offsets()[r]; k < A.row_offsets()[r + 1]; ++k) {
      std::snprintf(buf, sizeof(buf), "%d %d %.17g\n", r + 1,
                    A.col_indices()[k] + 1, A.values()[k]);
      out << buf;
    }
  }
  if (!out) throw IoFailure("write failed for " + path);
}

}  // namespace aanse::linalg
