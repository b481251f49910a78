#include <cmath>
#include <random>

#include "edgelab/csv_io.hpp"
#include "edgelab/errors.hpp"
#include "edgelab/loss_models.hpp"

namespace edgelab {

namespace {

Matrix gaussian(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  // Fill row by row so the draw order does not depend on storage order.
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

Matrix orthonormal_columns(std::mt19937_64& rng, Index rows, Index cols) {
  const Matrix A = gaussian(rng, rows, cols);
  Eigen::HouseholderQR<Matrix> qr(A);
  Matrix Q = qr.householderQ() * Matrix::Identity(rows, cols);
  // Make the factorization unique: R with a positive diagonal.
  const Matrix R = qr.matrixQR();
  for (Index j = 0; j < cols; ++j) {
    if (R(j, j) < 0.0) Q.col(j) *= -1.0;
  }
  return Q;
}

}  // namespace

Dataset make_synthetic_dataset(std::uint64_t seed, Index n, Index d_in, Index d_out,
                               const DatasetOptions& opts) {
  if (n < 1 || d_in < 1 || d_out < 1) {
    throw ShapeError("make_synthetic_dataset: sizes must be positive");
  }
  std::mt19937_64 rng(seed);
  Dataset data;
  data.inputs = gaussian(rng, n, d_in);

  Matrix T;
  if (!opts.teacher_singular_values.empty()) {
    const Index k = static_cast<Index>(opts.teacher_singular_values.size());
    if (k > std::min(d_in, d_out)) {
      throw ShapeError("make_synthetic_dataset: more singular values than min(d_in, d_out)");
    }
    const Matrix U = orthonormal_columns(rng, d_out, k);
    const Matrix V = orthonormal_columns(rng, d_in, k);
    const Vector s = Eigen::Map<const Vector>(opts.teacher_singular_values.data(), k);
    T = U * s.asDiagonal() * V.transpose();
  } else if (opts.teacher_rank > 0) {
    const Index k = opts.teacher_rank;
    if (k > std::min(d_in, d_out)) {
      throw ShapeError("make_synthetic_dataset: teacher rank exceeds min(d_in, d_out)");
    }
    const Matrix A = gaussian(rng, d_out, k);
    const Matrix B = gaussian(rng, k, d_in);
    T = A * B / std::sqrt(static_cast<double>(d_in * k));
  } else {
    T = gaussian(rng, d_out, d_in) / std::sqrt(static_cast<double>(d_in));
  }
  data.targets = opts.target_scale * data.inputs * T.transpose();
  if (opts.noise > 0.0) {
    data.targets += opts.noise * gaussian(rng, n, d_out);
  }
  return data;
}

Matrix least_squares_target(const Dataset& data, Index rank) {
  if (data.size() < data.inputs.cols()) {
    throw ShapeError("least_squares_target: fewer samples than input features");
  }
  // Minimize ‖X Mᵀ − Y‖_F.
  const Matrix Mt = data.inputs.colPivHouseholderQr().solve(data.targets);
  const Matrix M = Mt.transpose();
  Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vector s = svd.singularValues();
  Index keep = 0;
  while (keep < s.size() && s(keep) > kRankTolerance * s(0)) ++keep;
  if (rank > 0) keep = std::min(keep, rank);
  s.tail(s.size() - keep).setZero();
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

Dataset drop_sample(const Dataset& data, Index index) {
  const Index n = data.size();
  if (index < 0 || index >= n) throw IndexError("drop_sample: index out of range");
  if (n < 2) throw ShapeError("drop_sample: dataset would become empty");
  Dataset out;
  out.inputs.resize(n - 1, data.inputs.cols());
  out.targets.resize(n - 1, data.targets.cols());
  out.inputs.topRows(index) = data.inputs.topRows(index);
  out.targets.topRows(index) = data.targets.topRows(index);
  out.inputs.bottomRows(n - 1 - index) = data.inputs.bottomRows(n - 1 - index);
  out.targets.bottomRows(n - 1 - index) = data.targets.bottomRows(n - 1 - index);
  return out;
}

void write_dataset_csv(std::ostream& os, const Dataset& data) {
  std::vector<std::string> header;
  for (Index j = 0; j < data.inputs.cols(); ++j) header.push_back("x" + std::to_string(j));
  for (Index j = 0; j < data.targets.cols(); ++j) header.push_back("y" + std::to_string(j));
  csv::Writer w(os, header);
  std::vector<double> row(header.size());
  for (Index i = 0; i < data.size(); ++i) {
    Index c = 0;
    for (Index j = 0; j < data.inputs.cols(); ++j) row[c++] = data.inputs(i, j);
    for (Index j = 0; j < data.targets.cols(); ++j) row[c++] = data.targets(i, j);
    w.row(row);
  }
}

Dataset read_dataset_csv(std::istream& is, Index d_in) {
  const csv::Table t = csv::read(is);
  const Index width = static_cast<Index>(t.header.size());
  if (d_in < 1 || d_in >= width) {
    throw ShapeError("read_dataset_csv: input width inconsistent with the header");
  }
  Dataset data;
  const Index n = static_cast<Index>(t.rows.size());
  data.inputs.resize(n, d_in);
  data.targets.resize(n, width - d_in);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d_in; ++j) data.inputs(i, j) = t.rows[i][j];
    for (Index j = d_in; j < width; ++j) data.targets(i, j - d_in) = t.rows[i][j];
  }
  return data;
}

}  // namespace edgelab
