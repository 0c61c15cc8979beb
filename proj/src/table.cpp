#include "fdiv/table.hpp"

#include <stdexcept>
#include <string>

namespace fdivergence {

Table::Table(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() == 0 ? 0 : rows.begin()->size()) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw std::invalid_argument("Table: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Table Table::from_flat(std::size_t rows, std::size_t cols, std::vector<double> data) {
  if (data.size() != rows * cols) {
    throw std::invalid_argument("Table: expected " + std::to_string(rows * cols) +
                                " values, got " + std::to_string(data.size()));
  }
  Table t;
  t.rows_ = rows;
  t.cols_ = cols;
  t.data_ = std::move(data);
  return t;
}

double Table::sum() const {
  double s = 0.0;
  for (double v : data_) s += v;
  return s;
}

std::vector<double> Table::row_sums() const {
  std::vector<double> out(rows_, 0.0);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) out[i] += (*this)(i, j);
  return out;
}

std::vector<double> Table::col_sums() const {
  std::vector<double> out(cols_, 0.0);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) out[j] += (*this)(i, j);
  return out;
}

Table Table::multiply(const Table& rhs) const {
  if (cols_ != rhs.rows_) throw std::invalid_argument("Table::multiply: dimension mismatch");
  Table out(rows_, rhs.cols_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t k = 0; k < cols_; ++k) {
      const double a = (*this)(i, k);
      if (a == 0.0) continue;
      for (std::size_t j = 0; j < rhs.cols_; ++j) out(i, j) += a * rhs(k, j);
    }
  return out;
}

Table Table::with_rows_permuted(std::span<const std::size_t> order) const {
  if (order.size() != rows_) throw std::invalid_argument("Table: permutation size mismatch");
  Table out(rows_, cols_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) out(i, j) = (*this)(order[i], j);
  return out;
}

}  // namespace fdivergence
