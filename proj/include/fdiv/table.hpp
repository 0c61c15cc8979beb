#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace fdivergence {

/// Dense row-major matrix of doubles. Used for joint tables, variational
/// tables, transition matrices and model weights.
class Table {
 public:
  Table() = default;
  Table(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Table(std::initializer_list<std::initializer_list<double>> rows);

  static Table from_flat(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::span<const double> flat() const noexcept { return data_; }
  std::span<double> flat() noexcept { return data_; }

  double sum() const;
  std::vector<double> row_sums() const;
  std::vector<double> col_sums() const;

  /// Matrix product this * rhs.
  Table multiply(const Table& rhs) const;
  Table with_rows_permuted(std::span<const std::size_t> order) const;

  bool operator==(const Table&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

}  // namespace fdivergence
