#include "spherecorr/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace spherecorr {

namespace {

std::size_t checked_count(const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw std::invalid_argument("tensor: empty shape");
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e == 0) throw std::invalid_argument("tensor: zero extent in " + shape_str(shape));
    n *= e;
  }
  return n;
}

}  // namespace

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(checked_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_count(shape_) != data_.size())
    throw std::invalid_argument("tensor: data length " + std::to_string(data_.size()) +
                                " does not match shape " + spherecorr::shape_str(shape_));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> d;
  d.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw std::invalid_argument("tensor: ragged rows");
    d.insert(d.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(d));
}

std::size_t Tensor::rows() const {
  if (shape_.size() == 1) return 1;
  if (shape_.size() != 2) throw std::logic_error("tensor: rows() on rank " + std::to_string(shape_.size()));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.size() == 1) return shape_[0];
  if (shape_.size() != 2) throw std::logic_error("tensor: cols() on rank " + std::to_string(shape_.size()));
  return shape_[1];
}

double Tensor::item() const {
  if (data_.size() != 1) throw std::logic_error("tensor: item() on " + spherecorr::shape_str(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const { return spherecorr::shape_str(shape_); }

}  // namespace spherecorr
