#include "hmrk/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hmrk/error.hpp"

namespace hmrk {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kShapeMismatch: return "shape_mismatch";
    case ErrorKind::kNonFinite: return "non_finite";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kCorrupt: return "corrupt";
    case ErrorKind::kVersion: return "version";
    case ErrorKind::kInvalidModel: return "invalid_model";
    case ErrorKind::kInvalidConfig: return "invalid_config";
    case ErrorKind::kState: return "state";
  }
  return "unknown";
}

}  // namespace hmrk

namespace hmrk::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (numel(shape_) != data_.size()) {
    fail(ErrorKind::kShapeMismatch, "tensor shape " + shape_str(shape_) + " does not match " +
                                        std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::from(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

double Tensor::item() const {
  if (data_.size() != 1) {
    fail(ErrorKind::kShapeMismatch, "item() on tensor of shape " + shape_str(shape_));
  }
  return data_[0];
}

void Tensor::reshape_storage(const Shape& shape) {
  shape_ = shape;
  data_.resize(numel(shape));
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace hmrk::ad
