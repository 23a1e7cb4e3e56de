#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <string>
#include <new>
#include <vector>

namespace specmon::nn {

template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

// Numeric storage with a fixed base alignment, so vectorized kernels take the
// same code path (and summation order) wherever the buffer lands in memory.
template <typename Real>
using Buffer = std::vector<Real, AlignedAllocator<Real>>;

// Flat parameter storage with named blocks. Every layer addresses its
// weights by offset so optimizers, checkpoints and gradient checks can treat
// a network as one vector.
template <typename Real>
class Params {
 public:
  struct Block {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
  };

  std::size_t add(std::string name, std::size_t size) {
    const std::size_t offset = values_.size();
    blocks_.push_back({std::move(name), offset, size});
    values_.resize(offset + size, Real{0});
    grads_.resize(offset + size, Real{0});
    return offset;
  }

  std::size_t size() const { return values_.size(); }
  Real* value(std::size_t offset) { return values_.data() + offset; }
  const Real* value(std::size_t offset) const { return values_.data() + offset; }
  Real* grad(std::size_t offset) { return grads_.data() + offset; }

  std::span<Real> values() { return values_; }
  std::span<const Real> values() const { return values_; }
  std::span<Real> grads() { return grads_; }
  std::span<const Real> grads() const { return grads_; }
  const std::vector<Block>& blocks() const { return blocks_; }

  void zero_grad() { std::fill(grads_.begin(), grads_.end(), Real{0}); }

  const Block& block_of(std::size_t index) const {
    for (const auto& b : blocks_) {
      if (index >= b.offset && index < b.offset + b.size) return b;
    }
    return blocks_.back();
  }

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  void init_uniform(std::size_t offset, std::size_t size, int fan_in, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < size; ++i) values_[offset + i] = static_cast<Real>(dist(rng));
  }

  template <typename Other>
  void copy_values_from(const Params<Other>& other) {
    const auto src = other.values();
    values_.assign(src.begin(), src.end());
    grads_.assign(values_.size(), Real{0});
  }

 private:
  Buffer<Real> values_;
  Buffer<Real> grads_;
  std::vector<Block> blocks_;
};

}  // namespace specmon::nn
