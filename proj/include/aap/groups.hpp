#ifndef AAP_GROUPS_HPP
#define AAP_GROUPS_HPP

#include "tensor.hpp"

#include <algorithm>

namespace aap {

// One pruning (or fetching) group: `real` weights at first + t*stride for
// t < real, followed by `virtual_count` zero slots that exist only to round
// the fiber up to a whole number of groups.
struct GroupView {
  std::size_t first = 0;
  std::size_t stride = 1;
  std::size_t real = 0;
  std::size_t virtual_count = 0;
  std::size_t fiber = 0;
  std::size_t offset = 0; // position of slot 0 within the fiber

  std::size_t operator[](std::size_t t) const { return first + t * stride; }
  std::size_t size() const { return real + virtual_count; }
};

// Partition of a layer's weights into groups of `n_group` consecutive
// entries along an axis. A fiber is the 1-D run of weights along the axis at
// fixed values of the other coordinates; each fiber is cut into
// ceil(extent / n_group) groups. Fiber order:
//   Channel  (m, i, j)   Filter (c, i, j)   Spatial (m, c)
//   Row      out         Column in
// Groups are numbered fiber-major, then by position along the fiber.
class GroupDirectory {
public:
  GroupDirectory(const LayerShape& shape, Axis axis, std::size_t n_group)
      : shape_(shape), axis_(axis), n_group_(n_group) {
    if (n_group < 1)
      throw ArgumentError("group size must be >= 1");
    const bool conv_axis = is_conv_axis(axis);
    if (conv_axis != (shape.kind == LayerKind::Conv))
      throw ArgumentError("axis '" + std::string(to_string(axis)) + "' does not apply to " +
                          (shape.kind == LayerKind::Conv ? "conv" : "fc") + " layers");
    const std::size_t kk = shape.kernel_area();
    switch (axis) {
    case Axis::Channel:
      fibers_ = shape.m * kk, extent_ = shape.c, stride_ = kk;
      inner_ = kk, outer_step_ = shape.c * kk, inner_step_ = 1;
      break;
    case Axis::Filter:
      fibers_ = shape.c * kk, extent_ = shape.m, stride_ = shape.c * kk;
      inner_ = kk, outer_step_ = kk, inner_step_ = 1;
      break;
    case Axis::Spatial:
      fibers_ = shape.m * shape.c, extent_ = kk, stride_ = 1;
      inner_ = 1, outer_step_ = kk, inner_step_ = 0;
      break;
    case Axis::Row:
      fibers_ = shape.m, extent_ = shape.c, stride_ = 1;
      inner_ = 1, outer_step_ = shape.c, inner_step_ = 0;
      break;
    case Axis::Column:
      fibers_ = shape.c, extent_ = shape.m, stride_ = shape.c;
      inner_ = shape.c, outer_step_ = 0, inner_step_ = 1;
      break;
    }
    per_fiber_ = (extent_ + n_group_ - 1) / n_group_;
  }

  Axis axis() const { return axis_; }
  const LayerShape& shape() const { return shape_; }
  std::size_t n_group() const { return n_group_; }
  std::size_t fiber_count() const { return fibers_; }
  std::size_t extent() const { return extent_; }
  std::size_t element_stride() const { return stride_; }
  std::size_t groups_per_fiber() const { return per_fiber_; }
  std::size_t size() const { return fibers_ * per_fiber_; }

  std::size_t fiber_base(std::size_t f) const { return (f / inner_) * outer_step_ + (f % inner_) * inner_step_; }

  /// Linear weight index of position `t` along fiber `f`.
  std::size_t element(std::size_t f, std::size_t t) const { return fiber_base(f) + t * stride_; }

  /// Virtual slots appended to each fiber.
  std::size_t virtual_per_fiber() const { return (n_group_ - extent_ % n_group_) % n_group_; }

  GroupView group(std::size_t g) const {
    const std::size_t f = g / per_fiber_;
    const std::size_t b = g % per_fiber_;
    const std::size_t offset = b * n_group_;
    const std::size_t real = std::min(n_group_, extent_ - offset);
    return {element(f, offset), stride_, real, n_group_ - real, f, offset};
  }

  template <class Fn>
  void for_each(Fn&& fn) const {
    const std::size_t n = size();
    for (std::size_t g = 0; g < n; ++g)
      fn(g, group(g));
  }

private:
  LayerShape shape_;
  Axis axis_;
  std::size_t n_group_;
  std::size_t fibers_ = 0, extent_ = 0, stride_ = 1;
  std::size_t inner_ = 1, outer_step_ = 0, inner_step_ = 0;
  std::size_t per_fiber_ = 0;
};

inline GroupDirectory enumerate_groups(const Layer& layer, Axis axis, std::size_t n_group) {
  if (n_group < 2)
    throw ArgumentError("n_group must be >= 2");
  return GroupDirectory(layer.shape(), axis, n_group);
}

} // namespace aap

#endif
