#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace pvtadp {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

// Throws ShapeError when any dimension is zero.
void check_shape(const Shape& shape);

// Numpy-style one-sided broadcast: `from`, left-padded with ones, must match `to`
// on every axis or be 1 there.
bool broadcastable_to(const Shape& from, const Shape& to);

}  // namespace pvtadp
