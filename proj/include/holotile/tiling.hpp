#pragma once

// Pixel-unshuffle / pixel-shuffle between a full-definition grid and r^2
// sub-grids. Channel c of a stack holds the samples at row offset c / r and
// column offset c % r:
//
//   tile[c](i, j) = x(i * r + c / r, j * r + c % r)
//
// Every module (including the tensor variants in autodiff) uses this layout.

#include <array>
#include <vector>

#include "holotile/grid.hpp"

namespace holotile {

template <class T>
struct TileStack {
  int scale = 1;
  std::vector<Grid<T>> tiles;  // scale^2 tiles of identical shape

  int count() const noexcept { return static_cast<int>(tiles.size()); }
  int sub_height() const noexcept { return tiles.empty() ? 0 : tiles.front().height(); }
  int sub_width() const noexcept { return tiles.empty() ? 0 : tiles.front().width(); }
};

/// Throws DimensionError unless height and width are multiples of r.
template <class T>
TileStack<T> pixel_unshuffle(const Grid<T>& x, int r);

/// Inverse of pixel_unshuffle. Throws DimensionError if tiles.count() != r^2
/// or the tiles disagree in shape.
template <class T>
Grid<T> pixel_shuffle(const TileStack<T>& tiles, int r);

/// Splits 16 tiles (scale 4) into four scale-2 stacks. Group g gathers the
/// offsets (a, b) with (a % 2, b % 2) == (g / 2, g % 2), placed at in-group
/// channel (a / 2) * 2 + b / 2. Shuffling each group by 2 and then shuffling
/// the four results by 2 reproduces the scale-4 shuffle.
template <class T>
std::array<TileStack<T>, 4> group_tiles(const TileStack<T>& tiles);

/// Channel indices (into the 16-tile stack) of group g, in in-group order.
std::array<int, 4> group_members(int group);

}  // namespace holotile
