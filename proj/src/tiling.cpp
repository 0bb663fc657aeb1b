#include "holotile/tiling.hpp"

#include <complex>
#include <string>

namespace holotile {

template <class T>
TileStack<T> pixel_unshuffle(const Grid<T>& x, int r) {
  if (r < 1) throw DimensionError("pixel_unshuffle: scale must be >= 1");
  if (x.height() % r != 0 || x.width() % r != 0)
    throw DimensionError("pixel_unshuffle: " + std::to_string(x.height()) + "x" +
                         std::to_string(x.width()) + " not divisible by " + std::to_string(r));
  const int sh = x.height() / r, sw = x.width() / r;
  TileStack<T> out;
  out.scale = r;
  out.tiles.reserve(static_cast<std::size_t>(r) * r);
  for (int c = 0; c < r * r; ++c) {
    const int a = c / r, b = c % r;
    Grid<T> tile(sh, sw);
    for (int i = 0; i < sh; ++i)
      for (int j = 0; j < sw; ++j) tile(i, j) = x(i * r + a, j * r + b);
    out.tiles.push_back(std::move(tile));
  }
  return out;
}

template <class T>
Grid<T> pixel_shuffle(const TileStack<T>& tiles, int r) {
  if (r < 1 || tiles.count() != r * r)
    throw DimensionError("pixel_shuffle: expected " + std::to_string(r * r) + " tiles, got " +
                         std::to_string(tiles.count()));
  const int sh = tiles.sub_height(), sw = tiles.sub_width();
  for (const auto& t : tiles.tiles)
    if (t.height() != sh || t.width() != sw)
      throw DimensionError("pixel_shuffle: tiles differ in shape");
  Grid<T> out(sh * r, sw * r);
  for (int c = 0; c < r * r; ++c) {
    const int a = c / r, b = c % r;
    const auto& tile = tiles.tiles[c];
    for (int i = 0; i < sh; ++i)
      for (int j = 0; j < sw; ++j) out(i * r + a, j * r + b) = tile(i, j);
  }
  return out;
}

std::array<int, 4> group_members(int group) {
  if (group < 0 || group > 3) throw DimensionError("group index must be in [0, 4)");
  const int ga = group / 2, gb = group % 2;
  std::array<int, 4> members{};
  for (int k = 0; k < 4; ++k) {
    // in-group offset (k / 2, k % 2) -> full offset (2 * (k / 2) + ga, 2 * (k % 2) + gb)
    const int a = 2 * (k / 2) + ga;
    const int b = 2 * (k % 2) + gb;
    members[k] = a * 4 + b;
  }
  return members;
}

template <class T>
std::array<TileStack<T>, 4> group_tiles(const TileStack<T>& tiles) {
  if (tiles.count() != 16)
    throw DimensionError("group_tiles: expected 16 tiles, got " + std::to_string(tiles.count()));
  std::array<TileStack<T>, 4> groups;
  for (int g = 0; g < 4; ++g) {
    groups[g].scale = 2;
    for (int idx : group_members(g)) groups[g].tiles.push_back(tiles.tiles[idx]);
  }
  return groups;
}

#define HOLOTILE_INSTANTIATE(T)                                      \
  template TileStack<T> pixel_unshuffle(const Grid<T>&, int);       \
  template Grid<T> pixel_shuffle(const TileStack<T>&, int);         \
  template std::array<TileStack<T>, 4> group_tiles(const TileStack<T>&);

HOLOTILE_INSTANTIATE(float)
HOLOTILE_INSTANTIATE(double)
HOLOTILE_INSTANTIATE(std::complex<float>)
HOLOTILE_INSTANTIATE(std::complex<double>)
HOLOTILE_INSTANTIATE(int)
#undef HOLOTILE_INSTANTIATE

}  // namespace holotile
