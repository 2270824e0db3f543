#pragma once

// Programmatic stroke font covering the 62-character alphabet.
//
// Glyph coordinates are in em units with y pointing down: cap line at 0,
// x-height line at 0.4, baseline at 1.0, descender line at 1.3.

#include "midfeat/core.hpp"

#include <array>
#include <numbers>

namespace midfeat::font {

using Polyline = std::vector<Point>;

struct Glyph {
  double width = 0.5;  // advance box width, before spacing
  std::vector<Polyline> strokes;
};

namespace detail {

// Elliptical arc from a0 to a1 degrees; angles are counter-clockwise as seen
// on screen (90 = up).
inline Polyline arc(double cx, double cy, double rx, double ry, double a0, double a1) {
  const int n = std::max(4, static_cast<int>(std::abs(a1 - a0) / 12.0));
  Polyline pts;
  pts.reserve(n + 1);
  for (int i = 0; i <= n; ++i) {
    const double a = (a0 + (a1 - a0) * i / n) * std::numbers::pi / 180.0;
    pts.push_back({cx + rx * std::cos(a), cy - ry * std::sin(a)});
  }
  return pts;
}

inline Polyline line(std::initializer_list<Point> pts) { return Polyline(pts); }

inline Polyline join(Polyline a, const Polyline& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

inline Glyph make_glyph(char c) {
  using P = Point;
  switch (c) {
    // Capitals.
    case 'A': return {0.70, {line({P{0, 1}, {0.35, 0}, {0.70, 1}}), line({P{0.12, 0.65}, {0.58, 0.65}})}};
    case 'B':
      return {0.62,
              {line({P{0, 0}, {0, 1}}), join(join(line({P{0, 0}, {0.40, 0}}), arc(0.40, 0.25, 0.20, 0.25, 90, -90)), line({P{0, 0.5}})),
               join(join(line({P{0, 0.5}, {0.42, 0.5}}), arc(0.42, 0.75, 0.20, 0.25, 90, -90)), line({P{0, 1}}))}};
    case 'C': return {0.75, {arc(0.40, 0.5, 0.40, 0.5, 45, 315)}};
    case 'D':
      return {0.70, {line({P{0, 0}, {0, 1}}), join(join(line({P{0, 0}, {0.30, 0}}), arc(0.30, 0.5, 0.40, 0.5, 90, -90)), line({P{0, 1}}))}};
    case 'E': return {0.60, {line({P{0.6, 0}, {0, 0}, {0, 1}, {0.6, 1}}), line({P{0, 0.5}, {0.5, 0.5}})}};
    case 'F': return {0.60, {line({P{0.6, 0}, {0, 0}, {0, 1}}), line({P{0, 0.5}, {0.5, 0.5}})}};
    case 'G': return {0.80, {join(arc(0.40, 0.5, 0.40, 0.5, 45, 360), line({P{0.45, 0.5}}))}};
    case 'H': return {0.65, {line({P{0, 0}, {0, 1}}), line({P{0.65, 0}, {0.65, 1}}), line({P{0, 0.5}, {0.65, 0.5}})}};
    case 'I': return {0.30, {line({P{0.15, 0}, {0.15, 1}}), line({P{0, 0}, {0.3, 0}}), line({P{0, 1}, {0.3, 1}})}};
    case 'J': return {0.50, {join(line({P{0.5, 0}, {0.5, 0.75}}), arc(0.25, 0.75, 0.25, 0.25, 0, -180))}};
    case 'K': return {0.60, {line({P{0, 0}, {0, 1}}), line({P{0.6, 0}, {0, 0.6}}), line({P{0.2, 0.45}, {0.6, 1}})}};
    case 'L': return {0.55, {line({P{0, 0}, {0, 1}, {0.55, 1}})}};
    case 'M': return {0.80, {line({P{0, 1}, {0, 0}, {0.4, 0.6}, {0.8, 0}, {0.8, 1}})}};
    case 'N': return {0.65, {line({P{0, 1}, {0, 0}, {0.65, 1}, {0.65, 0}})}};
    case 'O': return {0.80, {arc(0.40, 0.5, 0.40, 0.5, 0, 360)}};
    case 'P':
      return {0.62, {line({P{0, 1}, {0, 0}}), join(join(line({P{0, 0}, {0.40, 0}}), arc(0.40, 0.27, 0.22, 0.27, 90, -90)), line({P{0, 0.54}}))}};
    case 'Q': return {0.85, {arc(0.40, 0.5, 0.40, 0.5, 0, 360), line({P{0.5, 0.75}, {0.85, 1.05}})}};
    case 'R':
      return {0.62,
              {line({P{0, 1}, {0, 0}}), join(join(line({P{0, 0}, {0.40, 0}}), arc(0.40, 0.27, 0.22, 0.27, 90, -90)), line({P{0, 0.54}})),
               line({P{0.30, 0.54}, {0.62, 1}})}};
    case 'S': return {0.60, {join(arc(0.30, 0.25, 0.30, 0.25, 30, 270), arc(0.30, 0.75, 0.30, 0.25, 90, -150))}};
    case 'T': return {0.70, {line({P{0, 0}, {0.7, 0}}), line({P{0.35, 0}, {0.35, 1}})}};
    case 'U': return {0.64, {join(join(line({P{0, 0}, {0, 0.7}}), arc(0.32, 0.7, 0.32, 0.3, 180, 360)), line({P{0.64, 0}}))}};
    case 'V': return {0.70, {line({P{0, 0}, {0.35, 1}, {0.7, 0}})}};
    case 'W': return {0.90, {line({P{0, 0}, {0.22, 1}, {0.45, 0.3}, {0.68, 1}, {0.9, 0}})}};
    case 'X': return {0.65, {line({P{0, 0}, {0.65, 1}}), line({P{0.65, 0}, {0, 1}})}};
    case 'Y': return {0.70, {line({P{0, 0}, {0.35, 0.5}, {0.7, 0}}), line({P{0.35, 0.5}, {0.35, 1}})}};
    case 'Z': return {0.65, {line({P{0, 0}, {0.65, 0}, {0, 1}, {0.65, 1}})}};
    // Lowercase.
    case 'a': return {0.50, {arc(0.25, 0.72, 0.25, 0.28, 0, 360), line({P{0.5, 0.4}, {0.5, 1}})}};
    case 'b': return {0.54, {line({P{0, 0}, {0, 1}}), arc(0.27, 0.7, 0.27, 0.3, 0, 360)}};
    case 'c': return {0.54, {arc(0.27, 0.7, 0.27, 0.3, 45, 315)}};
    case 'd': return {0.54, {line({P{0.54, 0}, {0.54, 1}}), arc(0.27, 0.7, 0.27, 0.3, 0, 360)}};
    case 'e': return {0.54, {join(line({P{0, 0.7}, {0.54, 0.7}}), arc(0.27, 0.7, 0.27, 0.3, 0, 315))}};
    case 'f': return {0.45, {join(arc(0.30, 0.15, 0.15, 0.15, 30, 180), line({P{0.15, 1}})), line({P{0, 0.42}, {0.35, 0.42}})}};
    case 'g':
      return {0.50, {arc(0.25, 0.68, 0.25, 0.28, 0, 360), join(line({P{0.5, 0.4}, {0.5, 1.1}}), arc(0.25, 1.1, 0.25, 0.2, 0, -180))}};
    case 'h': return {0.50, {line({P{0, 0}, {0, 1}}), join(arc(0.25, 0.62, 0.25, 0.22, 180, 0), line({P{0.5, 1}}))}};
    case 'i': return {0.10, {line({P{0.05, 0.4}, {0.05, 1}}), line({P{0.05, 0.18}, {0.05, 0.24}})}};
    case 'j': return {0.30, {join(line({P{0.3, 0.4}, {0.3, 1.15}}), arc(0.15, 1.15, 0.15, 0.15, 0, -150)), line({P{0.3, 0.18}, {0.3, 0.24}})}};
    case 'k': return {0.50, {line({P{0, 0}, {0, 1}}), line({P{0.45, 0.4}, {0, 0.75}}), line({P{0.15, 0.65}, {0.5, 1}})}};
    case 'l': return {0.15, {join(line({P{0, 0}, {0, 0.88}}), arc(0.12, 0.88, 0.12, 0.12, 180, 270))}};
    case 'm':
      return {0.80,
              {line({P{0, 0.4}, {0, 1}}), join(arc(0.2, 0.6, 0.2, 0.2, 180, 0), line({P{0.4, 1}})),
               join(arc(0.6, 0.6, 0.2, 0.2, 180, 0), line({P{0.8, 1}}))}};
    case 'n': return {0.50, {line({P{0, 0.4}, {0, 1}}), join(arc(0.25, 0.62, 0.25, 0.22, 180, 0), line({P{0.5, 1}}))}};
    case 'o': return {0.54, {arc(0.27, 0.7, 0.27, 0.3, 0, 360)}};
    case 'p': return {0.54, {line({P{0, 0.4}, {0, 1.3}}), arc(0.27, 0.7, 0.27, 0.3, 0, 360)}};
    case 'q': return {0.54, {line({P{0.54, 0.4}, {0.54, 1.3}}), arc(0.27, 0.7, 0.27, 0.3, 0, 360)}};
    case 'r': return {0.45, {line({P{0, 0.4}, {0, 1}}), arc(0.25, 0.65, 0.25, 0.25, 180, 70)}};
    case 's': return {0.40, {join(arc(0.2, 0.55, 0.2, 0.15, 30, 270), arc(0.2, 0.85, 0.2, 0.15, 90, -150))}};
    case 't': return {0.40, {line({P{0.15, 0.1}, {0.15, 1}, {0.4, 1}}), line({P{0, 0.42}, {0.35, 0.42}})}};
    case 'u': return {0.50, {join(join(line({P{0, 0.4}, {0, 0.78}}), arc(0.25, 0.78, 0.25, 0.22, 180, 360)), line({P{0.5, 0.4}})), line({P{0.5, 0.4}, {0.5, 1}})}};
    case 'v': return {0.50, {line({P{0, 0.4}, {0.25, 1}, {0.5, 0.4}})}};
    case 'w': return {0.70, {line({P{0, 0.4}, {0.18, 1}, {0.35, 0.55}, {0.52, 1}, {0.7, 0.4}})}};
    case 'x': return {0.50, {line({P{0, 0.4}, {0.5, 1}}), line({P{0.5, 0.4}, {0, 1}})}};
    case 'y': return {0.54, {line({P{0, 0.4}, {0.27, 0.95}}), line({P{0.54, 0.4}, {0.2, 1.3}})}};
    case 'z': return {0.50, {line({P{0, 0.4}, {0.5, 0.4}, {0, 1}, {0.5, 1}})}};
    // Digits.
    case '0': return {0.60, {arc(0.30, 0.5, 0.30, 0.5, 0, 360), line({P{0.12, 0.8}, {0.48, 0.2}})}};
    case '1': return {0.50, {line({P{0.1, 0.2}, {0.3, 0}, {0.3, 1}}), line({P{0.1, 1}, {0.5, 1}})}};
    case '2': return {0.60, {join(arc(0.30, 0.28, 0.30, 0.28, 150, -30), line({P{0, 1}, {0.6, 1}}))}};
    case '3': return {0.58, {join(arc(0.28, 0.25, 0.28, 0.25, 150, -90), arc(0.28, 0.75, 0.30, 0.25, 90, -150))}};
    case '4': return {0.62, {line({P{0.45, 1}, {0.45, 0}, {0, 0.7}, {0.62, 0.7}})}};
    case '5': return {0.60, {join(line({P{0.55, 0}, {0.08, 0}, {0.05, 0.45}, {0.3, 0.4}}), arc(0.3, 0.7, 0.3, 0.3, 90, -150))}};
    case '6': return {0.60, {line({P{0.5, 0}, {0.04, 0.62}}), arc(0.30, 0.72, 0.30, 0.28, 0, 360)}};
    case '7': return {0.60, {line({P{0, 0}, {0.6, 0}, {0.2, 1}})}};
    case '8': return {0.60, {arc(0.30, 0.25, 0.25, 0.25, 0, 360), arc(0.30, 0.75, 0.30, 0.25, 0, 360)}};
    case '9': return {0.60, {arc(0.30, 0.28, 0.30, 0.28, 0, 360), line({P{0.6, 0.3}, {0.2, 1}})}};
    default: throw InvalidInput(std::string("character outside the alphabet: '") + c + "'");
  }
}

}  // namespace detail

/// Glyph table indexed by alphabet position.
inline const Glyph& glyph(char c) {
  static const std::array<Glyph, kAlphabetSize> table = [] {
    std::array<Glyph, kAlphabetSize> t;
    for (int i = 0; i < kAlphabetSize; ++i) t[i] = detail::make_glyph(index_char(i));
    return t;
  }();
  const auto idx = char_index(c);
  if (!idx) throw InvalidInput(std::string("character outside the alphabet: '") + c + "'");
  return table[*idx];
}

}  // namespace midfeat::font
