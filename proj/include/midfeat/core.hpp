#pragma once

// Shared vocabulary types: alphabet, boxes, matrices, errors, RNG.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace midfeat {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rng = std::mt19937_64;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates an operation's precondition (bad argument, unknown label, ...).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  DimensionMismatch(std::string_view what, long expected, long got)
      : Error(std::string(what) + ": expected dimension " + std::to_string(expected) +
              ", got " + std::to_string(got)) {}
};

/// Malformed file, manifest, or archive.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Evaluation protocol violated (e.g. lexicon missing the ground truth).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Character alphabet: 'A'..'Z' -> 0..25, 'a'..'z' -> 26..51, '0'..'9' -> 52..61.
inline constexpr int kAlphabetSize = 62;

constexpr std::optional<int> char_index(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return 26 + (c - 'a');
  if (c >= '0' && c <= '9') return 52 + (c - '0');
  return std::nullopt;
}

constexpr char index_char(int i) {
  if (i < 26) return static_cast<char>('A' + i);
  if (i < 52) return static_cast<char>('a' + (i - 26));
  return static_cast<char>('0' + (i - 52));
}

inline bool in_alphabet(std::string_view text) {
  return std::all_of(text.begin(), text.end(), [](char c) { return char_index(c).has_value(); });
}

inline std::string fold_case(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

/// Axis-aligned box in pixel coordinates; covers the half-open span [x, x+w) x [y, y+h).
struct BBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  constexpr long area() const { return static_cast<long>(w) * h; }
  constexpr int right() const { return x + w; }
  constexpr int bottom() const { return y + h; }
  constexpr double center_x() const { return x + 0.5 * w; }
  constexpr double center_y() const { return y + 0.5 * h; }
  constexpr bool inside(int width, int height) const {
    return w > 0 && h > 0 && x >= 0 && y >= 0 && right() <= width && bottom() <= height;
  }
  friend constexpr bool operator==(const BBox&, const BBox&) = default;
};

struct Point {
  double x = 0;
  double y = 0;
  friend constexpr bool operator==(const Point&, const Point&) = default;
};

/// Round half away from zero.
inline long round_half_away(double v) { return std::lround(v); }

/// In-place l2 normalization. The zero vector stays zero.
template <typename Derived>
void l2_normalize_inplace(Eigen::MatrixBase<Derived>& v) {
  const double n = v.norm();
  if (n > 0) v /= n;
}

inline Vector l2_normalized(const Vector& v) {
  Vector out = v;
  l2_normalize_inplace(out);
  return out;
}

/// Round every entry to the nearest float. Used to make in-memory models
/// identical to what the 32-bit archive stores.
template <typename Derived>
void quantize_f32(Eigen::PlainObjectBase<Derived>& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
  }
}

/// Parse "16,24,32" style integer lists.
inline std::vector<int> parse_int_list(std::string_view s) {
  std::vector<int> out;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    try {
      out.push_back(std::stoi(cur));
    } catch (const std::exception&) {
      throw InvalidInput("not an integer list: '" + std::string(s) + "'");
    }
    cur.clear();
  };
  for (char c : s) {
    if (c == ',' || c == ' ') {
      flush();
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return out;
}

}  // namespace midfeat
