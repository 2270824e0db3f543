#pragma once

// Annotated word images: synthetic rendering, height normalization, and the
// JSON-lines manifest format.

#include "midfeat/font.hpp"
#include "midfeat/image.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>

namespace midfeat {

struct CharAnnotation {
  char label = 'A';
  BBox bbox;
  friend bool operator==(const CharAnnotation&, const CharAnnotation&) = default;
};

struct WordImage {
  std::string id;
  GrayImage image;
  std::string text;
  friend bool operator==(const WordImage&, const WordImage&) = default;
};

enum class Split { kLearn, kTrain, kTest };

inline std::string_view split_name(Split s) {
  switch (s) {
    case Split::kLearn: return "learn";
    case Split::kTrain: return "train";
    case Split::kTest: return "test";
  }
  return "test";
}

inline Split parse_split(std::string_view s) {
  if (s == "learn") return Split::kLearn;
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw FormatError("unknown split tag '" + std::string(s) + "'");
}

struct CorpusEntry {
  WordImage word;
  std::vector<CharAnnotation> chars;  // unordered
  Split split = Split::kTrain;
  friend bool operator==(const CorpusEntry&, const CorpusEntry&) = default;
};

struct Corpus {
  std::vector<CorpusEntry> entries;

  size_t size() const { return entries.size(); }

  std::vector<const CorpusEntry*> subset(Split s) const {
    std::vector<const CorpusEntry*> out;
    for (const auto& e : entries)
      if (e.split == s) out.push_back(&e);
    return out;
  }

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

/// Checks ids are unique, labels are in the alphabet, and boxes lie inside their image.
inline void validate(const Corpus& corpus) {
  std::set<std::string> ids;
  for (const auto& e : corpus.entries) {
    if (!ids.insert(e.word.id).second) throw FormatError("duplicate image id '" + e.word.id + "'");
    if (e.word.image.empty()) throw FormatError(e.word.id + ": empty image");
    for (const auto& c : e.chars) {
      if (!char_index(c.label)) throw InvalidInput(e.word.id + ": label outside the alphabet");
      if (!c.bbox.inside(e.word.image.width(), e.word.image.height())) {
        throw InvalidInput(e.word.id + ": character box outside the image");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Rendering

struct RenderStyle {
  int height = 120;
  double cap_height = 0.5;   // em size as a fraction of the height
  double cap_line = 0.14;    // cap line position as a fraction of the height
  double stroke = 0.11;      // stroke width, em
  double spacing = 0.16;     // inter-glyph gap, em
  double margin = 0.25;      // horizontal margin, em
  bool jitter = true;
  double scale_jitter = 0.10;      // per-character relative scale
  double baseline_jitter = 2.0;    // per-character, pixels
  double shear_jitter = 0.08;      // per-character horizontal shear
  double stroke_jitter = 0.20;     // per-word relative stroke width
  double spacing_jitter = 0.30;    // per-word relative spacing
  double noise_max = 0.10;         // additive Gaussian noise sigma drawn from [0, noise_max]
  double slant_jitter = 0.35;      // per-word horizontal shear
  double stretch_jitter = 0.30;    // per-word relative horizontal scale
  double size_jitter = 0.15;       // per-word relative em size
  double wobble = 0.05;            // per-vertex skeleton displacement, em
  double blur_max = 1.5;           // Gaussian blur sigma drawn from [0, blur_max]
  int clutter_max = 4;             // unannotated distractor strokes, count drawn from [0, clutter_max]
  double gradient_max = 0.25;      // background illumination ramp amplitude
};

namespace detail {

inline double segment_distance(Point p, Point a, Point b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace detail

/// Renders `text` with one tight box per glyph. Deterministic for a fixed
/// generator state.
inline std::pair<WordImage, std::vector<CharAnnotation>> render_word(std::string_view text,
                                                                     const RenderStyle& style, Rng& rng) {
  if (text.empty()) throw InvalidInput("cannot render an empty string");
  for (char c : text) {
    if (!char_index(c)) throw InvalidInput(std::string("character outside the alphabet: '") + c + "'");
  }
  if (style.height < 16) throw InvalidInput("render height too small");

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto sym = [&](double amp) { return style.jitter ? amp * (2.0 * unit(rng) - 1.0) : 0.0; };

  const double H = style.height;
  const double em = style.cap_height * H * (1.0 + sym(style.size_jitter));
  const double stretch = 1.0 + sym(style.stretch_jitter);
  const double slant = sym(style.slant_jitter);
  const double stroke_px = style.stroke * em * (1.0 + sym(style.stroke_jitter));
  const double spacing_px = style.spacing * em * (1.0 + sym(style.spacing_jitter));
  const double margin_px = style.margin * em * (1.0 + sym(0.5));
  const double baseline = style.cap_line * H + style.cap_height * H + sym(0.06 * H);

  struct Placed {
    char label;
    std::vector<std::pair<Point, Point>> segments;
    double min_x, max_x, min_y, max_y;
  };
  std::vector<Placed> placed;
  double pen = 0;
  double min_x = 1e9;
  for (char c : text) {
    const auto& g = font::glyph(c);
    const double s = 1.0 + sym(style.scale_jitter);
    const double shift = sym(style.baseline_jitter);
    const double shear = slant + sym(style.shear_jitter);
    Placed p{c, {}, 1e9, -1e9, 1e9, -1e9};
    auto map = [&](Point q) {
      q.x += sym(style.wobble);
      q.y += sym(style.wobble);
      const double rise = (1.0 - q.y) * em * s;  // height above the baseline
      return Point{pen + q.x * em * s * stretch + shear * rise, baseline + shift - rise};
    };
    for (const auto& stroke : g.strokes) {
      std::vector<Point> pts;
      for (const auto& q : stroke) pts.push_back(map(q));
      for (size_t i = 0; i + 1 < pts.size(); ++i) {
        const Point a = pts[i], b = pts[i + 1];
        p.segments.emplace_back(a, b);
        p.min_x = std::min({p.min_x, a.x, b.x});
        p.max_x = std::max({p.max_x, a.x, b.x});
        p.min_y = std::min({p.min_y, a.y, b.y});
        p.max_y = std::max({p.max_y, a.y, b.y});
      }
    }
    min_x = std::min(min_x, p.min_x);
    placed.push_back(std::move(p));
    pen += g.width * em * s * stretch + stroke_px + spacing_px;
  }
  // Shift so the leftmost ink starts after the margin.
  const double dx = margin_px + stroke_px - min_x;
  for (auto& p : placed) {
    for (auto& [a, b] : p.segments) {
      a.x += dx;
      b.x += dx;
    }
    p.min_x += dx;
    p.max_x += dx;
  }
  double right_edge = 0;
  for (const auto& p : placed) right_edge = std::max(right_edge, p.max_x + stroke_px);
  const int width = static_cast<int>(std::ceil(right_edge + margin_px));

  // Coverage: clamp(r - d + 1/2, 0, 1) for pixel-center distance d to the stroke skeleton.
  const double r = 0.5 * stroke_px;
  std::vector<double> ink(static_cast<size_t>(width) * style.height, 0.0);
  std::vector<CharAnnotation> chars;
  chars.reserve(placed.size());
  auto paint = [&](const std::vector<std::pair<Point, Point>>& segs, double radius, double lo_x, double hi_x,
                   double lo_y, double hi_y, double strength, int* box) {
    const int x0 = std::max(0, static_cast<int>(std::floor(lo_x - radius - 1)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(hi_x + radius + 1)));
    const int y0 = std::max(0, static_cast<int>(std::floor(lo_y - radius - 1)));
    const int y1 = std::min(style.height - 1, static_cast<int>(std::ceil(hi_y + radius + 1)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Point q{x + 0.5, y + 0.5};
        double d = 1e9;
        for (const auto& [a, b] : segs) d = std::min(d, detail::segment_distance(q, a, b));
        const double cov = strength * std::clamp(radius - d + 0.5, 0.0, 1.0);
        if (cov <= 0) continue;
        double& dst = ink[static_cast<size_t>(y) * width + x];
        dst = std::max(dst, cov);
        if (box) {
          box[0] = std::min(box[0], x);
          box[1] = std::max(box[1], x);
          box[2] = std::min(box[2], y);
          box[3] = std::max(box[3], y);
        }
      }
    }
  };
  for (const auto& p : placed) {
    int box[4] = {width, -1, style.height, -1};
    paint(p.segments, r, p.min_x, p.max_x, p.min_y, p.max_y, 1.0, box);
    if (box[1] < 0) throw Error("glyph rasterized to nothing");
    chars.push_back({p.label, BBox{box[0], box[2], box[1] - box[0] + 1, box[3] - box[2] + 1}});
  }
  if (style.jitter && style.clutter_max > 0) {
    // Distractor strokes: faint, thin, anywhere in the image.
    std::uniform_int_distribution<int> count(0, style.clutter_max);
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
      const Point a{unit(rng) * width, unit(rng) * style.height};
      const double len = (0.3 + 0.7 * unit(rng)) * em, ang = unit(rng) * std::numbers::pi;
      const Point b{a.x + len * std::cos(ang), a.y + len * std::sin(ang)};
      paint({{a, b}}, r * (0.4 + 0.4 * unit(rng)), std::min(a.x, b.x), std::max(a.x, b.x), std::min(a.y, b.y),
            std::max(a.y, b.y), 0.3 + 0.4 * unit(rng), nullptr);
    }
  }

  double bg = 0.85, fg = 0.15, sigma = 0.0, blur = 0.0, ramp = 0.0, ramp_dir = 0.0;
  if (style.jitter) {
    bg = 0.65 + 0.30 * unit(rng);
    fg = 0.05 + 0.30 * unit(rng);
    sigma = style.noise_max * unit(rng);
    blur = style.blur_max * unit(rng);
    ramp = style.gradient_max * unit(rng);
    ramp_dir = 2.0 * std::numbers::pi * unit(rng);
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  GrayImage img(width, style.height);
  const double cx = std::cos(ramp_dir), cy = std::sin(ramp_dir);
  const double diag = std::hypot(static_cast<double>(width), H);
  for (int y = 0; y < style.height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double shade = ramp * (((x - 0.5 * width) * cx + (y - 0.5 * H) * cy) / diag);
      img(x, y) = bg + shade + (fg - bg) * ink[static_cast<size_t>(y) * width + x];
    }
  }
  img = gaussian_blur(img, blur);
  for (int y = 0; y < style.height; ++y) {
    for (int x = 0; x < width; ++x) {
      double v = img(x, y);
      if (sigma > 0) v += sigma * noise(rng);
      img(x, y) = std::clamp(v, 0.0, 1.0);
    }
  }
  img.quantize_8bit();
  return {WordImage{"", std::move(img), std::string(text)}, std::move(chars)};
}

struct SynthOptions {
  int per_word = 1;
  int learn_per_word = 0;  // first instances of each word go to learn
  int train_per_word = 0;  // then train; the rest are test
  RenderStyle style;
};

/// Renders every word `per_word` times. Ids are "<word index>_<word>_<instance>".
inline Corpus synth_corpus(const std::vector<std::string>& wordlist, const SynthOptions& opts, Rng& rng) {
  if (wordlist.empty()) throw InvalidInput("empty word list");
  if (opts.per_word < 1) throw InvalidInput("per_word must be >= 1");
  Corpus corpus;
  corpus.entries.reserve(wordlist.size() * opts.per_word);
  for (size_t w = 0; w < wordlist.size(); ++w) {
    for (int k = 0; k < opts.per_word; ++k) {
      auto [word, chars] = render_word(wordlist[w], opts.style, rng);
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%04zu_", w);
      word.id = buf + wordlist[w] + "_" + std::to_string(k);
      Split split = Split::kTest;
      if (k < opts.learn_per_word) {
        split = Split::kLearn;
      } else if (k < opts.learn_per_word + opts.train_per_word) {
        split = Split::kTrain;
      }
      corpus.entries.push_back({std::move(word), std::move(chars), split});
    }
  }
  return corpus;
}

/// Rescales to `target` rows; the width and every box scale by the same factor.
inline CorpusEntry normalize_height(const CorpusEntry& entry, int target = 120) {
  if (target <= 0) throw InvalidInput("target height must be positive");
  const auto& src = entry.word.image;
  if (src.empty()) throw InvalidInput(entry.word.id + ": empty image");
  if (src.height() == target) return entry;
  const double s = static_cast<double>(target) / src.height();
  const int new_w = std::max(1, static_cast<int>(round_half_away(src.width() * s)));
  CorpusEntry out = entry;
  out.word.image = resize_bilinear(src, new_w, target);
  out.word.image.quantize_8bit();
  for (auto& c : out.chars) {
    const int x0 = std::clamp(static_cast<int>(round_half_away(c.bbox.x * s)), 0, new_w - 1);
    const int y0 = std::clamp(static_cast<int>(round_half_away(c.bbox.y * s)), 0, target - 1);
    const int x1 = std::clamp(static_cast<int>(round_half_away(c.bbox.right() * s)), x0 + 1, new_w);
    const int y1 = std::clamp(static_cast<int>(round_half_away(c.bbox.bottom() * s)), y0 + 1, target);
    c.bbox = BBox{x0, y0, x1 - x0, y1 - y0};
  }
  return out;
}

inline Corpus normalize_height(const Corpus& corpus, int target = 120) {
  Corpus out;
  out.entries.reserve(corpus.size());
  for (const auto& e : corpus.entries) out.entries.push_back(normalize_height(e, target));
  return out;
}

// ---------------------------------------------------------------------------
// Manifest I/O

inline constexpr const char* kManifestName = "manifest.jsonl";

inline void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  std::ofstream out(dir / kManifestName);
  if (!out) throw FormatError("cannot write manifest in " + dir.string());
  for (const auto& e : corpus.entries) {
    const std::string file = "images/" + e.word.id + ".pgm";
    write_pgm(e.word.image, dir / file);
    nlohmann::json rec;
    rec["id"] = e.word.id;
    rec["text"] = e.word.text;
    rec["file"] = file;
    rec["split"] = split_name(e.split);
    rec["chars"] = nlohmann::json::array();
    for (const auto& c : e.chars) {
      rec["chars"].push_back(
          {{"label", std::string(1, c.label)}, {"x", c.bbox.x}, {"y", c.bbox.y}, {"w", c.bbox.w}, {"h", c.bbox.h}});
    }
    out << rec.dump() << "\n";
  }
}

inline Corpus load_corpus(const std::filesystem::path& dir) {
  std::ifstream in(dir / kManifestName);
  if (!in) throw FormatError("cannot open " + (dir / kManifestName).string());
  Corpus corpus;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError("manifest line " + std::to_string(lineno) + ": " + ex.what());
    }
    CorpusEntry e;
    try {
      e.word.id = rec.at("id").get<std::string>();
      e.word.text = rec.at("text").get<std::string>();
      const auto file = rec.at("file").get<std::string>();
      if (rec.contains("split")) e.split = parse_split(rec["split"].get<std::string>());
      const auto path = dir / file;
      if (!std::filesystem::exists(path)) {
        throw FormatError("image '" + e.word.id + "': missing file " + path.string());
      }
      e.word.image = read_image(path);
      for (const auto& c : rec.at("chars")) {
        const auto label = c.at("label").get<std::string>();
        if (label.size() != 1 || !char_index(label[0])) {
          throw InvalidInput("image '" + e.word.id + "': label '" + label + "' outside the alphabet");
        }
        e.chars.push_back({label[0], BBox{c.at("x").get<int>(), c.at("y").get<int>(), c.at("w").get<int>(),
                                          c.at("h").get<int>()}});
      }
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError("manifest line " + std::to_string(lineno) + ": " + ex.what());
    }
    corpus.entries.push_back(std::move(e));
  }
  validate(corpus);
  return corpus;
}

/// FNV-1a over ids, transcriptions, splits and 8-bit pixels.
inline std::uint64_t corpus_hash(const Corpus& corpus) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint8_t b) {
    h ^= b;
    h *= 1099511628211ULL;
  };
  auto mix_str = [&](std::string_view s) {
    for (char c : s) mix(static_cast<std::uint8_t>(c));
    mix(0);
  };
  for (const auto& e : corpus.entries) {
    mix_str(e.word.id);
    mix_str(e.word.text);
    mix(static_cast<std::uint8_t>(e.split));
    for (double p : e.word.image.pixels()) mix(GrayImage::to_byte(p));
  }
  return h;
}

/// Built-in vocabulary for synthetic experiments; mixed case forms, 3-6 characters.
inline const std::vector<std::string>& default_wordlist() {
  static const std::vector<std::string> words = {
      "SUN",   "open",  "Hotel", "BANK",  "cafe",  "STOP",  "Park",  "EXIT",  "road",  "Taxi",
      "BAR",   "shop",  "Pizza", "FOOD",  "milk",  "City",  "LOVE",  "kids",  "Wine",  "GOLF",
      "jazz",  "Quick", "ZOO",   "fresh", "Bike",  "HOME",  "music", "Vote",  "MAX",   "yoga",
      "Deli",  "WASH",  "hair",  "Jump",  "CLUB",  "vine",  "Gym",   "PARTY", "quiz",  "Boxer",
      "2014",  "shoe",  "Mall",  "FIRE",  "lamp",  "Royal", "NEWS",  "bread", "Fox",   "WEST",
      "night", "Zone",  "KING",  "tea",   "Vapor", "SALE",  "bus",   "Jack",  "EAST",  "303",
      "dog",   "Oven",  "MOTEL", "pub",   "Hat",   "BEER",  "sky",   "Fix",   "LUCKY", "mix",
  };
  return words;
}

}  // namespace midfeat
