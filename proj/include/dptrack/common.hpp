#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace dptrack {

// Error categories surfaced by the CLI with nonzero exit codes.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParamError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Missing stage input; remembers which stage produces the file.
struct MissingArtifactError : std::runtime_error {
  MissingArtifactError(const std::string& file, const std::string& producing_stage)
      : std::runtime_error("missing artifact '" + file + "' (produced by stage '" +
                           producing_stage + "')"),
        file(file),
        producing_stage(producing_stage) {}
  std::string file;
  std::string producing_stage;
};

template <typename T>
struct Vec2T {
  T x = 0;
  T y = 0;

  Vec2T() = default;
  Vec2T(T x, T y) : x(x), y(y) {}

  Vec2T operator+(const Vec2T& o) const { return {x + o.x, y + o.y}; }
  Vec2T operator-(const Vec2T& o) const { return {x - o.x, y - o.y}; }
  Vec2T operator*(T s) const { return {x * s, y * s}; }
  bool operator==(const Vec2T& o) const { return x == o.x && y == o.y; }

  T norm() const { return std::sqrt(x * x + y * y); }
};

using Vec2 = Vec2T<double>;
using Vec2f = Vec2T<float>;

inline double euclidean(const Vec2& a, const Vec2& b) { return (a - b).norm(); }

}  // namespace dptrack
