#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "leca/errors.hpp"
#include "leca/extortion.hpp"
#include "leca/market.hpp"

namespace leca {

/// How the algorithm's first-round quantity is chosen; there is no x_0.
enum class FirstRoundRule {
  respond_to_first,  ///< y_1 answers x_1 (server computes y after receiving x)
  fixed,             ///< y_1 = SessionConfig::first_y
};

struct SessionConfig {
  MarketParams market{};
  LecaConfig leca{};
  int rounds = 600;
  int decimals = 2;  ///< display/rounding precision of quantities
  FirstRoundRule first_round = FirstRoundRule::respond_to_first;
  double first_y = 3.0;

  void validate() const {
    market.validate();
    leca.validate();
    if (rounds < 1) throw ValidationError("rounds must be >= 1");
    if (decimals < 0 || decimals > 6) throw ValidationError("decimals must be in [0, 6]");
    if (first_round == FirstRoundRule::fixed && !market.y_bounds.contains(first_y))
      throw ValidationError("first_y outside algorithm bounds");
  }
};

/// One iteration as shown to the rival: quantities at display precision and
/// profits computed from those displayed quantities.
struct RoundRecord {
  int round = 0;
  double x = 0.0;
  double y = 0.0;
  double s_x = 0.0;
  double s_y = 0.0;
  double cum_x = 0.0;
  bool clamped = false;  ///< the raw response was clamped into the algorithm's interval

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

inline double pow10(int decimals) {
  double s = 1.0;
  for (int i = 0; i < decimals; ++i) s *= 10.0;
  return s;
}

/// Half-up rounding to `decimals` places. The 1e-9 slack in scaled units
/// absorbs binary representation error so that e.g. 0.285 rounds to 0.29.
inline double round_half_up(double v, int decimals) {
  const double scale = pow10(decimals);
  return std::floor(v * scale + 0.5 + 1e-9) / scale;
}

/// Fixed-point text with exactly `decimals` fractional digits.
inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace leca
