#pragma once

#include "papp/precoding.hpp"
#include "papp/random.hpp"

#include <cmath>

namespace papp::bench {

inline ChannelMatrix rayleigh(Rng& rng, int n_tx, int n_users) {
  ChannelMatrix h(n_tx, n_users);
  for (Eigen::Index c = 0; c < n_users; ++c)
    for (Eigen::Index r = 0; r < n_tx; ++r) h(r, c) = cdouble(rng.normal(), rng.normal()) / std::sqrt(2.0);
  return h;
}

}  // namespace papp::bench
