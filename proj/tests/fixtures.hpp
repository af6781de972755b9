#pragma once

#include "fsample/graph.hpp"

namespace fixtures {

// Five nodes; row v lists the in-neighbors of v.
inline fsample::CooGraph g1_coo() {
  return {5, {0, 0, 1, 2, 2, 2, 2, 4, 4}, {1, 2, 0, 0, 1, 3, 4, 2, 3}};
}

inline fsample::CscGraph g1() { return fsample::build_csc(g1_coo()); }

// Two disjoint 10-node cliques (no self loops): nodes 0..9 and 10..19.
inline fsample::CscGraph two_cliques() {
  fsample::CooGraph coo;
  coo.num_nodes = 20;
  for (fsample::NodeId base : {0u, 10u}) {
    for (fsample::NodeId a = 0; a < 10; ++a) {
      for (fsample::NodeId b = 0; b < 10; ++b) {
        if (a == b) continue;
        coo.dst.push_back(base + a);
        coo.src.push_back(base + b);
      }
    }
  }
  return fsample::build_csc(coo);
}

}  // namespace fixtures
