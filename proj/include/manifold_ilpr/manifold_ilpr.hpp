#ifndef MANIFOLD_ILPR_MANIFOLD_ILPR_HPP
#define MANIFOLD_ILPR_MANIFOLD_ILPR_HPP

// Library umbrella; the CLI lives in manifold_ilpr/cli.hpp.

#include "manifold_ilpr/bandwidth.hpp"
#include "manifold_ilpr/embedding.hpp"
#include "manifold_ilpr/errors.hpp"
#include "manifold_ilpr/ilpr.hpp"
#include "manifold_ilpr/io.hpp"
#include "manifold_ilpr/linalg.hpp"
#include "manifold_ilpr/parallel.hpp"
#include "manifold_ilpr/simulation.hpp"
#include "manifold_ilpr/spd.hpp"
#include "manifold_ilpr/wls_oracle.hpp"

#endif  // MANIFOLD_ILPR_MANIFOLD_ILPR_HPP
