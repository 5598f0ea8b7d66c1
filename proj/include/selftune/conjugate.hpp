#pragma once

#include "selftune/penalty.hpp"

namespace selftune {

/// Exact value of sup_u { u'(B r - bbar) - 1/2 u'M u : C'u <= cbar } for atoms
/// with at most two dual variables, by enumerating the KKT active sets of the
/// small QP.
///
/// Throws std::invalid_argument for k_u > 2 and DivergenceError ("not
/// integrable at this theta") when the supremum is unbounded.
double eval_conjugate_sup(const PlqAtom& atom, double r, const Vector& theta);

}  // namespace selftune
