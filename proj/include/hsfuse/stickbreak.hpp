#ifndef HSFUSE_STICKBREAK_HPP
#define HSFUSE_STICKBREAK_HPP

#include <hsfuse/diffcore.hpp>

// Stick-breaking representation layer. A sigmoid head produces break
// fractions u in (0,1), a softplus head produces the per-pixel concentration
// beta > 0, Kumaraswamy inverse-transform sampling turns (u, beta) into stick
// fractions v, and the stick-breaking construction turns v into simplex rows.

namespace hsfuse::stick {

using diff::Value;

// v = 1 - (1-u)^(1/beta), elementwise, alpha fixed at 1.
// u: [p x k] in (0,1); beta: [p x 1] > 0, broadcast across the k columns.
// (1-u) is floored at 1e-12 before the 1/beta power.
Value kumaraswamy_inverse(const Value& u, const Value& beta);

// v: [p x (c-1)] with entries in [0,1) -> s: [p x c] rows on the simplex.
// s_1 = v_1, s_j = v_j * prod_{o<j}(1 - v_o), and the last component takes
// the remaining stick length so rows sum to one exactly.
Value stick_break(const Value& v);

struct HeadOutput {
  Value u;     // [p x c], sigmoid head; first c-1 columns feed the breaks
  Value beta;  // [p x 1], softplus head
  Value v;     // [p x (c-1)]
  Value s;     // [p x c], simplex rows
};

// encoder_out: last hidden layer [p x k]. Wu:[k x c], bu:[1 x c],
// Wb:[k x 1], bb:[1 x 1]. The u head has c nodes; the c-th break fraction is
// implied by the remainder rule, so only the first c-1 columns are used.
HeadOutput representation_head(const Value& encoder_out, const Value& Wu, const Value& bu,
                               const Value& Wb, const Value& bb, Index c);

}  // namespace hsfuse::stick

#endif
