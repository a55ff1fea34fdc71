#include "stldecomp/errors.hpp"

namespace stldecomp {

const char* to_string(error_code code) {
    switch (code) {
    case error_code::contract_violation: return "contract_violation";
    case error_code::dimension_mismatch: return "dimension_mismatch";
    case error_code::unbounded_polytope: return "unbounded_polytope";
    case error_code::empty_set: return "empty_set";
    case error_code::empty_sum: return "empty_sum";
    case error_code::horizon: return "horizon";
    case error_code::connectivity: return "connectivity";
    case error_code::capacity: return "capacity";
    case error_code::internal_invariant: return "internal_invariant";
    case error_code::solver_failure: return "solver_failure";
    case error_code::divergence: return "divergence";
    case error_code::soundness_violation: return "soundness_violation";
    case error_code::input_conflict: return "input_conflict";
    case error_code::infeasible_decomposition: return "infeasible_decomposition";
    case error_code::parse: return "parse";
    case error_code::schema: return "schema";
    case error_code::dangling_reference: return "dangling_reference";
    case error_code::io: return "io";
    }
    return "unknown";
}

void fail(error_code code, const std::string& what) {
    throw error(code, what);
}

} // namespace stldecomp
