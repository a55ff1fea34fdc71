#pragma once

#include <stdexcept>
#include <string>

namespace stldecomp {

enum class error_code {
    contract_violation,
    dimension_mismatch,
    unbounded_polytope,
    empty_set,
    empty_sum,
    horizon,
    connectivity,
    capacity,
    internal_invariant,
    solver_failure,
    divergence,
    soundness_violation,
    input_conflict,
    infeasible_decomposition,
    parse,
    schema,
    dangling_reference,
    io,
};

const char* to_string(error_code code);

class error : public std::runtime_error {
public:
    error(error_code code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    error_code code() const noexcept { return code_; }

private:
    error_code code_;
};

[[noreturn]] void fail(error_code code, const std::string& what);

inline void require(bool cond, error_code code, const std::string& what) {
    if (!cond) fail(code, what);
}

} // namespace stldecomp
