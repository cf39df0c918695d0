#pragma once

// Self-checks shared by `uar verify` and the acceptance binary: exact oracles
// for the numerical core, and the end-to-end desk acceptance suite.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "uar/tensor.hpp"
#include "uar/tomo.hpp"

namespace uar::checks {

struct Result {
    std::string name;
    bool pass = false;
    std::string detail;
};

using Reporter = std::function<void(const Result&)>;

// ---- numerical oracles -------------------------------------------------------

// Relative error ||a - b|| / max(||a||, ||b||, 1e-300).
double relative_error(std::span<const double> a, std::span<const double> b);

using ScalarFn = std::function<ad::Tensor(const std::vector<ad::Tensor>&)>;

struct GradcheckStats {
    double worst = 0.0;         // worst relative error over the inputs
    std::size_t checked = 0;    // coordinates compared
    std::size_t excluded = 0;   // coordinates whose +-h probe crosses an activation kink
};

// Compares reverse-mode gradients of the scalar f with central differences
// of step h. Inputs listed in `skip` are treated as constants. A coordinate
// is excluded when perturbing it by +-h flips the sign of any leaky/PReLU
// input, since the difference quotient then straddles a kink.
GradcheckStats gradcheck(const ScalarFn& f, const std::vector<ad::Tensor>& inputs, double h,
                         const std::vector<std::size_t>& skip = {});

// max over pairs of |<Ax,u> - <x,A*u>| / (||Ax|| ||u||).
double adjoint_error(const tomo::Geometry& g, std::size_t pairs, std::uint64_t seed);

// Per-case worst relative errors for every tensor operation and both
// networks, `instances` random draws each.
struct GradcheckCase {
    std::string name;
    GradcheckStats stats;
};
std::vector<GradcheckCase> gradcheck_all(std::size_t instances, std::uint64_t seed);

// Relative error between the double-backprop theta-gradient of
// (||grad_x R(x)|| - 1)^2 and central differences in theta (h = 1e-6) for a
// two-conv critic on 8x8 inputs.
double second_order_error(std::uint64_t seed);

struct W1OracleStats {
    std::size_t trials = 0;
    std::size_t mismatches = 0;       // Hungarian != brute force (exact compare)
    double worst_axiom_violation = 0;  // symmetry, identity, triangle
};
W1OracleStats w1_oracle(std::size_t trials, std::uint64_t seed);

// Worst violation of Adam against a scalar re-implementation over a few steps.
double adam_oracle_error();

// Encode/decode round trip of a random checkpoint; returns "" on success.
std::string checkpoint_roundtrip();
// True when flipping any single byte of an encoded checkpoint is rejected.
bool checkpoint_corruption_detected();

// ---- suites ------------------------------------------------------------------

// Oracles above; under a minute.
bool fast_suite(const Reporter& report);

struct AcceptanceOptions {
    std::filesystem::path work_dir;  // cached artifacts live here
    std::function<void(const std::string&)> log;
};

// The twelve acceptance criteria, one Result each, in order.
bool acceptance_suite(const AcceptanceOptions& opt, const Reporter& report);

}  // namespace uar::checks
