#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sentinel/tensor.hpp"

namespace sentinel {

struct GradcheckResult {
    std::string name;
    int trials = 0;
    long skipped_entries = 0;  // coordinates whose ±h probe straddled a kink
    double max_rel_error = 0.0;
    bool passed = false;
};

struct GradcheckOptions {
    int trials = 100;
    double step = 1e-5;
    double tolerance = 1e-4;
    std::uint64_t seed = 7;
    // Called on every analytic gradient before comparison; lets tests inject faults.
    std::function<void(const std::string& check, VectorXr& analytic)> tamper;
};

// Central finite differences against every analytic backward in the kernel,
// the losses and one full client optimisation step.
std::vector<GradcheckResult> run_gradcheck_suite(const GradcheckOptions& opts = {});

// Names of the checks run_gradcheck_suite performs, in order.
std::vector<std::string> gradcheck_names();

// ---- oracle helpers (exposed for tests)

struct ProbeValue {
    double value = 0.0;
    std::uint64_t signature = 0;  // identifies the active piece of a piecewise function
};

// Numeric gradient over all entries of `inputs` (perturbed in place, then
// restored). Entries where the signature differs between +h and -h are NaN.
VectorXr numeric_gradient(const std::vector<MatrixXr*>& inputs, const std::function<ProbeValue()>& f, double step);

// |a - n| / max(|a|, |n|, 1e-6) over the non-NaN entries of n.
double relative_error(const VectorXr& analytic, const VectorXr& numeric);

}  // namespace sentinel
