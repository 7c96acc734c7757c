#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "muse/autodiff.hpp"
#include "muse/gradcheck.hpp"

namespace muse {

struct GradcheckSuiteOptions {
    std::size_t instances = 100;
    double tolerance = 1e-4;
    double step = 1e-5;
    std::uint64_t seed = 0;
    /// Coordinates sampled per parameter in the loss cases.
    std::size_t loss_coords_per_param = 4;
    /// Passed to every graph the suite builds (fault injection).
    GraphOptions graph;
    /// Case names to run; empty runs everything.
    std::vector<std::string> only;
};

struct GradcheckCase {
    std::string name;
    std::size_t instances = 0;
    std::size_t coords = 0;
    double worst_rel_error = 0.0;
    std::string worst_param;
    bool passed = true;
};

struct GradcheckSuiteReport {
    std::vector<GradcheckCase> cases;
    bool passed = true;
};

/// Op cases ("op.<kind>") followed by loss cases ("loss.bottom",
/// "loss.top", "loss.alma", "loss.total", "loss.muse_h", "loss.flat_mvae",
/// "loss.fusion_vae", "loss.ddpg_critic").
std::vector<std::string> gradcheck_case_names();

/// Central finite differences against reverse mode on random instances.
/// Losses with stopped codes are differenced over the parameters they
/// train; the stopped branches are checked for exact agreement with the
/// bottom loss gradient instead.
GradcheckSuiteReport run_gradcheck_suite(const GradcheckSuiteOptions& options);

/// "case,instances,coords,worst_rel_error,worst_param,passed".
std::string gradcheck_report_csv(const GradcheckSuiteReport& report);

}  // namespace muse
