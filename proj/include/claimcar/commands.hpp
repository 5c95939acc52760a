#pragma once

#include <string>
#include <vector>

namespace claimcar {

// CLI entry points.  Each returns a process exit code: 0 on success, 1 on
// usage/data/config errors, 2 when a fit completes but the convergence gate
// fails (and diagnostics.gate_required is set).  Errors print to stderr.

int cmd_fit(const std::string& config_path, const std::vector<std::string>& overrides);
int cmd_diagnose(const std::string& draws_dir);
int cmd_simulate(const std::string& config_path, const std::vector<std::string>& overrides);
int cmd_ingest(const std::string& config_path, const std::vector<std::string>& overrides);
int cmd_bench_grad(const std::string& config_path, const std::vector<std::string>& overrides,
                   int repeats);
int cmd_bench_scaling(const std::string& config_path, const std::vector<std::string>& overrides);

}  // namespace claimcar
