#pragma once

#include <string>
#include <vector>

#include "sentinel/server.hpp"

namespace sentinel {

std::string rounds_csv(const std::vector<RoundReport>& reports);
std::string timing_csv(const std::vector<RoundReport>& reports, const std::vector<double>& injected_delay);
std::string trace_csv(const std::vector<RoundReport>& reports);
// Mean and sample std across clients per round and model kind, plus byte counters.
std::string summary_json(const std::vector<RoundReport>& reports, const std::string& variant,
                         long teacher_parameters, long student_parameters);

}  // namespace sentinel
