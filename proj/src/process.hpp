#pragma once

#include <chrono>
#include <string>
#include <vector>

namespace domremedy {

struct ProcessResult {
  int exit_code = -1;
  int signal = 0;
  bool timed_out = false;
  std::string out;
  std::string err;
};

// Spawns argv[0] (searched in PATH) in its own process group, collects stdout
// and stderr, and kills the group once `timeout` passes. Throws Error with
// AuditorNotFound when the program cannot be started.
ProcessResult run_process(const std::vector<std::string>& argv, std::chrono::milliseconds timeout);

}  // namespace domremedy
