#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "skillprobe/run_config.hpp"

namespace skillprobe::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPipeline = 1;
inline constexpr int kExitUsage = 2;

// Pipeline stages. Each reads its inputs from cfg.workdir and writes its
// outputs there; progress goes to `log`.
void stage_gen(const RunConfig& cfg, std::ostream& log);
void stage_pretrain(const RunConfig& cfg, std::ostream& log);
void stage_tune(const RunConfig& cfg, std::ostream& log);
void stage_probe(const RunConfig& cfg, std::ostream& log);
void stage_report(const RunConfig& cfg, std::ostream& log);
void run_all(const RunConfig& cfg, std::ostream& log);

// Parses argv and runs one subcommand. Errors are printed to `err` as a
// single line `error: <CODE>: <message>`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace skillprobe::cli
