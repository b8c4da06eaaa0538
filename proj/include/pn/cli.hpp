#pragma once

#include <string>
#include <vector>

namespace pn::cli {

/// Entry point for the command-line tool. Exit codes: 0 success,
/// 1 verification failure, 2 usage or parse error, 3 numeric failure.
int run(const std::vector<std::string>& args);

}  // namespace pn::cli
