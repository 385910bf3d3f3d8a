#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace moralprobe::cli {

/// Runs one command; `args` excludes the program name. Returns the process
/// exit code: 0 on success, otherwise exit_code_for() of the failure class
/// (usage errors map to the validation code).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

}  // namespace moralprobe::cli
