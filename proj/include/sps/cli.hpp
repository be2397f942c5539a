#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sps {

/// Runs the `sps` command line. `args` excludes the program name.
/// Returns 0 on success, 1 on data errors and 2 on usage errors.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

}  // namespace sps
