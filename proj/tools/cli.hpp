#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace partswitch::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kFileError = 3,
  kSchemaError = 4,
  kInvalidInput = 5,
  kInternal = 6,
};

/// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace partswitch::cli
