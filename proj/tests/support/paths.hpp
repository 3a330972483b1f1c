#pragma once

#include <string>

namespace dfopt::test {

inline std::string flow_path(const std::string& name) { return std::string(DFOPT_FLOWS_DIR) + "/" + name + "/flow.json"; }

} // namespace dfopt::test
