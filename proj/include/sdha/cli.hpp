#pragma once

#include <ostream>
#include <string>

namespace sdha::cli {

// %.17g-equivalent, '.' decimal separator in every locale
std::string fmt(double x);

// Exit codes: 0 ok; 1 configuration, parse or input error; 2 degraded ensemble or inconclusive fit;
// 3 a checked condition or tolerance failed.
int cmd_run(const std::string& config_path, const std::string& out_override, std::ostream& out, std::ostream& err);
int cmd_check_tableau(const std::string& file, std::string kind, std::ostream& out, std::ostream& err);
int cmd_order(const std::string& config_path, const std::string& out_override, std::ostream& out, std::ostream& err);
int cmd_structure(const std::string& config_path, std::ostream& out, std::ostream& err);

}  // namespace sdha::cli
