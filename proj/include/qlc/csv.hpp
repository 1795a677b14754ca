#pragma once

#include <Eigen/Dense>
#include <string>

namespace qlc {

// Comma-separated numeric table, '.' decimal, LF or CRLF line ends, optional
// single header row (detected by a non-numeric first row).
Eigen::MatrixXd read_csv(const std::string& path);
Eigen::MatrixXd parse_csv(const std::string& text, const std::string& origin = "<string>");

void write_csv(const std::string& path, const std::string& content);

}  // namespace qlc
