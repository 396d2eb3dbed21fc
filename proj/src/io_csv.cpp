#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fracflow/io.hpp"

namespace fracflow::io {

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_series_csv(const std::string& path, const std::string& header,
                      const std::vector<double>& t, const std::vector<double>& v) {
  if (t.size() != v.size()) throw std::invalid_argument("write_series_csv: length mismatch");
  std::ostringstream os;
  os.precision(12);
  os << header << '\n';
  for (std::size_t i = 0; i < t.size(); ++i) os << t[i] << ',' << v[i] << '\n';
  write_text(path, os.str());
}

std::pair<std::vector<double>, std::vector<double>> read_series_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(in, line); // header
  std::vector<double> t, v;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::runtime_error("bad csv row in " + path);
    t.push_back(std::stod(line.substr(0, comma)));
    v.push_back(std::stod(line.substr(comma + 1)));
  }
  return {t, v};
}

} // namespace fracflow::io
