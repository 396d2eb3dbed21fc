#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fracflow/io.hpp"

namespace fracflow::io {

static_assert(std::endian::native == std::endian::little,
              "voxel payload is little-endian; byte swap unimplemented");

void write_voxel(const std::string& path, const VoxelFile& v) {
  const auto& g = v.grid;
  if (static_cast<int>(g.values.size()) != g.size())
    throw std::invalid_argument("write_voxel: value array does not match dims");
  std::ostringstream head;
  head.precision(17);
  head << "FRACFLOW-VOX1\n";
  head << "dims " << g.nx << ' ' << g.ny << ' ' << g.nz << '\n';
  head << "spacing " << g.spacing_x << ' ' << g.spacing_y << ' ' << g.spacing_z << '\n';
  head << "origin " << v.origin.x() << ' ' << v.origin.y() << ' ' << v.origin.z() << '\n';
  head << "time " << v.time << '\n';
  head << "value " << v.value_name << '\n';
  head << "data\n";

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  const std::string h = head.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  out.write(reinterpret_cast<const char*>(g.values.data()),
            static_cast<std::streamsize>(g.values.size() * sizeof(double)));
}

VoxelFile read_voxel(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != "FRACFLOW-VOX1") throw std::runtime_error(path + ": bad magic");

  VoxelFile v;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "data") break;
    if (key == "dims")
      ss >> v.grid.nx >> v.grid.ny >> v.grid.nz;
    else if (key == "spacing")
      ss >> v.grid.spacing_x >> v.grid.spacing_y >> v.grid.spacing_z;
    else if (key == "origin")
      ss >> v.origin.x() >> v.origin.y() >> v.origin.z();
    else if (key == "time")
      ss >> v.time;
    else if (key == "value")
      ss >> v.value_name;
    else
      throw std::runtime_error(path + ": unknown header key " + key);
    if (!ss) throw std::runtime_error(path + ": malformed header line: " + line);
  }
  if (v.grid.size() <= 0) throw std::runtime_error(path + ": missing dims");
  v.grid.values.resize(v.grid.size());
  in.read(reinterpret_cast<char*>(v.grid.values.data()),
          static_cast<std::streamsize>(v.grid.values.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(v.grid.values.size() * sizeof(double)))
    throw std::runtime_error(path + ": truncated payload");
  return v;
}

} // namespace fracflow::io
