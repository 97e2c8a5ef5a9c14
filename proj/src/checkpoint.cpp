#include "linkbackdoor/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace lbd {

namespace {

constexpr const char* kMagic = "# linkbackdoor checkpoint v1";

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

[[noreturn]] void bad(const std::filesystem::path& path, const std::string& what) {
  throw std::runtime_error("checkpoint " + path.string() + ": " + what);
}

}  // namespace

void save_checkpoint(const ModelState& state, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) bad(path, "cannot open for writing");
  out << kMagic << '\n' << "kind=" << to_string(state.kind) << '\n' << "seed=" << state.seed << '\n';
  for (const auto& [key, m] : state.params) out << "param " << key << ' ' << m.rows() << ' ' << m.cols() << '\n';
  out << "end\n";
  for (const auto& [key, m] : state.params) {
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!out) bad(path, "write failed");
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) bad(path, "cannot open");
  std::string line;
  if (!std::getline(in, line) || line != kMagic) bad(path, "missing header");
  ModelState s;
  bool have_kind = false;
  bool have_seed = false;
  std::vector<std::pair<std::string, std::pair<Eigen::Index, Eigen::Index>>> shapes;
  while (std::getline(in, line)) {
    if (line == "end") break;
    if (line.starts_with("kind=")) {
      s.kind = parse_model_kind(line.substr(5));
      have_kind = true;
    } else if (line.starts_with("seed=")) {
      s.seed = std::stoull(line.substr(5));
      have_seed = true;
    } else if (line.starts_with("param ")) {
      std::istringstream ls(line.substr(6));
      std::string key;
      Eigen::Index r = -1, c = -1;
      if (!(ls >> key >> r >> c) || r < 0 || c < 0) bad(path, "malformed line '" + line + "'");
      shapes.push_back({key, {r, c}});
    } else {
      bad(path, "unexpected line '" + line + "'");
    }
  }
  if (line != "end") bad(path, "header not terminated");
  if (!have_kind || !have_seed) bad(path, "header lacks kind or seed");
  for (const auto& [key, shape] : shapes) {
    Matrix m(shape.first, shape.second);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) bad(path, "truncated data for " + key);
    s.params.emplace(key, std::move(m));
  }
  if (in.peek() != std::char_traits<char>::eof()) bad(path, "trailing bytes");
  return s;
}

}  // namespace lbd
