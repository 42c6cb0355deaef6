// SPDX-License-Identifier: Apache-2.0
#include "nnpforge/chemdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>

#include "nnpforge/random.hpp"

namespace nnpforge {

namespace {

std::map<std::string, int>& symbol_table() {
  static std::map<std::string, int> table{{"H", 1}, {"O", 8}};
  return table;
}

std::map<int, std::string>& number_table() {
  static std::map<int, std::string> table{{1, "H"}, {8, "O"}};
  return table;
}

std::mutex table_mutex;

bool parse_double(std::string_view tok, double& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

bool parse_int(std::string_view tok, int& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

int symbol_to_z(const std::string& symbol) {
  std::lock_guard<std::mutex> lock(table_mutex);
  auto it = symbol_table().find(symbol);
  if (it == symbol_table().end())
    throw std::invalid_argument("unknown element symbol: " + symbol);
  return it->second;
}

const std::string& z_to_symbol(int z) {
  std::lock_guard<std::mutex> lock(table_mutex);
  auto it = number_table().find(z);
  if (it == number_table().end())
    throw std::invalid_argument("unknown atomic number: " + std::to_string(z));
  return it->second;
}

void register_element(const std::string& symbol, int z) {
  std::lock_guard<std::mutex> lock(table_mutex);
  symbol_table()[symbol] = z;
  number_table()[z] = symbol;
}

bool Cluster::is_water_pattern() const {
  const int n = n_atoms();
  if (n == 0 || n % 3 != 0) return false;
  for (int m = 0; m < n / 3; ++m) {
    if (atomic_numbers[3 * m] != 8 || atomic_numbers[3 * m + 1] != 1 ||
        atomic_numbers[3 * m + 2] != 1)
      return false;
  }
  return true;
}

int Cluster::n_waters() const { return is_water_pattern() ? n_atoms() / 3 : 0; }

void Cluster::validate() const {
  if (atomic_numbers.empty()) throw std::invalid_argument("cluster has no atoms");
  if (positions.size() != 3 * atomic_numbers.size())
    throw std::invalid_argument("positions shape does not match atom count");
  for (double x : positions)
    if (!std::isfinite(x)) throw std::invalid_argument("non-finite position");
  if (forces && forces->size() != positions.size())
    throw std::invalid_argument("forces shape does not match positions");
}

ClusterSet parse_xyz(const std::string& text, bool require_energy) {
  ClusterSet set;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool first_frame = true;

  auto next_line = [&](std::string& out) -> bool {
    if (!std::getline(in, out)) return false;
    ++line_no;
    return true;
  };

  while (true) {
    if (!next_line(line)) break;
    auto toks = split_ws(line);
    if (toks.empty()) continue;  // blank separator lines are tolerated
    int n_atoms = 0;
    if (toks.size() != 1 || !parse_int(toks[0], n_atoms) || n_atoms <= 0)
      throw ParseError("expected positive atom count, got '" + std::string(line) + "'", line_no);

    if (!next_line(line)) throw ParseError("missing comment line", line_no + 1);
    const int comment_line_no = line_no;
    Cluster c;
    std::map<std::string, std::string> keys;
    for (auto tok : split_ws(line)) {
      auto eq = tok.find('=');
      if (eq == std::string_view::npos || eq == 0) continue;
      keys[std::string(tok.substr(0, eq))] = std::string(tok.substr(eq + 1));
    }
    if (auto it = keys.find("energy"); it != keys.end()) {
      double e = 0.0;
      if (!parse_double(it->second, e))
        throw ParseError("bad energy value '" + it->second + "'", comment_line_no);
      c.energy = e;
    } else if (require_energy) {
      throw ParseError("missing required key 'energy'", comment_line_no);
    }

    bool frame_has_forces = false;
    for (int a = 0; a < n_atoms; ++a) {
      if (!next_line(line))
        throw ParseError("frame declares " + std::to_string(n_atoms) + " atoms but input ended",
                         line_no + 1);
      auto atoks = split_ws(line);
      if (atoks.size() != 4 && atoks.size() != 7) {
        // A bare integer here usually means the declared count was wrong and
        // we ran into the next frame header.
        int dummy;
        if (atoks.size() == 1 && parse_int(atoks[0], dummy))
          throw ParseError("frame declares " + std::to_string(n_atoms) + " atoms but only " +
                               std::to_string(a) + " atom rows follow",
                           line_no);
        throw ParseError("expected 'Symbol x y z [fx fy fz]'", line_no);
      }
      c.atomic_numbers.push_back(symbol_to_z(std::string(atoks[0])));
      for (int k = 0; k < 3; ++k) {
        double v = 0.0;
        if (!parse_double(atoks[1 + k], v))
          throw ParseError("non-numeric coordinate '" + std::string(atoks[1 + k]) + "'", line_no);
        c.positions.push_back(v);
      }
      const bool row_has_forces = atoks.size() == 7;
      if (a == 0) {
        frame_has_forces = row_has_forces;
        if (frame_has_forces) c.forces.emplace();
      } else if (row_has_forces != frame_has_forces) {
        throw ParseError("inconsistent force columns within frame", line_no);
      }
      if (row_has_forces) {
        for (int k = 0; k < 3; ++k) {
          double v = 0.0;
          if (!parse_double(atoks[4 + k], v))
            throw ParseError("non-numeric force '" + std::string(atoks[4 + k]) + "'", line_no);
          c.forces->push_back(v);
        }
      }
    }
    c.validate();
    if (first_frame) {
      for (auto& [k, v] : keys)
        if (k != "energy" && k != "step" && k != "temperature") set.tags[k] = v;
      first_frame = false;
    }
    set.clusters.push_back(std::move(c));
  }
  if (set.clusters.empty()) throw ParseError("no frames found", line_no);
  return set;
}

std::string write_xyz(const ClusterSet& set) {
  if (set.empty()) throw std::invalid_argument("refusing to write empty ClusterSet");
  std::string out;
  for (const auto& c : set.clusters) {
    if (!c.energy) throw std::invalid_argument("cluster without energy cannot be serialized");
    c.validate();
    out += std::to_string(c.n_atoms());
    out += '\n';
    out += "energy=" + format_double(*c.energy);
    for (const auto& [k, v] : set.tags) out += " " + k + "=" + v;
    out += '\n';
    for (int a = 0; a < c.n_atoms(); ++a) {
      out += z_to_symbol(c.atomic_numbers[a]);
      for (int k = 0; k < 3; ++k) out += " " + format_double(c.positions[3 * a + k]);
      if (c.forces)
        for (int k = 0; k < 3; ++k) out += " " + format_double((*c.forces)[3 * a + k]);
      out += '\n';
    }
  }
  return out;
}

ClusterSet read_xyz_file(const std::string& path, bool require_energy) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_xyz(ss.str(), require_energy);
}

void write_xyz_file(const ClusterSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << write_xyz(set);
}

SplitIndices split_dataset(const ClusterSet& set, std::array<double, 3> fractions,
                           std::uint64_t seed) {
  const int n = set.size();
  double sum = 0.0;
  for (double f : fractions) {
    if (f <= 0.0) throw std::invalid_argument("split fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must sum to 1");

  const int n_val = static_cast<int>(std::floor(fractions[1] * n));
  const int n_test = static_cast<int>(std::floor(fractions[2] * n));
  const int n_train = n - n_val - n_test;
  if (n_train <= 0 || n_val <= 0 || n_test <= 0)
    throw std::invalid_argument("dataset too small: a split partition is empty");

  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  shuffle(order, rng);

  SplitIndices s;
  s.seed = seed;
  s.fractions = fractions;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.validation.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  s.test.assign(order.begin() + n_train + n_val, order.end());
  return s;
}

namespace {
void write_idx(const std::string& path, const std::vector<int>& idx) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (int i : idx) out << i << '\n';
}
std::vector<int> read_idx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<int> idx;
  int v;
  while (in >> v) idx.push_back(v);
  return idx;
}
}  // namespace

void write_split_files(const SplitIndices& split, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_idx((fs::path(dir) / "train.idx").string(), split.train);
  write_idx((fs::path(dir) / "val.idx").string(), split.validation);
  write_idx((fs::path(dir) / "test.idx").string(), split.test);
}

SplitIndices read_split_files(const std::string& dir) {
  namespace fs = std::filesystem;
  SplitIndices s;
  s.train = read_idx((fs::path(dir) / "train.idx").string());
  s.validation = read_idx((fs::path(dir) / "val.idx").string());
  s.test = read_idx((fs::path(dir) / "test.idx").string());
  return s;
}

PairList neighbor_pairs(const Cluster& c, double cutoff) {
  if (cutoff <= 0.0) throw std::invalid_argument("cutoff must be positive");
  PairList pl;
  pl.cutoff = cutoff;
  const int n = c.n_atoms();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dx = c.positions[3 * j] - c.positions[3 * i];
      const double dy = c.positions[3 * j + 1] - c.positions[3 * i + 1];
      const double dz = c.positions[3 * j + 2] - c.positions[3 * i + 2];
      const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
      if (d <= cutoff)
        pl.edges.push_back({i, j, d, {dx / d, dy / d, dz / d}});
    }
  }
  return pl;
}

Batch batch_clusters(std::span<const Cluster> clusters) {
  if (clusters.empty()) throw std::invalid_argument("cannot batch zero clusters");
  Batch b;
  b.atom_offset.push_back(0);
  bool all_energy = true;
  bool all_forces = true;
  for (const auto& c : clusters) {
    c.validate();
    all_energy = all_energy && c.energy.has_value();
    all_forces = all_forces && c.forces.has_value();
  }
  if (all_energy) b.energies.emplace();
  if (all_forces) b.forces.emplace();
  int cluster_index = 0;
  for (const auto& c : clusters) {
    b.atomic_numbers.insert(b.atomic_numbers.end(), c.atomic_numbers.begin(),
                            c.atomic_numbers.end());
    b.positions.insert(b.positions.end(), c.positions.begin(), c.positions.end());
    for (int a = 0; a < c.n_atoms(); ++a) b.cluster_of_atom.push_back(cluster_index);
    b.atom_offset.push_back(static_cast<int>(b.atomic_numbers.size()));
    b.n_waters.push_back(c.n_waters());
    if (all_energy) b.energies->push_back(*c.energy);
    if (all_forces) b.forces->insert(b.forces->end(), c.forces->begin(), c.forces->end());
    ++cluster_index;
  }
  return b;
}

std::vector<Cluster> unbatch_clusters(const Batch& batch) {
  std::vector<Cluster> out;
  for (int c = 0; c < batch.n_clusters(); ++c) {
    Cluster cl;
    const int lo = batch.atom_offset[c];
    const int hi = batch.atom_offset[c + 1];
    cl.atomic_numbers.assign(batch.atomic_numbers.begin() + lo, batch.atomic_numbers.begin() + hi);
    cl.positions.assign(batch.positions.begin() + 3 * lo, batch.positions.begin() + 3 * hi);
    if (batch.energies) cl.energy = (*batch.energies)[static_cast<std::size_t>(c)];
    if (batch.forces)
      cl.forces = std::vector<double>(batch.forces->begin() + 3 * lo,
                                      batch.forces->begin() + 3 * hi);
    out.push_back(std::move(cl));
  }
  return out;
}

}  // namespace nnpforge
