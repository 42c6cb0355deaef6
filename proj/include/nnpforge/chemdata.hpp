// SPDX-License-Identifier: Apache-2.0
//
// Molecular configuration data model: clusters, extended-XYZ I/O, dataset
// splits, neighbor graphs and batches. Everything here is immutable after
// construction and safe to share across threads.
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nnpforge {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, int line)
      : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Energy/forces of one configuration. Forces are a flat 3N array, kcal/mol/Å.
struct EnergyForces {
  double energy = 0.0;
  std::vector<double> forces;
};

// One molecular configuration. Positions are a flat 3N array (Å); forces,
// when present, match it component for component (kcal/mol/Å).
struct Cluster {
  std::vector<int> atomic_numbers;
  std::vector<double> positions;
  std::optional<double> energy;                 // kcal/mol
  std::optional<std::vector<double>> forces;    // kcal/mol/Å

  int n_atoms() const { return static_cast<int>(atomic_numbers.size()); }
  bool is_water_pattern() const;  // O,H,H per molecule
  int n_waters() const;           // n_atoms/3 when water pattern, else 0
  void validate() const;          // throws std::invalid_argument on bad shape
};

struct ClusterSet {
  std::vector<Cluster> clusters;
  std::map<std::string, std::string> tags;

  int size() const { return static_cast<int>(clusters.size()); }
  bool empty() const { return clusters.empty(); }
};

struct SplitIndices {
  std::vector<int> train;
  std::vector<int> validation;
  std::vector<int> test;
  std::uint64_t seed = 0;
  std::array<double, 3> fractions{0.8, 0.1, 0.1};
};

// Directed cutoff graph: both (i,j) and (j,i) are present for every pair
// within the cutoff. unit points from atom i towards atom j.
struct PairList {
  struct Edge {
    int i;
    int j;
    double distance;
    std::array<double, 3> unit;
  };
  std::vector<Edge> edges;
  double cutoff = 0.0;
};

// Concatenation of clusters. Targets are present only when every member
// carries them, so a mixed set batches geometry only.
struct Batch {
  std::vector<int> atomic_numbers;
  std::vector<double> positions;    // 3 * n_atoms
  std::vector<int> cluster_of_atom; // monotone non-decreasing
  std::vector<int> atom_offset;     // size n_clusters + 1
  std::vector<int> n_waters;        // per cluster, 0 when not water pattern
  std::optional<std::vector<double>> energies;
  std::optional<std::vector<double>> forces;

  int n_clusters() const { return static_cast<int>(atom_offset.size()) - 1; }
  int n_atoms() const { return static_cast<int>(atomic_numbers.size()); }
  int cluster_size(int c) const { return atom_offset[c + 1] - atom_offset[c]; }
};

// Fixed symbol table. H and O are always known; extras can be registered
// for non-water experiments (affects parsing only).
int symbol_to_z(const std::string& symbol);
const std::string& z_to_symbol(int z);
void register_element(const std::string& symbol, int z);

// Extended XYZ. Per frame: atom count, then `key=value` pairs with required
// `energy` (unless require_energy is false), then `Symbol x y z [fx fy fz]`.
// Non-reserved keys of the first frame populate ClusterSet::tags.
ClusterSet parse_xyz(const std::string& text, bool require_energy = true);
std::string write_xyz(const ClusterSet& set);

ClusterSet read_xyz_file(const std::string& path, bool require_energy = true);
void write_xyz_file(const ClusterSet& set, const std::string& path);

// Seeded shuffle, then partition. Sizes are floor(f*n) with the remainder
// assigned to train; any empty partition is an error.
SplitIndices split_dataset(const ClusterSet& set, std::array<double, 3> fractions,
                           std::uint64_t seed);

void write_split_files(const SplitIndices& split, const std::string& dir);
SplitIndices read_split_files(const std::string& dir);

// Brute-force O(N²) directed pair search, open boundary conditions.
PairList neighbor_pairs(const Cluster& c, double cutoff);

Batch batch_clusters(std::span<const Cluster> clusters);
std::vector<Cluster> unbatch_clusters(const Batch& batch);

}  // namespace nnpforge
