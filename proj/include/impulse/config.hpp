#pragma once

// Key-tree text configuration: INI-style sections whose names may be dotted
// ([coefficients.drift]), flat key = value entries inside. Also builds
// ProblemSpec and ImpulseControl objects from a parsed tree.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "impulse/model.hpp"

namespace ic {

class KeyTree {
 public:
  static KeyTree parse_file(const std::string& path);
  static KeyTree parse_string(const std::string& text);

  bool has(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  // whitespace- or comma-separated list of reals; empty if key missing
  std::vector<double> get_list(const std::string& key) const;

  void set(const std::string& key, const std::string& value);
  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

// Builds a problem from [problem], [cone], [coefficients.*], [costs.*]
// sections; a problem.preset key seeds the spec from the catalog first and
// any present sections override individual fields.
ProblemSpec problem_from_tree(const KeyTree& tree);

// Reads "time:size" pairs from the given key, e.g. impulses = 0.4:1 0.7:0.5
ImpulseControl control_from_tree(const KeyTree& tree, const std::string& key,
                                 double start_time, const ProblemSpec& spec);

struct RunConfig {
  KeyTree tree;
  std::string preset;     // empty when the problem comes from sections
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  int threads = 1;
  std::size_t paths = 0;  // 0: command default
  int steps = 0;          // 0: command default
};

}  // namespace ic
