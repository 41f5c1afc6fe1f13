#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "uqevo/feature_store.hpp"

namespace testsup {

inline uqevo::SequenceSample make_sample(std::string id, std::vector<double> logprobs,
                                         std::vector<double> entropies) {
  uqevo::SequenceSample s;
  s.id = std::move(id);
  s.logprobs = std::move(logprobs);
  s.entropies = std::move(entropies);
  return s;
}

inline uqevo::SequenceSample random_sample(std::mt19937_64& rng, int min_len = 3,
                                           int max_len = 30) {
  std::uniform_int_distribution<int> len_dist(min_len, max_len);
  std::uniform_real_distribution<double> lp_dist(-5.0, 0.0);
  std::uniform_real_distribution<double> ent_dist(0.0, 3.0);
  int n = len_dist(rng);
  uqevo::SequenceSample s;
  s.id = "r" + std::to_string(rng());
  for (int i = 0; i < n; ++i) {
    s.logprobs.push_back(lp_dist(rng));
    s.entropies.push_back(ent_dist(rng));
  }
  return s;
}

// Binary labels with both classes guaranteed; scores drawn from a coarse grid
// so ties occur.
struct BinaryInstance {
  std::vector<double> scores;
  std::vector<double> quality;
};

inline BinaryInstance random_binary_instance(std::mt19937_64& rng, int n,
                                             bool inject_ties = true) {
  BinaryInstance inst;
  std::uniform_int_distribution<int> grid(0, inject_ties ? 9 : 1000000);
  std::uniform_int_distribution<int> label(0, 1);
  for (int i = 0; i < n; ++i) {
    inst.scores.push_back(static_cast<double>(grid(rng)) / 10.0);
    inst.quality.push_back(static_cast<double>(label(rng)));
  }
  inst.quality[0] = 0.0;
  inst.quality[static_cast<std::size_t>(n) - 1] = 1.0;
  return inst;
}

inline std::filesystem::path fresh_dir(const std::string& tag) {
  static std::atomic<unsigned> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("uqevo_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
              std::to_string(counter.fetch_add(1)));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testsup
