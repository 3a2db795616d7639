#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "frn/dataset.hpp"

namespace frn {

enum class GenKind { gaussian_prototype, pose_permutation, equal_mean_multiset };

GenKind parse_gen_kind(const std::string& name);
const char* to_string(GenKind kind);

struct GenSpec {
  int n_classes = 10;
  int items_per_class = 20;
  Index r = 8;
  Index d = 16;
  double noise_sigma = 0.05;
  GenKind kind = GenKind::gaussian_prototype;
  std::uint64_t seed = 0;
  /// Size of the paired perturbations that tell equal-mean classes apart.
  double delta = 1.0;
  /// Class ids start here, so generated splits can have disjoint labels.
  int first_class_id = 0;

  void validate() const;
};

/// Class c owns one prototype vector per location; items add N(0, sigma^2).
Dataset gen_gaussian(const GenSpec& spec);

/// Class c owns r distinct location vectors; every item shows them in an
/// independent random spatial order, plus noise.
Dataset gen_pose_permutation(const GenSpec& spec);

/// Every class has the same location-wise mean. Classes differ only in how
/// a shared base set of r vectors is perturbed: locations (2l, 2l+1) receive
/// +delta*v and -delta*v for a class-specific unit direction v. Items permute
/// locations and add noise.
Dataset gen_equal_mean(const GenSpec& spec);

/// The noiseless, unpermuted r x d signature of every equal-mean class.
std::vector<Matrix<double>> equal_mean_signatures(const GenSpec& spec);

Dataset generate(const GenSpec& spec);

/// Appends `extra` channels of i.i.d. N(0, sigma^2) noise to every item.
Dataset add_nuisance_channels(const Dataset& ds, Index extra, double sigma, std::uint64_t seed);

}  // namespace frn
