#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_int.hpp>

#include "neurofuse/graph.hpp"
#include "neurofuse/netbuild.hpp"

namespace neurofuse::ubnin {

using BigInt = boost::multiprecision::cpp_int;

/// r_ij = 1 / ((rGMV_i - rWMV_j)^2 + 1).
Eigen::MatrixXd eqn1_weight_matrix(std::span<const double> rgmv, std::span<const double> rwmv);

/// Mutual top-K binarisation of an individual weight matrix, collapsed to regions.
netbuild::RegionGraph binarize_individual(const Eigen::MatrixXd& weights, std::size_t k);

/// R(R-1)/2.
std::size_t bit_width(std::size_t regions);

/// Upper-triangle adjacency bits read row-major, pair (0,1) as the most significant bit.
BigInt encode_ubnin(const Graph& g);

/// Inverse of encode_ubnin. Throws when the code does not fit in R(R-1)/2 bits.
Graph decode_ubnin(const BigInt& code, std::size_t regions);

struct UbninCode {
  std::string subject_id;
  std::string subtype;
  BigInt code;
  std::size_t bit_width = 0;
  std::size_t k = 0;
};

/// One code per subject row of the paired GM/WM tables. `subtypes` may be empty or give
/// one label per subject.
std::vector<UbninCode> cohort_codes(const netbuild::RegionalVolumeTable& gm,
                                    const netbuild::RegionalVolumeTable& wm, std::size_t k,
                                    std::span<const std::string> subtypes = {});

/// `subject_id,subtype,code_decimal,bit_width,k`.
void write_ubnin_csv(const std::filesystem::path& path, std::span<const UbninCode> codes);
std::vector<UbninCode> read_ubnin_csv(const std::filesystem::path& path);

}  // namespace neurofuse::ubnin
