#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <utility>
#include <vector>

#include "hdrtm/image.hpp"

// Direct nested-loop reference implementations, written without tensor operations.
namespace hdrtm::oracle {

using Vec = std::vector<double>;
using Rows = std::vector<Vec>;

Grid grid_of(const torch::Tensor& hw);
Rows rows_of(const torch::Tensor& nd);
Vec vec_of(const torch::Tensor& t);

double pearson(const Grid& a, const Grid& b, int patch, int step);
Grid mean_pool(const Grid& g, int times);
/// Sum over scales of (1 - rho) for one frame pair.
double structure(const Grid& h, const Grid& o, int patch, int step, int scales);
std::pair<double, double> naturalness(const Grid& a, const Grid& b, int patch, int step);
/// Codes of one sample from its channels.
Vec latent_code(const std::vector<Grid>& channels);
std::vector<std::vector<std::int64_t>> knn(const Rows& nodes, int k);
double tv(const Grid& g);

double similarity(const Vec& u, const Vec& v, double eta, double c);
double domain_cl(const Rows& z_o, const Rows& z_gl, const Rows& z_h, const Rows& z_pl, double eta, double c);
double instance_cl(const Rows& z, const Vec& scores, double eta, double c);
double dcl_d(const Vec& real, const Vec& fake);
double dcl_g(const Vec& real, const Vec& fake);
double rwe_pair(const Grid& prev, const Grid& warped);

}  // namespace hdrtm::oracle
