#include "gmmscape/gmm_io.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

namespace gmmscape {

namespace {

constexpr char kMagic[8] = {'S', 'G', 'M', 'M', '4', 'D', '0', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff),
                     static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff),
                     static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

void put_f32(std::ostream& os, double v) {
  put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw GmmTruncatedError("model file truncated");
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

double get_f32(std::istream& is) {
  return static_cast<double>(std::bit_cast<float>(get_u32(is)));
}

// Post-load checks shared by the binary and JSON paths.
void finalize_loaded(Gmm4& model) {
  const int m = model.components();
  if (m < 1) throw GmmFormatError("model has no components");
  if (!model.weights.allFinite() || !model.means.allFinite() ||
      !model.covariances.allFinite()) {
    throw NumericalError("loaded model contains non-finite values");
  }
  if (model.weights.minCoeff() <= 0.0) {
    throw NumericalError("loaded model has non-positive weights");
  }
  const double sum = model.weights.sum();
  if (std::abs(sum - 1.0) > 1e-6) {
    throw NumericalError("loaded weights sum to " + std::to_string(sum) +
                         ", beyond the 1e-6 tolerance");
  }
  model.weights /= sum;
  for (int b = 0; b < m; ++b) {
    Mat4 lower;
    if (!cholesky4(model.covariance(b), lower)) {
      throw NumericalError("loaded covariance of component " +
                           std::to_string(b) + " is not positive definite");
    }
  }
}

}  // namespace

void save_gmm(const Gmm4& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write(kMagic, 8);
  const int m = model.components();
  put_u32(os, static_cast<std::uint32_t>(m));
  for (int b = 0; b < m; ++b) put_f32(os, model.weights[b]);
  for (int b = 0; b < m; ++b) {
    for (int d = 0; d < 4; ++d) put_f32(os, model.means(b, d));
  }
  for (int b = 0; b < m; ++b) {
    for (int k = 0; k < 10; ++k) put_f32(os, model.covariances(b, k));
  }
  if (!os) throw IoError("write failed for " + path);
}

Gmm4 load_gmm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || !std::equal(magic, magic + 8, kMagic)) {
    throw GmmFormatError("bad magic in " + path);
  }
  const std::uint32_t m = get_u32(is);
  if (m == 0) throw GmmFormatError("model declares zero components");

  Gmm4 model;
  model.weights = VecX(m);
  model.means = MatX4(m, 4);
  model.covariances = MatX10(m, 10);
  for (std::uint32_t b = 0; b < m; ++b) model.weights[b] = get_f32(is);
  for (std::uint32_t b = 0; b < m; ++b) {
    for (int d = 0; d < 4; ++d) model.means(b, d) = get_f32(is);
  }
  for (std::uint32_t b = 0; b < m; ++b) {
    for (int k = 0; k < 10; ++k) model.covariances(b, k) = get_f32(is);
  }
  finalize_loaded(model);
  return model;
}

void save_gmm_json(const Gmm4& model, const std::string& path) {
  nlohmann::json j;
  const int m = model.components();
  j["weights"] = std::vector<double>(model.weights.data(),
                                     model.weights.data() + m);
  auto& means = j["means"] = nlohmann::json::array();
  for (int b = 0; b < m; ++b) {
    means.push_back({model.means(b, 0), model.means(b, 1), model.means(b, 2),
                     model.means(b, 3)});
  }
  auto& covs = j["covariances_packed"] = nlohmann::json::array();
  for (int b = 0; b < m; ++b) {
    std::vector<double> row(10);
    for (int k = 0; k < 10; ++k) row[k] = model.covariances(b, k);
    covs.push_back(row);
  }
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << j.dump(2) << "\n";
  if (!os) throw IoError("write failed for " + path);
}

Gmm4 load_gmm_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw GmmFormatError("malformed JSON in " + path + ": " + e.what());
  }
  if (!j.contains("weights") || !j.contains("means") ||
      !j.contains("covariances_packed")) {
    throw GmmFormatError("missing model fields in " + path);
  }
  const auto& w = j["weights"];
  const auto& mu = j["means"];
  const auto& cov = j["covariances_packed"];
  const size_t m = w.size();
  if (m == 0 || mu.size() != m || cov.size() != m) {
    throw GmmFormatError("inconsistent field sizes in " + path);
  }
  Gmm4 model;
  model.weights = VecX(m);
  model.means = MatX4(m, 4);
  model.covariances = MatX10(m, 10);
  try {
    for (size_t b = 0; b < m; ++b) {
      model.weights[b] = w[b].get<double>();
      if (mu[b].size() != 4 || cov[b].size() != 10) {
        throw GmmFormatError("bad row size in " + path);
      }
      for (int d = 0; d < 4; ++d) model.means(b, d) = mu[b][d].get<double>();
      for (int k = 0; k < 10; ++k) {
        model.covariances(b, k) = cov[b][k].get<double>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw GmmFormatError("malformed model data in " + path + ": " + e.what());
  }
  finalize_loaded(model);
  return model;
}

}  // namespace gmmscape
