#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sdr {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Dense n×n×n array, row-major in its three indices.
class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(int n) : n_(n), data_(static_cast<size_t>(n) * n * n, 0.0) {}

  int size() const { return n_; }
  double& operator()(int a, int b, int c) { return data_[(static_cast<size_t>(a) * n_ + b) * n_ + c]; }
  double operator()(int a, int b, int c) const { return data_[(static_cast<size_t>(a) * n_ + b) * n_ + c]; }
  const std::vector<double>& data() const { return data_; }

 private:
  int n_ = 0;
  std::vector<double> data_;
};

enum class ManifoldKind { flat, sphere2, landmarks };

std::string to_string(ManifoldKind kind);
ManifoldKind manifold_kind_from_string(const std::string& s);

struct ManifoldSpec {
  ManifoldKind kind = ManifoldKind::flat;
  int flat_dim = 2;        // flat only
  int num_landmarks = 0;   // landmarks only
  double kernel_sigma = 0; // landmarks only
};

inline constexpr double kSpherePoleMargin = 1e-3;
inline constexpr double kMaxCondition = 1e12;

// Riemannian manifold in a single chart with the Levi-Civita connection.
// All methods are const and free of shared mutable state.
class Manifold {
 public:
  virtual ~Manifold() = default;

  virtual ManifoldKind kind() const = 0;
  virtual ManifoldSpec spec() const = 0;
  int dim() const { return dim_; }
  int ambient_dim() const { return ambient_dim_; }

  // Throws invalid_argument when p is not a valid chart point.
  virtual void validate(const Vec& p) const;

  virtual Mat cometric(const Vec& p) const = 0;
  virtual Mat metric(const Vec& p) const = 0;
  // dg(i, j, l) = d g_jl / d p_i
  virtual Tensor3 metric_derivative(const Vec& p) const = 0;

  // Gamma(k, i, j) = Γ^k_ij assembled from metric() and metric_derivative().
  Tensor3 christoffel(const Vec& p) const;

  // Column j of the result is Γ^k_ab v^a u_j^b. Models override this with a
  // cheaper contraction when one exists.
  virtual Mat christoffel_contract(const Vec& p, const Vec& v, const Mat& u) const;

  // Returns g(p) * u without forming g when the model stores the cometric.
  virtual Mat lower(const Vec& p, const Mat& u) const;

  virtual Vec embed(const Vec& p) const = 0;
  virtual Mat embed_differential(const Vec& p) const = 0;
  // Chart coordinates of the point of M closest to an ambient vector.
  virtual Vec chart(const Vec& ambient) const = 0;

 protected:
  Manifold(int dim, int ambient_dim) : dim_(dim), ambient_dim_(ambient_dim) {}

 private:
  int dim_;
  int ambient_dim_;
};

class FlatSpace final : public Manifold {
 public:
  explicit FlatSpace(int dim);

  ManifoldKind kind() const override { return ManifoldKind::flat; }
  ManifoldSpec spec() const override;
  Mat cometric(const Vec& p) const override;
  Mat metric(const Vec& p) const override;
  Tensor3 metric_derivative(const Vec& p) const override;
  Mat christoffel_contract(const Vec& p, const Vec& v, const Mat& u) const override;
  Mat lower(const Vec& p, const Mat& u) const override;
  Vec embed(const Vec& p) const override;
  Mat embed_differential(const Vec& p) const override;
  Vec chart(const Vec& ambient) const override;
};

// Unit sphere in the chart (theta, phi); the poles are excluded.
class Sphere2 final : public Manifold {
 public:
  Sphere2();

  ManifoldKind kind() const override { return ManifoldKind::sphere2; }
  ManifoldSpec spec() const override;
  void validate(const Vec& p) const override;
  Mat cometric(const Vec& p) const override;
  Mat metric(const Vec& p) const override;
  Tensor3 metric_derivative(const Vec& p) const override;
  Vec embed(const Vec& p) const override;
  Mat embed_differential(const Vec& p) const override;
  Vec chart(const Vec& ambient) const override;
};

// Planar landmark configurations q = (x_1^1, x_1^2, ..., x_n^1, x_n^2) with
// the cometric given by the Gaussian kernel matrix K(x_i, x_j) I_2.
class LandmarkManifold final : public Manifold {
 public:
  LandmarkManifold(int num_landmarks, double kernel_sigma);

  ManifoldKind kind() const override { return ManifoldKind::landmarks; }
  ManifoldSpec spec() const override;
  int num_landmarks() const { return num_landmarks_; }
  double kernel_sigma() const { return sigma_; }

  Mat cometric(const Vec& p) const override;
  Mat metric(const Vec& p) const override;
  Tensor3 metric_derivative(const Vec& p) const override;
  Mat christoffel_contract(const Vec& p, const Vec& v, const Mat& u) const override;
  Mat lower(const Vec& p, const Mat& u) const override;
  Vec embed(const Vec& p) const override;
  Mat embed_differential(const Vec& p) const override;
  Vec chart(const Vec& ambient) const override;

  // Scalar kernel values k(x_a, x_b), n_l × n_l.
  Mat scalar_kernel(const Vec& p) const;

 private:
  // Cholesky factor of the scalar kernel matrix, with a conditioning check.
  Eigen::LLT<Mat> factor(const Mat& k) const;

  int num_landmarks_;
  double sigma_;
};

std::unique_ptr<Manifold> make_manifold(const ManifoldSpec& spec);

}  // namespace sdr
