#ifndef EXREF_MODEL_HPP_
#define EXREF_MODEL_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "exref/corpus.hpp"

namespace exref {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// mlp:      p = softmax(W2 tanh(W1 mean(v) + b1) + b2)
// additive: p = mean_i softmax(W2 (W1 v_i + b1) + b2)
// The additive form averages per-token distributions, so occluding one
// token never changes the effect of occluding another.
enum class ModelMode { kMlp, kAdditive };

std::string_view mode_name(ModelMode m);
ModelMode parse_mode(std::string_view name);

struct ModelState {
  ModelMode mode = ModelMode::kMlp;
  Matrix W1;  // h x dim
  Vector b1;  // h
  Matrix W2;  // C x h
  Vector b2;  // C

  int dim() const { return static_cast<int>(W1.cols()); }
  int hidden() const { return static_cast<int>(W1.rows()); }
  int classes() const { return static_cast<int>(W2.rows()); }

  // Glorot-uniform weights, zero biases.
  static ModelState create(ModelMode mode, int dim, int hidden, int classes, std::uint64_t seed);
  ModelState zeros_like() const;

  std::size_t parameter_count() const;
  std::vector<double> flat() const;  // W1, b1, W2, b2, each row-major
  void set_flat(std::span<const double> values);
  void add_scaled(const ModelState& other, double scale);
  bool finite() const;
  bool same_shape(const ModelState& other) const;
};

// Token vectors of `x` as an n x dim matrix in 64-bit.
Matrix embed(const AnnotatedInstance& x, const EmbeddingTable& table);
Matrix embed_words(const std::vector<std::string>& words, const WordVectors& vectors);
// Rows inside any of `spans` replaced by `baseline`.
Matrix masked(const Matrix& X, std::span<const Span> spans, const Vector& baseline);
Vector to_vector(std::span<const float> v);

// Class probabilities for a token matrix. Throws DataError when X is empty.
Vector forward(const ModelState& model, const Matrix& X);
Vector forward(const ModelState& model, const AnnotatedInstance& x, const EmbeddingTable& table,
               std::span<const Span> mask = {});

// The single-vector network shared by both modes (tanh hidden for mlp,
// identity for additive).
Vector forward_single(const ModelState& model, const Vector& u);

// grads += d(g_p . p(X)) / dθ
void accumulate_prob_grad(const ModelState& model, const Matrix& X, const Vector& g_p, ModelState& grads);

// J = a . ∇_u p_c(u) for the single-vector network.
double directional_derivative(const ModelState& model, const Vector& u, const Vector& a, int c);
// grads += scale * dJ/dθ
void accumulate_directional_grad(const ModelState& model, const Vector& u, const Vector& a, int c,
                                 double scale, ModelState& grads);

int argmax(const Vector& p);

// "MODEL v1 <mode> <dim> <h> <C>\n" then little-endian float32 W1, b1, W2, b2.
std::string checkpoint_bytes(const ModelState& model);
ModelState parse_checkpoint(std::string_view bytes, const std::string& source_name = "<memory>");
void save_checkpoint(const ModelState& model, const std::string& path);
ModelState load_checkpoint(const std::string& path);

}  // namespace exref

#endif  // EXREF_MODEL_HPP_
