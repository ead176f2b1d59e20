#include "exref/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "exref/error.hpp"
#include "exref/io_util.hpp"

namespace exref {

std::string_view mode_name(ModelMode m) { return m == ModelMode::kMlp ? "mlp" : "additive"; }

ModelMode parse_mode(std::string_view name) {
  if (name == "mlp") return ModelMode::kMlp;
  if (name == "additive") return ModelMode::kAdditive;
  throw DataError("unknown model mode '" + std::string(name) + "' (expected mlp or additive)");
}

ModelState ModelState::create(ModelMode mode, int dim, int hidden, int classes, std::uint64_t seed) {
  if (dim <= 0 || hidden <= 0 || classes < 2) throw DataError("model needs dim, hidden > 0 and at least 2 classes");
  ModelState m;
  m.mode = mode;
  m.W1.resize(hidden, dim);
  m.b1 = Vector::Zero(hidden);
  m.W2.resize(classes, hidden);
  m.b2 = Vector::Zero(classes);
  std::mt19937_64 rng(seed);
  auto fill = [&](Matrix& W) {
    const double r = std::sqrt(6.0 / static_cast<double>(W.rows() + W.cols()));
    std::uniform_real_distribution<double> u(-r, r);
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = u(rng);
    }
  };
  fill(m.W1);
  fill(m.W2);
  return m;
}

ModelState ModelState::zeros_like() const {
  ModelState z;
  z.mode = mode;
  z.W1 = Matrix::Zero(W1.rows(), W1.cols());
  z.b1 = Vector::Zero(b1.size());
  z.W2 = Matrix::Zero(W2.rows(), W2.cols());
  z.b2 = Vector::Zero(b2.size());
  return z;
}

std::size_t ModelState::parameter_count() const {
  return static_cast<std::size_t>(W1.size() + b1.size() + W2.size() + b2.size());
}

std::vector<double> ModelState::flat() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (Eigen::Index i = 0; i < W1.rows(); ++i) {
    for (Eigen::Index j = 0; j < W1.cols(); ++j) out.push_back(W1(i, j));
  }
  for (Eigen::Index i = 0; i < b1.size(); ++i) out.push_back(b1(i));
  for (Eigen::Index i = 0; i < W2.rows(); ++i) {
    for (Eigen::Index j = 0; j < W2.cols(); ++j) out.push_back(W2(i, j));
  }
  for (Eigen::Index i = 0; i < b2.size(); ++i) out.push_back(b2(i));
  return out;
}

void ModelState::set_flat(std::span<const double> v) {
  if (v.size() != parameter_count()) throw DataError("parameter vector has the wrong length");
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < W1.rows(); ++i) {
    for (Eigen::Index j = 0; j < W1.cols(); ++j) W1(i, j) = v[k++];
  }
  for (Eigen::Index i = 0; i < b1.size(); ++i) b1(i) = v[k++];
  for (Eigen::Index i = 0; i < W2.rows(); ++i) {
    for (Eigen::Index j = 0; j < W2.cols(); ++j) W2(i, j) = v[k++];
  }
  for (Eigen::Index i = 0; i < b2.size(); ++i) b2(i) = v[k++];
}

void ModelState::add_scaled(const ModelState& o, double s) {
  W1 += s * o.W1;
  b1 += s * o.b1;
  W2 += s * o.W2;
  b2 += s * o.b2;
}

bool ModelState::finite() const {
  return W1.allFinite() && b1.allFinite() && W2.allFinite() && b2.allFinite();
}

bool ModelState::same_shape(const ModelState& o) const {
  return mode == o.mode && W1.rows() == o.W1.rows() && W1.cols() == o.W1.cols() && W2.rows() == o.W2.rows() &&
         W2.cols() == o.W2.cols() && b1.size() == o.b1.size() && b2.size() == o.b2.size();
}

// ---- inputs ------------------------------------------------------------------

Vector to_vector(std::span<const float> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

Matrix embed(const AnnotatedInstance& x, const EmbeddingTable& table) {
  Matrix X(x.size(), table.dim());
  for (int i = 0; i < x.size(); ++i) {
    const auto row = table.row(x.id, i);
    for (int k = 0; k < table.dim(); ++k) X(i, k) = row[k];
  }
  return X;
}

Matrix embed_words(const std::vector<std::string>& words, const WordVectors& vectors) {
  Matrix X(static_cast<Eigen::Index>(words.size()), vectors.dim());
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto v = vectors.lookup(words[i]);
    for (int k = 0; k < vectors.dim(); ++k) X(static_cast<Eigen::Index>(i), k) = v[k];
  }
  return X;
}

Matrix masked(const Matrix& X, std::span<const Span> spans, const Vector& baseline) {
  Matrix out = X;
  for (const auto& s : spans) {
    if (s.begin < 0 || s.end > X.rows() || s.empty()) throw DataError("mask span out of range");
    for (int i = s.begin; i < s.end; ++i) out.row(i) = baseline.transpose();
  }
  return out;
}

// ---- forward / backward --------------------------------------------------------

namespace {

Vector softmax(const Vector& l) {
  const double m = l.maxCoeff();
  Vector e = (l.array() - m).exp().matrix();
  return e / e.sum();
}

struct SingleCache {
  Vector z, h, l, p;
};

SingleCache run_single(const ModelState& m, const Vector& u) {
  SingleCache c;
  c.z = m.W1 * u + m.b1;
  c.h = m.mode == ModelMode::kMlp ? Vector(c.z.array().tanh().matrix()) : c.z;
  c.l = m.W2 * c.h + m.b2;
  c.p = softmax(c.l);
  return c;
}

// act'(z) expressed through h.
Vector act_slope(const ModelState& m, const Vector& h) {
  if (m.mode == ModelMode::kMlp) return (1.0 - h.array().square()).matrix();
  return Vector::Ones(h.size());
}

void check_input(const ModelState& m, const Matrix& X) {
  if (X.rows() == 0) throw DataError("cannot classify an empty sentence");
  if (X.cols() != m.dim()) throw DataError("embedding dim does not match the model");
}

void backward_single(const ModelState& m, const Vector& u, const SingleCache& c, const Vector& g_p,
                     double scale, ModelState& g) {
  const Vector g_l = scale * (c.p.array() * (g_p.array() - c.p.dot(g_p))).matrix();
  g.W2.noalias() += g_l * c.h.transpose();
  g.b2 += g_l;
  const Vector g_z = (act_slope(m, c.h).array() * (m.W2.transpose() * g_l).array()).matrix();
  g.W1.noalias() += g_z * u.transpose();
  g.b1 += g_z;
}

}  // namespace

Vector forward_single(const ModelState& model, const Vector& u) { return run_single(model, u).p; }

Vector forward(const ModelState& model, const Matrix& X) {
  check_input(model, X);
  if (model.mode == ModelMode::kMlp) {
    const Vector u = X.colwise().mean().transpose();
    return run_single(model, u).p;
  }
  Vector p = Vector::Zero(model.classes());
  for (Eigen::Index i = 0; i < X.rows(); ++i) p += run_single(model, X.row(i).transpose()).p;
  return p / static_cast<double>(X.rows());
}

Vector forward(const ModelState& model, const AnnotatedInstance& x, const EmbeddingTable& table,
               std::span<const Span> mask) {
  Matrix X = embed(x, table);
  if (!mask.empty()) X = masked(X, mask, to_vector(table.baseline()));
  return forward(model, X);
}

void accumulate_prob_grad(const ModelState& model, const Matrix& X, const Vector& g_p, ModelState& grads) {
  check_input(model, X);
  if (model.mode == ModelMode::kMlp) {
    const Vector u = X.colwise().mean().transpose();
    backward_single(model, u, run_single(model, u), g_p, 1.0, grads);
    return;
  }
  const double scale = 1.0 / static_cast<double>(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Vector u = X.row(i).transpose();
    backward_single(model, u, run_single(model, u), g_p, scale, grads);
  }
}

double directional_derivative(const ModelState& model, const Vector& u, const Vector& a, int c) {
  const SingleCache k = run_single(model, u);
  const Vector h_dot = (act_slope(model, k.h).array() * (model.W1 * a).array()).matrix();
  const Vector l_dot = model.W2 * h_dot;
  return k.p(c) * (l_dot(c) - k.p.dot(l_dot));
}

void accumulate_directional_grad(const ModelState& model, const Vector& u, const Vector& a, int c,
                                 double scale, ModelState& g) {
  const SingleCache k = run_single(model, u);
  const Vector slope = act_slope(model, k.h);
  const Vector z_dot = model.W1 * a;
  const Vector h_dot = (slope.array() * z_dot.array()).matrix();
  const Vector l_dot = model.W2 * h_dot;
  const double pc = k.p(c);
  const double mean_l_dot = k.p.dot(l_dot);

  Vector g_l_dot = -pc * k.p;
  g_l_dot(c) += pc;
  g_l_dot *= scale;

  Vector g_p = -pc * l_dot;
  g_p(c) += l_dot(c) - mean_l_dot;
  g_p *= scale;
  const Vector g_l = (k.p.array() * (g_p.array() - k.p.dot(g_p))).matrix();

  g.W2.noalias() += g_l_dot * h_dot.transpose() + g_l * k.h.transpose();
  g.b2 += g_l;

  const Vector g_h_dot = model.W2.transpose() * g_l_dot;
  const Vector g_z_dot = (slope.array() * g_h_dot.array()).matrix();
  Vector g_h = model.W2.transpose() * g_l;
  if (model.mode == ModelMode::kMlp) g_h.array() -= 2.0 * k.h.array() * z_dot.array() * g_h_dot.array();
  const Vector g_z = (slope.array() * g_h.array()).matrix();

  g.W1.noalias() += g_z_dot * a.transpose() + g_z * u.transpose();
  g.b1 += g_z;
}

int argmax(const Vector& p) {
  Eigen::Index best = 0;
  p.maxCoeff(&best);
  return static_cast<int>(best);
}

// ---- checkpoints ---------------------------------------------------------------

namespace {

void put_float(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

float get_float(std::string_view in, std::size_t at) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + b])) << (8 * b);
  return std::bit_cast<float>(bits);
}

}  // namespace

std::string checkpoint_bytes(const ModelState& m) {
  std::ostringstream header;
  header << "MODEL v1 " << mode_name(m.mode) << ' ' << m.dim() << ' ' << m.hidden() << ' ' << m.classes() << '\n';
  std::string out = header.str();
  for (double v : m.flat()) put_float(out, v);
  return out;
}

ModelState parse_checkpoint(std::string_view bytes, const std::string& source_name) {
  const auto nl = bytes.find('\n');
  if (nl == std::string_view::npos) throw DataError(source_name + ": missing checkpoint header");
  std::istringstream header{std::string(bytes.substr(0, nl))};
  std::string magic, version, mode;
  int dim = 0, hidden = 0, classes = 0;
  if (!(header >> magic >> version >> mode >> dim >> hidden >> classes) || magic != "MODEL") {
    throw DataError(source_name + ": malformed checkpoint header");
  }
  if (version != "v1") throw DataError(source_name + ": unsupported checkpoint version " + version);
  ModelState m = ModelState::create(parse_mode(mode), dim, hidden, classes, 0);
  const std::size_t n = m.parameter_count();
  if (bytes.size() - nl - 1 != 4 * n) {
    throw DataError(source_name + ": expected " + std::to_string(4 * n) + " parameter bytes, found " +
                    std::to_string(bytes.size() - nl - 1));
  }
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = get_float(bytes, nl + 1 + 4 * i);
  m.set_flat(values);
  if (!m.finite()) throw DataError(source_name + ": checkpoint holds non-finite parameters");
  return m;
}

void save_checkpoint(const ModelState& model, const std::string& path) { write_file(path, checkpoint_bytes(model)); }

ModelState load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path), path); }

}  // namespace exref
