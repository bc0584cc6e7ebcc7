#include "exitcde/field/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "exitcde/errors.hpp"
#include "exitcde/field/backend.hpp"

namespace exitcde::field {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kElu: return "elu";
  }
  return "unknown";
}

Activation parse_activation(const std::string& name) {
  if (name == "identity" || name == "none" || name == "fc") return Activation::kIdentity;
  if (name == "tanh" || name == "xi") return Activation::kTanh;
  if (name == "relu" || name == "rho") return Activation::kRelu;
  if (name == "sigmoid" || name == "sigma") return Activation::kSigmoid;
  if (name == "elu" || name == "epsilon") return Activation::kElu;
  throw ConfigError("unknown activation '" + name + "'");
}

const char* role_name(Role r) {
  switch (r) {
    case Role::kCdeK: return "cde_k";
    case Role::kCdeG: return "cde_g";
    case Role::kOdeF: return "ode_f";
    case Role::kMapperPhiZ: return "mapper_phi_z";
    case Role::kMapperPhiY: return "mapper_phi_Y";
    case Role::kOutputHead: return "output_head";
    case Role::kEncoderInit: return "encoder_init";
  }
  return "unknown";
}

bool is_cde_role(Role r) { return r == Role::kCdeK || r == Role::kCdeG; }

std::size_t FieldSpec::parameter_count() const {
  std::size_t n = 0, in = input_width;
  for (const auto& l : layers) {
    n += l.width * in + l.width;
    in = l.width;
  }
  return n;
}

void FieldSpec::validate() const {
  const std::string who = name.empty() ? role_name(role) : name;
  if (input_width == 0) throw ConfigError(who + ": input width must be positive");
  if (layers.empty()) throw ConfigError(who + ": at least one layer is required");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].width == 0) {
      throw ConfigError(who + ": layer " + std::to_string(i) + " has zero width");
    }
    const bool hidden = i + 1 < layers.size();
    if (hidden && std::find(allowed_hidden.begin(), allowed_hidden.end(), layers[i].activation) ==
                      allowed_hidden.end()) {
      throw ConfigError(who + ": layer " + std::to_string(i) + " activation '" +
                        activation_name(layers[i].activation) +
                        "' is outside the allowed Lipschitz set");
    }
  }
  if (is_cde_role(role)) {
    if (rows == 0 || cols == 0) throw ConfigError(who + ": CDE field needs a reshape spec");
    if (layers.back().width != rows * cols) {
      throw ConfigError(who + ": final layer width " + std::to_string(layers.back().width) +
                        " must equal " + std::to_string(rows) + " x " + std::to_string(cols));
    }
  }
}

std::string weight_name(const FieldSpec& spec, std::size_t layer) {
  return spec.name + "." + std::to_string(layer) + ".weight";
}

std::string bias_name(const FieldSpec& spec, std::size_t layer) {
  return spec.name + "." + std::to_string(layer) + ".bias";
}

namespace {

// FNV-1a; stable across standard libraries, unlike std::hash.
std::uint32_t name_hash(const std::string& s) {
  std::uint32_t h = 2166136261u;
  for (unsigned char c : s) {
    h ^= c;
    h *= 16777619u;
  }
  return h;
}

}  // namespace

void init_params(const FieldSpec& spec, std::uint64_t seed, ParameterSet& params) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    name_hash(spec.name)};
  std::mt19937_64 rng(seq);
  std::size_t fan_in = spec.input_width;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const std::size_t out = spec.layers[i].width;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    diff::NdArray w(diff::Shape{out, fan_in});
    for (double& v : w.values()) v = dist(rng);
    params.set(weight_name(spec, i), std::move(w));
    params.set(bias_name(spec, i), diff::NdArray(diff::Shape{out}));
    fan_in = out;
  }
}

diff::NdArray eval_field(const FieldSpec& spec, const ParameterSet& params,
                         std::span<const double> input) {
  PlainBackend backend;
  BoundField<PlainBackend> f(spec, params, backend);
  auto out = f(backend.constant(input));
  if (is_cde_role(spec.role)) return diff::NdArray(diff::Shape{spec.rows, spec.cols}, std::move(out));
  return diff::NdArray::vector(std::move(out));
}

std::vector<double> cde_dynamics(const FieldSpec& g, const ParameterSet& params,
                                 std::span<const double> z, std::span<const double> path_derivative) {
  if (path_derivative.size() != g.cols) {
    throw ShapeError(g.name + ": matrix has " + std::to_string(g.cols) +
                     " columns but the path derivative has " +
                     std::to_string(path_derivative.size()) + " entries");
  }
  PlainBackend backend;
  BoundField<PlainBackend> f(g, params, backend);
  return f.apply_matrix(backend.constant(z), backend.constant(path_derivative));
}

}  // namespace exitcde::field
