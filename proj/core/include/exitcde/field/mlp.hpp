#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "exitcde/diff/ndarray.hpp"
#include "exitcde/field/params.hpp"

namespace exitcde::field {

enum class Activation { kIdentity, kTanh, kRelu, kSigmoid, kElu };

const char* activation_name(Activation a);
// Accepts names (tanh, relu, sigmoid, elu, identity/none/fc) and the table
// glyphs xi, rho, sigma, epsilon.
Activation parse_activation(const std::string& name);

enum class Role { kCdeK, kCdeG, kOdeF, kMapperPhiZ, kMapperPhiY, kOutputHead, kEncoderInit };

const char* role_name(Role r);
bool is_cde_role(Role r);

struct LayerSpec {
  std::size_t width = 0;
  Activation activation = Activation::kIdentity;
};

// Architecture of one fully connected stack. The last entry of `layers` is the
// output layer. CDE roles reshape the output into a rows x cols matrix.
struct FieldSpec {
  Role role = Role::kOutputHead;
  std::string name;
  std::size_t input_width = 0;
  std::vector<LayerSpec> layers;
  std::size_t rows = 0;
  std::size_t cols = 0;
  // Hidden activations allowed by the Lipschitz policy.
  std::vector<Activation> allowed_hidden{Activation::kIdentity, Activation::kTanh,
                                         Activation::kRelu};

  std::size_t output_width() const { return layers.empty() ? input_width : layers.back().width; }
  std::size_t parameter_count() const;

  // Throws ConfigError naming the offending layer.
  void validate() const;
};

// Adds "<name>.<i>.weight" ([out, in], uniform in +-1/sqrt(fan_in)) and
// "<name>.<i>.bias" (zeros) for each layer. Deterministic in (seed, name).
void init_params(const FieldSpec& spec, std::uint64_t seed, ParameterSet& params);

std::string weight_name(const FieldSpec& spec, std::size_t layer);
std::string bias_name(const FieldSpec& spec, std::size_t layer);

// Tape-free evaluation. CDE roles return a [rows, cols] matrix, other roles a
// vector. ode_f callers pass the state with t already appended.
diff::NdArray eval_field(const FieldSpec& spec, const ParameterSet& params,
                         std::span<const double> input);

// g(z) dX/dt: the CDE field's matrix output applied to the path derivative.
std::vector<double> cde_dynamics(const FieldSpec& g, const ParameterSet& params,
                                 std::span<const double> z, std::span<const double> path_derivative);

}  // namespace exitcde::field
