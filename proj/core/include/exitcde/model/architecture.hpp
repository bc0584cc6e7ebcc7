#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "exitcde/field/mlp.hpp"
#include "exitcde/solve/solver.hpp"

namespace exitcde::model {

enum class Task { kClassification, kForecasting };

const char* task_name(Task t);
Task parse_task(const std::string& name);

// Which integration bounds are trainable.
enum class Mode {
  kExit,          // both tau_start and tau_end learned
  kTerminalExit,  // tau_start pinned to 0
  kFixedExit,     // bounds pinned to (0, T)
};

const char* mode_name(Mode m);
const char* mode_label(Mode m);  // "EXIT", "Terminal-EXIT", "Fixed-EXIT"
Mode parse_mode(const std::string& name);

// Dimensions and layer stacks of every network in the model. The `*_layers`
// lists hold hidden layers only; each field's output layer is derived from the
// dimensions below.
struct Architecture {
  Task task = Task::kClassification;
  std::size_t input_channels = 1;
  bool append_time = true;
  bool observation_intensity = false;

  std::size_t encoder_dim = 8;  // e(t)
  std::size_t latent_dim = 4;   // Y(t)
  std::size_t hidden_dim = 8;   // z(t)
  std::size_t readouts = 10;    // encoder readouts concatenated into phi_Y
  std::size_t output_dim = 2;   // classes, or horizon x channels
  std::size_t horizon = 0;      // forecasting steps

  std::vector<field::LayerSpec> k_layers{{16, field::Activation::kRelu}};
  std::vector<field::LayerSpec> g_layers{{16, field::Activation::kRelu}};
  std::vector<field::LayerSpec> f_layers{{16, field::Activation::kRelu}};
  std::vector<field::LayerSpec> phi_z_layers;
  std::vector<field::LayerSpec> phi_y_layers;
  std::vector<field::LayerSpec> output_layers;

  field::Activation k_final = field::Activation::kTanh;
  field::Activation g_final = field::Activation::kTanh;
  field::Activation f_final = field::Activation::kTanh;

  std::vector<field::Activation> allowed_hidden{field::Activation::kIdentity,
                                                field::Activation::kTanh, field::Activation::kRelu};

  // Channels of the control path X: data, optional intensity, optional time.
  std::size_t path_dim() const;
  void validate() const;
};

struct FieldSpecs {
  field::FieldSpec k;       // encoder CDE, encoder_dim x path_dim
  field::FieldSpec g;       // main CDE, hidden_dim x latent_dim
  field::FieldSpec f;       // decoder ODE over [Y; t]
  field::FieldSpec phi_z;   // X(tau_start) -> z
  field::FieldSpec phi_y;   // concatenated readouts -> Y
  field::FieldSpec output;  // z(tau_end) -> prediction
  field::FieldSpec e0;      // X(0) -> e(0), single linear layer

  std::vector<const field::FieldSpec*> all() const;
};

FieldSpecs build_fields(const Architecture& arch);

// Parses "16:relu,16:relu" into hidden layers; empty string means none.
std::vector<field::LayerSpec> parse_layers(const std::string& text);
std::string format_layers(const std::vector<field::LayerSpec>& layers);

// Flat key/value form shared by config files and checkpoints. Writers emit
// every key; readers start from defaults and reject unknown keys.
using KeyValues = std::map<std::string, std::string>;

KeyValues architecture_entries(const Architecture& arch);
Architecture architecture_from(const KeyValues& kv, const std::string& section = "model");

KeyValues solver_entries(const solve::SolverConfig& cfg);
solve::SolverConfig solver_from(const KeyValues& kv, const std::string& section = "solver");

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& text, const std::string& key);
std::size_t parse_size(const std::string& text, const std::string& key);
bool parse_bool(const std::string& text, const std::string& key);

}  // namespace exitcde::model
