#include "exitcde/model/architecture.hpp"

#include <charconv>
#include <functional>
#include <sstream>

#include "exitcde/errors.hpp"

namespace exitcde::model {

const char* task_name(Task t) {
  return t == Task::kClassification ? "classification" : "forecasting";
}

Task parse_task(const std::string& name) {
  if (name == "classification") return Task::kClassification;
  if (name == "forecasting") return Task::kForecasting;
  throw ConfigError("unknown task '" + name + "' (expected classification or forecasting)");
}

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::kExit: return "exit";
    case Mode::kTerminalExit: return "terminal_exit";
    case Mode::kFixedExit: return "fixed_exit";
  }
  return "unknown";
}

const char* mode_label(Mode m) {
  switch (m) {
    case Mode::kExit: return "EXIT";
    case Mode::kTerminalExit: return "Terminal-EXIT";
    case Mode::kFixedExit: return "Fixed-EXIT";
  }
  return "unknown";
}

Mode parse_mode(const std::string& name) {
  if (name == "exit") return Mode::kExit;
  if (name == "terminal_exit") return Mode::kTerminalExit;
  if (name == "fixed_exit") return Mode::kFixedExit;
  throw ConfigError("unknown mode '" + name + "' (expected exit, terminal_exit, fixed_exit)");
}

std::size_t Architecture::path_dim() const {
  return input_channels * (observation_intensity ? 2 : 1) + (append_time ? 1 : 0);
}

void Architecture::validate() const {
  if (input_channels == 0) throw ConfigError("model.input_channels must be positive");
  if (encoder_dim == 0) throw ConfigError("model.encoder_dim must be positive");
  if (latent_dim == 0) throw ConfigError("model.latent_dim must be positive");
  if (hidden_dim == 0) throw ConfigError("model.hidden_dim must be positive");
  if (readouts == 0) throw ConfigError("model.readouts must be positive");
  if (output_dim == 0) throw ConfigError("model.output_dim must be positive");
  if (task == Task::kForecasting && (horizon == 0 || output_dim % horizon != 0)) {
    throw ConfigError("model.output_dim must be a positive multiple of model.horizon for forecasting");
  }
  if (task == Task::kClassification && output_dim < 2) {
    throw ConfigError("model.output_dim must be at least 2 classes for classification");
  }
  const FieldSpecs fields = build_fields(*this);
  for (const auto* spec : fields.all()) spec->validate();
}

std::vector<const field::FieldSpec*> FieldSpecs::all() const {
  return {&k, &g, &f, &phi_z, &phi_y, &output, &e0};
}

namespace {

field::FieldSpec make_spec(field::Role role, std::string name, std::size_t in,
                           std::vector<field::LayerSpec> hidden, std::size_t out,
                           field::Activation final_act, const Architecture& arch) {
  field::FieldSpec s;
  s.role = role;
  s.name = std::move(name);
  s.input_width = in;
  s.layers = std::move(hidden);
  s.layers.push_back({out, final_act});
  s.allowed_hidden = arch.allowed_hidden;
  return s;
}

}  // namespace

FieldSpecs build_fields(const Architecture& arch) {
  using field::Activation;
  using field::Role;
  FieldSpecs fs;
  const std::size_t p = arch.path_dim();
  fs.k = make_spec(Role::kCdeK, "k", arch.encoder_dim, arch.k_layers, arch.encoder_dim * p,
                   arch.k_final, arch);
  fs.k.rows = arch.encoder_dim;
  fs.k.cols = p;
  fs.g = make_spec(Role::kCdeG, "g", arch.hidden_dim, arch.g_layers,
                   arch.hidden_dim * arch.latent_dim, arch.g_final, arch);
  fs.g.rows = arch.hidden_dim;
  fs.g.cols = arch.latent_dim;
  fs.f = make_spec(Role::kOdeF, "f", arch.latent_dim + 1, arch.f_layers, arch.latent_dim,
                   arch.f_final, arch);
  fs.phi_z = make_spec(Role::kMapperPhiZ, "phi_z", p, arch.phi_z_layers, arch.hidden_dim,
                       Activation::kIdentity, arch);
  fs.phi_y = make_spec(Role::kMapperPhiY, "phi_Y", arch.readouts * arch.encoder_dim,
                       arch.phi_y_layers, arch.latent_dim, Activation::kIdentity, arch);
  fs.output = make_spec(Role::kOutputHead, "output", arch.hidden_dim, arch.output_layers,
                        arch.output_dim, Activation::kIdentity, arch);
  fs.e0 = make_spec(Role::kEncoderInit, "e0", p, {}, arch.encoder_dim, Activation::kIdentity, arch);
  return fs;
}

std::vector<field::LayerSpec> parse_layers(const std::string& text) {
  std::vector<field::LayerSpec> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    item = item.substr(b, item.find_last_not_of(" \t") - b + 1);
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("layer '" + item + "' must be written width:activation");
    }
    field::LayerSpec l;
    try {
      l.width = std::stoul(item.substr(0, colon));
    } catch (const std::exception&) {
      throw ConfigError("layer '" + item + "' has a non-numeric width");
    }
    l.activation = field::parse_activation(item.substr(colon + 1));
    out.push_back(l);
  }
  return out;
}

std::string format_layers(const std::vector<field::LayerSpec>& layers) {
  std::string out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(layers[i].width) + ":" + field::activation_name(layers[i].activation);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& text, const std::string& key) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto r = std::from_chars(text.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) {
    throw ConfigError(key + ": '" + text + "' is not a number");
  }
  return v;
}

std::size_t parse_size(const std::string& text, const std::string& key) {
  std::size_t v = 0;
  const auto* end = text.data() + text.size();
  const auto r = std::from_chars(text.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) {
    throw ConfigError(key + ": '" + text + "' is not a non-negative integer");
  }
  return v;
}

bool parse_bool(const std::string& text, const std::string& key) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(key + ": '" + text + "' is not a boolean");
}

namespace {

std::string format_activations(const std::vector<field::Activation>& acts) {
  std::string out;
  for (std::size_t i = 0; i < acts.size(); ++i) {
    if (i) out += ",";
    out += field::activation_name(acts[i]);
  }
  return out;
}

std::vector<field::Activation> parse_activations(const std::string& text) {
  std::vector<field::Activation> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(field::parse_activation(item.substr(b, item.find_last_not_of(" \t") - b + 1)));
  }
  return out;
}

using Setter = std::function<void(const std::string&, const std::string&)>;

void apply(const KeyValues& kv, const std::string& section, const std::map<std::string, Setter>& setters) {
  for (const auto& [key, value] : kv) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(section + "." + key + ": unknown key");
    try {
      it->second(value, section + "." + key);
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      if (msg.rfind(section + ".", 0) == 0) throw;
      throw ConfigError(section + "." + key + ": " + msg);
    }
  }
}

}  // namespace

KeyValues architecture_entries(const Architecture& a) {
  return {
      {"task", task_name(a.task)},
      {"input_channels", std::to_string(a.input_channels)},
      {"append_time", a.append_time ? "true" : "false"},
      {"observation_intensity", a.observation_intensity ? "true" : "false"},
      {"encoder_dim", std::to_string(a.encoder_dim)},
      {"latent_dim", std::to_string(a.latent_dim)},
      {"hidden_dim", std::to_string(a.hidden_dim)},
      {"readouts", std::to_string(a.readouts)},
      {"output_dim", std::to_string(a.output_dim)},
      {"horizon", std::to_string(a.horizon)},
      {"k_layers", format_layers(a.k_layers)},
      {"g_layers", format_layers(a.g_layers)},
      {"f_layers", format_layers(a.f_layers)},
      {"phi_z_layers", format_layers(a.phi_z_layers)},
      {"phi_y_layers", format_layers(a.phi_y_layers)},
      {"output_layers", format_layers(a.output_layers)},
      {"k_final", field::activation_name(a.k_final)},
      {"g_final", field::activation_name(a.g_final)},
      {"f_final", field::activation_name(a.f_final)},
      {"allowed_hidden", format_activations(a.allowed_hidden)},
  };
}

Architecture architecture_from(const KeyValues& kv, const std::string& section) {
  Architecture a;
  auto size = [](std::size_t& dst) {
    return [&dst](const std::string& v, const std::string& k) { dst = parse_size(v, k); };
  };
  auto layers = [](std::vector<field::LayerSpec>& dst) {
    return [&dst](const std::string& v, const std::string&) { dst = parse_layers(v); };
  };
  auto act = [](field::Activation& dst) {
    return [&dst](const std::string& v, const std::string&) { dst = field::parse_activation(v); };
  };
  const std::map<std::string, Setter> setters{
      {"task", [&](const std::string& v, const std::string&) { a.task = parse_task(v); }},
      {"input_channels", size(a.input_channels)},
      {"append_time", [&](const std::string& v, const std::string& k) { a.append_time = parse_bool(v, k); }},
      {"observation_intensity",
       [&](const std::string& v, const std::string& k) { a.observation_intensity = parse_bool(v, k); }},
      {"encoder_dim", size(a.encoder_dim)},
      {"latent_dim", size(a.latent_dim)},
      {"hidden_dim", size(a.hidden_dim)},
      {"readouts", size(a.readouts)},
      {"output_dim", size(a.output_dim)},
      {"horizon", size(a.horizon)},
      {"k_layers", layers(a.k_layers)},
      {"g_layers", layers(a.g_layers)},
      {"f_layers", layers(a.f_layers)},
      {"phi_z_layers", layers(a.phi_z_layers)},
      {"phi_y_layers", layers(a.phi_y_layers)},
      {"output_layers", layers(a.output_layers)},
      {"k_final", act(a.k_final)},
      {"g_final", act(a.g_final)},
      {"f_final", act(a.f_final)},
      {"allowed_hidden",
       [&](const std::string& v, const std::string&) { a.allowed_hidden = parse_activations(v); }},
  };
  apply(kv, section, setters);
  return a;
}

KeyValues solver_entries(const solve::SolverConfig& c) {
  return {
      {"method", solve::method_name(c.method)},
      {"step", format_double(c.step)},
      {"rtol", format_double(c.rtol)},
      {"atol", format_double(c.atol)},
      {"max_steps", std::to_string(c.max_steps)},
  };
}

solve::SolverConfig solver_from(const KeyValues& kv, const std::string& section) {
  solve::SolverConfig c;
  const std::map<std::string, Setter> setters{
      {"method", [&](const std::string& v, const std::string&) { c.method = solve::parse_method(v); }},
      {"step", [&](const std::string& v, const std::string& k) { c.step = parse_double(v, k); }},
      {"rtol", [&](const std::string& v, const std::string& k) { c.rtol = parse_double(v, k); }},
      {"atol", [&](const std::string& v, const std::string& k) { c.atol = parse_double(v, k); }},
      {"max_steps", [&](const std::string& v, const std::string& k) { c.max_steps = parse_size(v, k); }},
  };
  apply(kv, section, setters);
  return c;
}

}  // namespace exitcde::model
