#include "unitst/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace unitst {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string unquote(std::string s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\''))) {
    s = s.substr(1, s.size() - 2);
  }
  return s;
}

std::string fmt_real(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double to_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("config: '" + key + "' expects a real, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: '" + key + "' expects a boolean, got '" + v + "'");
}

}  // namespace

void RunConfig::validate(bool require_data) const {
  model.validate();
  train.validate();
  if (seeds.empty()) throw ConfigError("config: seed list is empty");
  if (require_data) {
    if (data_path.empty()) throw ConfigError("config: no dataset path given (--data)");
    if (!std::filesystem::exists(data_path)) throw ConfigError("config: dataset '" + data_path + "' does not exist");
  }
}

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line, section;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(no) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(no) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    kv[key] = unquote(trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_uint("seeds", item));
  }
  if (out.empty()) throw ConfigError("config: empty seed list");
  return out;
}

void apply_key_values(RunConfig& c, const KeyValues& kv) {
  auto& m = c.model;
  auto& t = c.train;
  for (const auto& [key, v] : kv) {
    if (key == "data") c.data_path = v;
    else if (key == "date_column") c.date_column = v.empty() ? std::nullopt : std::optional<std::string>(v);
    else if (key == "split") {
      try {
        c.split = parse_split_spec(v);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: split: ") + e.what());
      }
    }
    else if (key == "protocol") c.protocol = parse_protocol(v);
    else if (key == "out_dir") c.out_dir = v;
    else if (key == "seeds") c.seeds = parse_seed_list(v);
    else if (key == "model.n_variates") m.n_variates = to_uint(key, v);
    else if (key == "model.lookback") m.lookback = to_uint(key, v);
    else if (key == "model.horizon") m.horizon = to_uint(key, v);
    else if (key == "model.patch_len") m.patch.patch_len = to_uint(key, v);
    else if (key == "model.stride") m.patch.stride = to_uint(key, v);
    else if (key == "model.pad_last") m.patch.pad_last = to_bool(key, v);
    else if (key == "model.d_model") m.d_model = to_uint(key, v);
    else if (key == "model.n_heads") m.n_heads = to_uint(key, v);
    else if (key == "model.dispatchers") m.n_dispatchers = to_uint(key, v);
    else if (key == "model.layers") m.n_layers = to_uint(key, v);
    else if (key == "model.d_ff") m.d_ff = to_uint(key, v);
    else if (key == "model.dropout") m.dropout = to_real(key, v);
    else if (key == "model.attention_mode") m.attention_mode = parse_attention_mode(v);
    else if (key == "model.instance_norm") m.instance_norm = to_bool(key, v);
    else if (key == "model.per_layer_dispatchers") m.per_layer_dispatchers = to_bool(key, v);
    else if (key == "model.within_variate_only") m.within_variate_only = to_bool(key, v);
    else if (key == "model.bn_eps") m.bn_eps = to_real(key, v);
    else if (key == "train.lr") t.lr = to_real(key, v);
    else if (key == "train.batch_size") t.batch_size = to_uint(key, v);
    else if (key == "train.max_epochs") t.max_epochs = to_uint(key, v);
    else if (key == "train.patience") t.patience = to_uint(key, v);
    else if (key == "train.seed") t.seed = to_uint(key, v);
    else if (key == "train.beta1") t.beta1 = to_real(key, v);
    else if (key == "train.beta2") t.beta2 = to_real(key, v);
    else if (key == "train.adam_eps") t.adam_eps = to_real(key, v);
    else if (key == "train.bn_momentum") t.bn_momentum = to_real(key, v);
    else if (key == "train.weight_decay") t.weight_decay = to_real(key, v);
    else if (key == "train.grad_clip_norm") t.grad_clip_norm = to_real(key, v);
    else if (key == "train.lr_decay") t.lr_decay = to_real(key, v);
    else if (key == "train.max_batches_per_epoch") t.max_batches_per_epoch = to_uint(key, v);
    else if (key == "train.eval_batch_size") t.eval_batch_size = to_uint(key, v);
    else throw ConfigError("config: unknown key '" + key + "'");
  }
}

KeyValues to_key_values(const RunConfig& c) {
  const auto& m = c.model;
  const auto& t = c.train;
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  std::string seeds;
  for (std::size_t i = 0; i < c.seeds.size(); ++i) seeds += (i ? "," : "") + std::to_string(c.seeds[i]);
  return {
      {"data", c.data_path},
      {"date_column", c.date_column.value_or("")},
      {"split", format_split_spec(c.split)},
      {"protocol", to_string(c.protocol)},
      {"out_dir", c.out_dir},
      {"seeds", seeds},
      {"model.n_variates", std::to_string(m.n_variates)},
      {"model.lookback", std::to_string(m.lookback)},
      {"model.horizon", std::to_string(m.horizon)},
      {"model.patch_len", std::to_string(m.patch.patch_len)},
      {"model.stride", std::to_string(m.patch.stride)},
      {"model.pad_last", b(m.patch.pad_last)},
      {"model.d_model", std::to_string(m.d_model)},
      {"model.n_heads", std::to_string(m.n_heads)},
      {"model.dispatchers", std::to_string(m.n_dispatchers)},
      {"model.layers", std::to_string(m.n_layers)},
      {"model.d_ff", std::to_string(m.d_ff)},
      {"model.dropout", fmt_real(m.dropout)},
      {"model.attention_mode", to_string(m.attention_mode)},
      {"model.instance_norm", b(m.instance_norm)},
      {"model.per_layer_dispatchers", b(m.per_layer_dispatchers)},
      {"model.within_variate_only", b(m.within_variate_only)},
      {"model.bn_eps", fmt_real(m.bn_eps)},
      {"train.lr", fmt_real(t.lr)},
      {"train.batch_size", std::to_string(t.batch_size)},
      {"train.max_epochs", std::to_string(t.max_epochs)},
      {"train.patience", std::to_string(t.patience)},
      {"train.seed", std::to_string(t.seed)},
      {"train.beta1", fmt_real(t.beta1)},
      {"train.beta2", fmt_real(t.beta2)},
      {"train.adam_eps", fmt_real(t.adam_eps)},
      {"train.bn_momentum", fmt_real(t.bn_momentum)},
      {"train.weight_decay", fmt_real(t.weight_decay)},
      {"train.grad_clip_norm", fmt_real(t.grad_clip_norm)},
      {"train.lr_decay", fmt_real(t.lr_decay)},
      {"train.max_batches_per_epoch", std::to_string(t.max_batches_per_epoch)},
      {"train.eval_batch_size", std::to_string(t.eval_batch_size)},
  };
}

std::string serialize(const RunConfig& cfg) {
  std::ostringstream os;
  for (const auto& [k, v] : to_key_values(cfg)) os << k << " = \"" << v << "\"\n";
  return os.str();
}

RunConfig deserialize(const std::string& text) {
  RunConfig c;
  apply_key_values(c, parse_key_values(text));
  return c;
}

std::string config_hash(const RunConfig& cfg) {
  RunConfig copy = cfg;
  copy.out_dir.clear();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : serialize(copy)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

nlohmann::json to_json(const ModelConfig& m) {
  return {{"n_variates", m.n_variates},
          {"lookback", m.lookback},
          {"horizon", m.horizon},
          {"patch_len", m.patch.patch_len},
          {"stride", m.patch.stride},
          {"pad_last", m.patch.pad_last},
          {"d_model", m.d_model},
          {"n_heads", m.n_heads},
          {"dispatchers", m.n_dispatchers},
          {"layers", m.n_layers},
          {"d_ff", m.d_ff},
          {"dropout", m.dropout},
          {"attention_mode", to_string(m.attention_mode)},
          {"capture_attention", m.capture_attention},
          {"instance_norm", m.instance_norm},
          {"per_layer_dispatchers", m.per_layer_dispatchers},
          {"within_variate_only", m.within_variate_only},
          {"bn_eps", m.bn_eps}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig m;
  m.n_variates = j.at("n_variates").get<std::size_t>();
  m.lookback = j.at("lookback").get<std::size_t>();
  m.horizon = j.at("horizon").get<std::size_t>();
  m.patch.patch_len = j.at("patch_len").get<std::size_t>();
  m.patch.stride = j.at("stride").get<std::size_t>();
  m.patch.pad_last = j.at("pad_last").get<bool>();
  m.d_model = j.at("d_model").get<std::size_t>();
  m.n_heads = j.at("n_heads").get<std::size_t>();
  m.n_dispatchers = j.at("dispatchers").get<std::size_t>();
  m.n_layers = j.at("layers").get<std::size_t>();
  m.d_ff = j.at("d_ff").get<std::size_t>();
  m.dropout = j.at("dropout").get<double>();
  m.attention_mode = parse_attention_mode(j.at("attention_mode").get<std::string>());
  m.capture_attention = j.at("capture_attention").get<bool>();
  m.instance_norm = j.at("instance_norm").get<bool>();
  m.per_layer_dispatchers = j.at("per_layer_dispatchers").get<bool>();
  m.within_variate_only = j.at("within_variate_only").get<bool>();
  m.bn_eps = j.at("bn_eps").get<double>();
  return m;
}

}  // namespace unitst
