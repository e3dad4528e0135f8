#include "petlab/io/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "petlab/errors.hpp"
#include "petlab/io/tensor_file.hpp"

namespace petlab::io {
namespace {

using nlohmann::json;

constexpr const char* kFormat = "petlab-checkpoint v1";

json network_json(const net::NetworkConfig& c) {
  return {{"n_p", c.n_p},
          {"n_c", c.n_c},
          {"base_channels", c.base_channels},
          {"n_slices", c.n_slices},
          {"skip_mode", net::to_string(c.skip_mode)},
          {"seed", c.seed}};
}

net::NetworkConfig network_from_json(const json& j) {
  net::NetworkConfig c;
  c.n_p = j.at("n_p").get<std::size_t>();
  c.n_c = j.at("n_c").get<std::size_t>();
  c.base_channels = j.at("base_channels").get<std::size_t>();
  c.n_slices = j.at("n_slices").get<std::size_t>();
  c.skip_mode = net::parse_skip_mode(j.at("skip_mode").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

} // namespace

void save_checkpoint(const std::filesystem::path& dir, net::Network& net, const CheckpointInfo& info) {
  std::filesystem::create_directories(dir);
  json params = json::array(), stats = json::array();
  for (const auto& p : net.parameters()) {
    const std::string file = p.name + ".tensor";
    write_tensor(dir / file, p.value);
    params.push_back({{"name", p.name}, {"file", file}, {"shape", p.value.shape()}});
  }
  for (const auto& [name, st] : net.batch_norm_states()) {
    if (!st->initialized) throw StateError("cannot checkpoint " + name + ": running statistics not initialised");
    const std::size_t c = st->running_mean.size();
    write_tensor_file(dir / (name + ".running_mean.tensor"), to_blob({c}, st->running_mean));
    write_tensor_file(dir / (name + ".running_var.tensor"), to_blob({c}, st->running_var));
    stats.push_back({{"name", name}, {"channels", c}, {"momentum", st->momentum}});
  }
  const json manifest{{"format", kFormat},
                      {"network", network_json(net.config())},
                      {"parameter_count", net.parameter_count()},
                      {"parameters", params},
                      {"batch_norm", stats},
                      {"fold", info.fold},
                      {"test_subject", info.test_subject},
                      {"drf", info.drf},
                      {"epochs_completed", info.epochs_completed},
                      {"config", info.config_ini}};
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) throw DataError("failed writing checkpoint manifest in " + dir.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError("no checkpoint manifest in " + dir.string());
  json m;
  try {
    in >> m;
    if (m.at("format") != kFormat) throw DataError(dir.string() + ": unsupported checkpoint format");
    LoadedCheckpoint ck{net::Network(network_from_json(m.at("network"))), {}};
    ck.info.fold = m.at("fold").get<std::size_t>();
    ck.info.test_subject = m.at("test_subject").get<std::string>();
    ck.info.drf = m.at("drf").get<double>();
    ck.info.epochs_completed = m.at("epochs_completed").get<std::size_t>();
    ck.info.config_ini = m.at("config").get<std::string>();

    auto params = ck.network.parameters();
    const auto& listed = m.at("parameters");
    if (listed.size() != params.size()) throw DataError(dir.string() + ": parameter list does not match network");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (listed[i].at("name") != params[i].name) {
        throw DataError(dir.string() + ": expected parameter " + params[i].name);
      }
      const auto t = read_tensor(dir / listed[i].at("file").get<std::string>());
      if (t.shape() != params[i].value.shape()) {
        throw DataError(dir.string() + ": shape mismatch for " + params[i].name + ": " +
                        tensor::shape_string(t.shape()) + " vs " + tensor::shape_string(params[i].value.shape()));
      }
      auto d = params[i].value.mutable_data();
      std::copy(t.data().begin(), t.data().end(), d.begin());
    }
    for (auto& [name, st] : ck.network.batch_norm_states()) {
      auto mean = blob_values<float>(read_tensor_file(dir / (name + ".running_mean.tensor")));
      auto var = blob_values<float>(read_tensor_file(dir / (name + ".running_var.tensor")));
      if (mean.size() != st->running_mean.size() || var.size() != st->running_var.size()) {
        throw DataError(dir.string() + ": batch-norm statistics of " + name + " do not match");
      }
      st->running_mean = std::move(mean);
      st->running_var = std::move(var);
      st->initialized = true;
    }
    return ck;
  } catch (const json::exception& e) {
    throw DataError(dir.string() + ": malformed checkpoint manifest: " + e.what());
  }
}

} // namespace petlab::io
