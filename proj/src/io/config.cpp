#include "petlab/io/config.hpp"

#include <fstream>
#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/lexical_cast.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "petlab/errors.hpp"

namespace petlab::io {
namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"phantom", {"n_subjects", "depth", "height", "width", "n_lesions", "seed"}},
      {"acquisition", {"n_angles", "n_bins", "total_counts", "seed"}},
      {"dose", {"drf", "fractions"}},
      {"recon", {"n_subsets", "n_iterations", "init_value"}},
      {"network", {"n_p", "n_c", "base_channels", "n_slices", "skip_mode", "seed"}},
      {"train",
       {"epochs", "lr_start", "lr_end", "batch_size", "loss", "msssim_levels", "augment", "rho", "epsilon", "seed",
        "validate_every", "drf"}},
      {"paths", {"dataset", "output"}},
  };
  return keys;
}

template <typename T>
T convert(const std::string& key, const std::string& raw) {
  const auto text = boost::trim_copy(raw);
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      throw boost::bad_lexical_cast();
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!text.empty() && text.front() == '-') throw boost::bad_lexical_cast();
      return boost::lexical_cast<T>(text);
    } else {
      return boost::lexical_cast<T>(text);
    }
  } catch (const boost::bad_lexical_cast&) {
    throw ConfigError(key + ": cannot parse '" + text + "'");
  }
}

std::vector<double> convert_list(const std::string& key, const std::string& raw) {
  std::vector<std::string> parts;
  boost::split(parts, raw, boost::is_any_of(", "), boost::token_compress_on);
  std::vector<double> out;
  for (const auto& p : parts)
    if (!boost::trim_copy(p).empty()) out.push_back(convert<double>(key, p));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

// Reads `section.key` into `target` when present.
class Reader {
public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  template <typename T>
  void get(const std::string& path, T& target) const {
    if (auto v = tree_.get_optional<std::string>(pt::ptree::path_type(path, '.'))) target = convert<T>(path, *v);
  }
  std::optional<std::string> raw(const std::string& path) const {
    auto v = tree_.get_optional<std::string>(pt::ptree::path_type(path, '.'));
    return v ? std::optional<std::string>(boost::trim_copy(*v)) : std::nullopt;
  }

private:
  const pt::ptree& tree_;
};

void check_keys(const pt::ptree& tree, const std::string& source) {
  for (const auto& [section, body] : tree) {
    const auto it = schema().find(section);
    if (it == schema().end()) throw ConfigError(source + ": unknown section [" + section + "]");
    if (body.empty() && !body.data().empty()) throw ConfigError(source + ": key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) throw ConfigError(source + ": unknown key " + section + "." + key);
    }
  }
}

std::string list_text(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt::format("{}", v[i]);
  return s;
}

} // namespace

void ExperimentConfig::validate() const {
  if (phantom.n_subjects < 2) throw ConfigError("phantom.n_subjects must be at least 2");
  if (phantom.height != phantom.width) throw ConfigError("phantom.height and phantom.width must be equal");
  if (phantom.depth < 7) throw ConfigError("phantom.depth must be at least 7");
  acquisition.validate(phantom.height);
  if (drfs.empty()) throw ConfigError("dose.drf must list at least one value");
  for (double d : drfs) {
    if (!(d >= 1.0)) throw ConfigError("dose.drf: dose reduction factor must be >= 1, got " + fmt::format("{}", d));
  }
  recon.validate(acquisition.n_angles);
  network.validate();
  train.validate();
  if (std::find(drfs.begin(), drfs.end(), train_drf) == drfs.end()) {
    throw ConfigError("train.drf = " + fmt::format("{}", train_drf) + " is not among dose.drf");
  }
}

std::string ExperimentConfig::to_ini() const {
  std::ostringstream os;
  os << "[phantom]\n"
     << "n_subjects = " << phantom.n_subjects << "\ndepth = " << phantom.depth << "\nheight = " << phantom.height
     << "\nwidth = " << phantom.width << "\nn_lesions = " << phantom.n_lesions << "\nseed = " << phantom.seed << "\n\n";
  os << "[acquisition]\n"
     << "n_angles = " << acquisition.n_angles << "\nn_bins = " << acquisition.n_bins
     << "\ntotal_counts = " << fmt::format("{}", acquisition.total_counts) << "\nseed = " << acquisition.seed << "\n\n";
  os << "[dose]\ndrf = " << list_text(drfs) << "\n\n";
  os << "[recon]\nn_subsets = " << recon.n_subsets << "\nn_iterations = " << recon.n_iterations
     << "\ninit_value = " << fmt::format("{}", recon.init_value) << "\n\n";
  os << "[network]\nn_p = " << network.n_p << "\nn_c = " << network.n_c << "\nbase_channels = " << network.base_channels
     << "\nn_slices = " << network.n_slices << "\nskip_mode = " << net::to_string(network.skip_mode)
     << "\nseed = " << network.seed << "\n\n";
  os << "[train]\nepochs = " << train.epochs << "\nlr_start = " << fmt::format("{}", train.lr_start)
     << "\nlr_end = " << fmt::format("{}", train.lr_end) << "\nbatch_size = " << train.batch_size
     << "\nloss = " << metrics::to_string(train.loss) << "\nmsssim_levels = " << train.msssim_levels
     << "\naugment = " << (train.augment ? "true" : "false") << "\nrho = " << fmt::format("{}", train.rho)
     << "\nepsilon = " << fmt::format("{}", train.epsilon) << "\nseed = " << train.seed
     << "\nvalidate_every = " << train.validate_every << "\ndrf = " << fmt::format("{}", train_drf) << "\n\n";
  os << "[paths]\ndataset = " << dataset_dir << "\noutput = " << output_dir << "\n";
  return os.str();
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(source + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  check_keys(tree, source);
  const Reader r(tree);
  ExperimentConfig c;

  r.get("phantom.n_subjects", c.phantom.n_subjects);
  r.get("phantom.depth", c.phantom.depth);
  r.get("phantom.height", c.phantom.height);
  r.get("phantom.width", c.phantom.width);
  r.get("phantom.n_lesions", c.phantom.n_lesions);
  r.get("phantom.seed", c.phantom.seed);

  r.get("acquisition.n_angles", c.acquisition.n_angles);
  r.get("acquisition.n_bins", c.acquisition.n_bins);
  r.get("acquisition.total_counts", c.acquisition.total_counts);
  r.get("acquisition.seed", c.acquisition.seed);

  const auto drf = r.raw("dose.drf");
  const auto fractions = r.raw("dose.fractions");
  if (drf && fractions) throw ConfigError("dose.drf and dose.fractions are mutually exclusive");
  if (drf) c.drfs = convert_list("dose.drf", *drf);
  if (fractions) {
    c.drfs.clear();
    for (double p : convert_list("dose.fractions", *fractions)) {
      if (!(p > 0.0 && p <= 1.0)) {
        throw ConfigError("dose.fractions: dose fraction must lie in (0, 1], got " + fmt::format("{}", p));
      }
      c.drfs.push_back(1.0 / p);
    }
  }
  c.train_drf = c.drfs.back();

  r.get("recon.n_subsets", c.recon.n_subsets);
  r.get("recon.n_iterations", c.recon.n_iterations);
  r.get("recon.init_value", c.recon.init_value);

  r.get("network.n_p", c.network.n_p);
  r.get("network.n_c", c.network.n_c);
  r.get("network.base_channels", c.network.base_channels);
  r.get("network.n_slices", c.network.n_slices);
  if (auto v = r.raw("network.skip_mode")) c.network.skip_mode = net::parse_skip_mode(*v);
  r.get("network.seed", c.network.seed);

  r.get("train.epochs", c.train.epochs);
  r.get("train.lr_start", c.train.lr_start);
  r.get("train.lr_end", c.train.lr_end);
  r.get("train.batch_size", c.train.batch_size);
  if (auto v = r.raw("train.loss")) c.train.loss = metrics::parse_loss_kind(*v);
  r.get("train.msssim_levels", c.train.msssim_levels);
  r.get("train.augment", c.train.augment);
  r.get("train.rho", c.train.rho);
  r.get("train.epsilon", c.train.epsilon);
  r.get("train.seed", c.train.seed);
  r.get("train.validate_every", c.train.validate_every);
  r.get("train.drf", c.train_drf);

  if (auto v = r.raw("paths.dataset")) c.dataset_dir = *v;
  if (auto v = r.raw("paths.output")) c.output_dir = *v;

  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

ExperimentConfig with_overrides(const ExperimentConfig& base, const std::vector<std::string>& overrides) {
  if (overrides.empty()) return base;
  pt::ptree tree;
  {
    std::istringstream in(base.to_ini());
    pt::read_ini(in, tree);
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not section.key=value");
    const auto key = boost::trim_copy(o.substr(0, eq));
    if (key.find('.') == std::string::npos) throw ConfigError("override key '" + key + "' needs a section");
    // dose levels given one way replace those given the other way
    if (key == "dose.fractions" || key == "dose.drf") {
      if (auto dose = tree.get_child_optional("dose")) dose->erase(key == "dose.drf" ? "fractions" : "drf");
    }
    tree.put(pt::ptree::path_type(key, '.'), boost::trim_copy(o.substr(eq + 1)));
  }
  std::ostringstream out;
  pt::write_ini(out, tree);
  return parse_config(out.str(), "<overrides>");
}

} // namespace petlab::io
