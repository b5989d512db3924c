#include "tensorreg/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "tensorreg/errors.hpp"
#include "tensorreg/pgm.hpp"

namespace tensorreg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kArrayMagic[8] = {'T', 'R', 'N', 'M', 'A', 'T', '0', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::istream& in, long& offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    const int c = in.get();
    if (c == EOF) throw InputError("unexpected end of file", offset);
    v |= static_cast<std::uint32_t>(c) << (8 * i);
    ++offset;
  }
  return v;
}

void put_f64(std::ostream& out, double d) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

void put_f64_block(std::ostream& out, std::span<const double> data) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
  } else {
    for (double d : data) put_f64(out, d);
  }
}

void get_f64_block(std::istream& in, double* dst, std::int64_t count, long& offset) {
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(count * 8));
    if (in.gcount() != static_cast<std::streamsize>(count * 8))
      throw InputError("truncated array payload", offset + in.gcount());
    offset += count * 8;
  } else {
    for (std::int64_t i = 0; i < count; ++i) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) {
        const int c = in.get();
        if (c == EOF) throw InputError("truncated array payload", offset);
        bits |= static_cast<std::uint64_t>(c) << (8 * b);
        ++offset;
      }
      dst[i] = std::bit_cast<double>(bits);
    }
  }
}

void ensure_writable(const std::string& path, bool force) {
  if (!force && fs::exists(path))
    throw ConfigError("output file exists (use --force to overwrite): " + path);
}

void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp);
    out << text;
  }
  fs::rename(tmp, path);
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view name, std::uint64_t index) {
  RngStream s = RngStream(base).substream(name).substream(index);
  return s.next_u64();
}

json standardization_to_json(const Standardization& r) {
  return json{{"y_mean", r.y_mean},
              {"y_sd", r.y_sd},
              {"z_mean", std::vector<double>(r.z_mean.begin(), r.z_mean.end())},
              {"z_sd", std::vector<double>(r.z_sd.begin(), r.z_sd.end())}};
}

void standardization_from_json(const json& j, Standardization& r) {
  r.y_mean = j.at("y_mean").get<double>();
  r.y_sd = j.at("y_sd").get<double>();
  const auto zm = j.at("z_mean").get<std::vector<double>>();
  const auto zs = j.at("z_sd").get<std::vector<double>>();
  r.z_mean = Eigen::Map<const Eigen::VectorXd>(zm.data(), static_cast<Eigen::Index>(zm.size()));
  r.z_sd = Eigen::Map<const Eigen::VectorXd>(zs.data(), static_cast<Eigen::Index>(zs.size()));
}

}  // namespace

void RunConfig::validate() const {
  scenario.validate();
  fit.validate();
  if (replicates < 1) throw ConfigError("RunConfig: replicates must be >= 1");
  if (methods.empty()) throw ConfigError("RunConfig: at least one method required");
  for (const auto& m : methods)
    if (m != "mdgdp" && m != "lasso") throw ConfigError("RunConfig: unknown method " + m);
  if (output_dir.empty()) throw ConfigError("RunConfig: output_dir required");
}

RunConfig parse_run_config(const json& j) {
  RunConfig c;
  if (j.value("schema_version", 0) != 1)
    throw ConfigError("config: schema_version must be 1");
  const json& s = j.at("scenario");
  c.scenario.kind = parse_scenario_kind(s.value("kind", "generated-2d"));
  if (s.contains("shape")) c.scenario.shape = TensorShape(s.at("shape").get<std::vector<int>>());
  c.scenario.true_rank = s.value("true_rank", 3);
  c.scenario.sparsity = s.value("sparsity", 0.07);
  c.scenario.max_signal = s.value("max_signal", 1.0);
  c.scenario.n = s.value("n", 1000);
  c.scenario.noise_sd = s.value("noise_sd", 1.0);
  c.scenario.mask_path = s.value("mask_path", std::string());
  if (s.contains("gamma_true")) {
    const auto g = s.at("gamma_true").get<std::vector<double>>();
    c.scenario.gamma_true =
        Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
  }
  // 3d cases have a fixed shape and default fixed effects (age, sex)
  if (c.scenario.kind == ScenarioKind::Case3d1 || c.scenario.kind == ScenarioKind::Case3d2 ||
      c.scenario.kind == ScenarioKind::Case3d3) {
    c.scenario.shape = TensorShape({30, 30, 30});
    if (c.scenario.gamma_true.size() == 0) {
      c.scenario.gamma_true = Eigen::VectorXd(2);
      c.scenario.gamma_true << 0.5, 2.0;
    }
  }
  if (j.contains("fit")) {
    const json& f = j.at("fit");
    c.fit.rank = f.value("rank", 10);
    c.fit.iterations = f.value("iterations", 1000);
    c.fit.burn_in = f.value("burn_in", 200);
    c.fit.thin = f.value("thin", 5);
    c.fit.griddy_samples = f.value("griddy_samples", 10);
    c.fit.scale_v = f.value("scale_v", 1.0);
    c.fit.noise_v = f.value("noise_v", 2.0);
    c.fit.noise_s0_sq = f.value("noise_s0_sq", -1.0);
    c.fit.fixed_effect_prior_variance = f.value("fixed_effect_prior_variance", 1.0);
  }
  c.methods = j.value("methods", std::vector<std::string>{"mdgdp", "lasso"});
  c.replicates = j.value("replicates", 1);
  c.seed = j.value("seed", std::uint64_t{1});
  c.output_dir = j.value("output_dir", std::string("out"));
  c.scenario.seed = c.seed;
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  try {
    return parse_run_config(j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
  }
}

json run_config_to_json(const RunConfig& c) {
  json s{{"kind", scenario_kind_name(c.scenario.kind)},
         {"true_rank", c.scenario.true_rank},
         {"sparsity", c.scenario.sparsity},
         {"max_signal", c.scenario.max_signal},
         {"n", c.scenario.n},
         {"noise_sd", c.scenario.noise_sd},
         {"mask_path", c.scenario.mask_path},
         {"gamma_true",
          std::vector<double>(c.scenario.gamma_true.begin(), c.scenario.gamma_true.end())}};
  if (c.scenario.shape.order() > 0) s["shape"] = c.scenario.shape.dims();
  json f{{"rank", c.fit.rank},
         {"iterations", c.fit.iterations},
         {"burn_in", c.fit.burn_in},
         {"thin", c.fit.thin},
         {"griddy_samples", c.fit.griddy_samples},
         {"scale_v", c.fit.scale_v},
         {"noise_v", c.fit.noise_v},
         {"noise_s0_sq", c.fit.noise_s0_sq},
         {"fixed_effect_prior_variance", c.fit.fixed_effect_prior_variance}};
  return json{{"schema_version", 1}, {"scenario", s},          {"fit", f},
              {"methods", c.methods}, {"replicates", c.replicates}, {"seed", c.seed},
              {"output_dir", c.output_dir}};
}

const Eigen::MatrixXd& LoadedArrays::at(const std::string& name) const {
  for (const auto& [n, m] : arrays)
    if (n == name) return m;
  throw InputError("array group not found: " + name);
}

bool LoadedArrays::has(const std::string& name) const {
  for (const auto& [n, m] : arrays)
    if (n == name) return true;
  return false;
}

void write_named_arrays(const std::string& path, const json& meta,
                        const std::vector<NamedArrayView>& groups) {
  json header{{"schema_version", 1}, {"meta", meta}};
  json jgroups = json::array();
  for (const auto& g : groups) {
    if (static_cast<std::int64_t>(g.data.size()) != g.rows * g.cols)
      throw StructuralError("write_named_arrays: group size mismatch for " + g.name);
    jgroups.push_back(json{{"name", g.name}, {"rows", g.rows}, {"cols", g.cols}});
  }
  header["groups"] = jgroups;
  const std::string header_text = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp);
    out.write(kArrayMagic, sizeof(kArrayMagic));
    put_u32(out, static_cast<std::uint32_t>(header_text.size()));
    out << header_text;
    for (const auto& g : groups) put_f64_block(out, g.data);
    if (!out) throw InputError("short write to " + tmp);
  }
  fs::rename(tmp, path);
}

LoadedArrays read_named_arrays(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  long offset = 0;
  char magic[8];
  in.read(magic, 8);
  offset += 8;
  if (in.gcount() != 8 || std::memcmp(magic, kArrayMagic, 8) != 0)
    throw InputError("bad magic in " + path, 0);
  const std::uint32_t hlen = get_u32(in, offset);
  std::string header_text(hlen, '\0');
  in.read(header_text.data(), hlen);
  if (in.gcount() != static_cast<std::streamsize>(hlen))
    throw InputError("truncated header in " + path, offset);
  offset += hlen;
  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception& e) {
    throw InputError(std::string("header parse error: ") + e.what(), 8);
  }
  LoadedArrays out;
  out.meta = header.at("meta");
  for (const auto& g : header.at("groups")) {
    const std::int64_t rows = g.at("rows").get<std::int64_t>();
    const std::int64_t cols = g.at("cols").get<std::int64_t>();
    Eigen::MatrixXd m(rows, cols);
    get_f64_block(in, m.data(), rows * cols, offset);
    out.arrays.emplace_back(g.at("name").get<std::string>(), std::move(m));
  }
  return out;
}

void save_dataset(const std::string& path, const GeneratedDataset& ds, std::uint64_t seed) {
  json meta{{"record", "dataset"},
            {"kind", ds.kind},
            {"n", ds.data.n},
            {"p", ds.data.p()},
            {"shape", ds.data.shape.dims()},
            {"seed", seed},
            {"noise_sd", ds.noise_sd},
            {"achieved_sparsity", ds.achieved_sparsity},
            {"max_signal", ds.max_signal},
            {"gamma_true", std::vector<double>(ds.gamma_true.begin(), ds.gamma_true.end())}};
  std::vector<NamedArrayView> groups;
  groups.push_back({"y", ds.data.n, 1, std::span<const double>(ds.data.y.data(),
                                                               static_cast<size_t>(ds.data.n))});
  groups.push_back({"Z", ds.data.Z.rows(), ds.data.Z.cols(),
                    std::span<const double>(ds.data.Z.data(),
                                            static_cast<size_t>(ds.data.Z.size()))});
  groups.push_back({"B_true", ds.b_true.size(), 1, ds.b_true.values()});
  // stored voxels-by-sample so the sample-major in-memory layout maps directly
  groups.push_back({"X", ds.data.num_voxels(), ds.data.n, std::span<const double>(ds.data.x)});
  write_named_arrays(path, meta, groups);
}

GeneratedDataset load_dataset(const std::string& path) {
  const LoadedArrays la = read_named_arrays(path);
  if (la.meta.value("record", "") != "dataset")
    throw InputError("not a dataset file: " + path);
  GeneratedDataset ds;
  ds.kind = la.meta.at("kind").get<std::string>();
  ds.noise_sd = la.meta.at("noise_sd").get<double>();
  ds.achieved_sparsity = la.meta.at("achieved_sparsity").get<double>();
  ds.max_signal = la.meta.at("max_signal").get<double>();
  const auto g = la.meta.at("gamma_true").get<std::vector<double>>();
  ds.gamma_true = Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
  ds.data.n = la.meta.at("n").get<int>();
  ds.data.shape = TensorShape(la.meta.at("shape").get<std::vector<int>>());
  ds.data.y = la.at("y").col(0);
  ds.data.Z = la.at("Z");
  const Eigen::MatrixXd& bt = la.at("B_true");
  ds.b_true = DenseTensor(ds.data.shape,
                          std::vector<double>(bt.data(), bt.data() + bt.size()));
  const Eigen::MatrixXd& x = la.at("X");
  ds.data.x.assign(x.data(), x.data() + x.size());
  ds.data.validate();
  return ds;
}

void save_posterior(const std::string& path, const PosteriorOutput& out, const json& fit_meta) {
  json meta{{"record", "posterior"},
            {"shape", out.shape.dims()},
            {"fit_standardized", out.fit_standardized},
            {"standardization", standardization_to_json(out.record)},
            {"ess", out.ess},
            {"fit", fit_meta}};
  std::vector<double> const_flags(out.record.constant_voxel.size());
  for (size_t i = 0; i < const_flags.size(); ++i)
    const_flags[i] = out.record.constant_voxel[i] ? 1.0 : 0.0;
  auto span_of = [](const Eigen::MatrixXd& m) {
    return std::span<const double>(m.data(), static_cast<size_t>(m.size()));
  };
  auto span_of_v = [](const Eigen::VectorXd& v) {
    return std::span<const double>(v.data(), static_cast<size_t>(v.size()));
  };
  std::vector<NamedArrayView> groups{
      {"B", out.b_draws.rows(), out.b_draws.cols(), span_of(out.b_draws)},
      {"gamma", out.gamma_draws.rows(), out.gamma_draws.cols(), span_of(out.gamma_draws)},
      {"sigma_sq", out.sigma_sq_draws.size(), 1, span_of_v(out.sigma_sq_draws)},
      {"alpha", out.alpha_draws.size(), 1, span_of_v(out.alpha_draws)},
      {"tau", out.tau_draws.size(), 1, span_of_v(out.tau_draws)},
      {"phi", out.phi_draws.rows(), out.phi_draws.cols(), span_of(out.phi_draws)},
      {"summary_mean", out.summary.mean.size(), 1, out.summary.mean.values()},
      {"summary_lower", out.summary.lower.size(), 1, out.summary.lower.values()},
      {"summary_upper", out.summary.upper.size(), 1, out.summary.upper.values()},
      {"x_mean", out.record.x_mean.size(), 1, span_of_v(out.record.x_mean)},
      {"x_sd", out.record.x_sd.size(), 1, span_of_v(out.record.x_sd)},
      {"constant_voxel", static_cast<std::int64_t>(const_flags.size()), 1,
       std::span<const double>(const_flags)},
  };
  write_named_arrays(path, meta, groups);
}

PosteriorOutput load_posterior(const std::string& path) {
  const LoadedArrays la = read_named_arrays(path);
  if (la.meta.value("record", "") != "posterior")
    throw InputError("not a posterior file: " + path);
  PosteriorOutput out;
  out.shape = TensorShape(la.meta.at("shape").get<std::vector<int>>());
  out.fit_standardized = la.meta.at("fit_standardized").get<bool>();
  standardization_from_json(la.meta.at("standardization"), out.record);
  for (const auto& [key, value] : la.meta.at("ess").items()) out.ess[key] = value.get<double>();
  out.b_draws = la.at("B");
  out.gamma_draws = la.at("gamma");
  out.sigma_sq_draws = la.at("sigma_sq").col(0);
  out.alpha_draws = la.at("alpha").col(0);
  out.tau_draws = la.at("tau").col(0);
  out.phi_draws = la.at("phi");
  auto tensor_of = [&](const std::string& name) {
    const Eigen::MatrixXd& m = la.at(name);
    return DenseTensor(out.shape, std::vector<double>(m.data(), m.data() + m.size()));
  };
  out.summary = PosteriorSummary{tensor_of("summary_mean"), tensor_of("summary_lower"),
                                 tensor_of("summary_upper")};
  out.record.x_mean = la.at("x_mean").col(0);
  out.record.x_sd = la.at("x_sd").col(0);
  const Eigen::MatrixXd& cf = la.at("constant_voxel");
  out.record.constant_voxel.resize(static_cast<size_t>(cf.size()));
  for (Eigen::Index i = 0; i < cf.size(); ++i)
    out.record.constant_voxel[static_cast<size_t>(i)] = cf(i, 0) != 0.0;
  return out;
}

void save_lasso(const std::string& path, const LassoFit& fit, const DenseTensor& coef_tensor,
                const json& meta_in) {
  json meta = meta_in;
  meta["record"] = "lasso";
  meta["lambda"] = fit.lambda;
  meta["shape"] = coef_tensor.shape().dims();
  std::vector<NamedArrayView> groups{
      {"coefficients", fit.coefficients.size(), 1,
       std::span<const double>(fit.coefficients.data(),
                               static_cast<size_t>(fit.coefficients.size()))},
      {"coef_tensor", coef_tensor.size(), 1, coef_tensor.values()},
      {"lambda_grid", static_cast<std::int64_t>(fit.lambda_grid.size()), 1,
       std::span<const double>(fit.lambda_grid)},
      {"cv_mse", static_cast<std::int64_t>(fit.cv_mse.size()), 1,
       std::span<const double>(fit.cv_mse)},
      {"objective_trace", static_cast<std::int64_t>(fit.objective_trace.size()), 1,
       std::span<const double>(fit.objective_trace)},
  };
  write_named_arrays(path, meta, groups);
}

std::pair<DenseTensor, json> load_lasso(const std::string& path) {
  const LoadedArrays la = read_named_arrays(path);
  if (la.meta.value("record", "") != "lasso") throw InputError("not a lasso file: " + path);
  const TensorShape shape(la.meta.at("shape").get<std::vector<int>>());
  const Eigen::MatrixXd& m = la.at("coef_tensor");
  return {DenseTensor(shape, std::vector<double>(m.data(), m.data() + m.size())), la.meta};
}

void render_tensor_2d(const std::string& path, const DenseTensor& t, double limit) {
  if (t.shape().order() != 2) throw StructuralError("render_tensor_2d: tensor must be 2-way");
  PgmImage img;
  img.height = t.shape().dim(0);
  img.width = t.shape().dim(1);
  img.max_value = 255;
  img.pixels.resize(static_cast<size_t>(img.width) * img.height);
  for (int row = 0; row < img.height; ++row)
    for (int col = 0; col < img.width; ++col) {
      const double v = t[row + static_cast<std::int64_t>(col) * img.height];
      const int pix =
          static_cast<int>(std::floor(255.9999 * (v + limit) / (2.0 * limit)));
      img.pixels[static_cast<size_t>(row) * img.width + col] = std::clamp(pix, 0, 255);
    }
  write_pgm(path, img);
}

namespace {

DenseTensor slice_mode3(const DenseTensor& t, int slice) {
  const int p1 = t.shape().dim(0);
  const int p2 = t.shape().dim(1);
  std::vector<double> vals(static_cast<size_t>(p1) * p2);
  const std::int64_t plane = static_cast<std::int64_t>(p1) * p2;
  for (std::int64_t i = 0; i < plane; ++i)
    vals[static_cast<size_t>(i)] = t[slice * plane + i];
  return DenseTensor(TensorShape({p1, p2}), std::move(vals));
}

std::string slice_suffix(int s) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "_s%02d", s);
  return buf;
}

}  // namespace

void cmd_render_pair(const std::string& truth_prefix, const std::string& estimate_prefix,
                     const DenseTensor& truth, const DenseTensor& estimate) {
  if (!(truth.shape() == estimate.shape()))
    throw StructuralError("render: truth and estimate shapes differ");
  double limit = 1e-12;
  for (std::int64_t v = 0; v < truth.size(); ++v)
    limit = std::max({limit, std::abs(truth[v]), std::abs(estimate[v])});
  const int order = truth.shape().order();
  if (order == 2) {
    render_tensor_2d(truth_prefix + ".pgm", truth, limit);
    render_tensor_2d(estimate_prefix + ".pgm", estimate, limit);
  } else if (order == 3) {
    for (int s = 0; s < truth.shape().dim(2); ++s) {
      render_tensor_2d(truth_prefix + slice_suffix(s) + ".pgm", slice_mode3(truth, s), limit);
      render_tensor_2d(estimate_prefix + slice_suffix(s) + ".pgm", slice_mode3(estimate, s),
                       limit);
    }
  } else {
    throw StructuralError("render: only 2- and 3-way tensors are supported");
  }
  std::ostringstream sidecar;
  sidecar << "value_range -" << limit << " " << limit << "\n"
          << "mapping pixel = floor(255.9999 * (v + limit) / (2*limit)), mid-gray 127 = 0\n";
  write_text_atomic(estimate_prefix + ".txt", sidecar.str());
}

int configured_thread_count() {
  const char* env = std::getenv("TENSORREG_THREADS");
  if (!env) return 1;
  const int v = std::atoi(env);
  return v >= 1 ? v : 1;
}

std::string dataset_path(const RunConfig& config, int replicate) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "dataset_r%03d.bin", replicate);
  return (fs::path(config.output_dir) / buf).string();
}

std::string chain_path(const RunConfig& config, int replicate, const std::string& method) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "fit_r%03d_%s.bin", replicate, method.c_str());
  return (fs::path(config.output_dir) / buf).string();
}

void cmd_simulate(const RunConfig& config, bool force) {
  config.validate();
  fs::create_directories(config.output_dir);
  json manifest{{"config", run_config_to_json(config)}, {"datasets", json::array()}};
  for (int r = 0; r < config.replicates; ++r) {
    ScenarioSpec spec = config.scenario;
    spec.seed = config.seed + static_cast<std::uint64_t>(r);
    const std::string path = dataset_path(config, r);
    ensure_writable(path, force);
    const GeneratedDataset ds = generate_scenario(spec);
    save_dataset(path, ds, spec.seed);
    manifest["datasets"].push_back(json{{"file", fs::path(path).filename().string()},
                                        {"seed", spec.seed},
                                        {"achieved_sparsity", ds.achieved_sparsity},
                                        {"max_signal", ds.max_signal}});
    std::cout << "simulated replicate=" << r << " file=" << path
              << " sparsity=" << ds.achieved_sparsity << "\n";
  }
  const std::string mpath = (fs::path(config.output_dir) / "manifest.json").string();
  ensure_writable(mpath, true);  // manifest always refreshed alongside datasets
  write_text_atomic(mpath, manifest.dump(2) + "\n");
}

namespace {

void fit_one_replicate(const RunConfig& config, int r, bool force) {
  const GeneratedDataset ds = load_dataset(dataset_path(config, r));
  for (const auto& method : config.methods) {
    const std::string path = chain_path(config, r, method);
    ensure_writable(path, force);
    if (method == "mdgdp") {
      FitConfig fc = config.fit;
      fc.seed = derive_seed(config.seed, "fit-mdgdp", static_cast<std::uint64_t>(r));
      const MdgdpHyper hyper = default_hyper(ds.data.shape.order(), fc.rank);
      auto progress = [&](int it, double loglik, double sigma_sq, double alpha) {
        std::cout << "progress replicate=" << r << " method=mdgdp iter=" << it
                  << " loglik=" << loglik << " sigma2=" << sigma_sq << " alpha=" << alpha
                  << "\n";
      };
      const PosteriorOutput out = run_chain(ds.data, fc, hyper, progress);
      json meta{{"seed", fc.seed},           {"rank", fc.rank},
                {"iterations", fc.iterations}, {"burn_in", fc.burn_in},
                {"thin", fc.thin},           {"replicate", r}};
      save_posterior(path, out, meta);
    } else if (method == "lasso") {
      const RegressionData std_data = standardize_data(ds.data);
      LassoOptions opts;
      opts.seed = derive_seed(config.seed, "fit-lasso", static_cast<std::uint64_t>(r));
      const LassoFit fit = lasso_fit(std_data, opts);
      const DenseTensor coef = lasso_coefficient_tensor(fit, std_data);
      // fixed-effect coefficients reported on the original scale
      std::vector<double> gamma_orig;
      for (int j = 0; j < std_data.p(); ++j) {
        const double sd = std_data.record.z_sd[j];
        gamma_orig.push_back(sd > 0.0 ? fit.coefficients[j] * std_data.record.y_sd / sd : 0.0);
      }
      json meta{{"seed", opts.seed}, {"replicate", r}, {"gamma_original", gamma_orig}};
      save_lasso(path, fit, coef, meta);
      std::cout << "progress replicate=" << r << " method=lasso lambda=" << fit.lambda << "\n";
    }
  }
}

}  // namespace

void cmd_fit(const RunConfig& config, bool force) {
  config.validate();
  const int threads = std::min(configured_thread_count(), config.replicates);
  if (threads <= 1) {
    for (int r = 0; r < config.replicates; ++r) fit_one_replicate(config, r, force);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<size_t>(config.replicates));
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t]() {
      for (int r = t; r < config.replicates; r += threads) {
        try {
          fit_one_replicate(config, r, force);
        } catch (...) {
          errors[static_cast<size_t>(r)] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (int r = 0; r < config.replicates; ++r)
    if (errors[static_cast<size_t>(r)]) {
      try {
        std::rethrow_exception(errors[static_cast<size_t>(r)]);
      } catch (const std::exception& e) {
        throw NumericalError("replicate " + std::to_string(r) + ": " + e.what());
      }
    }
}

namespace {

void append_metric_rows(std::ostringstream& csv, json& rows, const std::string& method,
                        const std::string& scenario, const std::string& group,
                        const std::string& metric, const std::optional<double>& mean,
                        const std::optional<double>& sd) {
  if (!mean.has_value()) return;
  csv << method << "," << scenario << "," << group << "," << metric << "," << *mean << ","
      << sd.value_or(0.0) << "\n";
  rows.push_back(json{{"method", method},
                      {"scenario", scenario},
                      {"group", group},
                      {"metric", metric},
                      {"mean", *mean},
                      {"sd", sd.value_or(0.0)}});
}

}  // namespace

void cmd_eval(const RunConfig& config, bool force) {
  config.validate();
  const std::string csv_path = (fs::path(config.output_dir) / "eval.csv").string();
  const std::string json_path = (fs::path(config.output_dir) / "eval.json").string();
  ensure_writable(csv_path, force);
  ensure_writable(json_path, force);

  const std::string scen = scenario_kind_name(config.scenario.kind);
  std::ostringstream csv;
  csv << "method,scenario,group,metric,mean,sd\n";
  json rows = json::array();
  json per_replicate = json::object();

  for (const auto& method : config.methods) {
    std::vector<EvalReport> reports;
    std::vector<Eigen::VectorXd> gamma_estimates;
    json rep_rows = json::array();
    for (int r = 0; r < config.replicates; ++r) {
      const GeneratedDataset ds = load_dataset(dataset_path(config, r));
      EvalReport ev;
      if (method == "mdgdp") {
        const PosteriorOutput post = load_posterior(chain_path(config, r, method));
        const PosteriorSummary orig = post.original_scale();
        ev = evaluate(orig.mean, orig.lower, orig.upper, ds.b_true);
        if (ds.data.p() > 0) gamma_estimates.push_back(post.gamma_mean_original());
      } else {
        const auto [coef, meta] = load_lasso(chain_path(config, r, method));
        ev = evaluate(coef, ds.b_true);
        if (ds.data.p() > 0 && meta.contains("gamma_original")) {
          const auto g = meta.at("gamma_original").get<std::vector<double>>();
          gamma_estimates.push_back(
              Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size())));
        }
      }
      reports.push_back(ev);
      rep_rows.push_back(json{{"replicate", r},
                              {"rmse_overall", ev.rmse_overall},
                              {"rmse_nonzero", ev.rmse_nonzero.value_or(-1.0)},
                              {"rmse_zero", ev.rmse_zero.value_or(-1.0)},
                              {"coverage_overall", ev.has_intervals ? ev.coverage_overall : -1.0},
                              {"mean_length", ev.has_intervals ? ev.mean_length : -1.0}});
    }
    per_replicate[method] = rep_rows;
    const AggregateReport agg = aggregate_replicates(reports);
    append_metric_rows(csv, rows, method, scen, "nonzero", "rmse", agg.mean.rmse_nonzero,
                       agg.sd.rmse_nonzero);
    append_metric_rows(csv, rows, method, scen, "zero", "rmse", agg.mean.rmse_zero,
                       agg.sd.rmse_zero);
    append_metric_rows(csv, rows, method, scen, "overall", "rmse", agg.mean.rmse_overall,
                       agg.sd.rmse_overall);
    if (agg.mean.has_intervals) {
      append_metric_rows(csv, rows, method, scen, "nonzero", "coverage",
                         agg.mean.coverage_nonzero, agg.sd.coverage_nonzero);
      append_metric_rows(csv, rows, method, scen, "overall", "coverage",
                         agg.mean.coverage_overall, agg.sd.coverage_overall);
      append_metric_rows(csv, rows, method, scen, "nonzero", "length", agg.mean.length_nonzero,
                         agg.sd.length_nonzero);
      append_metric_rows(csv, rows, method, scen, "overall", "length", agg.mean.mean_length,
                         agg.sd.mean_length);
    }
    if (!gamma_estimates.empty()) {
      for (Eigen::Index j = 0; j < gamma_estimates.front().size(); ++j) {
        double m = 0.0;
        for (const auto& g : gamma_estimates) m += g[j];
        m /= static_cast<double>(gamma_estimates.size());
        double ss = 0.0;
        for (const auto& g : gamma_estimates) ss += (g[j] - m) * (g[j] - m);
        const double sd = gamma_estimates.size() > 1
                              ? std::sqrt(ss / (static_cast<double>(gamma_estimates.size()) - 1.0))
                              : 0.0;
        append_metric_rows(csv, rows, method, scen, "gamma",
                           "gamma_" + std::to_string(j + 1), m, sd);
      }
    }
  }
  write_text_atomic(csv_path, csv.str());
  json out{{"scenario", scen}, {"rows", rows}, {"replicates", per_replicate}};
  write_text_atomic(json_path, out.dump(2) + "\n");
}

void cmd_render(const RunConfig& config, bool force) {
  config.validate();
  for (int r = 0; r < config.replicates; ++r) {
    const GeneratedDataset ds = load_dataset(dataset_path(config, r));
    for (const auto& method : config.methods) {
      const std::string fit_file = chain_path(config, r, method);
      if (!fs::exists(fit_file)) continue;
      DenseTensor estimate;
      if (method == "mdgdp")
        estimate = load_posterior(fit_file).original_scale().mean;
      else
        estimate = load_lasso(fit_file).first;
      char tbuf[64], ebuf[64];
      std::snprintf(tbuf, sizeof(tbuf), "truth_r%03d", r);
      std::snprintf(ebuf, sizeof(ebuf), "mean_r%03d_%s", r, method.c_str());
      const std::string tp = (fs::path(config.output_dir) / tbuf).string();
      const std::string ep = (fs::path(config.output_dir) / ebuf).string();
      if (!force && fs::exists(ep + (ds.data.shape.order() == 2 ? ".pgm" : "_s00.pgm")))
        throw ConfigError("render output exists (use --force): " + ep);
      cmd_render_pair(tp, ep, ds.b_true, estimate);
    }
  }
}

void cmd_prior_table(int D, const std::vector<int>& ranks, long n_samples, std::uint64_t seed,
                     const std::string& out_path, bool force) {
  if (ranks.empty()) throw ConfigError("prior-table: at least one rank required");
  ensure_writable(out_path, force);
  std::ostringstream csv;
  csv << "D,R,q05,q25,q50,q75,q95\n";
  for (int rank : ranks) {
    RngStream rng = RngStream(seed).substream("prior-table").substream(
        static_cast<std::uint64_t>(rank));
    const PriorQuantiles q = induced_prior_quantiles(rng, D, rank, n_samples);
    csv << D << "," << rank;
    for (double x : q.q) csv << "," << x;
    csv << "\n";
  }
  write_text_atomic(out_path, csv.str());
}

}  // namespace tensorreg
