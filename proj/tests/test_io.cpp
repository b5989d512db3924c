#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "tensorreg/errors.hpp"
#include "tensorreg/gibbs.hpp"
#include "tensorreg/io.hpp"
#include "tensorreg/pgm.hpp"
#include "tensorreg/simgen.hpp"

using namespace tensorreg;
namespace fs = std::filesystem;

namespace {

std::string tmp_path(const std::string& name) {
  return (fs::temp_directory_path() / name).string();
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

ScenarioSpec small_spec(std::uint64_t seed) {
  ScenarioSpec s;
  s.kind = ScenarioKind::Generated2d;
  s.shape = TensorShape({6, 6});
  s.true_rank = 2;
  s.sparsity = 0.25;
  s.n = 40;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("named-array files round-trip byte-identically") {
  const std::string path = tmp_path("trg_arrays.bin");
  Eigen::MatrixXd a(2, 3);
  a << 1, 2, 3, 4, 5, 6;
  Eigen::MatrixXd b(4, 1);
  b << -1, 0.5, 0.25, 1e-300;
  nlohmann::json meta{{"record", "demo"}, {"note", "x"}};
  write_named_arrays(path, meta,
                     {{"a", 2, 3, std::span<const double>(a.data(), 6)},
                      {"b", 4, 1, std::span<const double>(b.data(), 4)}});
  LoadedArrays la = read_named_arrays(path);
  CHECK(la.meta.at("record") == "demo");
  CHECK(la.at("a") == a);
  CHECK(la.at("b") == b);
  CHECK(la.has("a"));
  CHECK_FALSE(la.has("c"));
  CHECK_THROWS_AS(la.at("c"), InputError);

  const std::string path2 = tmp_path("trg_arrays2.bin");
  write_named_arrays(path2, la.meta,
                     {{"a", 2, 3, std::span<const double>(la.at("a").data(), 6)},
                      {"b", 4, 1, std::span<const double>(la.at("b").data(), 4)}});
  CHECK(read_bytes(path) == read_bytes(path2));
}

TEST_CASE("corrupt array files report offsets") {
  const std::string path = tmp_path("trg_corrupt.bin");
  {
    std::ofstream out(path, std::ios::binary);
    out << "TRNMAT01\xff\xff\xff\xff";
  }
  CHECK_THROWS_AS(read_named_arrays(path), InputError);
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTMAGIC";
  }
  CHECK_THROWS_AS(read_named_arrays(path), InputError);
  CHECK_THROWS_AS(read_named_arrays(tmp_path("missing_file.bin")), InputError);
}

TEST_CASE("dataset files round-trip") {
  const GeneratedDataset ds = generate_scenario(small_spec(7));
  const std::string path = tmp_path("trg_dataset.bin");
  save_dataset(path, ds, 7);
  const GeneratedDataset back = load_dataset(path);
  CHECK(back.data.n == ds.data.n);
  CHECK(back.data.y == ds.data.y);
  CHECK(back.data.x == ds.data.x);
  CHECK(back.achieved_sparsity == ds.achieved_sparsity);
  CHECK(back.max_signal == ds.max_signal);
  CHECK(back.kind == ds.kind);
  for (std::int64_t v = 0; v < ds.b_true.size(); ++v) CHECK(back.b_true[v] == ds.b_true[v]);
  // rewrite is byte-identical
  const std::string path2 = tmp_path("trg_dataset2.bin");
  save_dataset(path2, back, 7);
  CHECK(read_bytes(path) == read_bytes(path2));
}

TEST_CASE("posterior files round-trip bitwise") {
  const GeneratedDataset ds = generate_scenario(small_spec(9));
  FitConfig c;
  c.rank = 2;
  c.iterations = 30;
  c.burn_in = 10;
  c.thin = 2;
  c.seed = 11;
  PosteriorOutput out = run_chain(ds.data, c, default_hyper(2, 2));
  const std::string path = tmp_path("trg_post.bin");
  save_posterior(path, out, nlohmann::json{{"replicate", 0}});
  PosteriorOutput back = load_posterior(path);
  CHECK(back.b_draws == out.b_draws);
  CHECK(back.sigma_sq_draws == out.sigma_sq_draws);
  CHECK(back.phi_draws == out.phi_draws);
  CHECK(back.fit_standardized == out.fit_standardized);
  for (std::int64_t v = 0; v < out.summary.mean.size(); ++v) {
    CHECK(back.summary.mean[v] == out.summary.mean[v]);
    CHECK(back.summary.lower[v] == out.summary.lower[v]);
    CHECK(back.summary.upper[v] == out.summary.upper[v]);
  }
  // summaries recomputed from persisted draws match the stored summary
  PosteriorSummary recomputed = summarize(back.b_draws, back.shape);
  for (std::int64_t v = 0; v < out.summary.mean.size(); ++v)
    CHECK(recomputed.mean[v] == out.summary.mean[v]);
  // original-scale back-transform survives persistence
  PosteriorSummary o1 = out.original_scale();
  PosteriorSummary o2 = back.original_scale();
  for (std::int64_t v = 0; v < o1.mean.size(); ++v) CHECK(o1.mean[v] == o2.mean[v]);
}

TEST_CASE("render maps values to the symmetric gray scale") {
  SUBCASE("zero tensor renders uniform mid-gray") {
    DenseTensor z = DenseTensor::zeros(TensorShape({3, 3}));
    const std::string path = tmp_path("trg_zero.pgm");
    render_tensor_2d(path, z, 1e-12);
    PgmImage img = read_pgm(path);
    for (int p : img.pixels) CHECK(p == 127);
  }
  SUBCASE("mask render re-thresholds to the identical mask") {
    // mask values {0, 1}: 0 -> 127 (below half), 1 -> 255
    std::vector<double> vals(9, 0.0);
    vals[0] = 1.0;
    vals[4] = 1.0;
    DenseTensor mask(TensorShape({3, 3}), vals);
    const std::string tp = tmp_path("trg_mask_truth");
    const std::string ep = tmp_path("trg_mask_est");
    cmd_render_pair(tp, ep, mask, mask);
    DenseTensor back = load_mask_image(tp + ".pgm");
    for (std::int64_t v = 0; v < mask.size(); ++v) CHECK(back[v] == mask[v]);
    // sidecar exists and names the range
    std::ifstream side(ep + ".txt");
    std::string line;
    std::getline(side, line);
    CHECK(line.find("value_range") == 0);
  }
  SUBCASE("pixel values are the documented linear map of the input") {
    std::vector<double> vals{-2.0, 0.0, 1.0, 2.0};
    DenseTensor t(TensorShape({2, 2}), vals);
    const std::string path = tmp_path("trg_linmap.pgm");
    render_tensor_2d(path, t, 2.0);
    PgmImage img = read_pgm(path);
    // tensor (row, col) -> pixel row*width+col; value v -> floor(255.9999*(v+2)/4)
    CHECK(img.pixels[0] == 0);    // -2
    CHECK(img.pixels[1] == 191);  // 1 -> floor(255.9999*0.75)
    CHECK(img.pixels[2] == 127);  // 0
    CHECK(img.pixels[3] == 255);  // 2
  }
  SUBCASE("3d renders emit one slice per mode-3 index") {
    DenseTensor t = DenseTensor::zeros(TensorShape({2, 2, 3}));
    const std::string tp = tmp_path("trg3d_truth");
    const std::string ep = tmp_path("trg3d_est");
    cmd_render_pair(tp, ep, t, t);
    for (int s = 0; s < 3; ++s) {
      char buf[8];
      std::snprintf(buf, sizeof(buf), "_s%02d", s);
      CHECK(fs::exists(tp + buf + ".pgm"));
      CHECK(fs::exists(ep + buf + ".pgm"));
    }
  }
}

TEST_CASE("run config parsing and validation") {
  nlohmann::json j{{"schema_version", 1},
                   {"scenario",
                    {{"kind", "generated-2d"},
                     {"shape", {6, 6}},
                     {"true_rank", 2},
                     {"sparsity", 0.25},
                     {"n", 40}}},
                   {"fit", {{"rank", 2}, {"iterations", 30}, {"burn_in", 10}, {"thin", 2}}},
                   {"methods", {"mdgdp"}},
                   {"replicates", 2},
                   {"seed", 5},
                   {"output_dir", "outdir"}};
  RunConfig c = parse_run_config(j);
  CHECK(c.replicates == 2);
  CHECK(c.fit.rank == 2);
  CHECK(c.scenario.n == 40);
  CHECK(c.methods == std::vector<std::string>{"mdgdp"});

  SUBCASE("wrong schema version") {
    j["schema_version"] = 2;
    CHECK_THROWS_AS(parse_run_config(j), ConfigError);
  }
  SUBCASE("unknown method") {
    j["methods"] = {"ftr"};
    CHECK_THROWS_AS(parse_run_config(j), ConfigError);
  }
  SUBCASE("3d case pins shape and default fixed effects") {
    j["scenario"]["kind"] = "case3d-1";
    RunConfig c3 = parse_run_config(j);
    CHECK(c3.scenario.shape.dims() == std::vector<int>{30, 30, 30});
    CHECK(c3.scenario.gamma_true.size() == 2);
    CHECK(c3.scenario.gamma_true[1] == 2.0);
  }
  SUBCASE("config json round trip") {
    nlohmann::json dumped = run_config_to_json(c);
    RunConfig c2 = parse_run_config(dumped);
    CHECK(run_config_to_json(c2) == dumped);
  }
}

TEST_CASE("simulate/fit/eval/render command pipeline") {
  const std::string out = tmp_path("trg_run");
  fs::remove_all(out);
  nlohmann::json j{{"schema_version", 1},
                   {"scenario",
                    {{"kind", "generated-2d"},
                     {"shape", {6, 6}},
                     {"true_rank", 2},
                     {"sparsity", 0.25},
                     {"n", 60}}},
                   {"fit", {{"rank", 2}, {"iterations", 40}, {"burn_in", 10}, {"thin", 2}}},
                   {"methods", {"mdgdp", "lasso"}},
                   {"replicates", 2},
                   {"seed", 21},
                   {"output_dir", out}};
  RunConfig config = parse_run_config(j);

  cmd_simulate(config, false);
  CHECK(fs::exists(dataset_path(config, 0)));
  CHECK(fs::exists(dataset_path(config, 1)));
  CHECK(fs::exists(fs::path(out) / "manifest.json"));
  // refuse to clobber without force
  CHECK_THROWS_AS(cmd_simulate(config, false), ConfigError);
  // rerun with force is byte-identical
  const std::string bytes0 = read_bytes(dataset_path(config, 0));
  cmd_simulate(config, true);
  CHECK(read_bytes(dataset_path(config, 0)) == bytes0);

  // manifest sparsity matches a recount from the stored tensor
  {
    std::ifstream min(fs::path(out) / "manifest.json");
    nlohmann::json manifest;
    min >> manifest;
    const GeneratedDataset ds = load_dataset(dataset_path(config, 0));
    const double recount = sparsity_fraction(ds.b_true, config.scenario.kind);
    CHECK(manifest["datasets"][0]["achieved_sparsity"].get<double>() == recount);
  }

  cmd_fit(config, false);
  CHECK(fs::exists(chain_path(config, 0, "mdgdp")));
  CHECK(fs::exists(chain_path(config, 1, "lasso")));
  CHECK_THROWS_AS(cmd_fit(config, false), ConfigError);
  // same-seed refit reproduces the chain file bitwise
  const std::string chain0 = read_bytes(chain_path(config, 0, "mdgdp"));
  cmd_fit(config, true);
  CHECK(read_bytes(chain_path(config, 0, "mdgdp")) == chain0);

  cmd_eval(config, false);
  CHECK(fs::exists(fs::path(out) / "eval.csv"));
  CHECK(fs::exists(fs::path(out) / "eval.json"));
  {
    std::ifstream in(fs::path(out) / "eval.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "method,scenario,group,metric,mean,sd");
    int rows = 0;
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) ++rows;
    CHECK(rows >= 6);  // rmse x3 groups x2 methods at minimum
  }
  CHECK_THROWS_AS(cmd_eval(config, false), ConfigError);
  cmd_eval(config, true);

  cmd_render(config, true);
  CHECK(fs::exists(fs::path(out) / "truth_r000.pgm"));
  CHECK(fs::exists(fs::path(out) / "mean_r000_mdgdp.pgm"));
  CHECK(fs::exists(fs::path(out) / "mean_r001_lasso.pgm"));
}

TEST_CASE("single replicate eval has zero sd columns") {
  const std::string out = tmp_path("trg_run_single");
  fs::remove_all(out);
  nlohmann::json j{{"schema_version", 1},
                   {"scenario",
                    {{"kind", "generated-2d"},
                     {"shape", {5, 5}},
                     {"true_rank", 1},
                     {"sparsity", 0.2},
                     {"n", 40}}},
                   {"fit", {{"rank", 1}, {"iterations", 24}, {"burn_in", 8}, {"thin", 2}}},
                   {"methods", {"mdgdp"}},
                   {"replicates", 1},
                   {"seed", 33},
                   {"output_dir", out}};
  RunConfig config = parse_run_config(j);
  cmd_simulate(config, false);
  cmd_fit(config, false);
  cmd_eval(config, false);
  std::ifstream in(fs::path(out) / "eval.csv");
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto last_comma = line.rfind(',');
    CHECK(line.substr(last_comma + 1) == "0");
  }
}

TEST_CASE("prior table command writes the expected csv schema") {
  const std::string path = tmp_path("trg_prior_table.csv");
  fs::remove(path);
  cmd_prior_table(2, {1, 2}, 2000, 3, path, false);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "D,R,q05,q25,q50,q75,q95");
  std::string row;
  int rows = 0;
  while (std::getline(in, row))
    if (!row.empty()) ++rows;
  CHECK(rows == 2);
  CHECK_THROWS_AS(cmd_prior_table(2, {1}, 2000, 3, path, false), ConfigError);
}
