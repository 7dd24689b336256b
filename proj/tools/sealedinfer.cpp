// Command-line workflow: compile bundles, deal randomness, run both parties,
// run the plaintext baselines and compare the two output sets.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sealedinfer/correlated.hpp"
#include "sealedinfer/dataset.hpp"
#include "sealedinfer/errors.hpp"
#include "sealedinfer/evaluate.hpp"
#include "sealedinfer/graph.hpp"
#include "sealedinfer/metrics.hpp"
#include "sealedinfer/paillier.hpp"
#include "sealedinfer/protocols.hpp"
#include "sealedinfer/session.hpp"
#include "sealedinfer/synth.hpp"
#include "sealedinfer/transport.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sealedinfer;

namespace {

enum ExitCode { kOk = 0, kEvalFailure = 1, kUsage = 2, kProtocol = 3, kIo = 4 };

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ProtocolError*>(&e) || dynamic_cast<const CryptoError*>(&e) ||
      dynamic_cast<const ExhaustedError*>(&e)) {
    return kProtocol;
  }
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const ParseError*>(&e)) return kIo;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ShapeError*>(&e) ||
      dynamic_cast<const OverflowError*>(&e)) {
    return kUsage;
  }
  return kEvalFailure;
}

struct Common {
  int k = 64;
  int f = 12;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string mode = "dealer";
  std::string endpoint = "127.0.0.1:7700";
  std::size_t parallel = 1;
  std::size_t n_boot = kDefaultBootstrap;
  std::string out = ".";
  int he_bits = kDefaultModulusBits;

  FixedPointConfig cfg() const { return FixedPointConfig::make(k, f); }
};

std::string session_label(const std::string& prefix, std::size_t index) {
  return prefix + "-" + std::to_string(index);
}

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

// --- compile / verify -------------------------------------------------------

int cmd_compile(const std::string& manifest, const Common& c) {
  const GraphBundle server = load_bundle_file(manifest);
  validate_weights(server.graph, server.weights);
  GraphBundle as_server = server;
  as_server.role = BundleRole::Server;
  const GraphBundle client = strip_weights(as_server);
  if (!verify_stripped(client)) throw Error("stripping left weights in the client bundle");
  ensure_directory(c.out);
  const std::string name = server.graph.name();
  const std::string server_path = path_in(c.out, name + ".server.bundle");
  const std::string client_path = path_in(c.out, name + ".client.bundle");
  write_text(server_path, save_manifest(as_server));
  write_text(client_path, save_manifest(client));
  std::cout << "graph hash:    " << graph_hash(server.graph) << "\n"
            << "server bundle: " << server_path << " " << bundle_hash(as_server) << "\n"
            << "client bundle: " << client_path << " " << bundle_hash(client) << "\n";
  return kOk;
}

int cmd_verify(const std::string& path) {
  const GraphBundle bundle = load_bundle_file(path);
  const bool stripped = verify_stripped(bundle);
  std::cout << "role: " << to_string(bundle.role) << "\n"
            << "graph hash: " << graph_hash(bundle.graph) << "\n"
            << "stripped: " << (stripped ? "true" : "false") << "\n";
  return stripped ? kOk : kEvalFailure;
}

// --- dealer -----------------------------------------------------------------

std::size_t parse_count(const std::string& text, const std::string& spec) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != text.size() || text.empty() || text[0] == '-') {
    throw ConfigError("bad number '" + text + "' in kind spec '" + spec + "'");
  }
  return static_cast<std::size_t>(v);
}

// triples:elementwise:N | triples:matmul:MxNxP[:COUNT] | triples:and:WORDS |
// dabits:N | truncpairs:SHIFT:N
Requirements parse_kind_spec(const std::string& spec, const FixedPointConfig& cfg) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= spec.size(); ++i) {
    if (i == spec.size() || spec[i] == ':') {
      parts.push_back(spec.substr(start, i - start));
      start = i + 1;
    }
  }
  const auto bad = [&]() -> ConfigError {
    return ConfigError("malformed kind spec '" + spec +
                       "'; expected triples:elementwise:N, triples:matmul:MxNxP[:COUNT], triples:and:WORDS, "
                       "dabits:N or truncpairs:SHIFT:N");
  };
  Requirements req;
  if (parts.size() == 3 && parts[0] == "triples" && parts[1] == "elementwise") {
    req.elementwise_triples = parse_count(parts[2], spec);
  } else if (parts.size() == 3 && parts[0] == "triples" && parts[1] == "and") {
    req.and_words = parse_count(parts[2], spec);
  } else if ((parts.size() == 3 || parts.size() == 4) && parts[0] == "triples" && parts[1] == "matmul") {
    std::vector<std::size_t> dims;
    std::size_t s = 0;
    const std::string& d = parts[2];
    for (std::size_t i = 0; i <= d.size(); ++i) {
      if (i == d.size() || d[i] == 'x') {
        dims.push_back(parse_count(d.substr(s, i - s), spec));
        s = i + 1;
      }
    }
    if (dims.size() != 3 || dims[0] == 0 || dims[1] == 0 || dims[2] == 0) throw bad();
    const std::size_t count = parts.size() == 4 ? parse_count(parts[3], spec) : 1;
    for (std::size_t i = 0; i < count; ++i) req.matmul_triples.push_back(MatmulDims{dims[0], dims[1], dims[2]});
  } else if (parts.size() == 2 && parts[0] == "dabits") {
    req.dabits = parse_count(parts[1], spec);
  } else if (parts.size() == 3 && parts[0] == "truncpairs") {
    const std::size_t shift = parse_count(parts[1], spec);
    if (shift == 0 || static_cast<int>(shift) >= cfg.bitwidth_k - 1) throw ConfigError("truncation shift out of range in '" + spec + "'");
    req.add_truncpairs(static_cast<int>(shift), parse_count(parts[2], spec));
  } else {
    throw bad();
  }
  return req;
}

void write_pair(const std::string& dir, const std::string& label, const Requirements& req, const FixedPointConfig& cfg,
                Prg& prg) {
  auto [s0, s1] = dealer_generate(req, cfg, prg);
  const std::string p0 = crnd_path(dir, label, 0);
  const std::string p1 = crnd_path(dir, label, 1);
  write_crnd(p0, s0);
  write_crnd(p1, s1);
  std::cout << p0 << ": " << describe_store(s0) << "\n" << p1 << ": " << describe_store(s1) << "\n";
}

int cmd_dealer(const std::vector<std::string>& kinds, const std::string& plan_bundle, std::size_t sessions,
               const std::string& label, const Common& c) {
  if (kinds.empty() == plan_bundle.empty()) throw ConfigError("give either --kind specs or --plan BUNDLE");
  if (label.empty()) throw ConfigError("--label is required");
  const FixedPointConfig cfg = c.cfg();
  ensure_directory(c.out);
  const Prg master = c.seed_set ? Prg(c.seed) : Prg::from_entropy();
  if (!kinds.empty()) {
    Requirements req;
    for (const auto& k : kinds) req += parse_kind_spec(k, cfg);
    Prg prg = master.derive(0);
    write_pair(c.out, label, req, cfg, prg);
    return kOk;
  }
  const GraphBundle bundle = load_bundle_file(plan_bundle);
  const Requirements req = plan_requirements(bundle.graph, cfg, trunc_mode_for(PreprocMode::Dealer));
  for (std::size_t i = 0; i < sessions; ++i) {
    Prg prg = master.derive(i);
    write_pair(c.out, session_label(label, i), req, cfg, prg);
  }
  return kOk;
}

// --- runtime ----------------------------------------------------------------

json traffic_json(const TrafficCounters& t) {
  return json{{"bytes_sent", t.bytes_sent},
              {"bytes_received", t.bytes_received},
              {"bytes_total", t.bytes_sent + t.bytes_received},
              {"frames_sent", t.frames_sent},
              {"frames_received", t.frames_received},
              {"rounds", t.rounds}};
}

// Runs `n` sessions through run_batch and keeps the most specific exit code.
struct BatchRun {
  BatchOutcome outcome;
  int exit_code = kOk;
};

BatchRun run_sessions(std::size_t n, std::size_t parallel, const std::function<InferenceResult(std::size_t)>& body) {
  std::vector<int> codes(n, kOk);
  std::vector<std::function<InferenceResult()>> jobs;
  for (std::size_t i = 0; i < n; ++i) {
    jobs.emplace_back([&, i]() -> InferenceResult {
      try {
        return body(i);
      } catch (const std::exception& e) {
        codes[i] = exit_code_for(e);
        throw;
      }
    });
  }
  BatchRun run;
  run.outcome = run_batch(jobs, parallel);
  for (std::size_t i = 0; i < n; ++i) {
    if (!run.outcome.errors[i].empty()) {
      std::cerr << "session " << i << " failed: " << run.outcome.errors[i] << "\n";
      if (run.exit_code == kOk) run.exit_code = codes[i];
    }
  }
  return run;
}

json batch_stats(const BatchRun& run, const std::string& role, std::size_t images) {
  json sessions = json::array();
  for (const auto& r : run.outcome.results) {
    if (r) sessions.push_back(json::parse(r->stats.to_json()));
  }
  json j;
  j["role"] = role;
  j["images"] = images;
  j["sessions"] = std::move(sessions);
  j["aggregate"] = traffic_json(run.outcome.aggregate);
  j["bytes_total"] = run.outcome.aggregate.bytes_sent + run.outcome.aggregate.bytes_received;
  j["rounds"] = run.outcome.aggregate.rounds;
  j["wall_time"] = run.outcome.wall_time;
  j["failed_sessions"] =
      std::count_if(run.outcome.errors.begin(), run.outcome.errors.end(), [](const auto& e) { return !e.empty(); });
  return j;
}

SessionOptions base_options(Role role, const Common& c, const std::string& randomness) {
  SessionOptions o;
  o.role = role;
  o.mode = parse_preproc_mode(c.mode);
  o.cfg = c.cfg();
  o.randomness_dir = randomness;
  o.he_modulus_bits = c.he_bits;
  return o;
}

int cmd_serve_model(const std::string& bundle_path, const std::string& randomness, const std::string& label,
                    std::size_t sessions, const Common& c) {
  const GraphBundle bundle = load_bundle_file(bundle_path);
  if (bundle.role != BundleRole::Server) throw ConfigError(bundle_path + " is not a server bundle");
  validate_weights(bundle.graph, bundle.weights);
  const SessionOptions base = base_options(Role::ModelOwner, c, randomness);
  if (base.mode == PreprocMode::Dealer && label.empty()) throw ConfigError("dealer mode needs --label");
  const Endpoint ep = parse_endpoint(c.endpoint);
  TcpListener listener(ep.host, ep.port);
  std::cout << "listening on " << ep.host << ":" << listener.port() << std::endl;
  std::mutex accept_mutex;
  const BatchRun run = run_sessions(sessions, c.parallel, [&](std::size_t i) {
    SocketTransport transport = [&] {
      std::lock_guard lock(accept_mutex);
      return listener.accept();
    }();
    SessionOptions o = base;
    o.accept_label_prefix = label + "-";
    if (c.seed_set) o.seed = c.seed + i;
    return run_secure_inference(o, bundle, nullptr, transport);
  });
  ensure_directory(c.out);
  write_text(path_in(c.out, "server_stats.json"), batch_stats(run, "model-owner", sessions).dump(1) + "\n");
  const auto ok = std::count_if(run.outcome.errors.begin(), run.outcome.errors.end(),
                                [](const auto& e) { return e.empty(); });
  std::cout << "served " << ok << " of " << sessions << " session(s), "
            << run.outcome.aggregate.bytes_sent + run.outcome.aggregate.bytes_received << " bytes\n";
  return run.exit_code;
}

std::vector<ImageRecord> load_inputs(const std::vector<std::string>& files, const std::string& dir) {
  if (files.empty() == dir.empty()) throw ConfigError("give either --input FILE... or --input-dir DIR");
  if (!dir.empty()) return read_image_dir(dir);
  std::vector<ImageRecord> out;
  for (const auto& f : files) out.push_back(read_image(f));
  return out;
}

void check_shapes(const std::vector<ImageRecord>& images, const ComputationGraph& graph) {
  for (const auto& img : images) {
    for (const auto& v : img.views) {
      if (v.shape != graph.input_shape()) {
        throw ShapeError("image " + img.name + " has shape " + shape_to_string(v.shape) + ", model expects " +
                         shape_to_string(graph.input_shape()));
      }
    }
  }
}

// Max over views in the signed ring order, which decoding preserves.
OutputRecord make_output(const std::string& name, const std::vector<std::vector<RingElement>>& views,
                         const FixedPointConfig& cfg) {
  std::vector<RingElement> best = views.at(0);
  for (std::size_t v = 1; v < views.size(); ++v) {
    for (std::size_t i = 0; i < best.size(); ++i) {
      if (to_signed(views[v][i], cfg) > to_signed(best[i], cfg)) best[i] = views[v][i];
    }
  }
  OutputRecord out;
  out.image = name;
  for (RingElement r : best) out.logits.push_back(fx_decode(r, cfg));
  out.probabilities = sigmoid(out.logits);
  out.ring = best;
  return out;
}

int cmd_run_inference(const std::string& bundle_path, const std::vector<std::string>& input_files,
                      const std::string& input_dir, const std::string& randomness, const std::string& label,
                      const Common& c) {
  const GraphBundle bundle = load_bundle_file(bundle_path);
  if (!verify_stripped(bundle)) throw ConfigError(bundle_path + " carries weights; the data owner needs the client bundle");
  const std::vector<ImageRecord> images = load_inputs(input_files, input_dir);
  check_shapes(images, bundle.graph);
  const SessionOptions base = base_options(Role::DataOwner, c, randomness);
  if (base.mode == PreprocMode::Dealer && label.empty()) throw ConfigError("dealer mode needs --label");
  const Endpoint ep = parse_endpoint(c.endpoint);

  struct Job {
    std::size_t image;
    std::size_t view;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t v = 0; v < images[i].views.size(); ++v) jobs.push_back({i, v});
  }
  const BatchRun run = run_sessions(jobs.size(), c.parallel, [&](std::size_t j) {
    SocketTransport transport = SocketTransport::connect(ep.host, ep.port);
    SessionOptions o = base;
    o.randomness_label = session_label(label, j);
    if (c.seed_set) o.seed = c.seed + j;
    return run_secure_inference(o, bundle, &images[jobs[j].image].views[jobs[j].view], transport);
  });

  ensure_directory(c.out);
  std::size_t written = 0;
  std::size_t j = 0;
  for (const auto& img : images) {
    std::vector<std::vector<RingElement>> views;
    bool ok = true;
    for (std::size_t v = 0; v < img.views.size(); ++v, ++j) {
      const auto& r = run.outcome.results[j];
      if (r && r->logits) {
        views.push_back(*r->logits);
      } else {
        ok = false;
      }
    }
    if (!ok) continue;
    write_output(c.out, make_output(img.name, views, c.cfg()));
    ++written;
  }
  write_text(path_in(c.out, "stats.json"), batch_stats(run, "data-owner", images.size()).dump(1) + "\n");
  std::cout << "wrote " << written << " of " << images.size() << " outputs to " << c.out << "; "
            << run.outcome.aggregate.bytes_sent + run.outcome.aggregate.bytes_received << " bytes, "
            << run.outcome.aggregate.rounds << " rounds\n";
  return run.exit_code;
}

// --- plaintext baselines ------------------------------------------------------

int cmd_eval_plain(bool fixed, const std::string& bundle_path, const std::vector<std::string>& input_files,
                   const std::string& input_dir, const Common& c) {
  const GraphBundle bundle = load_bundle_file(bundle_path);
  validate_weights(bundle.graph, bundle.weights);
  const std::vector<ImageRecord> images = load_inputs(input_files, input_dir);
  check_shapes(images, bundle.graph);
  const FixedPointConfig cfg = c.cfg();
  ensure_directory(c.out);
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<OutputRecord> outputs;
  for (const auto& img : images) {
    if (fixed) {
      std::vector<std::vector<RingElement>> views;
      for (const auto& v : img.views) views.push_back(eval_fixed(bundle.graph, bundle.weights, v, cfg));
      outputs.push_back(make_output(img.name, views, cfg));
    } else {
      std::vector<std::vector<double>> views;
      for (const auto& v : img.views) views.push_back(eval_float(bundle.graph, bundle.weights, v));
      OutputRecord out;
      out.image = img.name;
      out.logits = aggregate_views(views);
      out.probabilities = sigmoid(out.logits);
      outputs.push_back(std::move(out));
    }
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const auto& o : outputs) write_output(c.out, o);
  json stats{{"role", fixed ? "eval-fixed" : "eval-float"},
             {"images", images.size()},
             {"wall_time", seconds},
             {"bytes_total", 0},
             {"rounds", 0}};
  if (fixed) stats["fixed_point"] = cfg.to_string();
  write_text(path_in(c.out, "stats.json"), stats.dump(1) + "\n");
  std::cout << "wrote " << outputs.size() << " outputs to " << c.out << " in " << seconds << " s\n";
  return kOk;
}

// --- evaluation ---------------------------------------------------------------

std::optional<json> read_stats(const std::string& dir) {
  const std::string p = path_in(dir, "stats.json");
  if (!fs::exists(p)) return std::nullopt;
  try {
    return json::parse(read_text(p));
  } catch (const json::exception& e) {
    throw ParseError(p + ": " + e.what());
  }
}

CostReport cost_from(const json& secure, const json& insecure) {
  CostReport r;
  r.secure_seconds = secure.value("wall_time", 0.0);
  r.insecure_seconds = insecure.value("wall_time", 0.0);
  r.bytes_total = secure.value("bytes_total", std::uint64_t{0});
  r.rounds = secure.value("rounds", std::uint64_t{0});
  r.images = secure.value("images", std::size_t{0});
  return r;
}

int cmd_eval(const std::string& secure_dir, const std::string& insecure_dir, const std::string& labels_path,
             double auroc_tol, const Common& c) {
  const auto secure = read_output_dir(secure_dir);
  const auto insecure = read_output_dir(insecure_dir);
  const LabelSet labels = read_labels(labels_path);
  std::vector<std::vector<double>> ins, sec;
  std::vector<std::vector<int>> lab;
  for (const auto& [name, out] : insecure) {
    const auto s = secure.find(name);
    if (s == secure.end()) throw MetricError("image " + name + " has no secure output");
    const auto l = labels.labels.find(name);
    if (l == labels.labels.end()) throw MetricError("image " + name + " has no labels");
    ins.push_back(out.probabilities);
    sec.push_back(s->second.probabilities);
    lab.push_back(l->second);
  }
  if (secure.size() != insecure.size()) {
    throw MetricError("secure run has " + std::to_string(secure.size()) + " outputs, insecure run " +
                      std::to_string(insecure.size()));
  }
  CompareOptions opt;
  opt.n_boot = c.n_boot;
  opt.seed = c.seed;
  EquivalenceReport rep = compare_runs(ins, sec, lab, labels.classes, opt);
  const auto s_stats = read_stats(secure_dir);
  const auto i_stats = read_stats(insecure_dir);
  if (s_stats && i_stats) rep.cost_summary = cost_from(*s_stats, *i_stats).to_json();
  ensure_directory(c.out);
  write_text(path_in(c.out, "report.json"), rep.to_json());
  const std::string table = rep.to_table();
  write_text(path_in(c.out, "report.txt"), table);
  std::cout << table;
  const bool pass = rep.all_accepted && rep.max_auroc_delta <= auroc_tol;
  std::cout << (pass ? "equivalent" : "NOT equivalent") << " (AUROC tolerance " << auroc_tol << ")\n";
  return pass ? kOk : kEvalFailure;
}

int cmd_cost(const std::string& secure_dir, const std::string& insecure_dir, const Common& c) {
  const auto s = read_stats(secure_dir);
  const auto i = read_stats(insecure_dir);
  if (!s) throw IoError("no stats.json in " + secure_dir);
  if (!i) throw IoError("no stats.json in " + insecure_dir);
  const CostReport r = cost_from(*s, *i);
  ensure_directory(c.out);
  write_text(path_in(c.out, "cost.json"), r.to_json());
  std::cout << r.to_text();
  return kOk;
}

// --- synthetic data -------------------------------------------------------------

int cmd_synth(std::size_t images, std::size_t classes, double noise, const Common& c) {
  Prg prg = c.seed_set ? Prg(c.seed) : Prg::from_entropy();
  const GraphBundle bundle = mini_cnn(prg, classes);
  const SyntheticDataset ds = synthetic_dataset(bundle, images, prg, noise);
  ensure_directory(c.out);
  const std::string inputs = path_in(c.out, "inputs");
  ensure_directory(inputs);
  write_text(path_in(c.out, bundle.graph.name() + ".json"), save_manifest(bundle));
  LabelSet ls;
  ls.classes = ds.classes;
  for (std::size_t i = 0; i < ds.names.size(); ++i) {
    write_image(path_in(inputs, ds.names[i] + ".json"), ImageRecord{ds.names[i], {ds.inputs[i]}});
    ls.labels[ds.names[i]] = ds.labels[i];
  }
  write_labels(path_in(c.out, "labels.json"), ls);
  std::cout << "manifest " << path_in(c.out, bundle.graph.name() + ".json") << ", " << images << " images in "
            << inputs << ", labels " << path_in(c.out, "labels.json") << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-party secure inference toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a TOML/INI run manifest");
  Common c;
  std::uint64_t seed = 0;
  std::vector<CLI::Option*> seed_options;

  const auto add_fixed = [&](CLI::App* s) {
    s->add_option("--k", c.k, "Ring bit width")->envname("SEALEDINFER_K")->capture_default_str();
    s->add_option("--f", c.f, "Fractional bits")->envname("SEALEDINFER_F")->capture_default_str();
  };
  const auto add_seed = [&](CLI::App* s) {
    seed_options.push_back(s->add_option("--seed", seed, "Seed for reproducible runs")->envname("SEALEDINFER_SEED"));
  };
  const auto add_out = [&](CLI::App* s) {
    s->add_option("--out", c.out, "Output directory")->envname("SEALEDINFER_OUT")->capture_default_str();
  };
  const auto add_net = [&](CLI::App* s) {
    s->add_option("--mode", c.mode, "Preprocessing mode")
        ->check(CLI::IsMember({"dealer", "2pc-he"}))
        ->envname("SEALEDINFER_MODE")
        ->capture_default_str();
    s->add_option("--endpoint", c.endpoint, "host:port")->envname("SEALEDINFER_ENDPOINT")->capture_default_str();
    s->add_option("--parallel", c.parallel, "Concurrent sessions")
        ->check(CLI::PositiveNumber)
        ->envname("SEALEDINFER_PARALLEL")
        ->capture_default_str();
    s->add_option("--he-bits", c.he_bits, "Paillier modulus bits (2pc-he)")
        ->envname("SEALEDINFER_HE_BITS")
        ->capture_default_str();
  };

  std::string manifest, bundle_path, randomness = ".", label, input_dir, secure_dir, insecure_dir, labels_path,
                                     plan_bundle;
  std::vector<std::string> inputs, kinds;
  std::size_t sessions = 1, images = 100, classes = 3;
  double auroc_tol = 0.01, noise = 0.5;

  auto* compile = app.add_subcommand("compile", "Split a manifest into server and client bundles");
  compile->add_option("manifest", manifest, "Model manifest with weights")->required();
  add_out(compile);

  auto* verify = app.add_subcommand("verify", "Check that a bundle carries no weights");
  verify->add_option("bundle", bundle_path)->required();

  auto* dealer = app.add_subcommand("dealer", "Generate paired correlated-randomness files");
  dealer->add_option("--kind", kinds, "Kind spec, repeatable (e.g. triples:elementwise:10000)");
  dealer->add_option("--plan", plan_bundle, "Bundle whose inference plan to cover");
  dealer->add_option("--sessions", sessions, "Plan mode: number of inferences")->capture_default_str();
  dealer->add_option("--label", label, "Randomness label")->envname("SEALEDINFER_LABEL");
  add_fixed(dealer);
  add_seed(dealer);
  add_out(dealer);

  auto* serve = app.add_subcommand("serve-model", "Model owner: serve secure inferences");
  serve->add_option("--bundle", bundle_path, "Server bundle")->required();
  serve->add_option("--randomness", randomness, "Directory of .crnd files")->capture_default_str();
  serve->add_option("--label", label, "Randomness label prefix")->envname("SEALEDINFER_LABEL");
  serve->add_option("--sessions", sessions, "Number of sessions to serve")->capture_default_str();
  add_fixed(serve);
  add_seed(serve);
  add_out(serve);
  add_net(serve);

  auto* infer = app.add_subcommand("run-inference", "Data owner: run secure inference on images");
  infer->add_option("--bundle", bundle_path, "Client bundle")->required();
  infer->add_option("--input", inputs, "Image tensor files");
  infer->add_option("--input-dir", input_dir, "Directory of image tensor files");
  infer->add_option("--randomness", randomness, "Directory of .crnd files")->capture_default_str();
  infer->add_option("--label", label, "Randomness label prefix")->envname("SEALEDINFER_LABEL");
  add_fixed(infer);
  add_seed(infer);
  add_out(infer);
  add_net(infer);

  auto* eval_fixed_cmd = app.add_subcommand("eval-fixed", "Plaintext fixed-point inference");
  auto* eval_float_cmd = app.add_subcommand("eval-float", "Plaintext floating-point inference");
  for (auto* s : {eval_fixed_cmd, eval_float_cmd}) {
    s->add_option("--bundle", bundle_path, "Server bundle or manifest")->required();
    s->add_option("--input", inputs, "Image tensor files");
    s->add_option("--input-dir", input_dir, "Directory of image tensor files");
    add_fixed(s);
    add_out(s);
  }

  auto* eval = app.add_subcommand("eval", "Compare secure and insecure outputs");
  eval->add_option("--secure", secure_dir, "Secure output directory")->required();
  eval->add_option("--insecure", insecure_dir, "Insecure output directory")->required();
  eval->add_option("--labels", labels_path, "Labels file")->required();
  eval->add_option("--n-boot", c.n_boot, "Bootstrap resamples")->envname("SEALEDINFER_N_BOOT")->capture_default_str();
  eval->add_option("--auroc-tol", auroc_tol, "Allowed |AUROC difference|")->capture_default_str();
  add_seed(eval);
  add_out(eval);

  auto* cost = app.add_subcommand("cost", "Secure versus insecure cost report");
  cost->add_option("--secure", secure_dir, "Secure output directory")->required();
  cost->add_option("--insecure", insecure_dir, "Insecure output directory")->required();
  add_out(cost);

  auto* synth = app.add_subcommand("synth", "Write a small model, synthetic images and labels");
  synth->add_option("--images", images)->capture_default_str();
  synth->add_option("--classes", classes)->capture_default_str();
  synth->add_option("--noise", noise, "Label noise")->capture_default_str();
  add_seed(synth);
  add_out(synth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    for (const auto* o : seed_options) c.seed_set = c.seed_set || o->count() > 0;
    c.seed = seed;
    if (*compile) return cmd_compile(manifest, c);
    if (*verify) return cmd_verify(bundle_path);
    if (*dealer) return cmd_dealer(kinds, plan_bundle, sessions, label, c);
    if (*serve) return cmd_serve_model(bundle_path, randomness, label, sessions, c);
    if (*infer) return cmd_run_inference(bundle_path, inputs, input_dir, randomness, label, c);
    if (*eval_fixed_cmd) return cmd_eval_plain(true, bundle_path, inputs, input_dir, c);
    if (*eval_float_cmd) return cmd_eval_plain(false, bundle_path, inputs, input_dir, c);
    if (*eval) return cmd_eval(secure_dir, insecure_dir, labels_path, auroc_tol, c);
    if (*cost) return cmd_cost(secure_dir, insecure_dir, c);
    if (*synth) return cmd_synth(images, classes, noise, c);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kUsage;
}
