// Command-line front end: synthesize datasets, train and evaluate detectors,
// benchmark inference and report acquisition costs.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "specsense/amc.hpp"
#include "specsense/energy.hpp"
#include "specsense/frcnn.hpp"
#include "specsense/metrics.hpp"
#include "specsense/synth.hpp"

namespace {

using namespace specsense;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// "lo:hi" or a single value; used for --snr.
bool parse_range(const std::string& s, double* lo, double* hi) {
  const auto colon = s.find(':');
  try {
    if (colon == std::string::npos) {
      *lo = *hi = std::stod(s);
    } else {
      *lo = std::stod(s.substr(0, colon));
      *hi = std::stod(s.substr(colon + 1));
    }
  } catch (const std::exception&) {
    return false;
  }
  return *lo <= *hi;
}

// Eval sweeps take "v", "a,b,c" or "lo:step:hi" (inclusive).
std::vector<double> parse_snr_points(const std::string& s) {
  std::vector<double> pts;
  if (s.find(':') != std::string::npos) {
    double lo = 0.0, step = 0.0, hi = 0.0;
    if (std::sscanf(s.c_str(), "%lf:%lf:%lf", &lo, &step, &hi) != 3 ||
        step <= 0.0 || lo > hi)
      throw InputError("--snr sweep must be lo:step:hi with step > 0");
    for (double v = lo; v <= hi + 1e-9; v += step) pts.push_back(v);
    return pts;
  }
  size_t pos = 0;
  while (pos <= s.size()) {
    const size_t comma = std::min(s.find(',', pos), s.size());
    try {
      pts.push_back(std::stod(s.substr(pos, comma - pos)));
    } catch (const std::exception&) {
      throw InputError("--snr expects a value, a comma list or lo:step:hi");
    }
    pos = comma + 1;
  }
  if (pts.empty()) throw InputError("--snr is empty");
  return pts;
}

std::string join_args(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

std::string g_invocation;

void add_synth(CLI::App& app) {
  auto* cmd = app.add_subcommand("synth", "Generate a labeled dataset");
  auto opt = std::make_shared<synth::SynthConfig>();
  auto snr = std::make_shared<std::string>("20");
  auto out = std::make_shared<std::string>();
  cmd->add_option("--n", opt->n, "Number of frames")->required();
  cmd->add_option("--snr", *snr, "SNR in dB, fixed or lo:hi (mixed)");
  cmd->add_option("--seed", opt->seed, "Dataset seed");
  cmd->add_option("--max-tx", opt->max_transmissions,
                  "Max simultaneous transmitters (1..5)");
  cmd->add_option("--rate", opt->sample_rate_hz, "Sample rate in Hz");
  cmd->add_option("--fft", opt->fft_size, "FFT size");
  cmd->add_flag("--with-baseband", opt->with_baseband,
                "Also store time-domain I/Q per frame");
  cmd->add_option("--out", *out, "Output path prefix (.idx/.f32)")->required();
  cmd->callback([opt, snr, out]() {
    if (!parse_range(*snr, &opt->snr_lo_db, &opt->snr_hi_db))
      throw CLI::ValidationError("--snr", "expected value or lo:hi");
    const synth::Dataset ds = synth::generate_dataset(*opt);
    synth::save_dataset(ds, *out, g_invocation);
    std::printf("wrote %zu frames to %s.idx / %s.f32\n", ds.size(),
                out->c_str(), out->c_str());
  });
}

void add_cost(CLI::App& app) {
  auto* cmd = app.add_subcommand(
      "cost", "Samples and seconds needed to fill one detector input");
  auto rate = std::make_shared<double>(200e3);
  auto fft = std::make_shared<int>(1024);
  cmd->add_option("--rate", *rate, "Sample rate in Hz");
  cmd->add_option("--fft", *fft, "FFT size");
  cmd->callback([rate, fft]() {
    const auto line = synth::acquisition_cost(*rate, *fft, false);
    const auto grid = synth::acquisition_cost(*rate, *fft, true);
    std::printf("input,samples,seconds\n");
    std::printf("fft_frame,%lld,%.9g\n", (long long)line.samples,
                line.seconds);
    std::printf("spectrogram,%lld,%.9g\n", (long long)grid.samples,
                grid.seconds);
  });
}

struct TrainFrcnnArgs {
  std::string data, out, loss_csv;
  std::string family = "vgg";
  int stride = 16;
  bool downscaled = false;
  uint64_t seed = 1;
  frcnn::TrainConfig tc;
};

struct TrainAmcArgs {
  std::string data, out, loss_csv;
  uint64_t seed = 1;
  amc::AmcTrainConfig tc;
};

void add_train(CLI::App& app) {
  auto* cmd = app.add_subcommand("train", "Train a detector or classifier");
  cmd->require_subcommand(1);

  auto* f = cmd->add_subcommand("frcnn", "Region-proposal detector");
  auto fa = std::make_shared<TrainFrcnnArgs>();
  f->add_option("--data", fa->data, "Training dataset prefix")->required();
  f->add_option("--out", fa->out, "Checkpoint path")->required();
  f->add_option("--loss-csv", fa->loss_csv,
                "Loss history path (default <out>.loss.csv)");
  f->add_option("--epochs", fa->tc.epochs, "Training epochs");
  f->add_option("--epoch-len", fa->tc.epoch_length,
                "Samples drawn per epoch; 0 means one dataset pass");
  f->add_option("--lr", fa->tc.lr, "Adam learning rate");
  f->add_option("--seed", fa->seed, "Init and shuffling seed");
  f->add_option("--family", fa->family, "Backbone family")
      ->check(CLI::IsMember({"vgg", "vgg_skip", "signal"}));
  f->add_option("--stride", fa->stride, "Feature stride (2..32)");
  f->add_flag("--downscaled", fa->downscaled, "Narrow RPN and FC heads");
  f->add_option("--roi-batch", fa->tc.roi_batch, "Classifier minibatch");
  f->add_option("--anchor-batch", fa->tc.anchor_batch, "RPN minibatch");
  f->add_flag("--per-epoch-alternation", fa->tc.per_epoch_alternation,
              "Alternate RPN/classifier per epoch instead of per sample");
  f->callback([fa]() {
    const synth::Dataset ds = synth::load_dataset(fa->data);
    frcnn::FrcnnConfig cfg;
    cfg.fx.family = frcnn::family_from_string(fa->family);
    cfg.fx.stride = fa->stride;
    cfg.fx.downscaled = fa->downscaled;
    cfg.fx.input_size = ds.fft_size;
    frcnn::FrcnnModel model(cfg, fa->seed);
    fa->tc.seed = fa->seed;
    const auto t0 = Clock::now();
    const frcnn::TrainResult res = frcnn::train_alternating(model, ds, fa->tc);
    const double secs = seconds_since(t0);
    nn::save_checkpoint(fa->out, model.to_checkpoint());
    const std::string lc =
        fa->loss_csv.empty() ? fa->out + ".loss.csv" : fa->loss_csv;
    frcnn::write_loss_csv(lc, res.history, g_invocation);
    std::printf("trained %zu epochs in %.1f s; checkpoint %s, losses %s\n",
                res.history.size(), secs, fa->out.c_str(), lc.c_str());
  });

  auto* a = cmd->add_subcommand("amc", "Modulation classifier");
  auto aa = std::make_shared<TrainAmcArgs>();
  a->add_option("--data", aa->data,
                "Dataset prefix (must carry baseband I/Q)")
      ->required();
  a->add_option("--out", aa->out, "Checkpoint path")->required();
  a->add_option("--loss-csv", aa->loss_csv,
                "Loss history path (default <out>.loss.csv)");
  a->add_option("--epochs", aa->tc.epochs, "Training epochs");
  a->add_option("--lr", aa->tc.lr, "Adam learning rate");
  a->add_option("--batch", aa->tc.batch, "Clips per optimizer step");
  a->add_option("--seed", aa->seed, "Init, clip-cutting and shuffling seed");
  a->add_option("--val-frac", aa->tc.val_frac,
                "Fraction held out for per-epoch validation accuracy");
  a->callback([aa]() {
    const synth::Dataset ds = synth::load_dataset(aa->data);
    Rng clip_rng(aa->seed);
    const amc::AmcDataset clips = amc::make_amc_dataset(ds, clip_rng);
    amc::AmcModel model(aa->seed);
    aa->tc.seed = aa->seed;
    const auto t0 = Clock::now();
    const amc::AmcTrainResult res = amc::train_amc(model, clips, aa->tc);
    const double secs = seconds_since(t0);
    nn::save_checkpoint(aa->out, model.to_checkpoint());
    const std::string lc =
        aa->loss_csv.empty() ? aa->out + ".loss.csv" : aa->loss_csv;
    amc::write_amc_loss_csv(lc, res.history, g_invocation);
    std::printf(
        "trained %zu epochs on %zu clips in %.1f s; checkpoint %s, losses "
        "%s\n",
        res.history.size(), clips.size(), secs, aa->out.c_str(), lc.c_str());
  });
}

struct EvalArgs {
  std::string method;
  std::string model_path, amc_path;
  std::string data, snr, out;
  int n = 100;
  int jobs = 1;
  double p_min = 0.9;
  double iou_min = 0.5;
  bool classful = false;
  uint64_t seed = 1;
};

void run_eval(const EvalArgs& ea) {
  const bool needs_model = ea.method != "energy";
  const bool needs_amc = ea.method == "frcnn+amc";
  if (ea.classful && !needs_amc)
    throw InputError("--classful needs --method frcnn+amc");
  if (needs_model && ea.model_path.empty())
    throw InputError("--method " + ea.method + " needs --model");
  if (needs_amc && ea.amc_path.empty())
    throw InputError("--method frcnn+amc needs --amc-model");
  if (ea.data.empty() == ea.snr.empty())
    throw InputError("give exactly one of --data or --snr");
  if (ea.jobs < 1) throw InputError("--jobs must be at least 1");

  std::vector<synth::Dataset> sets;
  if (!ea.data.empty()) {
    sets.push_back(synth::load_dataset(ea.data));
  } else {
    const std::vector<double> points = parse_snr_points(ea.snr);
    for (size_t i = 0; i < points.size(); ++i) {
      synth::SynthConfig sc;
      sc.n = ea.n;
      sc.snr_lo_db = sc.snr_hi_db = points[i];
      sc.seed = ea.seed + i;
      sc.with_baseband = needs_amc;
      sets.push_back(synth::generate_dataset(sc));
    }
  }
  if (needs_amc) {
    for (const auto& ds : sets)
      if (!ds.has_baseband)
        throw InputError("frcnn+amc needs baseband I/Q in the dataset");
  }

  std::optional<nn::Checkpoint> det_ck, amc_ck;
  if (needs_model) det_ck = nn::load_checkpoint(ea.model_path);
  if (needs_amc) amc_ck = nn::load_checkpoint(ea.amc_path);

  struct Job {
    const synth::DatasetRecord* rec = nullptr;
    double fs = 0.0;
  };
  std::vector<Job> work;
  for (const auto& ds : sets)
    for (const auto& rec : ds.records) work.push_back({&rec, ds.sample_rate_hz});
  if (work.empty()) throw InputError("nothing to evaluate");

  std::vector<std::vector<Detection>> dets(work.size());
  std::atomic<size_t> next{0};
  const auto worker = [&]() {
    std::optional<frcnn::FrcnnModel> det_model;
    std::optional<amc::AmcModel> amc_model;
    if (needs_model)
      det_model.emplace(frcnn::FrcnnModel::from_checkpoint(*det_ck));
    if (needs_amc) amc_model.emplace(amc::AmcModel::from_checkpoint(*amc_ck));
    for (size_t i; (i = next.fetch_add(1)) < work.size();) {
      const Job& j = work[i];
      if (!needs_model) {
        dets[i] = energy::energy_detect(j.rec->spectrum);
      } else if (!needs_amc) {
        dets[i] = det_model->detect(j.rec->spectrum, ea.p_min);
      } else {
        dsp::BasebandFrame bf{
            j.rec->baseband.cast<std::complex<double>>(), j.fs};
        dets[i] = amc::detect_and_classify(bf, *det_model, *amc_model,
                                           ea.p_min);
      }
    }
  };

  const auto t0 = Clock::now();
  if (ea.jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < ea.jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  const double wall = seconds_since(t0);

  std::map<double, std::vector<metrics::FrameSample>> by_snr;
  std::vector<metrics::FrameSample> all;
  for (size_t i = 0; i < work.size(); ++i) {
    metrics::FrameSample fs{dets[i], work[i].rec->truths};
    by_snr[work[i].rec->snr_db].push_back(fs);
    all.push_back(std::move(fs));
  }

  metrics::EvalReport rep;
  for (const auto& [snr, frames] : by_snr)
    rep.rows.push_back(
        metrics::evaluate(frames, snr, ea.classful, ea.iou_min));
  rep.overall = metrics::evaluate(all, 0.0, ea.classful, ea.iou_min);
  rep.mean_inference_s = wall / double(work.size());

  const std::string csv = metrics::to_csv(rep, g_invocation);
  if (!ea.out.empty()) {
    std::ofstream of(ea.out);
    if (!of) throw InputError("cannot write " + ea.out);
    of << csv;
    std::printf(
        "%s over %zu frames: map %.3f miou %.3f pd %.3f pfa %.3f "
        "(%.4g s/frame) -> %s\n",
        ea.method.c_str(), work.size(), rep.overall.map, rep.overall.miou,
        rep.overall.pd, rep.overall.pfa, rep.mean_inference_s,
        ea.out.c_str());
  } else {
    std::fputs(csv.c_str(), stdout);
  }
}

void add_eval(CLI::App& app) {
  auto* cmd =
      app.add_subcommand("eval", "Score a detection method over frames");
  auto ea = std::make_shared<EvalArgs>();
  cmd->add_option("--method", ea->method, "energy, frcnn or frcnn+amc")
      ->required()
      ->check(CLI::IsMember({"energy", "frcnn", "frcnn+amc"}));
  cmd->add_option("--model", ea->model_path, "Detector checkpoint");
  cmd->add_option("--amc-model", ea->amc_path, "Classifier checkpoint");
  cmd->add_option("--data", ea->data, "Evaluate an existing dataset prefix");
  cmd->add_option("--snr", ea->snr,
                  "Synthesize per-SNR sets: value, list or lo:step:hi");
  cmd->add_option("--n", ea->n, "Frames per synthesized SNR point");
  cmd->add_option("--p-min", ea->p_min, "Detection score threshold");
  cmd->add_option("--iou-min", ea->iou_min, "Match threshold for metrics");
  cmd->add_flag("--classful", ea->classful,
                "Require class agreement when matching (frcnn+amc)");
  cmd->add_option("--seed", ea->seed, "Base seed for synthesized sets");
  cmd->add_option("--jobs", ea->jobs, "Worker threads (1 = deterministic timing)");
  cmd->add_option("--out", ea->out, "Write the CSV here instead of stdout");
  cmd->callback([ea]() { run_eval(*ea); });
}

struct BenchArgs {
  std::string model_path, out;
  int n = 1000;
  int repeat = 1;
  double snr_db = 20.0;
  double p_min = 0.9;
  uint64_t seed = 1;
};

void run_bench(const BenchArgs& ba) {
  if (ba.n < 1 || ba.repeat < 1)
    throw InputError("--n and --repeat must be at least 1");
  synth::SynthConfig sc;
  sc.n = ba.n;
  sc.snr_lo_db = sc.snr_hi_db = ba.snr_db;
  sc.seed = ba.seed;
  const synth::Dataset ds = synth::generate_dataset(sc);
  frcnn::FrcnnModel model =
      frcnn::FrcnnModel::from_checkpoint(nn::load_checkpoint(ba.model_path));

  // Frames are pre-transformed spectra, so the FFT/dB preprocessing sits
  // outside the timed region for both methods.
  std::vector<double> energy_means, frcnn_means;
  for (int r = 0; r < ba.repeat; ++r) {
    auto t0 = Clock::now();
    for (const auto& rec : ds.records)
      (void)energy::energy_detect(rec.spectrum);
    energy_means.push_back(seconds_since(t0) / double(ds.size()));
    t0 = Clock::now();
    for (const auto& rec : ds.records) (void)model.detect(rec.spectrum, ba.p_min);
    frcnn_means.push_back(seconds_since(t0) / double(ds.size()));
  }
  const auto stats = [](const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= double(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    return std::pair<double, double>(mean, std::sqrt(var / double(xs.size())));
  };
  const auto [e_mean, e_std] = stats(energy_means);
  const auto [f_mean, f_std] = stats(frcnn_means);
  const std::vector<metrics::MethodTiming> table = metrics::timing_report(
      {{"energy", e_mean}, {"frcnn", f_mean}});

  std::string csv;
  csv += "# " + g_invocation + "\n";
  csv += "method,mean_s,std_s,normalized\n";
  char buf[160];
  for (const auto& row : table) {
    const double sd = row.name == "energy" ? e_std : f_std;
    std::snprintf(buf, sizeof buf, "%s,%.9g,%.9g,%.9g\n", row.name.c_str(),
                  row.mean_s, sd, row.normalized);
    csv += buf;
  }
  if (!ba.out.empty()) {
    std::ofstream of(ba.out);
    if (!of) throw InputError("cannot write " + ba.out);
    of << csv;
  }
  std::fputs(csv.c_str(), stdout);
}

void add_bench(CLI::App& app) {
  auto* cmd = app.add_subcommand(
      "bench", "Per-frame inference timing, energy vs detector");
  auto ba = std::make_shared<BenchArgs>();
  cmd->add_option("--model", ba->model_path, "Detector checkpoint")
      ->required();
  cmd->add_option("--n", ba->n, "Frames to time");
  cmd->add_option("--repeat", ba->repeat, "Timing repetitions");
  cmd->add_option("--snr", ba->snr_db, "SNR of the timing frames");
  cmd->add_option("--p-min", ba->p_min, "Detection score threshold");
  cmd->add_option("--seed", ba->seed, "Frame seed");
  cmd->add_option("--out", ba->out, "Also write the CSV here");
  cmd->callback([ba]() { run_bench(*ba); });
}

}  // namespace

int main(int argc, char** argv) {
  g_invocation = join_args(argc, argv);
  CLI::App app{"1D spectrum sensing toolkit"};
  app.require_subcommand(1);

  add_synth(app);
  add_cost(app);
  add_train(app);
  add_eval(app);
  add_bench(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
