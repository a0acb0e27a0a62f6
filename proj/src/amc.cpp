#include "specsense/amc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace specsense::amc {

const char* class_name(AMCClass c) {
  switch (c) {
    case AMCClass::BPSK: return "BPSK";
    case AMCClass::QPSK: return "QPSK";
    case AMCClass::PAM4: return "PAM4";
    case AMCClass::QAM16: return "QAM16";
    case AMCClass::NoSignal: return "NoSignal";
  }
  throw ConfigError("bad AMC class");
}

Interval bins_to_freq(const Interval& bins, double band_hz, int fft_size) {
  const double half = fft_size / 2.0;
  return {(bins.start - half) * band_hz / fft_size,
          (bins.end - half) * band_hz / fft_size};
}

dsp::BasebandFrame isolate_by_freq(const dsp::BasebandFrame& frame,
                                   double f_o_hz, double bandwidth_hz) {
  if (bandwidth_hz <= 0.0)
    throw InputError("isolation bandwidth must be positive");
  const double fs = frame.sample_rate_hz;
  const double bw = std::min(bandwidth_hz, 0.98 * fs);
  const dsp::BasebandFrame shifted = dsp::frequency_shift(frame, f_o_hz);
  return dsp::apply_fir(shifted, dsp::design_lowpass(bw, fs, 129));
}

dsp::BasebandFrame isolate_signal(const dsp::BasebandFrame& frame,
                                  const Detection& det, int fft_size) {
  if (det.interval.length() <= 0.0)
    throw InputError("cannot isolate a degenerate interval");
  if (det.interval.start < 0.0 || det.interval.end > double(fft_size))
    throw InputError("detection lies outside the representable band");
  const Interval freq =
      bins_to_freq(det.interval, frame.sample_rate_hz, fft_size);
  return isolate_by_freq(frame, freq.center(), freq.length());
}

AmcDataset make_amc_dataset(const synth::Dataset& ds, Rng& rng) {
  if (!ds.has_baseband)
    throw InputError("AMC dataset needs baseband records; synthesize with "
                     "baseband retention enabled");
  const double fs = ds.sample_rate_hz;
  const int fft = ds.fft_size;

  AmcDataset out;
  for (const auto& rec : ds.records) {
    dsp::BasebandFrame frame;
    frame.samples = rec.baseband.cast<std::complex<double>>();
    frame.sample_rate_hz = fs;

    std::vector<Interval> occupied;
    for (const auto& t : rec.truths) {
      const Interval freq = bins_to_freq(t.interval, fs, fft);
      occupied.push_back(freq);
      const double f_o = freq.center() + rng.uniform(-2e3, 2e3);
      const double bw = freq.length() * rng.uniform(0.7, 1.5);
      const dsp::BasebandFrame iso = isolate_by_freq(frame, f_o, bw);
      out.examples.push_back(
          {iso.samples.cast<std::complex<float>>(), t.class_id});
    }

    // one empty window per record, same width distribution as real signals
    for (int attempt = 0; attempt < 32; ++attempt) {
      const double bw =
          rng.uniform(fs * synth::kBandwidthLoFrac, fs * synth::kBandwidthHiFrac);
      const double fc = rng.uniform(-(fs - bw) / 2.0, (fs - bw) / 2.0);
      const Interval win{fc - bw / 2.0, fc + bw / 2.0};
      const bool clear =
          std::none_of(occupied.begin(), occupied.end(), [&](const Interval& o) {
            return geom::iou(win, o) > 0.0;
          });
      if (!clear) continue;
      const dsp::BasebandFrame iso = isolate_by_freq(frame, win.center(), bw);
      out.examples.push_back({iso.samples.cast<std::complex<float>>(),
                              int(AMCClass::NoSignal)});
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model

MatF AmcBlock::forward(const MatF& x, bool train) {
  return pool.forward(bn.forward(relu.forward(conv.forward(x)), train));
}

MatF AmcBlock::backward(const MatF& gy) {
  return conv.backward(relu.backward(bn.backward(pool.backward(gy))));
}

AmcModel::AmcModel(uint64_t seed)
    : init_rng_(seed), fc(kFilters * (kInputLen >> 4), kNumClasses) {
  int in_ch = 2;
  for (int b = 0; b < 4; ++b) {
    blocks.emplace_back(in_ch, kFilters);
    blocks.back().conv.init(init_rng_);
    in_ch = kFilters;
  }
  fc.init(init_rng_);
}

MatF AmcModel::to_tensor(const Eigen::VectorXcf& iq) {
  if (iq.size() != kInputLen)
    throw InputError("AMC input must be exactly 1024 complex samples");
  MatF x(2, kInputLen);
  double power = 0.0;
  for (int i = 0; i < kInputLen; ++i) power += std::norm(std::complex<double>(iq[i]));
  power /= kInputLen;
  const float scale = power > 0.0 ? float(1.0 / std::sqrt(power)) : 1.0f;
  for (int i = 0; i < kInputLen; ++i) {
    x(0, i) = iq[i].real() * scale;
    x(1, i) = iq[i].imag() * scale;
  }
  return x;
}

MatF AmcModel::forward(const MatF& x, bool train) {
  MatF y = x;
  for (auto& b : blocks) y = b.forward(y, train);
  const Eigen::Map<const Eigen::VectorXf> flat(y.data(), y.size());
  return fc.forward(flat);
}

void AmcModel::backward(const MatF& dlogits) {
  const MatF gflat = fc.backward(dlogits);
  const int len = kInputLen >> 4;
  MatF g = Eigen::Map<const MatF>(gflat.data(), kFilters, len);
  for (size_t i = blocks.size(); i-- > 0;) g = blocks[i].backward(g);
}

Eigen::VectorXf AmcModel::class_probs(const Eigen::VectorXcf& iq) {
  const MatF logits = forward(to_tensor(iq), false);
  return nn::softmax(logits).col(0);
}

AMCClass AmcModel::classify(const dsp::BasebandFrame& clip) {
  const Eigen::VectorXf probs =
      class_probs(clip.samples.cast<std::complex<float>>());
  Eigen::Index best = 0;
  probs.maxCoeff(&best);
  return AMCClass(int(best));
}

void AmcModel::visit_params(
    const std::function<void(const std::string&, MatF*, MatF*)>& fn) {
  for (size_t b = 0; b < blocks.size(); ++b) {
    const std::string base = "amc.b" + std::to_string(b);
    fn(base + ".conv.W", &blocks[b].conv.W, &blocks[b].conv.gW);
    fn(base + ".conv.b", &blocks[b].conv.b, &blocks[b].conv.gb);
    fn(base + ".bn.gamma", &blocks[b].bn.gamma, &blocks[b].bn.ggamma);
    fn(base + ".bn.beta", &blocks[b].bn.beta, &blocks[b].bn.gbeta);
  }
  fn("amc.fc.W", &fc.W, &fc.gW);
  fn("amc.fc.b", &fc.b, &fc.gb);
}

nn::Checkpoint AmcModel::to_checkpoint() {
  nn::Checkpoint ck;
  ck.meta = "amc classes=5 input=1024";
  visit_params(
      [&ck](const std::string& name, MatF* w, MatF*) { ck.params[name] = *w; });
  return ck;
}

AmcModel AmcModel::from_checkpoint(const nn::Checkpoint& ck) {
  std::istringstream meta(ck.meta);
  std::string tag;
  meta >> tag;
  if (tag != "amc")
    throw InputError("checkpoint does not describe a modulation classifier");
  AmcModel model(0);
  model.visit_params([&ck](const std::string& name, MatF* w, MatF*) {
    const auto it = ck.params.find(name);
    if (it == ck.params.end())
      throw InputError("checkpoint missing parameter " + name);
    if (it->second.rows() != w->rows() || it->second.cols() != w->cols())
      throw InputError("checkpoint shape mismatch for " + name);
    *w = it->second;
  });
  return model;
}

// ---------------------------------------------------------------------------
// Training

// Random carrier phase plus a circular time shift. Both leave the modulation
// class unchanged, so each epoch presents a fresh view of every clip instead
// of letting the classifier memorize absolute phase and symbol alignment.
static Eigen::VectorXcf augment_clip(const Eigen::VectorXcf& iq, Rng& rng) {
  const int n = int(iq.size());
  const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const std::complex<float> rot(float(std::cos(phi)), float(std::sin(phi)));
  const int shift = int(rng.uniform_int(0, n - 1));
  Eigen::VectorXcf out(n);
  for (int i = 0; i < n; ++i) out[i] = iq[(i + shift) % n] * rot;
  return out;
}

AmcTrainResult train_amc(AmcModel& model, const AmcDataset& data,
                         const AmcTrainConfig& cfg) {
  if (data.examples.empty()) throw InputError("AMC dataset is empty");
  if (cfg.epochs <= 0) throw ConfigError("epochs must be positive");
  if (cfg.batch <= 0) throw ConfigError("batch must be positive");

  // deterministic split: every k-th example validates
  const int k = cfg.val_frac > 0.0
                    ? std::max(2, int(std::lround(1.0 / cfg.val_frac)))
                    : 0;
  std::vector<int> train_idx, val_idx;
  for (int i = 0; i < int(data.examples.size()); ++i) {
    if (k > 0 && i % k == 0) val_idx.push_back(i);
    else train_idx.push_back(i);
  }
  if (train_idx.empty()) throw InputError("AMC dataset has no training split");

  nn::Adam<float> opt({cfg.lr, 0.9f, 0.999f, 1e-8f});
  std::vector<MatF*> grads;
  model.visit_params([&](const std::string&, MatF* w, MatF* g) {
    opt.attach(w, g);
    grads.push_back(g);
  });
  std::vector<MatF> acc(grads.size());

  Rng rng(cfg.seed);
  AmcTrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = int(train_idx.size()) - 1; i > 0; --i) {
      const int j = int(rng.uniform_int(0, i));
      std::swap(train_idx[size_t(i)], train_idx[size_t(j)]);
    }

    double loss_sum = 0.0;
    for (size_t base = 0; base < train_idx.size(); base += size_t(cfg.batch)) {
      const size_t stop = std::min(base + size_t(cfg.batch), train_idx.size());
      for (size_t s = 0; s < grads.size(); ++s)
        acc[s] = MatF::Zero(grads[s]->rows(), grads[s]->cols());

      for (size_t b = base; b < stop; ++b) {
        const AmcExample& ex = data.examples[size_t(train_idx[b])];
        const Eigen::VectorXcf view = augment_clip(ex.iq, rng);
        const MatF logits = model.forward(AmcModel::to_tensor(view), true);
        MatF onehot = MatF::Zero(kNumClasses, 1);
        onehot(ex.label, 0) = 1.0f;
        MatF dlogits;
        const double loss =
            double(nn::softmax_crossentropy(logits, onehot, &dlogits));
        if (!std::isfinite(loss))
          throw StateError("AMC training diverged at epoch " +
                           std::to_string(epoch + 1));
        loss_sum += loss;
        model.backward(dlogits);
        for (size_t s = 0; s < grads.size(); ++s) acc[s] += *grads[s];
      }

      // one Adam step on the batch-mean gradient
      const float inv = 1.0f / float(stop - base);
      for (size_t s = 0; s < grads.size(); ++s) *grads[s] = acc[s] * inv;
      opt.step_all();
    }

    AmcEpoch entry;
    entry.loss = loss_sum / double(train_idx.size());
    if (!val_idx.empty()) {
      int hits = 0;
      for (const int idx : val_idx) {
        const AmcExample& ex = data.examples[size_t(idx)];
        const MatF logits = model.forward(AmcModel::to_tensor(ex.iq), false);
        Eigen::Index best_row = 0, best_col = 0;
        logits.maxCoeff(&best_row, &best_col);
        if (int(best_row) == ex.label) ++hits;
      }
      entry.val_accuracy = double(hits) / double(val_idx.size());
    }
    result.history.push_back(entry);
  }
  return result;
}

void write_amc_loss_csv(const std::string& path,
                        const std::vector<AmcEpoch>& history,
                        const std::string& provenance) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write loss history to " + path);
  if (!provenance.empty()) out << "# " << provenance << "\n";
  out << "epoch,loss,val_accuracy\n";
  char buf[128];
  for (size_t e = 0; e < history.size(); ++e) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", e + 1,
                  history[e].loss, history[e].val_accuracy);
    out << buf;
  }
}

std::vector<Detection> detect_and_classify(const dsp::BasebandFrame& frame,
                                           frcnn::FrcnnModel& detector,
                                           AmcModel& classifier, double p_min) {
  const dsp::SpectrumFrame spectrum =
      dsp::fft_db(frame, detector.config().fx.input_size);
  const std::vector<Detection> dets = detector.detect(spectrum, p_min);
  std::vector<Detection> out;
  for (const Detection& d : dets) {
    const dsp::BasebandFrame clip =
        isolate_signal(frame, d, spectrum.fft_size());
    const AMCClass c = classifier.classify(clip);
    if (c == AMCClass::NoSignal) continue;
    Detection e = d;
    e.class_id = int(c);
    out.push_back(e);
  }
  return out;
}

}  // namespace specsense::amc
