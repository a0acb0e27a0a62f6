#include "specsense/frcnn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace specsense::frcnn {

Family family_from_string(const std::string& name) {
  if (name == "vgg") return Family::Vgg;
  if (name == "vgg_skip") return Family::VggSkip;
  if (name == "signal") return Family::Signal;
  throw ConfigError("unknown feature extractor family: " + name);
}

std::string to_string(Family family) {
  switch (family) {
    case Family::Vgg: return "vgg";
    case Family::VggSkip: return "vgg_skip";
    case Family::Signal: return "signal";
  }
  throw ConfigError("bad family enum");
}

int filters_for_stride(int stride) {
  switch (stride) {
    case 2: return 64;
    case 4: return 128;
    case 8: return 256;
    case 16: return 512;
    case 32: return 512;
    default:
      throw ConfigError("stride must be one of 2, 4, 8, 16, 32");
  }
}

namespace {

int pool_count(int stride) {
  int p = 0, s = stride;
  while (s > 1) {
    s /= 2;
    ++p;
  }
  return p;
}

int block_width(int index) { return std::min(512, 64 << index); }

}  // namespace

// ---------------------------------------------------------------------------
// ConvBlock

MatF ConvBlock::forward(const MatF& x, bool train) {
  MatF m = x;
  for (size_t j = 0; j < convs.size(); ++j)
    m = relus[j].forward(convs[j].forward(m));
  if (skip) {
    const MatF s = skip->forward(x);
    MatF z(m.rows() + s.rows(), m.cols());
    z.topRows(m.rows()) = m;
    z.bottomRows(s.rows()) = s;
    m = bn->forward(z, train);
  } else if (bn) {
    m = bn->forward(m, train);
  }
  if (pooled) m = pool.forward(m);
  return m;
}

MatF ConvBlock::backward(const MatF& gy) {
  MatF g = pooled ? pool.backward(gy) : gy;
  if (bn) g = bn->backward(g);
  MatF gx;
  if (skip) {
    const Eigen::Index main_rows = convs.back().out_ch;
    MatF gm = g.topRows(main_rows);
    gx = skip->backward(g.bottomRows(g.rows() - main_rows));
    for (size_t j = convs.size(); j-- > 0;)
      gm = convs[j].backward(relus[j].backward(gm));
    gx += gm;
  } else {
    gx = g;
    for (size_t j = convs.size(); j-- > 0;)
      gx = convs[j].backward(relus[j].backward(gx));
  }
  return gx;
}

// ---------------------------------------------------------------------------
// FeatureExtractor

FeatureExtractor::FeatureExtractor(const FeatureExtractorConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  filters_for_stride(cfg.stride);  // validates the stride set
  if (cfg.input_size <= 0 || cfg.input_size % cfg.stride != 0)
    throw ConfigError("stride does not divide the input size");

  const int pools = pool_count(cfg.stride);
  const bool vgg_like = cfg.family != Family::Signal;
  const int n_blocks = vgg_like ? pools + 1 : pools;

  int in_ch = 1;
  for (int b = 0; b < n_blocks; ++b) {
    const int width = block_width(std::min(b, pools - 1));
    ConvBlock blk;
    blk.pooled = b < pools;
    if (cfg.family == Family::Signal) {
      blk.convs.emplace_back(in_ch, width, 7);
      blk.relus.emplace_back();
      blk.bn = std::make_unique<nn::BatchNorm1d<float>>(width);
    } else {
      const int conv_width = cfg.family == Family::VggSkip ? width / 2 : width;
      int c_in = in_ch;
      for (int j = 0; j < 3; ++j) {
        blk.convs.emplace_back(c_in, conv_width, 3);
        blk.relus.emplace_back();
        c_in = conv_width;
      }
      if (cfg.family == Family::VggSkip) {
        blk.skip = std::make_unique<nn::Conv1d<float>>(in_ch, width / 2, 1);
        blk.bn = std::make_unique<nn::BatchNorm1d<float>>(width);
      }
    }
    for (auto& c : blk.convs) c.init(rng);
    if (blk.skip) blk.skip->init(rng);
    blocks.push_back(std::move(blk));
    in_ch = width;
  }
  out_channels_ = in_ch;
}

MatF FeatureExtractor::forward(const MatF& x, bool train) {
  if (x.rows() != 1 || x.cols() != cfg_.input_size)
    throw ConfigError("feature extractor expects a 1 x input_size frame");
  MatF y = x;
  for (auto& b : blocks) y = b.forward(y, train);
  return y;
}

MatF FeatureExtractor::backward(const MatF& gfeat) {
  MatF g = gfeat;
  for (size_t i = blocks.size(); i-- > 0;) g = blocks[i].backward(g);
  return g;
}

void FeatureExtractor::visit_params(
    const std::function<void(const std::string&, MatF*, MatF*)>& fn) {
  for (size_t b = 0; b < blocks.size(); ++b) {
    const std::string base = "fx.b" + std::to_string(b);
    auto& blk = blocks[b];
    for (size_t j = 0; j < blk.convs.size(); ++j) {
      const std::string cb = base + ".conv" + std::to_string(j);
      fn(cb + ".W", &blk.convs[j].W, &blk.convs[j].gW);
      fn(cb + ".b", &blk.convs[j].b, &blk.convs[j].gb);
    }
    if (blk.skip) {
      fn(base + ".skip.W", &blk.skip->W, &blk.skip->gW);
      fn(base + ".skip.b", &blk.skip->b, &blk.skip->gb);
    }
    if (blk.bn) {
      fn(base + ".bn.gamma", &blk.bn->gamma, &blk.bn->ggamma);
      fn(base + ".bn.beta", &blk.bn->beta, &blk.bn->gbeta);
    }
  }
}

MatF standardize(const dsp::SpectrumFrame& frame) {
  const Eigen::Index n = frame.bins.size();
  if (n == 0) throw InputError("cannot standardize an empty frame");
  MatF x(1, n);
  const double mu = frame.bins.cast<double>().mean();
  const double var =
      (frame.bins.cast<double>() - mu).square().mean();
  const double denom = std::sqrt(var) > 1e-12 ? std::sqrt(var) : 1.0;
  for (Eigen::Index i = 0; i < n; ++i)
    x(0, i) = float((double(frame.bins[i]) - mu) / denom);
  return x;
}

// ---------------------------------------------------------------------------
// Heads

RpnHead::RpnHead(int in_channels, int depth, int k)
    : inter(in_channels, depth, 3), cls(depth, k, 1), reg(depth, 2 * k, 1) {}

void RpnHead::init(Rng& rng) {
  inter.init(rng);
  cls.init(rng);
  reg.init(rng);
}

RpnOut RpnHead::forward(const MatF& features) {
  const MatF h = relu.forward(inter.forward(features));
  RpnOut out;
  out.probs = nn::sigmoid(cls.forward(h));
  out.regs = reg.forward(h);
  return out;
}

MatF RpnHead::backward(const MatF& dz_cls, const MatF& dreg) {
  const MatF gh = cls.backward(dz_cls) + reg.backward(dreg);
  return inter.backward(relu.backward(gh));
}

ClassifierHead::ClassifierHead(int in_dim, int width, int n_classes)
    : fc1(in_dim, width),
      fc2(width, width),
      cls(width, n_classes + 1),
      reg(width, 2 * n_classes) {}

void ClassifierHead::init(Rng& rng) {
  fc1.init(rng);
  fc2.init(rng);
  cls.init(rng);
  reg.init(rng);
}

ClassifierHead::Out ClassifierHead::forward(const MatF& flat) {
  const MatF h1 = r1.forward(fc1.forward(flat));
  const MatF h2 = r2.forward(fc2.forward(h1));
  Out out;
  out.logits = cls.forward(h2);
  out.regs = reg.forward(h2);
  return out;
}

MatF ClassifierHead::backward(const MatF& dlogits, const MatF& dregs) {
  const MatF gh2 = cls.backward(dlogits) + reg.backward(dregs);
  const MatF gh1 = fc2.backward(r2.backward(gh2));
  return fc1.backward(r1.backward(gh1));
}

// ---------------------------------------------------------------------------
// Proposals

std::vector<Detection> propose_regions(const MatF& probs, const MatF& regs,
                                       const geom::AnchorGrid& grid,
                                       int top_n) {
  const int k = grid.num_scales();
  const int n = grid.positions();
  if (probs.rows() != k || probs.cols() != n || regs.rows() != 2 * k ||
      regs.cols() != n)
    throw ConfigError("RPN output shape does not match the anchor grid");

  std::vector<Detection> dets;
  dets.reserve(size_t(k) * size_t(n));
  for (int p = 0; p < n; ++p)
    for (int s = 0; s < k; ++s) {
      const Interval& anchor = grid.anchors[size_t(p) * k + s];
      const Eigen::Vector2d t(double(regs(2 * s, p)), double(regs(2 * s + 1, p)));
      const Interval iv =
          geom::decode_regression(anchor, t, double(grid.input_size));
      if (iv.length() < 2.0) continue;
      dets.push_back({iv, 0, double(probs(s, p))});
    }
  std::vector<Detection> kept = geom::nms(std::move(dets), 0.7);
  if (int(kept.size()) > top_n) kept.resize(size_t(top_n));
  return kept;
}

AnchorBatch sample_anchor_batch(const geom::RpnTargets& targets, int max_total,
                                Rng& rng) {
  std::vector<int> pos, neg;
  for (int i = 0; i < int(targets.labels.size()); ++i) {
    if (targets.labels[size_t(i)] == geom::AnchorLabel::Positive)
      pos.push_back(i);
    else if (targets.labels[size_t(i)] == geom::AnchorLabel::Negative)
      neg.push_back(i);
  }
  auto take = [&rng](std::vector<int>& from, int want) {
    const int n = int(from.size());
    for (int i = 0; i < std::min(want, n); ++i) {
      const int j = i + int(rng.uniform_int(0, n - 1 - i));
      std::swap(from[size_t(i)], from[size_t(j)]);
    }
    from.resize(size_t(std::min(want, n)));
  };
  take(pos, max_total / 2);
  take(neg, max_total - int(pos.size()));

  AnchorBatch batch;
  batch.n_pos = int(pos.size());
  batch.anchors = std::move(pos);
  batch.anchors.insert(batch.anchors.end(), neg.begin(), neg.end());
  return batch;
}

// ---------------------------------------------------------------------------
// Model

FrcnnModel::FrcnnModel(const FrcnnConfig& cfg, uint64_t seed)
    : cfg_(cfg),
      init_rng_(seed),
      fx(cfg_.fx, init_rng_),
      rpn(fx.out_channels(), cfg_.rpn_depth(),
          int(cfg_.anchor_scales.size())),
      classifier(fx.out_channels() * 7, cfg_.fc_width(), cfg_.n_classes),
      grid_(geom::generate_anchors(cfg_.fx.input_size, cfg_.fx.stride,
                                   cfg_.anchor_scales)) {
  if (cfg_.n_classes < 1) throw ConfigError("need at least one class");
  rpn.init(init_rng_);
  classifier.init(init_rng_);
}

ClassifiedRegions FrcnnModel::classify_regions(
    const MatF& features, const std::vector<Detection>& proposals) {
  if (proposals.empty())
    throw InputError("classify_regions needs at least one proposal");
  ClassifiedRegions out;
  const int f = fx.out_channels();
  const double stride = double(cfg_.fx.stride);

  std::vector<nn::RoiPool1d<float>> pools;
  std::vector<const Detection*> kept;
  MatF flat(f * 7, Eigen::Index(proposals.size()));
  Eigen::Index col = 0;
  for (const Detection& p : proposals) {
    nn::RoiPool1d<float> pool(7);
    try {
      const MatF y = pool.forward(features, p.interval, stride);
      flat.col(col++) = Eigen::Map<const Eigen::VectorXf>(y.data(), y.size());
      pools.push_back(std::move(pool));
      kept.push_back(&p);
    } catch (const InputError&) {
      out.skipped += 1;
    }
  }
  if (col == 0) return out;
  flat.conservativeResize(Eigen::NoChange, col);

  const auto head = classifier.forward(flat);
  const MatF probs = nn::softmax(head.logits);
  for (Eigen::Index j = 0; j < col; ++j) {
    for (int c = 0; c < cfg_.n_classes; ++c) {
      const Eigen::Vector2d t(double(head.regs(2 * c, j)),
                              double(head.regs(2 * c + 1, j)));
      const Interval iv = geom::decode_regression(kept[size_t(j)]->interval, t,
                                                  double(cfg_.fx.input_size));
      if (iv.length() <= 0.0) continue;
      out.detections.push_back({iv, c, double(probs(c, j))});
    }
  }
  return out;
}

std::vector<Detection> FrcnnModel::detect(const dsp::SpectrumFrame& frame,
                                          double p_min) {
  if (frame.fft_size() != cfg_.fx.input_size)
    throw InputError("frame size does not match the model input size");
  const MatF x = standardize(frame);
  const MatF features = fx.forward(x, false);
  const RpnOut rp = rpn.forward(features);
  const std::vector<Detection> proposals =
      propose_regions(rp.probs, rp.regs, grid_, cfg_.infer_proposals);
  if (proposals.empty()) return {};
  const ClassifiedRegions cr = classify_regions(features, proposals);
  return geom::threshold_detections(geom::nms(cr.detections, 0.5), p_min);
}

void FrcnnModel::visit_params(
    const std::function<void(const std::string&, MatF*, MatF*)>& fn,
    bool backbone, bool rpn_head, bool cls_head) {
  if (backbone) fx.visit_params(fn);
  if (rpn_head) {
    fn("rpn.inter.W", &rpn.inter.W, &rpn.inter.gW);
    fn("rpn.inter.b", &rpn.inter.b, &rpn.inter.gb);
    fn("rpn.cls.W", &rpn.cls.W, &rpn.cls.gW);
    fn("rpn.cls.b", &rpn.cls.b, &rpn.cls.gb);
    fn("rpn.reg.W", &rpn.reg.W, &rpn.reg.gW);
    fn("rpn.reg.b", &rpn.reg.b, &rpn.reg.gb);
  }
  if (cls_head) {
    fn("cls.fc1.W", &classifier.fc1.W, &classifier.fc1.gW);
    fn("cls.fc1.b", &classifier.fc1.b, &classifier.fc1.gb);
    fn("cls.fc2.W", &classifier.fc2.W, &classifier.fc2.gW);
    fn("cls.fc2.b", &classifier.fc2.b, &classifier.fc2.gb);
    fn("cls.cls.W", &classifier.cls.W, &classifier.cls.gW);
    fn("cls.cls.b", &classifier.cls.b, &classifier.cls.gb);
    fn("cls.reg.W", &classifier.reg.W, &classifier.reg.gW);
    fn("cls.reg.b", &classifier.reg.b, &classifier.reg.gb);
  }
}

nn::Checkpoint FrcnnModel::to_checkpoint() {
  nn::Checkpoint ck;
  std::ostringstream meta;
  meta << "frcnn family=" << to_string(cfg_.fx.family)
       << " stride=" << cfg_.fx.stride
       << " downscaled=" << (cfg_.fx.downscaled ? 1 : 0)
       << " input=" << cfg_.fx.input_size << " classes=" << cfg_.n_classes
       << " scales=";
  for (size_t i = 0; i < cfg_.anchor_scales.size(); ++i)
    meta << (i ? "," : "") << cfg_.anchor_scales[i];
  ck.meta = meta.str();
  visit_params(
      [&ck](const std::string& name, MatF* w, MatF*) { ck.params[name] = *w; },
      true, true, true);
  return ck;
}

FrcnnModel FrcnnModel::from_checkpoint(const nn::Checkpoint& ck) {
  std::istringstream meta(ck.meta);
  std::string tag;
  meta >> tag;
  if (tag != "frcnn")
    throw InputError("checkpoint does not describe a detection model");
  FrcnnConfig cfg;
  cfg.anchor_scales.clear();
  std::string kv;
  while (meta >> kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
    if (key == "family") cfg.fx.family = family_from_string(val);
    else if (key == "stride") cfg.fx.stride = std::stoi(val);
    else if (key == "downscaled") cfg.fx.downscaled = val == "1";
    else if (key == "input") cfg.fx.input_size = std::stoi(val);
    else if (key == "classes") cfg.n_classes = std::stoi(val);
    else if (key == "scales") {
      std::istringstream ss(val);
      std::string tok;
      while (std::getline(ss, tok, ',')) cfg.anchor_scales.push_back(std::stoi(tok));
    }
  }
  if (cfg.anchor_scales.empty())
    throw InputError("checkpoint metadata lacks anchor scales");

  FrcnnModel model(cfg, 0);
  model.visit_params(
      [&ck](const std::string& name, MatF* w, MatF*) {
        const auto it = ck.params.find(name);
        if (it == ck.params.end())
          throw InputError("checkpoint missing parameter " + name);
        if (it->second.rows() != w->rows() || it->second.cols() != w->cols())
          throw InputError("checkpoint shape mismatch for " + name);
        *w = it->second;
      },
      true, true, true);
  return model;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct RoiSample {
  Interval proposal;
  int target_class;  // n_classes == background
  Eigen::Vector2d reg_target;
};

void check_finite(double v, const char* what, int epoch, int step) {
  if (!std::isfinite(v))
    throw StateError(std::string("training diverged: ") + what + " at epoch " +
                     std::to_string(epoch + 1) + ", step " +
                     std::to_string(step));
}

}  // namespace

TrainResult train_alternating(FrcnnModel& model, const synth::Dataset& data,
                              const TrainConfig& cfg) {
  if (data.records.empty()) throw InputError("training dataset is empty");
  if (cfg.epochs <= 0) throw ConfigError("epochs must be positive");
  if (!(cfg.overlap_min > 0.0 && cfg.overlap_min < cfg.overlap_max &&
        cfg.overlap_max < 1.0))
    throw ConfigError("need 0 < overlap_min < overlap_max < 1");

  const geom::AnchorGrid& grid = model.grid();
  const int n_classes = model.config().n_classes;
  const int bg = n_classes;
  const int f = model.fx.out_channels();
  const double stride = double(model.config().fx.stride);

  nn::Adam<float> opt({cfg.lr, 0.9f, 0.999f, 1e-8f});
  std::vector<int> rpn_step, cls_step;
  model.visit_params(
      [&](const std::string&, MatF* w, MatF* g) {
        rpn_step.push_back(opt.attach(w, g));
      },
      true, true, false);
  // backbone slots are shared between the two steps; re-attach would fork the
  // moment estimates, so collect backbone handles once and reuse them.
  std::vector<int> backbone_only;
  {
    int count = 0;
    model.visit_params([&](const std::string&, MatF*, MatF*) { ++count; },
                       true, false, false);
    backbone_only.assign(rpn_step.begin(), rpn_step.begin() + count);
  }
  cls_step = backbone_only;
  model.visit_params(
      [&](const std::string&, MatF* w, MatF* g) {
        cls_step.push_back(opt.attach(w, g));
      },
      false, false, true);

  Rng order_rng(cfg.seed);
  const int n = int(data.records.size());
  const int epoch_len = cfg.epoch_length > 0 ? cfg.epoch_length : n;

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochLoss sum;
    std::vector<int> order(static_cast<size_t>(epoch_len));
    for (int i = 0; i < epoch_len; ++i)
      order[size_t(i)] = int(order_rng.uniform_int(0, n - 1));

    const int passes = cfg.per_epoch_alternation ? 2 : 1;
    for (int pass = 0; pass < passes; ++pass) {
      const bool do_rpn = passes == 1 || pass == 0;
      const bool do_cls = passes == 1 || pass == 1;
      for (int step = 0; step < epoch_len; ++step) {
        const synth::DatasetRecord& rec = data.records[size_t(order[size_t(step)])];
        std::vector<Interval> truths;
        truths.reserve(rec.truths.size());
        for (const auto& t : rec.truths) truths.push_back(t.interval);
        const MatF x = standardize(rec.spectrum);

        if (do_rpn) {
          // Step 1: one optimizer step on the RPN losses.
          const MatF feats = model.fx.forward(x, true);
          const RpnOut rp = model.rpn.forward(feats);
          const geom::RpnTargets targets = geom::assign_rpn_targets(
              grid, truths, cfg.overlap_min, cfg.overlap_max);
          const AnchorBatch batch =
              sample_anchor_batch(targets, cfg.anchor_batch, order_rng);
          const int m = int(batch.anchors.size());
          const int k = grid.num_scales();

          MatF dz = MatF::Zero(rp.probs.rows(), rp.probs.cols());
          MatF dreg = MatF::Zero(rp.regs.rows(), rp.regs.cols());
          double cls_loss = 0.0, reg_loss = 0.0;
          if (m > 0) {
            MatF sampled(1, m), labels(1, m);
            for (int i = 0; i < m; ++i) {
              const int a = batch.anchors[size_t(i)];
              const int p = a / k, s = a % k;
              sampled(0, i) = rp.probs(s, p);
              labels(0, i) =
                  targets.labels[size_t(a)] == geom::AnchorLabel::Positive
                      ? 1.0f
                      : 0.0f;
              dz(s, p) = (rp.probs(s, p) - labels(0, i)) / float(m);
            }
            cls_loss = double(nn::binary_crossentropy(sampled, labels));

            if (batch.n_pos > 0) {
              MatF pred(2, batch.n_pos), want(2, batch.n_pos);
              for (int i = 0; i < batch.n_pos; ++i) {
                const int a = batch.anchors[size_t(i)];
                const int p = a / k, s = a % k;
                pred(0, i) = rp.regs(2 * s, p);
                pred(1, i) = rp.regs(2 * s + 1, p);
                want(0, i) = float(targets.regressions[size_t(a)](0));
                want(1, i) = float(targets.regressions[size_t(a)](1));
              }
              MatF g;
              reg_loss =
                  double(nn::smooth_l1(pred, want, &g)) / double(batch.n_pos);
              for (int i = 0; i < batch.n_pos; ++i) {
                const int a = batch.anchors[size_t(i)];
                const int p = a / k, s = a % k;
                dreg(2 * s, p) = g(0, i) / float(batch.n_pos);
                dreg(2 * s + 1, p) = g(1, i) / float(batch.n_pos);
              }
            }
          }
          check_finite(cls_loss + reg_loss, "rpn loss", epoch, step);
          sum.rpn_cls += cls_loss;
          sum.rpn_reg += reg_loss;

          const MatF gfeat = model.rpn.backward(dz, dreg);
          model.fx.backward(gfeat);
          opt.step(rpn_step);
        }

        if (do_cls) {
          // Step 2: fresh features, proposals, one step on classifier losses.
          const MatF feats = model.fx.forward(x, true);
          const RpnOut rp = model.rpn.forward(feats);
          std::vector<Detection> proposals = propose_regions(
              rp.probs, rp.regs, grid, model.config().train_proposals);
          if (cfg.append_gt_proposals)
            for (const Interval& t : truths) proposals.push_back({t, 0, 1.0});
          if (proposals.empty()) continue;

          // label each proposal, then balance foreground vs background
          std::vector<RoiSample> fg, bgs;
          for (const Detection& p : proposals) {
            double best = 0.0;
            int best_truth = -1;
            for (size_t t = 0; t < truths.size(); ++t) {
              const double v = geom::iou(p.interval, truths[t]);
              if (v > best) {
                best = v;
                best_truth = int(t);
              }
            }
            RoiSample smp;
            smp.proposal = p.interval;
            if (best >= cfg.fg_iou_min && best_truth >= 0) {
              smp.target_class =
                  std::min(rec.truths[size_t(best_truth)].class_id,
                           n_classes - 1);
              smp.reg_target = geom::encode_regression(
                  p.interval, truths[size_t(best_truth)]);
              fg.push_back(smp);
            } else {
              smp.target_class = bg;
              smp.reg_target.setZero();
              bgs.push_back(smp);
            }
          }
          auto shuffle_take = [&order_rng](std::vector<RoiSample>& v, int want) {
            const int sz = int(v.size());
            for (int i = 0; i < std::min(want, sz); ++i) {
              const int j = i + int(order_rng.uniform_int(0, sz - 1 - i));
              std::swap(v[size_t(i)], v[size_t(j)]);
            }
            v.resize(size_t(std::min(want, sz)));
          };
          shuffle_take(fg, cfg.roi_batch / 2);
          shuffle_take(bgs, cfg.roi_batch - int(fg.size()));
          std::vector<RoiSample> rois = fg;
          rois.insert(rois.end(), bgs.begin(), bgs.end());
          if (rois.empty()) continue;
          const int nb = int(rois.size());
          const int nfg = int(fg.size());

          std::vector<nn::RoiPool1d<float>> pools(size_t(nb),
                                                  nn::RoiPool1d<float>(7));
          MatF flat(f * 7, nb);
          for (int i = 0; i < nb; ++i) {
            const MatF y =
                pools[size_t(i)].forward(feats, rois[size_t(i)].proposal, stride);
            flat.col(i) = Eigen::Map<const Eigen::VectorXf>(y.data(), y.size());
          }

          const auto head = model.classifier.forward(flat);
          MatF onehot = MatF::Zero(n_classes + 1, nb);
          for (int i = 0; i < nb; ++i)
            onehot(rois[size_t(i)].target_class, i) = 1.0f;
          MatF dlogits;
          const double cls_loss =
              double(nn::softmax_crossentropy(head.logits, onehot, &dlogits));

          MatF dregs = MatF::Zero(head.regs.rows(), head.regs.cols());
          double reg_loss = 0.0;
          if (nfg > 0) {
            MatF pred(2, nfg), want(2, nfg);
            for (int i = 0; i < nfg; ++i) {
              const int c = rois[size_t(i)].target_class;
              pred(0, i) = head.regs(2 * c, i);
              pred(1, i) = head.regs(2 * c + 1, i);
              want(0, i) = float(rois[size_t(i)].reg_target(0));
              want(1, i) = float(rois[size_t(i)].reg_target(1));
            }
            MatF g;
            reg_loss = double(nn::smooth_l1(pred, want, &g)) / double(nfg);
            for (int i = 0; i < nfg; ++i) {
              const int c = rois[size_t(i)].target_class;
              dregs(2 * c, i) = g(0, i) / float(nfg);
              dregs(2 * c + 1, i) = g(1, i) / float(nfg);
            }
          }
          check_finite(cls_loss + reg_loss, "classifier loss", epoch, step);
          sum.cls += cls_loss;
          sum.reg += reg_loss;

          const MatF gflat = model.classifier.backward(dlogits, dregs);
          MatF gfeat = MatF::Zero(feats.rows(), feats.cols());
          for (int i = 0; i < nb; ++i) {
            Eigen::Map<const MatF> gy(gflat.col(i).data(), f, 7);
            gfeat += pools[size_t(i)].backward(gy);
          }
          model.fx.backward(gfeat);
          opt.step(cls_step);
        }
      }
    }

    EpochLoss mean;
    mean.rpn_cls = sum.rpn_cls / epoch_len;
    mean.rpn_reg = sum.rpn_reg / epoch_len;
    mean.cls = sum.cls / epoch_len;
    mean.reg = sum.reg / epoch_len;
    result.history.push_back(mean);
  }
  return result;
}

void write_loss_csv(const std::string& path,
                    const std::vector<EpochLoss>& history,
                    const std::string& provenance) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write loss history to " + path);
  if (!provenance.empty()) out << "# " << provenance << "\n";
  out << "epoch,rpn_cls_loss,rpn_reg_loss,cls_loss,reg_loss\n";
  char buf[256];
  for (size_t e = 0; e < history.size(); ++e) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g\n", e + 1,
                  history[e].rpn_cls, history[e].rpn_reg, history[e].cls,
                  history[e].reg);
    out << buf;
  }
}

}  // namespace specsense::frcnn

