/* Copyright 2026 The fedstyle Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "fedstyle/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <numeric>
#include <thread>

#include "fedstyle/log.hpp"
#include "fedstyle/rng.hpp"
#include "json.hpp"

namespace fedstyle {

double scheduled_lr(double base, double power, int step, int total) {
  if (power <= 0.0 || total <= 0) return base;
  const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(total);
  return base * std::pow(std::max(frac, 0.0), power);
}

void validate(const FederationConfig& cfg, int num_clients) {
  require(num_clients >= 1, "federation needs at least one client");
  require(cfg.rounds >= 0, "rounds must be >= 0");
  require(cfg.clients_per_round >= 1 && cfg.clients_per_round <= num_clients,
          "clients_per_round must be in [1, K]");
  require(cfg.local_epochs >= 0, "local_epochs must be >= 0");
  require(cfg.batch_size >= 1 && cfg.pretrain_batch >= 1, "batch sizes must be >= 1");
  require(cfg.lr > 0.0 && cfg.pretrain_lr > 0.0, "learning rates must be positive");
  require(cfg.lr_power >= 0.0 && cfg.pretrain_lr_power >= 0.0, "lr powers must be >= 0");
  require(cfg.momentum >= 0.0 && cfg.momentum < 1.0, "momentum must be in [0, 1)");
  require(cfg.kd_weight >= 0.0, "kd_weight must be >= 0");
  require(cfg.teacher_period >= 1, "teacher_period must be >= 1");
  require(cfg.swat_start >= 0 && cfg.swat_start <= cfg.rounds + 1,
          "swat_start must be in [0, rounds + 1] (rounds + 1 disables SWAt)");
  require(cfg.conf_threshold > 0.0 && cfg.conf_threshold < 1.0, "conf_threshold must be in (0, 1)");
  require(cfg.class_fraction > 0.0 && cfg.class_fraction <= 1.0,
          "class_fraction must be in (0, 1]");
  require(cfg.style_window >= 1 && cfg.style_window % 2 == 1, "style_window must be odd");
  require(cfg.pretrain_steps >= 0, "pretrain_steps must be >= 0");
  require(cfg.p_plain >= 0.0 && cfg.p_plain <= 1.0, "p_plain must be in [0, 1]");
  require(cfg.cluster_runs >= 1, "cluster_runs must be >= 1");
  require(cfg.threads >= 0, "threads must be >= 0");
}

int resolve_threads(int requested) {
  int cap = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("FEDSTYLE_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) cap = v;
  }
  return requested > 0 ? std::min(requested, cap) : cap;
}

// ---------------------------------------------------------------------------

std::string_view message_kind_name(MessageKind k) {
  switch (k) {
    case MessageKind::kStyleUpload: return "style_upload";
    case MessageKind::kParamUpdate: return "param_update";
  }
  return "?";
}

MessageKind kind_of(const Message& m) {
  return std::holds_alternative<StyleUpload>(m) ? MessageKind::kStyleUpload
                                                : MessageKind::kParamUpdate;
}

void Transport::send(Message m) {
  std::lock_guard lock(mu_);
  ++counts_[static_cast<int>(kind_of(m))];
  pending_.push_back(std::move(m));
}

std::vector<Message> Transport::drain() {
  std::vector<Message> out;
  {
    std::lock_guard lock(mu_);
    out.swap(pending_);
  }
  auto id = [](const Message& m) {
    return std::visit([](const auto& x) { return x.client_id; }, m);
  };
  std::stable_sort(out.begin(), out.end(),
                   [&](const Message& a, const Message& b) { return id(a) < id(b); });
  return out;
}

std::array<std::size_t, kNumMessageKinds> Transport::counts() const {
  std::lock_guard lock(mu_);
  return counts_;
}

// ---------------------------------------------------------------------------

SourceDataset::SourceDataset(std::vector<LabeledImage> samples)
    : samples_(std::move(samples)), reads_(std::make_shared<std::atomic<std::uint64_t>>(0)) {}

const LabeledImage& SourceDataset::at(std::size_t i) const {
  reads_->fetch_add(1, std::memory_order_relaxed);
  return samples_.at(i);
}

ParamSet server_pretrain(const SourceDataset& source, std::span<const Style> pool,
                         const FederationConfig& cfg, PretrainTrace* trace) {
  require(source.size() > 0, "server_pretrain needs a non-empty source set");
  const bool stylize = cfg.fda_pretrain && !pool.empty();
  if (cfg.fda_pretrain && pool.empty()) {
    log_warning("style pool is empty; pre-training without style transfer");
  }
  ParamSet params = init_params(cfg.model, derive_seed(cfg.seed, {0x1417}));
  Rng rng(derive_seed(cfg.seed, {0x9e7a}));
  Sgd opt(cfg.momentum);
  const std::size_t pool_draw = std::max<std::size_t>(pool.size(), 1);
  for (int step = 0; step < cfg.pretrain_steps; ++step) {
    ParamSet grad = ParamSet::zeros(cfg.model);
    double loss = 0.0;
    for (int b = 0; b < cfg.pretrain_batch; ++b) {
      const LabeledImage& sample = source.at(rng.below(source.size()));
      const bool plain = rng.uniform() < cfg.p_plain;
      const std::size_t pick = rng.below(pool_draw);
      LossGrad lg;
      if (stylize && !plain) {
        lg = ce_loss_grad(params, apply_style(sample.image, pool[pick], true), sample.labels);
        if (trace) ++trace->stylized;
      } else {
        lg = ce_loss_grad(params, sample.image, sample.labels);
        if (trace) ++trace->plain;
      }
      axpy(1.0, lg.grad, grad);
      loss += lg.loss;
    }
    scale(grad, 1.0 / cfg.pretrain_batch);
    opt.step(params, grad,
             scheduled_lr(cfg.pretrain_lr, cfg.pretrain_lr_power, step, cfg.pretrain_steps));
    if (trace) trace->losses.push_back(loss / cfg.pretrain_batch);
  }
  return params;
}

LocalResult client_update(const ParamSet& start, const ParamSet& teacher,
                          const ParamSet& pretrained, std::span<const ImageTensor> data,
                          const LocalConfig& cfg, std::uint64_t seed) {
  require(!data.empty(), "client_update needs at least one image");
  require(cfg.epochs >= 0 && cfg.batch_size >= 1, "invalid local epochs or batch size");
  LocalResult out;
  out.params = start;
  if (cfg.epochs == 0) return out;

  std::vector<LabelMap> pseudo;
  std::vector<Logits> kd_targets;
  pseudo.reserve(data.size());
  std::size_t labeled = 0;
  for (const auto& img : data) {
    pseudo.push_back(pseudo_label(forward(teacher, img), cfg.conf_threshold, cfg.class_fraction));
    for (int l : pseudo.back().labels) labeled += l != kIgnoreLabel;
    if (cfg.kd_weight > 0.0) kd_targets.push_back(forward(pretrained, img));
  }
  if (labeled == 0) {
    out.kd_only = true;
    log_warning("every pseudo-label was rejected; update uses the distillation term only");
  }

  Rng rng(seed);
  Sgd opt(cfg.momentum);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double sum_pseudo = 0.0, sum_kd = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      ParamSet grad = ParamSet::zeros(start.shape);
      double lp = 0.0, lk = 0.0;
      for (std::size_t b = b0; b < b1; ++b) {
        const std::size_t i = order[b];
        LocalLoss l = local_loss_grad(out.params, data[i], pseudo[i],
                                      cfg.kd_weight > 0.0 ? &kd_targets[i] : nullptr,
                                      cfg.kd_weight);
        axpy(1.0, l.grad, grad);
        lp += l.loss_pseudo;
        lk += l.loss_kd;
      }
      const double n = static_cast<double>(b1 - b0);
      scale(grad, 1.0 / n);
      opt.step(out.params, grad, cfg.lr);
      sum_pseudo += lp / n;
      sum_kd += lk / n;
      ++out.steps;
    }
  }
  out.loss_pseudo = sum_pseudo / out.steps;
  out.loss_kd = sum_kd / out.steps;
  return out;
}

Client::Client(int id, std::vector<ImageTensor> images) : id_(id), images_(std::move(images)) {
  require(!images_.empty(), "client " + std::to_string(id) + " has no images");
}

StyleUpload Client::upload_style(int window) const {
  std::vector<Style> styles;
  styles.reserve(images_.size());
  for (const auto& img : images_) styles.push_back(extract_style(img, window));
  return {id_, mean_style(styles)};
}

ParamUpdate Client::local_update(const ParamSet& cluster_model, const ParamSet& teacher,
                                 const ParamSet& pretrained, const LocalConfig& cfg, int round,
                                 std::uint64_t seed) const {
  LocalResult r = client_update(cluster_model, teacher, pretrained, images_, cfg, seed);
  return {id_, round, std::move(r.params), images_.size(), r.loss_pseudo, r.loss_kd};
}

// ---------------------------------------------------------------------------

ParamSet ClusterModels::model(int cluster) const {
  require(cluster >= 0 && cluster < num_clusters(), "cluster index out of range");
  return merge_params(theta[cluster], phi);
}

ClusterModels ClusterModels::init(const ParamSet& w, int clusters, GroupSet cluster_groups) {
  require(w.complete(), "cluster models need a complete parameter set");
  require(clusters >= 1, "need at least one cluster");
  ClusterModels m;
  m.cluster_groups = cluster_groups;
  auto parts = split_params(w, cluster_groups);
  m.phi = std::move(parts.phi);
  m.theta.assign(clusters, parts.theta);
  m.teachers.assign(clusters, w);
  m.swat_count.assign(clusters, 0);
  return m;
}

ClusterModels aggregate(const ClusterModels& prev, std::span<const ClientResult> updates,
                        const ClusterPartition& partition) {
  require(!updates.empty(), "aggregate needs at least one update");
  require(prev.num_clusters() == partition.num_clusters(),
          "cluster models and partition disagree on the number of clusters");
  std::vector<const ClientResult*> sorted;
  for (const auto& u : updates) {
    require(u.n_samples > 0, "client update with zero samples");
    require(u.params.complete(), "client update must carry a complete parameter set");
    sorted.push_back(&u);
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const ClientResult* a, const ClientResult* b) { return a->client_id < b->client_id; });

  ClusterModels next = prev;
  const GroupSet global_groups = prev.cluster_groups.complement();

  double total = 0.0;
  for (const auto* u : sorted) total += static_cast<double>(u->n_samples);
  ParamSet phi = ParamSet::zeros(prev.phi.shape, global_groups);
  for (const auto* u : sorted) axpy(static_cast<double>(u->n_samples) / total, u->params, phi);
  next.phi = std::move(phi);

  if (!prev.cluster_groups.empty()) {
    const int clusters = prev.num_clusters();
    std::vector<double> cluster_total(clusters, 0.0);
    std::vector<int> cluster_of(sorted.size());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      cluster_of[i] = partition.cluster_of(sorted[i]->client_id);
      cluster_total[cluster_of[i]] += static_cast<double>(sorted[i]->n_samples);
    }
    for (int c = 0; c < clusters; ++c) {
      if (cluster_total[c] == 0.0) continue;
      ParamSet theta = ParamSet::zeros(prev.phi.shape, prev.cluster_groups);
      for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (cluster_of[i] != c) continue;
        axpy(static_cast<double>(sorted[i]->n_samples) / cluster_total[c], sorted[i]->params,
             theta);
      }
      next.theta[c] = std::move(theta);
    }
  }
  return next;
}

void teacher_refresh(ClusterModels& models, int round, int period, int swat_start) {
  require(period >= 1, "teacher period must be >= 1");
  if (round % period != 0) return;
  for (int c = 0; c < models.num_clusters(); ++c) {
    ParamSet current = models.model(c);
    if (round < swat_start) {
      models.teachers[c] = std::move(current);
      continue;
    }
    const double n = models.swat_count[c];
    ParamSet& teacher = models.teachers[c];
    for (auto g : kAllGroups) {
      auto& t = teacher[g];
      const auto& w = current[g];
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = (t[i] * n + w[i]) / (n + 1.0);
    }
    ++models.swat_count[c];
  }
}

EvalResult evaluate(const ClusterModels& models, const ClusterPartition& partition,
                    std::span<const TestImage> test, int style_window) {
  require(!test.empty(), "evaluate needs a non-empty test set");
  const int classes = models.phi.shape.classes;
  std::vector<ParamSet> assembled;
  for (int c = 0; c < models.num_clusters(); ++c) assembled.push_back(models.model(c));
  ConfusionMatrix cm(classes);
  for (const auto& t : test) {
    const int c = assign_by_style(extract_style(t.sample.image, style_window), partition);
    cm.add(t.sample.labels, argmax(forward(assembled.at(c), t.sample.image)));
  }
  EvalResult r;
  r.per_class_iou = cm.per_class_iou();
  r.miou = cm.miou();
  r.confusion = std::move(cm);
  return r;
}

EvalResult evaluate_single(const ParamSet& params, std::span<const LabeledImage> test) {
  require(!test.empty(), "evaluate needs a non-empty test set");
  ConfusionMatrix cm(params.shape.classes);
  for (const auto& s : test) cm.add(s.labels, argmax(forward(params, s.image)));
  EvalResult r;
  r.per_class_iou = cm.per_class_iou();
  r.miou = cm.miou();
  r.confusion = std::move(cm);
  return r;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::ordered_json nan_to_null(double v) {
  return std::isnan(v) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(v);
}

double null_to_nan(const nlohmann::json& v) {
  return v.is_null() ? std::nan("") : v.get<double>();
}

}  // namespace

std::string to_json_line(const RoundRecord& r) {
  nlohmann::ordered_json j;
  j["round"] = r.round;
  j["sampled_clients"] = r.sampled_clients;
  j["mean_loss_pseudo"] = r.mean_loss_pseudo;
  j["mean_loss_kd"] = r.mean_loss_kd;
  j["miou"] = nan_to_null(r.miou);
  j["per_class_iou"] = nlohmann::ordered_json::array();
  for (double v : r.per_class_iou) j["per_class_iou"].push_back(nan_to_null(v));
  j["wallclock_ms"] = r.wallclock_ms;
  return j.dump();
}

RoundRecord parse_round_record(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    RoundRecord r;
    r.round = j.at("round").get<int>();
    r.sampled_clients = j.at("sampled_clients").get<std::vector<int>>();
    r.mean_loss_pseudo = j.at("mean_loss_pseudo").get<double>();
    r.mean_loss_kd = j.at("mean_loss_kd").get<double>();
    r.miou = null_to_nan(j.at("miou"));
    for (const auto& v : j.at("per_class_iou")) r.per_class_iou.push_back(null_to_nan(v));
    r.wallclock_ms = j.at("wallclock_ms").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed round record: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers; the first exception
// (by index) is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  const auto body = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(threads));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) body(i);
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<int> sample_clients(const std::vector<int>& ids, int count, std::uint64_t seed) {
  std::vector<int> pool = ids;
  Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    const std::size_t j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

RoundRecord make_record(int round, EvalResult eval) {
  RoundRecord r;
  r.round = round;
  r.miou = eval.miou;
  r.per_class_iou = std::move(eval.per_class_iou);
  return r;
}

}  // namespace

std::uint64_t local_update_seed(const FederationConfig& cfg, int round, int client_id) {
  return derive_seed(cfg.seed, {0x10ca1, static_cast<std::uint64_t>(round),
                                static_cast<std::uint64_t>(client_id)});
}

SelectionParams selection_params(const FederationConfig& cfg, int num_clients) {
  SelectionParams p = default_selection(num_clients, derive_seed(cfg.seed, {0xc1u}));
  p.m = cfg.cluster_m;
  if (cfg.cluster_n > 0) p.n = cfg.cluster_n;
  p.runs = cfg.cluster_runs;
  return p;
}

RunResult run(const FederationConfig& cfg, World world, const RunHooks& hooks) {
  const int num_clients = static_cast<int>(world.clients.size());
  validate(cfg, num_clients);
  require(!world.test.empty(), "world has no test images");
  const int threads = resolve_threads(cfg.threads);

  RunResult result;
  Transport transport;

  std::vector<Client> clients;
  std::map<int, int> truth;
  for (auto& c : world.clients) {
    truth[c.client_id] = c.domain_id;
    clients.emplace_back(c.client_id, std::move(c.images));
  }
  world.clients.clear();
  std::sort(clients.begin(), clients.end(),
            [](const Client& a, const Client& b) { return a.id() < b.id(); });
  std::vector<int> ids;
  for (const auto& c : clients) ids.push_back(c.id());

  // Clients upload their mean style; the server pools and clusters them.
  parallel_for(clients.size(), threads,
               [&](std::size_t i) { transport.send(clients[i].upload_style(cfg.style_window)); });
  std::vector<StylePoint> points;
  std::vector<Style> pool;
  for (auto& m : transport.drain()) {
    auto& up = std::get<StyleUpload>(m);
    points.push_back({up.client_id, up.mean_style.values});
    pool.push_back(up.mean_style);
    result.styles.push_back(std::move(up));
  }

  if (cfg.cluster_clients && num_clients >= 2) {
    result.selection = selection_params(cfg, num_clients);
    result.partition = select_clustering(points, result.selection, &result.selection_trace);
  } else {
    result.selection = SelectionParams{1, 2, 1, 0};
    result.partition = make_partition(points, std::vector<int>(points.size(), 0));
  }
  result.cluster_accuracy = cluster_accuracy(result.partition, truth);

  std::shared_ptr<const std::atomic<std::uint64_t>> source_reads;
  {
    SourceDataset source(std::move(world.source));
    world.source.clear();
    source_reads = source.reads();
    result.pretrained = server_pretrain(source, pool, cfg);
    result.source_reads_during_pretrain = source_reads->load();
  }  // the source handle is dropped here

  const GroupSet cluster_groups = cfg.cluster_clients ? cfg.cluster_groups : GroupSet::none();
  ClusterModels models =
      ClusterModels::init(result.pretrained, result.partition.num_clusters(), cluster_groups);

  auto emit = [&](RoundRecord r) {
    if (hooks.on_round) hooks.on_round(r);
    result.records.push_back(std::move(r));
  };
  emit(make_record(0, evaluate(models, result.partition, world.test, cfg.style_window)));

  const int rounds = cfg.self_training ? cfg.rounds : 0;
  LocalConfig local;
  local.epochs = cfg.local_epochs;
  local.batch_size = cfg.batch_size;
  local.momentum = cfg.momentum;
  local.kd_weight = cfg.kd_weight;
  local.conf_threshold = cfg.conf_threshold;
  local.class_fraction = cfg.class_fraction;

  for (int t = 1; t <= rounds; ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<int> sampled =
        sample_clients(ids, cfg.clients_per_round, derive_seed(cfg.seed, {0x5a3b, std::uint64_t(t)}));
    local.lr = scheduled_lr(cfg.lr, cfg.lr_power, t - 1, rounds);

    // Immutable per-round snapshots handed to the workers.
    std::vector<ParamSet> cluster_model(models.num_clusters());
    for (int c = 0; c < models.num_clusters(); ++c) cluster_model[c] = models.model(c);
    const ClusterModels& snapshot = models;
    parallel_for(sampled.size(), threads, [&](std::size_t i) {
      const int id = sampled[i];
      const int c = result.partition.cluster_of(id);
      const auto it = std::lower_bound(ids.begin(), ids.end(), id);
      const Client& client = clients[static_cast<std::size_t>(it - ids.begin())];
      transport.send(client.local_update(cluster_model[c], snapshot.teachers[c], result.pretrained,
                                         local, t, local_update_seed(cfg, t, id)));
    });

    std::vector<ClientResult> updates;
    double loss_pseudo = 0.0, loss_kd = 0.0;
    for (auto& m : transport.drain()) {
      auto& up = std::get<ParamUpdate>(m);
      loss_pseudo += up.loss_pseudo;
      loss_kd += up.loss_kd;
      updates.push_back({up.client_id, std::move(up.params), up.n_samples});
    }
    models = aggregate(models, updates, result.partition);
    teacher_refresh(models, t, cfg.teacher_period, cfg.swat_start);

    RoundRecord rec = make_record(t, evaluate(models, result.partition, world.test, cfg.style_window));
    rec.sampled_clients = sampled;
    rec.mean_loss_pseudo = loss_pseudo / static_cast<double>(updates.size());
    rec.mean_loss_kd = loss_kd / static_cast<double>(updates.size());
    if (cfg.record_wallclock) {
      rec.wallclock_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    emit(std::move(rec));
  }

  result.source_reads_after_pretrain = source_reads->load() - result.source_reads_during_pretrain;
  result.models = std::move(models);
  result.messages = transport.counts();
  return result;
}

}  // namespace fedstyle
