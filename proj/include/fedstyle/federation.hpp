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

#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fedstyle/clustering.hpp"
#include "fedstyle/metrics.hpp"
#include "fedstyle/model.hpp"
#include "fedstyle/spectral.hpp"
#include "fedstyle/synthdata.hpp"

namespace fedstyle {

// Learning rate at step `step` of `total`: base, or base * (1 - step/total)^power
// when power > 0.
double scheduled_lr(double base, double power, int step, int total);

struct FederationConfig {
  // Adaptation rounds.
  int rounds = 50;               // T
  int clients_per_round = 5;
  int local_epochs = 2;          // E
  int batch_size = 4;
  double lr = 0.05;
  double lr_power = 0.0;         // 0: fixed learning rate
  double momentum = 0.9;
  bool self_training = true;     // false: no adaptation rounds at all
  double kd_weight = 1.0;        // lambda_kd; 0 disables distillation
  int teacher_period = 1;        // omega
  int swat_start = 25;           // > rounds disables SWAt
  bool cluster_clients = true;   // false: one cluster holding every client
  GroupSet cluster_groups = GroupSet::all();
  double conf_threshold = 0.9;
  double class_fraction = 0.66;

  // Styles and server pre-training.
  int style_window = 3;          // l_s used for uploads, clustering and test-time assignment
  bool fda_pretrain = true;
  int pretrain_steps = 600;
  int pretrain_batch = 4;
  double pretrain_lr = 0.05;
  double pretrain_lr_power = 0.9;
  double p_plain = 0.2;
  ModelShape model;

  // Cluster selection; cluster_n == 0 picks the default.
  int cluster_m = 2;
  int cluster_n = 0;
  int cluster_runs = 10;

  std::uint64_t seed = 0;
  int threads = 0;               // 0: FEDSTYLE_THREADS, else hardware concurrency
  bool record_wallclock = false; // false keeps rounds.jsonl byte-reproducible
};

void validate(const FederationConfig& cfg, int num_clients);
int resolve_threads(int requested);

// ---------------------------------------------------------------------------
// Client -> server transport. These two payloads are the only things a client
// ever sends.

enum class MessageKind : std::uint8_t { kStyleUpload = 0, kParamUpdate = 1 };
inline constexpr int kNumMessageKinds = 2;
std::string_view message_kind_name(MessageKind k);

struct StyleUpload {
  int client_id = 0;
  Style mean_style;
};

struct ParamUpdate {
  int client_id = 0;
  int round = 0;
  ParamSet params;
  std::size_t n_samples = 0;
  double loss_pseudo = 0.0;
  double loss_kd = 0.0;
};

using Message = std::variant<StyleUpload, ParamUpdate>;
MessageKind kind_of(const Message& m);

class Transport {
 public:
  void send(Message m);
  // Returns pending messages ordered by client id, then removes them.
  std::vector<Message> drain();
  std::array<std::size_t, kNumMessageKinds> counts() const;

 private:
  mutable std::mutex mu_;
  std::vector<Message> pending_;
  std::array<std::size_t, kNumMessageKinds> counts_{};
};

// ---------------------------------------------------------------------------

// Labeled source data behind a read counter, so tests can show nothing reads
// it once pre-training is over.
class SourceDataset {
 public:
  explicit SourceDataset(std::vector<LabeledImage> samples);
  std::size_t size() const { return samples_.size(); }
  const LabeledImage& at(std::size_t i) const;
  std::shared_ptr<const std::atomic<std::uint64_t>> reads() const { return reads_; }

 private:
  std::vector<LabeledImage> samples_;
  std::shared_ptr<std::atomic<std::uint64_t>> reads_;
};

struct PretrainTrace {
  std::vector<double> losses;  // one per step
  int stylized = 0;
  int plain = 0;
};

// Supervised pre-training on the source set. Each sampled image is stylized
// with a uniformly drawn pool style unless a p_plain coin says otherwise; an
// empty pool (or fda_pretrain = false) means plain training. The random stream
// does not depend on the pool, so runs differing only in pool contents replay
// the same sample sequence.
ParamSet server_pretrain(const SourceDataset& source, std::span<const Style> pool,
                         const FederationConfig& cfg, PretrainTrace* trace = nullptr);

struct LocalResult {
  ParamSet params;
  double loss_pseudo = 0.0;  // mean over steps
  double loss_kd = 0.0;
  int steps = 0;
  bool kd_only = false;      // every pseudo-label was rejected
};

struct LocalConfig {
  int epochs = 1;
  int batch_size = 1;
  double lr = 0.01;
  double momentum = 0.9;
  double kd_weight = 0.0;
  double conf_threshold = 0.9;
  double class_fraction = 0.66;
};

// E epochs of SGD on L_pseudo(teacher) + kd_weight * L_kd(pretrained),
// starting from `start`. teacher and pretrained are only read.
LocalResult client_update(const ParamSet& start, const ParamSet& teacher,
                          const ParamSet& pretrained, std::span<const ImageTensor> data,
                          const LocalConfig& cfg, std::uint64_t seed);

// A client owns its private images; the server only sees what it sends.
class Client {
 public:
  Client(int id, std::vector<ImageTensor> images);
  int id() const { return id_; }
  std::size_t num_samples() const { return images_.size(); }

  StyleUpload upload_style(int window) const;
  ParamUpdate local_update(const ParamSet& cluster_model, const ParamSet& teacher,
                           const ParamSet& pretrained, const LocalConfig& cfg, int round,
                           std::uint64_t seed) const;

 private:
  int id_;
  std::vector<ImageTensor> images_;
};

// Server-side state: global slice phi, per-cluster theta_c, per-cluster
// teachers and SWAt counters.
struct ClusterModels {
  GroupSet cluster_groups;
  ParamSet phi;
  std::vector<ParamSet> theta;
  std::vector<ParamSet> teachers;
  std::vector<int> swat_count;

  int num_clusters() const { return static_cast<int>(theta.size()); }
  ParamSet model(int cluster) const;  // phi U theta_c

  static ClusterModels init(const ParamSet& w, int clusters, GroupSet cluster_groups);
};

struct ClientResult {
  int client_id = 0;
  ParamSet params;
  std::size_t n_samples = 0;
};

// phi <- sample-weighted mean over all updates; theta_c <- sample-weighted
// mean over the updates of cluster c (unchanged when c has none). Sums run in
// ascending client id.
ClusterModels aggregate(const ClusterModels& prev, std::span<const ClientResult> updates,
                        const ClusterPartition& partition);

// Called after aggregation of round t. No-op unless t % period == 0; before
// swat_start the teacher is a copy of the cluster model, afterwards the
// running mean w_g <- (n * w_g + w_c) / (n + 1) where n counts earlier
// SWAt updates.
void teacher_refresh(ClusterModels& models, int round, int period, int swat_start);

struct EvalResult {
  std::vector<double> per_class_iou;  // NaN for classes absent from truth and prediction
  double miou = 0.0;
  ConfusionMatrix confusion{1};
};

// Test-time routing: each image goes to the cluster whose centroid is nearest
// to its style.
EvalResult evaluate(const ClusterModels& models, const ClusterPartition& partition,
                    std::span<const TestImage> test, int style_window);
EvalResult evaluate_single(const ParamSet& params, std::span<const LabeledImage> test);

struct RoundRecord {
  int round = 0;
  std::vector<int> sampled_clients;
  double mean_loss_pseudo = 0.0;
  double mean_loss_kd = 0.0;
  double miou = 0.0;
  std::vector<double> per_class_iou;
  double wallclock_ms = 0.0;
};

std::string to_json_line(const RoundRecord& r);
RoundRecord parse_round_record(std::string_view line);

struct RunResult {
  std::vector<RoundRecord> records;  // round 0 evaluates the pre-trained model
  ClusterPartition partition;
  SelectionParams selection;
  std::vector<SelectionTrace> selection_trace;
  std::vector<StyleUpload> styles;
  ParamSet pretrained;
  ClusterModels models;
  std::array<std::size_t, kNumMessageKinds> messages{};
  std::uint64_t source_reads_during_pretrain = 0;
  std::uint64_t source_reads_after_pretrain = 0;
  double cluster_accuracy = 0.0;  // against the generator's domains; diagnostics only
};

// Seed of client `client_id`'s local update in round `round`.
std::uint64_t local_update_seed(const FederationConfig& cfg, int round, int client_id);

// Clustering search settings used by run() for num_clients style points.
SelectionParams selection_params(const FederationConfig& cfg, int num_clients);

struct RunHooks {
  std::function<void(const RoundRecord&)> on_round;
};

// Style upload -> cluster selection -> server pre-training -> T rounds of
// {sample, local updates, aggregate, teacher refresh, evaluate}.
RunResult run(const FederationConfig& cfg, World world, const RunHooks& hooks = {});

}  // namespace fedstyle
