#pragma once

// Deep Q-learning for the routing policy: replay buffer, epsilon-greedy
// collection, periodically synced target network, TD targets.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "trajaware/route_sim.hpp"

namespace trajaware {

struct RewardConfig {
  double relayed = -1.0;
  double delivered = 10.0;
  double dropped = -10.0;  // TTL, unreachable, holder lost
  double wait = -1.0;      // congestion or no neighbour
};

double compute_reward(HopOutcome outcome, const RewardConfig& rewards = {});

struct Experience {
  std::shared_ptr<const StateSnapshot> state;
  int action_index = 0;
  /// Discounted sum of the rewards up to the next decision.
  double reward = 0.0;
  std::shared_ptr<const StateSnapshot> next_state;  // null when done
  bool done = false;
  /// Environment steps folded into this transition; bootstraps with gamma^steps.
  int steps = 1;
};

/// Fixed-capacity FIFO ring.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  void push(Experience e);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t inserted() const { return inserted_; }
  /// i-th oldest experience still held.
  const Experience& at(std::size_t i) const;

 private:
  std::size_t capacity_;
  std::vector<Experience> items_;
  std::size_t head_ = 0;  // index of the oldest once full
  std::size_t inserted_ = 0;
};

struct TrainConfig {
  double gamma = 0.95;
  double learning_rate = 1e-3;
  double grad_clip = 10.0;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  int epsilon_decay_steps = 20000;
  int target_sync_every = 500;
  int batch_size = 64;
  int buffer_capacity = 50000;
  /// Decisions collected between gradient steps.
  int train_every = 1;
  int episodes = 4000;
  RewardConfig rewards;
  /// Environment settings for collection (complete observation).
  SimOptions sim;
  int log_every = 50;
  int checkpoint_every = 500;  // episodes; 0 disables
  std::filesystem::path checkpoint_dir;
  double divergence_loss = 1e6;

  TrainConfig() {
    sim.graph_refresh = 5;
    sim.min_shortest = 2;
  }
  void validate() const;
  double epsilon_at(long step) const;
};

/// Decision-to-decision transitions of one episode. Steps without a policy
/// call fold into the preceding transition; a lost destination truncates it.
std::vector<Experience> experiences_from(const EpisodeResult& episode, const TrainConfig& cfg);

std::vector<double> td_target(std::span<const Experience> batch, const QNetParams& target,
                              double gamma);

/// One gradient step on a uniformly sampled batch. Returns the loss before
/// the step, or nullopt when the buffer holds fewer than batch_size items.
std::optional<double> train_step(const ReplayBuffer& buffer, QNetParams& params,
                                 const QNetParams& target, nn::Adam& adam,
                                 const TrainConfig& cfg, std::mt19937_64& rng);

struct TrainLogRow {
  int episode = 0;
  long steps = 0;
  double epsilon = 0.0;
  double loss = 0.0;
  double spr = 0.0;
  double pspr = 0.0;
  double rr = 0.0;
};

struct TrainingResult {
  QNetParams params;
  std::vector<TrainLogRow> log;
  std::string last_checkpoint;
};

using CheckpointWriter = std::function<void(const std::filesystem::path&, const QNetParams&)>;

/// Round-robin episodes over the training worlds. Deterministic in
/// (worlds, configs, seed).
TrainingResult run_training(std::span<const World> worlds, const QNetConfig& net,
                            const TrainConfig& cfg, std::uint64_t seed,
                            const CheckpointWriter& write_checkpoint = {});

void write_training_log(const std::filesystem::path& csv, std::span<const TrainLogRow> rows);

}  // namespace trajaware
