#include "trajaware/dqn.hpp"

#include <cmath>
#include <fstream>

#include "trajaware/errors.hpp"

namespace trajaware {

double compute_reward(HopOutcome outcome, const RewardConfig& r) {
  switch (outcome) {
    case HopOutcome::Relayed: return r.relayed;
    case HopOutcome::Delivered: return r.delivered;
    case HopOutcome::DroppedTtl:
    case HopOutcome::DroppedUnreachable:
    case HopOutcome::DroppedHolderLost:
    case HopOutcome::DroppedDestinationLost: return r.dropped;
    case HopOutcome::CongestionWait:
    case HopOutcome::NoNeighbourWait: return r.wait;
  }
  return 0.0;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ParameterError("replay capacity must be positive");
  items_.reserve(capacity);
}

void ReplayBuffer::push(Experience e) {
  if (!std::isfinite(e.reward)) throw NumericError("non-finite reward");
  if (items_.size() < capacity_) {
    items_.push_back(std::move(e));
  } else {
    items_[head_] = std::move(e);
    head_ = (head_ + 1) % capacity_;
  }
  ++inserted_;
}

const Experience& ReplayBuffer::at(std::size_t i) const {
  if (i >= items_.size()) throw LookupError("replay index out of range");
  return items_[(head_ + i) % items_.size()];
}

void TrainConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("gamma must be in (0, 1)");
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 && epsilon_end <= 1.0))
    throw ValidationError("epsilon values must be in [0, 1]");
  if (epsilon_decay_steps < 1) throw ValidationError("epsilon_decay_steps must be >= 1");
  if (target_sync_every < 1) throw ValidationError("target_sync_every must be >= 1");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (buffer_capacity < batch_size) throw ValidationError("buffer_capacity must be >= batch_size");
  if (train_every < 1) throw ValidationError("train_every must be >= 1");
  if (episodes < 0) throw ValidationError("episodes must be >= 0");
  if (log_every < 1) throw ValidationError("log_every must be >= 1");
  if (checkpoint_every < 0) throw ValidationError("checkpoint_every must be >= 0");
  sim.validate();
}

double TrainConfig::epsilon_at(long step) const {
  const double frac = std::min(1.0, static_cast<double>(step) / epsilon_decay_steps);
  return (1.0 - frac) * epsilon_start + frac * epsilon_end;
}

std::vector<Experience> experiences_from(const EpisodeResult& episode, const TrainConfig& cfg) {
  std::vector<Experience> out;
  std::optional<Experience> pending;
  double discount = 1.0;
  for (const HopRecord& hop : episode.hops) {
    if (hop.outcome == HopOutcome::DroppedDestinationLost) {
      pending.reset();
      break;
    }
    const double r = compute_reward(hop.outcome, cfg.rewards);
    if (hop.decision.state) {
      if (pending) {
        pending->next_state = hop.decision.state;
        out.push_back(std::move(*pending));
      }
      pending = Experience{hop.decision.state, hop.decision.action_index, r, nullptr, false, 1};
      discount = cfg.gamma;
    } else if (pending) {
      pending->reward += discount * r;
      discount *= cfg.gamma;
      ++pending->steps;
    }
    if (is_terminal(hop.outcome) && pending) {
      pending->done = true;
      out.push_back(std::move(*pending));
      pending.reset();
    }
  }
  return out;
}

std::vector<double> td_target(std::span<const Experience> batch, const QNetParams& target,
                              double gamma) {
  if (batch.empty()) throw ParameterError("td_target needs a non-empty batch");
  std::vector<double> y;
  y.reserve(batch.size());
  for (const auto& e : batch) {
    if (e.done) {
      y.push_back(e.reward);
      continue;
    }
    const QOutput q = q_forward(restore(*e.next_state), target);
    y.push_back(e.reward + std::pow(gamma, e.steps) * max_valid_q(q));
  }
  return y;
}

std::optional<double> train_step(const ReplayBuffer& buffer, QNetParams& params,
                                 const QNetParams& target, nn::Adam& adam,
                                 const TrainConfig& cfg, std::mt19937_64& rng) {
  const auto b = static_cast<std::size_t>(cfg.batch_size);
  if (buffer.size() < b) return std::nullopt;
  std::uniform_int_distribution<std::size_t> pick(0, buffer.size() - 1);
  std::vector<Experience> batch;
  batch.reserve(b);
  for (std::size_t i = 0; i < b; ++i) batch.push_back(buffer.at(pick(rng)));
  const auto y = td_target(batch, target, cfg.gamma);

  nn::Tensor loss;
  for (std::size_t i = 0; i < b; ++i) {
    const nn::Tensor q = q_values_tensor(restore(*batch[i].state), params);
    const nn::Tensor diff =
        nn::sub(nn::element(q, static_cast<std::size_t>(batch[i].action_index)),
                nn::Tensor::scalar(y[i]));
    const nn::Tensor sq = nn::scale(nn::mul(diff, diff), 1.0 / static_cast<double>(b));
    loss = loss.defined() ? nn::add(loss, sq) : sq;
  }
  nn::backward(loss);
  adam.step();
  return loss.item();
}

namespace {

struct RecentStats {
  double loss_sum = 0.0;
  int loss_n = 0;
  double spr_sum = 0.0, pspr_sum = 0.0;
  int delivered = 0, episodes = 0;

  void reset() { *this = {}; }
};

}  // namespace

TrainingResult run_training(std::span<const World> worlds, const QNetConfig& net,
                            const TrainConfig& cfg, std::uint64_t seed,
                            const CheckpointWriter& write_checkpoint) {
  cfg.validate();
  if (worlds.size() < 2) throw ParameterError("run_training needs at least two training maps");
  TrainingResult result{QNetParams::init(net, seed), {}, {}};
  if (cfg.episodes == 0) return result;

  QNetParams& params = result.params;
  QNetParams target = params.clone();
  nn::AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg.learning_rate;
  adam_cfg.clip_norm = cfg.grad_clip;
  nn::Adam adam(nn::tensors_of(params.named()), adam_cfg);
  ReplayBuffer buffer(static_cast<std::size_t>(cfg.buffer_capacity));
  std::mt19937_64 sample_rng(derive_seed(seed, 0x5eed));
  long steps = 0;
  RecentStats recent;

  auto checkpoint = [&](int episode) {
    if (!write_checkpoint || cfg.checkpoint_dir.empty()) return;
    const auto path = cfg.checkpoint_dir / ("policy_ep" + std::to_string(episode) + ".json");
    write_checkpoint(path, params);
    result.last_checkpoint = path.string();
  };

  for (int e = 0; e < cfg.episodes; ++e) {
    const World& w = worlds[e % worlds.size()];
    const auto spec = sample_episodes(w, 1, cfg.sim, derive_seed(seed, 2 * e + 1)).front();
    const double eps = cfg.epsilon_at(steps);
    const QRoutingPolicy policy(params, eps, true);
    const EpisodeResult ep = run_episode(w, spec, policy, cfg.sim, derive_seed(seed, 2 * e + 2));
    if (!ep.skipped) {
      ++recent.episodes;
      recent.pspr_sum += ep.pspr;
      if (ep.delivered) {
        ++recent.delivered;
        recent.spr_sum += *ep.spr;
      }
    }
    for (auto& x : experiences_from(ep, cfg)) {
      buffer.push(std::move(x));
      ++steps;
      if (steps % cfg.train_every == 0) {
        if (const auto loss = train_step(buffer, params, target, adam, cfg, sample_rng)) {
          if (!std::isfinite(*loss) || *loss > cfg.divergence_loss)
            throw TrainingFailure("policy training diverged at episode " + std::to_string(e) +
                                      " (loss " + std::to_string(*loss) + ")",
                                  result.last_checkpoint);
          recent.loss_sum += *loss;
          ++recent.loss_n;
        }
      }
      if (steps % cfg.target_sync_every == 0) nn::copy_values(params.named(), target.named());
    }
    if ((e + 1) % cfg.log_every == 0 || e + 1 == cfg.episodes) {
      TrainLogRow row;
      row.episode = e;
      row.steps = steps;
      row.epsilon = cfg.epsilon_at(steps);
      row.loss = recent.loss_n ? recent.loss_sum / recent.loss_n : 0.0;
      row.spr = recent.delivered ? recent.spr_sum / recent.delivered : 0.0;
      row.pspr = recent.episodes ? recent.pspr_sum / recent.episodes : 0.0;
      row.rr = recent.episodes ? static_cast<double>(recent.delivered) / recent.episodes : 0.0;
      result.log.push_back(row);
      recent.reset();
    }
    if (cfg.checkpoint_every > 0 && (e + 1) % cfg.checkpoint_every == 0) checkpoint(e);
  }
  return result;
}

void write_training_log(const std::filesystem::path& csv, std::span<const TrainLogRow> rows) {
  std::ofstream out(csv);
  if (!out) throw IoError("cannot write " + csv.string());
  out.precision(10);
  out << "episode,steps,epsilon,loss,spr,pspr,rr\n";
  for (const auto& r : rows)
    out << r.episode << ',' << r.steps << ',' << r.epsilon << ',' << r.loss << ',' << r.spr << ','
        << r.pspr << ',' << r.rr << '\n';
  if (!out) throw IoError("failed writing " + csv.string());
}

}  // namespace trajaware
