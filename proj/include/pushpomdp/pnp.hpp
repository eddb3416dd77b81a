#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pushpomdp/autodiff.hpp"
#include "pushpomdp/geometry.hpp"
#include "pushpomdp/nn.hpp"

namespace pushpomdp {

/// One observed push, expressed in the block's pre-push body frame.
struct PushRecord {
    /// (cos theta_body, sin theta_body, travel)
    std::array<double, 3> action{};
    /// (dx, dy, dyaw) with dyaw wrapped to [-pi, pi)
    std::array<double, 3> outcome{};

    static PushRecord from_poses(const Pose2D& before, const PushAction& action, const Pose2D& after);
};

/// Push features of a world-frame action as seen from a block at `pose`.
std::array<double, 3> body_action(const Pose2D& pose, const PushAction& action);

/// World pose reached from `before` after a body-frame displacement.
Pose2D apply_outcome(const Pose2D& before, const std::array<double, 3>& outcome);

enum class HistoryCapPolicy {
    /// Stop recording once full.
    keep_first,
    /// Drop the oldest record to make room.
    drop_oldest,
};

/// Ordered push history fed to the encoder, capped in length.
class History {
public:
    static constexpr std::size_t kDefaultCap = 10;

    explicit History(std::size_t cap = kDefaultCap, HistoryCapPolicy policy = HistoryCapPolicy::keep_first)
        : cap_(cap), policy_(policy) {}

    void push(const PushRecord& r);
    std::span<const PushRecord> records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    std::size_t cap() const { return cap_; }
    HistoryCapPolicy policy() const { return policy_; }

private:
    std::vector<PushRecord> records_;
    std::size_t cap_;
    HistoryCapPolicy policy_;
};

/// Encoder output: diagonal Gaussian over the latent.
struct LatentDist {
    std::vector<double> mean;
    std::vector<double> std;
};

/// Decoder output over (dx, dy, dyaw) in physical units.
struct OutcomeDist {
    std::array<double, 3> mean{};
    std::array<double, 3> std{};
};

struct PnpConfig {
    std::size_t latent_dim = 5;
    std::size_t embed_dim = 64;
    std::size_t attention_layers = 2;
    std::size_t heads = 4;
    std::size_t ffn_dim = 64;
    std::vector<std::size_t> decoder_hidden{128, 128, 128};
    /// Positions are divided by this before entering the network.
    double position_scale = 0.1;
    double travel_scale = 0.15;
    std::size_t history_cap = History::kDefaultCap;
    HistoryCapPolicy cap_policy = HistoryCapPolicy::keep_first;
    /// Observable block features; constant for a fixed geometry.
    std::vector<double> observable{1.0, 1.0};

    static constexpr std::size_t kTokenFeatures = 7;
    std::size_t token_width() const { return kTokenFeatures + observable.size(); }
    std::size_t decoder_input_width() const { return latent_dim + 3 + observable.size(); }
    void validate() const;
};

/// Observable features of a block geometry, normalized to the default block.
std::vector<double> observable_features(const BlockSpec& geometry);

/// Encoder token features for one record.
std::vector<double> token_features(const PnpConfig& cfg, const PushRecord& r);

struct AttentionBlock {
    nn::MultiHeadAttention attention;
    nn::Mlp feed_forward;
};

/// Pushing neural process: attention encoder q(z | x, D) and MLP decoder p(o | a, x, z).
class PnpModel {
public:
    PnpModel(const PnpConfig& cfg, std::uint64_t seed);

    const PnpConfig& config() const { return cfg_; }

    std::vector<nn::NamedTensor> named_parameters() const;
    std::vector<ad::Tensor> parameters() const;
    std::size_t parameter_count() const;

    /// 1 x latent_dim Gaussian over every record given. An empty set yields the learned
    /// default token's prior. Length caps are the History's job.
    nn::GaussianDiag encode(ad::Graph& g, std::span<const PushRecord> records) const;
    /// One row per action in network units: positions divided by position_scale.
    nn::GaussianDiag decode(ad::Graph& g, const ad::Tensor& z_rows,
                            std::span<const std::array<double, 3>> actions) const;

    LatentDist encode(std::span<const PushRecord> records) const;
    LatentDist encode(const History& h) const { return encode(h.records()); }
    OutcomeDist decode(std::span<const double> z, const std::array<double, 3>& action) const;

private:
    friend class PnpInference;

    PnpConfig cfg_;
    nn::Mlp embed_;
    std::vector<AttentionBlock> blocks_;
    ad::Tensor default_token_;
    nn::Mlp latent_head_;
    nn::Mlp decoder_;
};

/// Single-z predictive sample: z ~ q(z | history), o ~ p(o | a, z).
/// `deterministic` takes both means instead of sampling.
std::array<double, 3> predict(const PnpModel& model, const History& history,
                              const std::array<double, 3>& action, Rng& rng, bool deterministic = false);

/// Negative ELBO, sum over targets of log p(o | a, z) minus KL(q(z|targets) || q(z|context)),
/// with z drawn from q(z | targets). Log densities are in physical units.
ad::Tensor elbo_loss(ad::Graph& g, const PnpModel& model, std::span<const PushRecord> context,
                     std::span<const PushRecord> targets, Rng& rng);

struct BlockPushes {
    std::uint64_t block_id = 0;
    Vec2 com;
    std::vector<PushRecord> records;
};

struct PushDataset {
    std::vector<BlockPushes> blocks;

    std::size_t record_count() const;
};

/// Pushes with uniform directions from a canonical pose, one fresh center of mass per block.
PushDataset gen_dataset(std::size_t n_blocks, std::size_t pushes_per_block, const BlockSpec& geometry,
                        const NoiseSpec& noise, const SimulatorConfig& sim, Rng& rng, double speed = 0.10,
                        double travel = 0.15);

void write_dataset_jsonl(const PushDataset& ds, std::ostream& os);
void write_dataset_jsonl(const PushDataset& ds, const std::filesystem::path& path);
PushDataset read_dataset_jsonl(std::istream& is);
PushDataset read_dataset_jsonl(const std::filesystem::path& path);

/// Footprint symmetries that map one block's push log onto another valid block's log.
/// Elements index the dihedral group of the square: element % 4 quarter turns after an
/// optional reflection across the body x axis (element >= 4). Rectangles keep the four
/// elements that preserve the footprint. Element 0 is the identity.
std::vector<std::size_t> symmetry_elements(const BlockSpec& geometry);
PushRecord apply_symmetry(const PushRecord& r, std::size_t element);

struct TrainConfig {
    std::size_t epochs = 200;
    /// Blocks per optimizer step.
    std::size_t batch = 4;
    double lr = 1e-3;
    /// Cosine decay floor; equal to lr for a constant schedule.
    double min_lr = 1e-5;
    /// Decoupled (AdamW-style) weight decay.
    double weight_decay = 0.0;
    std::uint64_t seed = 1;
    bool augment = true;
    std::size_t max_context = 10;
    /// Context size used for the per-epoch holdout log-likelihood.
    std::size_t holdout_context = 5;
};

struct EpochStats {
    std::size_t epoch = 0;
    double elbo_loss = 0.0;
    double holdout_loglik = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> curve;
};

/// Adam on the negative ELBO. Deterministic given the seed. A non-finite loss aborts
/// with std::runtime_error naming the epoch and step.
TrainResult train(PnpModel& model, const PushDataset& dataset, const TrainConfig& cfg,
                  const PushDataset* holdout = nullptr, const BlockSpec& geometry = {});

/// Mean per-record predictive log density of the last records given the first `context` ones,
/// decoding at the latent mean.
double holdout_loglik(const PnpModel& model, const PushDataset& holdout, std::size_t context);

struct ContextPoint {
    std::size_t context = 0;
    double mean_error = 0.0;
    double std_error = 0.0;
    std::size_t blocks = 0;
};

/// Position error of the predicted outcome mean versus context size. Every context size is
/// scored on the same targets: the records after index `max_context` of each block.
std::vector<ContextPoint> eval_context_curve(const PnpModel& model, const PushDataset& testset,
                                             std::size_t max_context = 10);

void save_checkpoint(const PnpModel& model, const std::filesystem::path& manifest_path);
PnpModel load_checkpoint(const std::filesystem::path& manifest_path);

}  // namespace pushpomdp
