#include "pushpomdp/pnp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace pushpomdp {

using ad::Graph;
using ad::Tensor;
using nlohmann::json;

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr int kCheckpointVersion = 1;

double outcome_logpdf(const OutcomeDist& d, const std::array<double, 3>& o) {
    double lp = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
        double r = o[j] - d.mean[j];
        if (j == 2) {
            r = wrap_angle(r);
        }
        const double u = r / d.std[j];
        lp += -0.5 * u * u - std::log(d.std[j]) - kHalfLog2Pi;
    }
    return lp;
}

const char* cap_policy_name(HistoryCapPolicy p) {
    return p == HistoryCapPolicy::keep_first ? "keep_first" : "drop_oldest";
}

HistoryCapPolicy cap_policy_from(const std::string& s) {
    if (s == "keep_first") {
        return HistoryCapPolicy::keep_first;
    }
    if (s == "drop_oldest") {
        return HistoryCapPolicy::drop_oldest;
    }
    throw std::invalid_argument("unknown history cap policy '" + s + "'");
}

}  // namespace

PushRecord PushRecord::from_poses(const Pose2D& before, const PushAction& action, const Pose2D& after) {
    PushRecord r;
    r.action = body_action(before, action);
    const Vec2 d = rotate(Vec2{after.x - before.x, after.y - before.y}, -before.yaw);
    r.outcome = {d.x, d.y, wrap_angle(after.yaw - before.yaw)};
    return r;
}

std::array<double, 3> body_action(const Pose2D& pose, const PushAction& action) {
    const double theta = action.theta - pose.yaw;
    return {std::cos(theta), std::sin(theta), action.travel};
}

Pose2D apply_outcome(const Pose2D& before, const std::array<double, 3>& outcome) {
    const Vec2 d = rotate(Vec2{outcome[0], outcome[1]}, before.yaw);
    return {before.x + d.x, before.y + d.y, wrap_angle(before.yaw + outcome[2])};
}

void History::push(const PushRecord& r) {
    if (cap_ == 0) {
        return;
    }
    if (records_.size() < cap_) {
        records_.push_back(r);
    } else if (policy_ == HistoryCapPolicy::drop_oldest) {
        records_.erase(records_.begin());
        records_.push_back(r);
    }
}

void PnpConfig::validate() const {
    if (latent_dim == 0 || embed_dim == 0 || ffn_dim == 0) {
        throw std::invalid_argument("pnp: latent, embed and ffn widths must be positive");
    }
    if (heads == 0 || embed_dim % heads != 0) {
        throw std::invalid_argument("pnp: embed_dim must be divisible by heads");
    }
    if (decoder_hidden.empty() ||
        std::any_of(decoder_hidden.begin(), decoder_hidden.end(), [](std::size_t w) { return w == 0; })) {
        throw std::invalid_argument("pnp: decoder needs at least one non-empty hidden layer");
    }
    if (!(position_scale > 0.0) || !(travel_scale > 0.0)) {
        throw std::invalid_argument("pnp: scales must be positive");
    }
}

std::vector<double> observable_features(const BlockSpec& geometry) {
    const BlockSpec reference;
    return {geometry.half_extents.x / reference.half_extents.x, geometry.half_extents.y / reference.half_extents.y};
}

std::vector<double> token_features(const PnpConfig& cfg, const PushRecord& r) {
    std::vector<double> f{r.action[0],
                          r.action[1],
                          r.action[2] / cfg.travel_scale,
                          r.outcome[0] / cfg.position_scale,
                          r.outcome[1] / cfg.position_scale,
                          std::cos(r.outcome[2]),
                          std::sin(r.outcome[2])};
    f.insert(f.end(), cfg.observable.begin(), cfg.observable.end());
    return f;
}

PnpModel::PnpModel(const PnpConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    const std::size_t e = cfg_.embed_dim;
    embed_ = nn::Mlp({cfg_.token_width(), e, e}, rng);
    for (std::size_t i = 0; i < cfg_.attention_layers; ++i) {
        AttentionBlock b;
        b.attention = nn::MultiHeadAttention(e, cfg_.heads, rng);
        b.feed_forward = nn::Mlp({e, cfg_.ffn_dim, e}, rng);
        blocks_.push_back(std::move(b));
    }
    default_token_ = Tensor(1, e, 0.0, true);
    latent_head_ = nn::Mlp({e, e, 2 * cfg_.latent_dim}, rng);
    std::vector<std::size_t> widths{cfg_.decoder_input_width()};
    widths.insert(widths.end(), cfg_.decoder_hidden.begin(), cfg_.decoder_hidden.end());
    widths.push_back(6);
    decoder_ = nn::Mlp(widths, rng);
}

std::vector<nn::NamedTensor> PnpModel::named_parameters() const {
    std::vector<nn::NamedTensor> out;
    embed_.collect("embed", out);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const std::string p = "block" + std::to_string(i);
        blocks_[i].attention.collect(p + ".attention", out);
        blocks_[i].feed_forward.collect(p + ".ffn", out);
    }
    out.push_back({"default_token", default_token_});
    latent_head_.collect("latent_head", out);
    decoder_.collect("decoder", out);
    return out;
}

std::vector<Tensor> PnpModel::parameters() const {
    std::vector<Tensor> out;
    for (auto& nt : named_parameters()) {
        out.push_back(nt.tensor);
    }
    return out;
}

std::size_t PnpModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& nt : named_parameters()) {
        n += nt.tensor.size();
    }
    return n;
}

nn::GaussianDiag PnpModel::encode(Graph& g, std::span<const PushRecord> records) const {
    Tensor agg;
    if (records.empty()) {
        agg = default_token_;
    } else {
        const std::size_t w = cfg_.token_width();
        std::vector<double> x;
        x.reserve(records.size() * w);
        for (const auto& r : records) {
            const auto f = token_features(cfg_, r);
            x.insert(x.end(), f.begin(), f.end());
        }
        Tensor h = embed_.forward(g, Tensor::from(records.size(), w, std::move(x)));
        for (const auto& b : blocks_) {
            h = g.add(h, b.attention.forward(g, h, h, h));
            h = g.add(h, b.feed_forward.forward(g, h));
        }
        agg = g.mean_rows(h);
    }
    return nn::gaussian_from_raw(g, latent_head_.forward(g, agg));
}

nn::GaussianDiag PnpModel::decode(Graph& g, const Tensor& z_rows,
                                  std::span<const std::array<double, 3>> actions) const {
    if (z_rows.rows() != actions.size() || z_rows.cols() != cfg_.latent_dim) {
        throw std::invalid_argument("pnp decode: z rows must match actions and latent_dim");
    }
    const std::size_t w = 3 + cfg_.observable.size();
    std::vector<double> a;
    a.reserve(actions.size() * w);
    for (const auto& act : actions) {
        a.push_back(act[0]);
        a.push_back(act[1]);
        a.push_back(act[2] / cfg_.travel_scale);
        a.insert(a.end(), cfg_.observable.begin(), cfg_.observable.end());
    }
    const Tensor input = g.concat_cols({z_rows, Tensor::from(actions.size(), w, std::move(a))});
    return nn::gaussian_from_raw(g, decoder_.forward(g, input));
}

LatentDist PnpModel::encode(std::span<const PushRecord> records) const {
    Graph g(false);
    const auto d = encode(g, records);
    LatentDist out;
    out.mean.assign(d.mean.value().begin(), d.mean.value().end());
    out.std.assign(d.std.value().begin(), d.std.value().end());
    return out;
}

OutcomeDist PnpModel::decode(std::span<const double> z, const std::array<double, 3>& action) const {
    if (z.size() != cfg_.latent_dim) {
        throw std::invalid_argument("pnp decode: latent has the wrong size");
    }
    Graph g(false);
    const std::array<std::array<double, 3>, 1> acts{action};
    const auto d = decode(g, Tensor::from(1, z.size(), std::vector<double>(z.begin(), z.end())), acts);
    OutcomeDist out;
    const double s[3] = {cfg_.position_scale, cfg_.position_scale, 1.0};
    for (std::size_t j = 0; j < 3; ++j) {
        out.mean[j] = d.mean.at(0, j) * s[j];
        out.std[j] = d.std.at(0, j) * s[j];
    }
    return out;
}

std::array<double, 3> predict(const PnpModel& model, const History& history, const std::array<double, 3>& action,
                              Rng& rng, bool deterministic) {
    const LatentDist lat = model.encode(history);
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<double> z = lat.mean;
    if (!deterministic) {
        for (std::size_t i = 0; i < z.size(); ++i) {
            z[i] += lat.std[i] * n01(rng);
        }
    }
    const OutcomeDist od = model.decode(z, action);
    std::array<double, 3> o = od.mean;
    if (!deterministic) {
        for (std::size_t j = 0; j < 3; ++j) {
            o[j] += od.std[j] * n01(rng);
        }
    }
    o[2] = wrap_angle(o[2]);
    return o;
}

Tensor elbo_loss(Graph& g, const PnpModel& model, std::span<const PushRecord> context,
                 std::span<const PushRecord> targets, Rng& rng) {
    if (targets.empty()) {
        throw std::invalid_argument("elbo_loss: needs at least one target record");
    }
    const auto& cfg = model.config();
    const auto q_targets = model.encode(g, targets);
    const auto q_context = model.encode(g, context);
    const Tensor z = nn::reparam_sample(g, q_targets, rng);
    const std::size_t t = targets.size();
    std::vector<std::array<double, 3>> actions;
    std::vector<double> x;
    actions.reserve(t);
    x.reserve(3 * t);
    for (const auto& r : targets) {
        actions.push_back(r.action);
        x.push_back(r.outcome[0] / cfg.position_scale);
        x.push_back(r.outcome[1] / cfg.position_scale);
        x.push_back(r.outcome[2]);
    }
    const auto dist = model.decode(g, g.broadcast_rows(z, t), actions);
    const Tensor ll_scaled = nn::gaussian_logpdf(g, dist, Tensor::from(t, 3, std::move(x)), {false, false, true});
    // Undo the position rescaling so the density is per metre, not per network unit.
    const Tensor ll = g.add_scalar(ll_scaled, -2.0 * static_cast<double>(t) * std::log(cfg.position_scale));
    const Tensor kl = nn::kl_diag(g, q_targets, q_context);
    return g.sub(kl, ll);
}

std::size_t PushDataset::record_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks) {
        n += b.records.size();
    }
    return n;
}

PushDataset gen_dataset(std::size_t n_blocks, std::size_t pushes_per_block, const BlockSpec& geometry,
                        const NoiseSpec& noise, const SimulatorConfig& sim, Rng& rng, double speed, double travel) {
    geometry.validate();
    noise.validate();
    sim.validate();
    std::uniform_real_distribution<double> angle(0.0, kTwoPi);
    PushDataset ds;
    ds.blocks.reserve(n_blocks);
    for (std::size_t b = 0; b < n_blocks; ++b) {
        BlockPushes bp;
        bp.block_id = b;
        bp.com = sample_com_uniform(geometry, rng);
        const BlockSpec block = geometry.with_com(bp.com);
        for (std::size_t p = 0; p < pushes_per_block; ++p) {
            const PushAction a{angle(rng), speed, travel};
            a.validate();
            const Pose2D start{};
            const Pose2D end = simulate_push(start, block, a, noise, rng, sim);
            bp.records.push_back(PushRecord::from_poses(start, a, end));
        }
        ds.blocks.push_back(std::move(bp));
    }
    return ds;
}

void write_dataset_jsonl(const PushDataset& ds, std::ostream& os) {
    for (const auto& b : ds.blocks) {
        for (const auto& r : b.records) {
            json j;
            j["block_id"] = b.block_id;
            j["com"] = {b.com.x, b.com.y};
            j["action"] = r.action;
            j["outcome"] = r.outcome;
            os << j.dump() << '\n';
        }
    }
}

void write_dataset_jsonl(const PushDataset& ds, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    write_dataset_jsonl(ds, os);
    if (!os) {
        throw std::runtime_error("failed writing " + path.string());
    }
}

PushDataset read_dataset_jsonl(std::istream& is) {
    PushDataset ds;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const json j = json::parse(line);
            const auto id = j.at("block_id").get<std::uint64_t>();
            const auto com = j.at("com").get<std::array<double, 2>>();
            PushRecord r;
            r.action = j.at("action").get<std::array<double, 3>>();
            r.outcome = j.at("outcome").get<std::array<double, 3>>();
            if (ds.blocks.empty() || ds.blocks.back().block_id != id) {
                ds.blocks.push_back({id, Vec2{com[0], com[1]}, {}});
            }
            ds.blocks.back().records.push_back(r);
        } catch (const json::exception& e) {
            throw std::invalid_argument("dataset line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return ds;
}

PushDataset read_dataset_jsonl(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::invalid_argument("cannot open dataset " + path.string());
    }
    return read_dataset_jsonl(is);
}

std::vector<std::size_t> symmetry_elements(const BlockSpec& geometry) {
    if (geometry.half_extents.x == geometry.half_extents.y) {
        return {0, 1, 2, 3, 4, 5, 6, 7};
    }
    return {0, 2, 4, 6};
}

PushRecord apply_symmetry(const PushRecord& r, std::size_t element) {
    if (element >= 8) {
        throw std::invalid_argument("symmetry element out of range");
    }
    PushRecord out = r;
    if (element >= 4) {
        out.action[1] = -out.action[1];
        out.outcome[1] = -out.outcome[1];
        out.outcome[2] = wrap_angle(-out.outcome[2]);
    }
    // Exact quarter turns; avoids rounding from cos/sin of multiples of pi/2.
    for (std::size_t k = 0; k < element % 4; ++k) {
        out.action = {-out.action[1], out.action[0], out.action[2]};
        out.outcome = {-out.outcome[1], out.outcome[0], out.outcome[2]};
    }
    return out;
}

TrainResult train(PnpModel& model, const PushDataset& dataset, const TrainConfig& cfg, const PushDataset* holdout,
                  const BlockSpec& geometry) {
    if (dataset.blocks.empty()) {
        throw std::invalid_argument("train: empty dataset");
    }
    if (cfg.batch == 0 || cfg.epochs == 0) {
        throw std::invalid_argument("train: batch and epochs must be positive");
    }
    if (!(cfg.lr > 0.0) || cfg.min_lr < 0.0 || cfg.min_lr > cfg.lr) {
        throw std::invalid_argument("train: need 0 <= min_lr <= lr and lr > 0");
    }
    if (!(cfg.weight_decay >= 0.0)) {
        throw std::invalid_argument("train: weight_decay must be >= 0");
    }
    for (const auto& b : dataset.blocks) {
        if (b.records.empty()) {
            throw std::invalid_argument("train: block " + std::to_string(b.block_id) + " has no records");
        }
    }
    Rng rng(cfg.seed);
    const auto elements = symmetry_elements(geometry);
    std::vector<Tensor> params = model.parameters();
    nn::AdamState state;
    nn::AdamConfig adam;
    adam.weight_decay = cfg.weight_decay;
    const std::size_t n = dataset.blocks.size();
    const std::size_t steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
    const double total_steps = static_cast<double>(cfg.epochs * steps_per_epoch);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t s = 0; s < steps_per_epoch; ++s) {
            const std::size_t begin = s * cfg.batch;
            const std::size_t end = std::min(n, begin + cfg.batch);
            Graph g;
            Tensor total;
            for (std::size_t i = begin; i < end; ++i) {
                std::vector<PushRecord> recs = dataset.blocks[order[i]].records;
                if (cfg.augment) {
                    std::uniform_int_distribution<std::size_t> pick(0, elements.size() - 1);
                    const std::size_t e = elements[pick(rng)];
                    for (auto& r : recs) {
                        r = apply_symmetry(r, e);
                    }
                }
                std::shuffle(recs.begin(), recs.end(), rng);
                std::uniform_int_distribution<std::size_t> ctx(0, std::min(cfg.max_context, recs.size() - 1));
                const std::size_t k = ctx(rng);
                const std::span<const PushRecord> all(recs);
                Tensor l = elbo_loss(g, model, all.first(k), all, rng);
                total = total.defined() ? g.add(total, l) : l;
            }
            Tensor loss = g.scale(total, 1.0 / static_cast<double>(end - begin));
            const double v = loss.item();
            if (!std::isfinite(v)) {
                throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) + " step " +
                                         std::to_string(s));
            }
            loss_sum += v * static_cast<double>(end - begin);
            for (auto& p : params) {
                p.zero_grad();
            }
            g.backward(loss);
            adam.lr = cfg.min_lr +
                      0.5 * (cfg.lr - cfg.min_lr) * (1.0 + std::cos(kPi * static_cast<double>(step) / total_steps));
            nn::adam_step(params, state, adam);
            ++step;
        }
        EpochStats st;
        st.epoch = epoch;
        st.elbo_loss = loss_sum / static_cast<double>(n);
        st.holdout_loglik =
            holdout != nullptr ? holdout_loglik(model, *holdout, cfg.holdout_context) : std::nan("");
        result.curve.push_back(st);
    }
    return result;
}

double holdout_loglik(const PnpModel& model, const PushDataset& holdout, std::size_t context) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& b : holdout.blocks) {
        if (b.records.size() <= context) {
            continue;
        }
        const std::span<const PushRecord> recs(b.records);
        const LatentDist lat = model.encode(recs.first(context));
        for (std::size_t i = context; i < recs.size(); ++i) {
            sum += outcome_logpdf(model.decode(lat.mean, recs[i].action), recs[i].outcome);
            ++count;
        }
    }
    if (count == 0) {
        throw std::invalid_argument("holdout_loglik: no block has more than " + std::to_string(context) + " records");
    }
    return sum / static_cast<double>(count);
}

std::vector<ContextPoint> eval_context_curve(const PnpModel& model, const PushDataset& testset,
                                             std::size_t max_context) {
    std::vector<std::vector<double>> errors(max_context + 1);
    for (const auto& b : testset.blocks) {
        if (b.records.size() <= max_context) {
            continue;
        }
        const std::span<const PushRecord> recs(b.records);
        for (std::size_t k = 0; k <= max_context; ++k) {
            const LatentDist lat = model.encode(recs.first(k));
            double err = 0.0;
            for (std::size_t i = max_context; i < recs.size(); ++i) {
                const OutcomeDist od = model.decode(lat.mean, recs[i].action);
                err += std::hypot(od.mean[0] - recs[i].outcome[0], od.mean[1] - recs[i].outcome[1]);
            }
            errors[k].push_back(err / static_cast<double>(recs.size() - max_context));
        }
    }
    if (errors[0].empty()) {
        throw std::invalid_argument("eval_context_curve: no block has more than " + std::to_string(max_context) +
                                    " records");
    }
    std::vector<ContextPoint> out;
    for (std::size_t k = 0; k <= max_context; ++k) {
        const auto& e = errors[k];
        const double m = std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(e.size());
        double var = 0.0;
        for (double v : e) {
            var += (v - m) * (v - m);
        }
        const double sd = e.size() > 1 ? std::sqrt(var / static_cast<double>(e.size() - 1)) : 0.0;
        out.push_back({k, m, sd / std::sqrt(static_cast<double>(e.size())), e.size()});
    }
    return out;
}

void save_checkpoint(const PnpModel& model, const std::filesystem::path& manifest_path) {
    const auto& cfg = model.config();
    std::filesystem::path bin_path = manifest_path;
    bin_path.replace_extension(".bin");
    json dims;
    dims["latent_dim"] = cfg.latent_dim;
    dims["embed_dim"] = cfg.embed_dim;
    dims["attention_layers"] = cfg.attention_layers;
    dims["heads"] = cfg.heads;
    dims["ffn_dim"] = cfg.ffn_dim;
    dims["decoder_hidden"] = cfg.decoder_hidden;
    dims["position_scale"] = cfg.position_scale;
    dims["travel_scale"] = cfg.travel_scale;
    dims["history_cap"] = cfg.history_cap;
    dims["cap_policy"] = cap_policy_name(cfg.cap_policy);
    dims["observable"] = cfg.observable;

    json tensors = json::array();
    std::string bytes;
    std::size_t offset = 0;
    for (const auto& nt : model.named_parameters()) {
        tensors.push_back({{"name", nt.name},
                           {"shape", {nt.tensor.rows(), nt.tensor.cols()}},
                           {"offset", offset}});
        for (double v : nt.tensor.value()) {
            auto u = std::bit_cast<std::uint64_t>(v);
            if constexpr (std::endian::native == std::endian::big) {
                u = __builtin_bswap64(u);
            }
            char buf[8];
            std::memcpy(buf, &u, 8);
            bytes.append(buf, 8);
        }
        offset += nt.tensor.size();
    }
    json manifest;
    manifest["version"] = kCheckpointVersion;
    manifest["dims"] = dims;
    manifest["dtype"] = "f64le";
    manifest["data"] = bin_path.filename().string();
    manifest["tensors"] = tensors;

    std::ofstream mf(manifest_path, std::ios::binary);
    std::ofstream bf(bin_path, std::ios::binary);
    if (!mf || !bf) {
        throw std::runtime_error("cannot write checkpoint at " + manifest_path.string());
    }
    mf << manifest.dump(2) << '\n';
    bf.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!mf || !bf) {
        throw std::runtime_error("failed writing checkpoint at " + manifest_path.string());
    }
}

PnpModel load_checkpoint(const std::filesystem::path& manifest_path) {
    std::ifstream mf(manifest_path, std::ios::binary);
    if (!mf) {
        throw std::invalid_argument("cannot open checkpoint " + manifest_path.string());
    }
    json manifest;
    PnpConfig cfg;
    try {
        manifest = json::parse(mf);
        if (manifest.at("version").get<int>() != kCheckpointVersion) {
            throw std::invalid_argument("unsupported checkpoint version");
        }
        const json& d = manifest.at("dims");
        cfg.latent_dim = d.at("latent_dim").get<std::size_t>();
        cfg.embed_dim = d.at("embed_dim").get<std::size_t>();
        cfg.attention_layers = d.at("attention_layers").get<std::size_t>();
        cfg.heads = d.at("heads").get<std::size_t>();
        cfg.ffn_dim = d.at("ffn_dim").get<std::size_t>();
        cfg.decoder_hidden = d.at("decoder_hidden").get<std::vector<std::size_t>>();
        cfg.position_scale = d.at("position_scale").get<double>();
        cfg.travel_scale = d.at("travel_scale").get<double>();
        cfg.history_cap = d.at("history_cap").get<std::size_t>();
        cfg.cap_policy = cap_policy_from(d.at("cap_policy").get<std::string>());
        cfg.observable = d.at("observable").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw std::invalid_argument("checkpoint manifest " + manifest_path.string() + ": " + e.what());
    }
    PnpModel model(cfg, 0);

    const std::filesystem::path bin_path = manifest_path.parent_path() / manifest.at("data").get<std::string>();
    std::ifstream bf(bin_path, std::ios::binary);
    if (!bf) {
        throw std::invalid_argument("cannot open checkpoint data " + bin_path.string());
    }
    const std::string bytes((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());

    auto params = model.named_parameters();
    const json& tensors = manifest.at("tensors");
    if (tensors.size() != params.size()) {
        throw std::invalid_argument("checkpoint tensor count does not match the architecture");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const json& t = tensors[i];
        auto& p = params[i];
        const auto shape = t.at("shape").get<std::array<std::size_t, 2>>();
        if (t.at("name").get<std::string>() != p.name || shape[0] != p.tensor.rows() || shape[1] != p.tensor.cols()) {
            throw std::invalid_argument("checkpoint tensor " + std::to_string(i) + " does not match '" + p.name + "'");
        }
        const std::size_t offset = t.at("offset").get<std::size_t>();
        if ((offset + p.tensor.size()) * 8 > bytes.size()) {
            throw std::invalid_argument("checkpoint data truncated at '" + p.name + "'");
        }
        auto values = p.tensor.value();
        for (std::size_t j = 0; j < values.size(); ++j) {
            std::uint64_t u;
            std::memcpy(&u, bytes.data() + (offset + j) * 8, 8);
            if constexpr (std::endian::native == std::endian::big) {
                u = __builtin_bswap64(u);
            }
            values[j] = std::bit_cast<double>(u);
        }
    }
    return model;
}

}  // namespace pushpomdp
