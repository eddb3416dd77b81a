#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "pushpomdp/env.hpp"
#include "pushpomdp/geometry.hpp"
#include "pushpomdp/harness.hpp"
#include "pushpomdp/particle_belief.hpp"
#include "pushpomdp/planner.hpp"
#include "pushpomdp/pnp.hpp"
#include "pushpomdp/pnp_inference.hpp"

namespace py = pybind11;
using namespace pushpomdp;

PYBIND11_MODULE(_core, m) {
    m.doc() = "Push planning under an unknown center of mass";

    py::class_<Pose2D>(m, "Pose2D")
        .def(py::init<>())
        .def(py::init([](double x, double y, double yaw) { return Pose2D{x, y, yaw}; }), py::arg("x"), py::arg("y"),
             py::arg("yaw") = 0.0)
        .def_readwrite("x", &Pose2D::x)
        .def_readwrite("y", &Pose2D::y)
        .def_readwrite("yaw", &Pose2D::yaw)
        .def("__repr__", [](const Pose2D& p) {
            std::ostringstream os;
            os << "Pose2D(" << p.x << ", " << p.y << ", " << p.yaw << ")";
            return os.str();
        });

    py::class_<PushAction>(m, "PushAction")
        .def(py::init([](double theta, double speed, double travel) { return PushAction::toward(theta, speed, travel); }),
             py::arg("theta"), py::arg("speed") = 0.10, py::arg("travel") = 0.15)
        .def_readwrite("theta", &PushAction::theta)
        .def_readwrite("speed", &PushAction::speed)
        .def_readwrite("travel", &PushAction::travel);

    py::class_<BlockSpec>(m, "BlockSpec")
        .def(py::init<>())
        .def_property(
            "half_extents", [](const BlockSpec& b) { return std::array<double, 2>{b.half_extents.x, b.half_extents.y}; },
            [](BlockSpec& b, std::array<double, 2> v) { b.half_extents = {v[0], v[1]}; })
        .def_property(
            "com", [](const BlockSpec& b) { return std::array<double, 2>{b.com.x, b.com.y}; },
            [](BlockSpec& b, std::array<double, 2> v) { b.com = {v[0], v[1]}; })
        .def_readwrite("height", &BlockSpec::height)
        .def_readwrite("mass", &BlockSpec::mass);

    py::class_<NoiseSpec>(m, "NoiseSpec")
        .def(py::init<>())
        .def_readwrite("sigma_pos", &NoiseSpec::sigma_pos)
        .def_readwrite("sigma_yaw", &NoiseSpec::sigma_yaw);

    py::class_<SimulatorConfig>(m, "SimulatorConfig")
        .def(py::init<>())
        .def_readwrite("limit_surface_c", &SimulatorConfig::limit_surface_c)
        .def_readwrite("substeps", &SimulatorConfig::substeps);

    py::class_<ObsModel>(m, "ObsModel")
        .def(py::init<>())
        .def_readwrite("sigma_pos", &ObsModel::sigma_pos)
        .def_readwrite("sigma_yaw", &ObsModel::sigma_yaw);

    m.def("integrate_push",
          [](const Pose2D& pose, const BlockSpec& block, const PushAction& a, const SimulatorConfig& sim) {
              return integrate_push(pose, block, a, sim);
          },
          py::arg("pose"), py::arg("block"), py::arg("action"), py::arg("sim") = SimulatorConfig{});
    m.def("simulate_push",
          [](const Pose2D& pose, const BlockSpec& block, const PushAction& a, const NoiseSpec& noise,
             std::uint64_t seed) {
              Rng rng(seed);
              return simulate_push(pose, block, a, noise, rng);
          },
          py::arg("pose"), py::arg("block"), py::arg("action"), py::arg("noise") = NoiseSpec{}, py::arg("seed") = 0);

    py::class_<Scenario>(m, "Scenario")
        .def_readonly("name", &Scenario::name)
        .def_readonly("start", &Scenario::start)
        .def_property_readonly("goal", [](const Scenario& s) { return std::array<double, 2>{s.goal.x, s.goal.y}; })
        .def_readonly("goal_radius", &Scenario::goal_radius)
        .def("fallen", [](const Scenario& s, double x, double y) { return s.fallen({x, y}); })
        .def("in_range", [](const Scenario& s, double x, double y) { return s.in_range({x, y}); })
        .def("distance_to_goal", [](const Scenario& s, double x, double y) { return s.distance_to_goal({x, y}); })
        .def("to_json", [](const Scenario& s) { return scenario_to_json(s).dump(); });
    m.def("builtin_scenario", &builtin_scenario, py::arg("name"));
    m.def("builtin_scenarios", &builtin_scenarios);
    m.def("reward", [](double x, double y, const Scenario& s) { return reward({x, y}, s); }, py::arg("x"),
          py::arg("y"), py::arg("scenario"));

    py::class_<ParticleBelief>(m, "ParticleBelief")
        .def_readonly("pose", &ParticleBelief::pose)
        .def_readonly("diverged", &ParticleBelief::diverged)
        .def("active_count", &ParticleBelief::active_count)
        .def("effective_sample_size", &ParticleBelief::effective_sample_size)
        .def("mean_com", [](const ParticleBelief& b) {
            const Vec2 c = b.mean_com();
            return std::array<double, 2>{c.x, c.y};
        })
        .def("__len__", [](const ParticleBelief& b) { return b.particles.size(); });
    m.def("init_prior",
          [](std::size_t n, const BlockSpec& block, std::uint64_t seed, const Pose2D& pose) {
              Rng rng(seed);
              return init_prior(n, block, rng, pose);
          },
          py::arg("n"), py::arg("block") = BlockSpec{}, py::arg("seed") = 0, py::arg("pose") = Pose2D{});
    m.def("update_belief",
          [](const ParticleBelief& b, const PushAction& a, const Pose2D& observed, const BlockSpec& geometry,
             const ObsModel& obs, bool real_step, std::uint64_t seed) {
              Rng rng(seed);
              return update(b, a, observed, geometry, obs, SimulatorConfig{},
                            real_step ? UpdateMode::real_step : UpdateMode::tree, rng);
          },
          py::arg("belief"), py::arg("action"), py::arg("observed"), py::arg("geometry") = BlockSpec{},
          py::arg("obs") = ObsModel{}, py::arg("real_step") = true, py::arg("seed") = 0);

    py::class_<PushRecord>(m, "PushRecord")
        .def(py::init<>())
        .def_static("from_poses", &PushRecord::from_poses)
        .def_readwrite("action", &PushRecord::action)
        .def_readwrite("outcome", &PushRecord::outcome);

    py::class_<History>(m, "History")
        .def(py::init<std::size_t>(), py::arg("cap") = History::kDefaultCap)
        .def("push", &History::push)
        .def("records", [](const History& h) { return std::vector<PushRecord>(h.records().begin(), h.records().end()); })
        .def("__len__", &History::size);

    py::class_<LatentDist>(m, "LatentDist").def_readonly("mean", &LatentDist::mean).def_readonly("std", &LatentDist::std);
    py::class_<OutcomeDist>(m, "OutcomeDist")
        .def_readonly("mean", &OutcomeDist::mean)
        .def_readonly("std", &OutcomeDist::std);

    py::class_<PnpModel>(m, "PnpModel")
        .def("parameter_count", &PnpModel::parameter_count)
        .def("encode", [](const PnpModel& mdl, const History& h) { return mdl.encode(h); })
        .def("encode_records",
             [](const PnpModel& mdl, const std::vector<PushRecord>& r) { return mdl.encode(std::span(r)); })
        .def("decode", [](const PnpModel& mdl, const std::vector<double>& z, const std::array<double, 3>& a) {
            return mdl.decode(z, a);
        });
    m.def("load_checkpoint", &load_checkpoint, py::arg("manifest_path"));

    py::class_<PlannerConfig>(m, "PlannerConfig")
        .def(py::init<>())
        .def_readwrite("depth", &PlannerConfig::depth)
        .def_readwrite("gamma", &PlannerConfig::gamma)
        .def_readwrite("alpha_obs", &PlannerConfig::alpha_obs)
        .def_readwrite("k_action", &PlannerConfig::k_action)
        .def_readwrite("alpha_action", &PlannerConfig::alpha_action)
        .def_readwrite("ucb_c", &PlannerConfig::ucb_c)
        .def_readwrite("audit", &PlannerConfig::audit)
        .def("set_iterations", [](PlannerConfig& c, std::size_t n) { c.budget = Budget::iters(n); })
        .def("set_seconds", [](PlannerConfig& c, double s) { c.budget = Budget::wall(s); });

    py::class_<PlanResult>(m, "PlanResult")
        .def_readonly("action", &PlanResult::action)
        .def_readonly("root_q", &PlanResult::root_q)
        .def_readonly("root_visits", &PlanResult::root_visits)
        .def_readonly("iterations", &PlanResult::iterations)
        .def_readonly("simulate_calls", &PlanResult::simulate_calls)
        .def_readonly("max_depth", &PlanResult::max_depth)
        .def_readonly("invariant_violations", &PlanResult::invariant_violations);

    m.def("plan_npt",
          [](const PnpModel& mdl, const Scenario& s, const Pose2D& pose, const History& h, const PlannerConfig& cfg,
             std::uint64_t seed) {
              const PnpInference inf(mdl);
              Rng rng(seed);
              return plan_npt(inf, s, pose, h, cfg, rng);
          },
          py::arg("model"), py::arg("scenario"), py::arg("pose"), py::arg("history"), py::arg("config"),
          py::arg("seed") = 0, py::call_guard<py::gil_scoped_release>());
    m.def("plan_pft",
          [](const ParticleBelief& b, const Scenario& s, const PlannerConfig& cfg, std::uint64_t seed) {
              Rng rng(seed);
              return plan_pft(PftModel{}, s, b, cfg, rng);
          },
          py::arg("belief"), py::arg("scenario"), py::arg("config"), py::arg("seed") = 0,
          py::call_guard<py::gil_scoped_release>());

    m.def("gen_dataset_jsonl",
          [](std::size_t blocks, std::size_t pushes, std::uint64_t seed) {
              Rng rng(seed);
              const PushDataset ds = gen_dataset(blocks, pushes, BlockSpec{}, NoiseSpec{}, SimulatorConfig{}, rng);
              std::ostringstream os;
              write_dataset_jsonl(ds, os);
              return os.str();
          },
          py::arg("blocks"), py::arg("pushes"), py::arg("seed") = 0);

    m.def("run_command",
          [](const std::string& command, const std::string& config, std::optional<std::uint64_t> seed,
             std::optional<std::string> out) {
              CommandOptions opt;
              opt.seed = seed;
              if (out) {
                  opt.out = *out;
              }
              std::ostringstream log, err;
              const int code = run_command(command, config, opt, log, err);
              return py::make_tuple(code, log.str(), err.str());
          },
          py::arg("command"), py::arg("config"), py::arg("seed") = py::none(), py::arg("out") = py::none());
}
