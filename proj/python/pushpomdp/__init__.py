"""Python bindings for the pushpomdp planning core."""

from ._core import (  # noqa: F401
    BlockSpec,
    History,
    LatentDist,
    NoiseSpec,
    ObsModel,
    OutcomeDist,
    ParticleBelief,
    PlannerConfig,
    PlanResult,
    PnpModel,
    Pose2D,
    PushAction,
    PushRecord,
    Scenario,
    SimulatorConfig,
    builtin_scenario,
    builtin_scenarios,
    gen_dataset_jsonl,
    init_prior,
    integrate_push,
    load_checkpoint,
    plan_npt,
    plan_pft,
    reward,
    run_command,
    simulate_push,
    update_belief,
)
