import numpy as np

from harness.config import ScenarioConfig
from planner.map_aligned import HumanTeam, MAPAlignedPlanner
from simulator.state_space import control_slice, describe_state

# Initialize
config = ScenarioConfig.load("scenarios/two_player.cfg").with_overrides(
    sim_horizon=3.0, prediction_horizon=3.0, num_particles=10,
)
game = config.build_game()
x = config.initial_state()
rng = np.random.default_rng(config.seed)

planner = MAPAlignedPlanner(game, config.seed_distribution(), config.num_particles, settings=config.solver_settings())
humans = HumanTeam(game, config.human_indices, config.solver_settings())
humans.initialize(x, config.seed_distribution(), rng)

# Run
print(f"Scenario: {config.name}, {config.sim_steps} steps\n")
u_robot = planner.initialize(x, rng)
for t in range(config.sim_steps):
    u = humans.act(t, x)
    u[control_slice(config.robot_index)] = u_robot
    x_next = game.dynamics.integrate(x, u, config.dt)
    if t % 10 == 0:
        print(f"t={t * config.dt:4.1f}s  particles={len(planner.belief)}  MAP id={planner.map_particle().id}")
    if t + 1 < config.sim_steps:
        u_robot = planner.step(x_next, x, u_robot)
    x = x_next

# Results
print(f"\n{'='*40}")
print(f"Final state:\n{describe_state(x, config.num_players)}")
print(f"Belief weights: {np.round(planner.belief.normalized_weights(), 3).tolist()}")
planner.close()
