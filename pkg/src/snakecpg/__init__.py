"""snakecpg: a Matsuoka-oscillator CPG locomotion laboratory.

Modules by concern:

- :mod:`snakecpg.cpg` — the coupled oscillator network and its integrator
- :mod:`snakecpg.analysis` — describing-function predictions and measurement
- :mod:`snakecpg.robot` — the planar articulated snake surrogate
- :mod:`snakecpg.tasks` — curriculum, reward, terminal rules, randomization
- :mod:`snakecpg.evolve` — evolutionary parameter tuning
- :mod:`snakecpg.ppoc` — option-critic PPO training and evaluation
- :mod:`snakecpg.cli` — the `snakecpg` command-line front end
"""

from .cpg import (CpgOutput, IntegrationDivergedError, NetworkState, OscillatorParams,
                  StabilityReport, TonicInputs, Trajectory, decode_action,
                  simulate, step_network, validate_params)
from .robot import (CpgRobotSession, Goal, Observation, PhysicsParams,
                    RobotState, observe, reset, step_robot, velocity_sweep)

__version__ = "0.1.0"
