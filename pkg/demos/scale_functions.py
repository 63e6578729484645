"""The two knobs of the steering vector: alpha and beta.

Each weight is ``w_m = f_m g_m / |g_m|`` with the scale function
``f_m = |g_m|**(beta-1) / ((sum_n |g_n|**beta)**alpha * M**(1-alpha))``.
Two properties are worth having and the choice of (alpha, beta) decides
which one you get:

* the map reads the true source power at the source: needs alpha = 1;
* the map has a stationary point exactly at the source: needs
  alpha = 1 - 1/beta.

No finite beta satisfies both, so every preset trades one for the other.
"""
import numpy as np

from gfbeam import (
    PRESETS,
    IsmProvider,
    MicrophoneArray,
    Panel,
    ReflectorSet,
    Scene,
    SteeringParams,
    build_focus_grid,
    check_amplitude_condition,
    check_local_max_condition,
    evaluate_gf_tensor,
)

rng = np.random.default_rng(7)
mics = np.column_stack([rng.uniform(-1, 1, (12, 2)), rng.uniform(0.6, 1.2, 12)])
grid = build_focus_grid((-0.1, -0.1, 0.05), ((1, 0, 0), (0, 1, 0)), (0.2, 0.2), 0.05)
# A floor and a wall meeting in a corner.
walls = ReflectorSet([Panel((-2, -2, 0), (3.3, 0, 0), (0, 4, 0), 0.8),
                      Panel((1.3, -2, 0), (0, 4, 0), (0, 0, 2), 0.8)])
scene = Scene(MicrophoneArray(mics), grid, walls)
gf = evaluate_gf_tensor(IsmProvider(walls, scene.c, 2), scene, [700.0])
src = grid.index(2, 2)

h = 3e-4
print(f"{'':>10} {'alpha':>6} {'beta':>5} {'A(y_s)':>10} {'|grad A| h/A':>13}")
for name, (alpha, beta) in PRESETS.items():
    p = SteeringParams(alpha, beta)
    a = check_amplitude_condition(gf, src, p)[0]
    g = check_local_max_condition(gf, src, p, h)[0]
    print(f"{'preset ' + name:>10} {alpha:6.2f} {beta:5.1f} {a:10.6f} {g * h / a:13.2e}")

# %% Walk along the locus alpha = 1 - 1/beta: the gradient stays at round-off
# while the level at the source drifts away from 1.
print()
for beta in (1.0, 2.0, 4.0, 16.0, 64.0):
    p = SteeringParams(1 - 1 / beta, beta)
    a = check_amplitude_condition(gf, src, p)[0]
    g = check_local_max_condition(gf, src, p, h)[0]
    print(f"beta={beta:5.1f}  A(y_s)={a:.6f}  |grad A| h/A={g * h / a:.1e}")
