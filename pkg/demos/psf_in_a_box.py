"""Point spread functions in front of a reflecting box.

A 64-microphone two-ring array looks at a 1.44 m square focus plane just in
front of an open box.  The microphones hear the source directly and via the
box walls (image sources up to third order).  We beamform the same
synthetic recording twice: once steering with the free-field Green's
function, once with the reflection-aware one, and compare where the maximum
lands and how loud it is.

Run with ``python demos/psf_in_a_box.py`` (about ten seconds).
"""
import numpy as np

from gfbeam import (
    FreeFieldProvider,
    IsmProvider,
    SteeringParams,
    evaluate_gf_tensor,
    evaluate_map,
    reference_scene,
    steering_set,
    synthetic_csm,
    dirty_map,
)

FREQS = [120.0, 480.0, 1080.0, 2040.0]

scene = reference_scene(spacing=0.05)
print(f"{scene.array.n_mics} microphones, {scene.grid.shape[0]}x{scene.grid.shape[1]} focus grid, "
      f"{len(scene.reflectors)} reflecting panels")

# The "truth": the field of each source including the box reflections.
ism = evaluate_gf_tensor(IsmProvider(scene.reflectors, scene.c, 3), scene, FREQS)
free = evaluate_gf_tensor(FreeFieldProvider(scene.c), scene, FREQS)
src = scene.source_indices()[0]
csm = synthetic_csm(ism, src)
print("source at", np.round(scene.grid.point(src), 3))

# %% Steer with each model and both common scale functions.
for label, model in (("free field", free), ("with reflections", ism)):
    for preset in ("I", "III"):
        st = steering_set(model, SteeringParams.from_preset(preset))
        print(f"\nsteering: {label}, preset {preset}")
        print(f"{'f Hz':>8} {'|dy| m':>8} {'dL dB':>8} {'MSR dB':>8}  flags")
        for f in FREQS:
            c = evaluate_map(dirty_map(csm, st, f, scene.grid), src)
            print(f"{f:8.0f} {c.spatial_deviation:8.3f} {c.level_error:8.2f} {c.msr:8.2f}  {' '.join(c.flags)}")

# With reflection-aware steering, preset I puts the maximum on the source
# at every frequency and preset III reads the source level back exactly.
# Free-field steering drifts at low frequencies where the reflections
# dominate the array's view of the source.  A flagged MSR is only a lower
# bound: no side lobe showed up within 60 dB of the maximum.
