"""Anatomy of one guided update.

Builds a conditional/unconditional prediction pair by hand, then walks
through the pieces the package composes: the plain CFG blend, the
parallel/orthogonal split of the difference against the conditional
prediction, norm clamping, and the running-average momentum buffer.
Run it and read the printed numbers top to bottom.
"""

import numpy as np

from pglab.guidance import (
    GuidanceParams,
    MomentumState,
    apg_update,
    cfg_combine,
    clamp_norm,
    gain_factor,
    momentum_update,
    split_parallel_orthogonal,
)


def main():
    rng = np.random.default_rng(0)
    cond = rng.standard_normal(8)
    uncond = cond - np.array([0.8, 0.0, 0.3, 0.0, -0.5, 0.2, 0.0, 0.1])
    delta = cond - uncond
    print("update direction (cond - uncond):", np.round(delta, 3))
    print("update norm:", round(float(np.linalg.norm(delta)), 4))

    for scale in (1.0, 3.0, 8.0):
        out = cfg_combine(cond, uncond, scale)
        print(f"cfg scale={scale}: moved {np.linalg.norm(out - cond):.4f} from cond, "
              f"gain at cond direction {gain_factor(cond, uncond, scale):.4f}")

    par, orth = split_parallel_orthogonal(delta, cond)
    print("parallel part norm:  ", round(float(np.linalg.norm(par)), 4))
    print("orthogonal part norm:", round(float(np.linalg.norm(orth)), 4))
    print("residual of the split:", float(np.abs(par + orth - delta).max()))

    clamped = clamp_norm(delta, 0.5)
    print("clamp to 0.5:", round(float(np.linalg.norm(clamped)), 4),
          "(shorter vectors pass through unchanged)")

    # reverse momentum: negative coefficient pushes against recent history
    state = MomentumState(momentum=-0.5)
    for step in range(4):
        avg = momentum_update(state, delta)
        print(f"momentum step {step}: averaged-norm {np.linalg.norm(avg):.4f}")

    params = GuidanceParams(guidance_scale=3.0, parallel_weight=0.0,
                            clamp_radius=0.5, momentum=-0.5)
    out = apg_update(cond, uncond, params, MomentumState(momentum=-0.5))
    plain = cfg_combine(cond, uncond, 3.0)
    print("full projected update vs plain cfg, distance:",
          round(float(np.linalg.norm(out - plain)), 4))


if __name__ == "__main__":
    main()
