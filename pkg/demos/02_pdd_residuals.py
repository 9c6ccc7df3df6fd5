"""How the phase-shift solver closes the gap to unit modulus.

For one outer step at three surface sizes, print the per-iteration residuals
of the penalty dual decomposition: the distance between the relaxed phase and
its unit-modulus copy, and the change of the relaxed phase between outer
iterations. Both fall below 1e-6 within a handful of iterations.
"""

from fdisac import desk_config, draw_channels, initialize
from fdisac.optimizer import step

SEED = 0

for M in (16, 36, 64):
    cfg = desk_config(num_ris_elements=M)
    state = initialize(draw_channels(cfg, SEED), cfg, seed=SEED)
    rec = step(state, record_trace=True)
    print(f"M = {M}")
    print(f"  {'outer':>5} {'max|phi - psi|':>15} {'max|dphi|':>11} {'penalty':>10}")
    for row in rec.phase_trace:
        print(f"  {row['outer_iter']:>5} {row['gap_inf']:>15.2e} {row['dphi_inf']:>11.2e} {row['rho']:>10.2e}")
