"""Accuracy of the damped Fourier path against the exact trigonometric path.

Compares the trapezoid rule with panel Gauss-Legendre (panels split at the
kinks of the damped transforms) over a range of node counts, at the
fixed point of the one-dimensional Gaussian experiment.
"""

from __future__ import annotations

import numpy as np

from mkv_picard import benchmark
from mkv_picard.linear_flow import PiecewisePair
from mkv_picard.model import Problem, trig_spectral
from mkv_picard.psi_map import QuadratureSpec, psi_on_grid


def main() -> None:
    for cid in ("gaussian_1d", "kou_1d"):
        case = benchmark.case_from_id(cid)
        n = 16
        t = np.arange(1, n + 1) / n
        pair = PiecewisePair(1.0, np.full((n, 1, 1), case.a), benchmark.benchmark_beta(case, t)[:, None])
        prob = case.problem()
        damped = Problem(prob.triplet, prob.law, trig_spectral(prob.drift, damped=True), prob.horizon)
        _, exact = psi_on_grid(prob, pair, "trig")
        print(f"{cid}: max |damped - trig| over t_1..t_{n}")
        print("nodes".rjust(8) + "trapezoid".rjust(14) + "panel GL".rjust(14))
        for nodes in (256, 512, 1024, 2048, 4096):
            row = f"{nodes:8d}"
            for rule in ("trapezoid", "gauss_legendre"):
                _, b = psi_on_grid(damped, pair, "damped", QuadratureSpec(nodes_per_axis=nodes, rule=rule))
                row += f"{np.max(np.abs(b[1:] - exact[1:])):14.3e}"
            print(row)


if __name__ == "__main__":
    main()
