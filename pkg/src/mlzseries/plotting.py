"""Four-panel residual figure: series vs numeric, and scaled residuals."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

import numpy as np  # noqa: E402

from .propagator import ResidualScan  # noqa: E402
from .series import SeriesCoefficients, evaluate_at  # noqa: E402


def residual_panels(
    scan: ResidualScan,
    path,
    coeffs: SeriesCoefficients | None = None,
    off: tuple[int, int] = (0, 1),
    diag: int = 1,
    title: str = "",
) -> None:
    """Save a 2x2 figure for one off-diagonal entry and one diagonal entry.

    Left column: truncated series (line) and numeric probabilities (dots).
    Right column: ``Delta P / g^5`` and ``Delta P / g^6``. Points under the
    precision floor are drawn hollow.
    """
    g = scan.g_values
    if coeffs is not None:
        g_fine = np.linspace(0.0, g.max(), 200)
        series_fine = np.array([evaluate_at(coeffs, x) for x in g_fine])
    else:
        g_fine, series_fine = g, scan.series
    j, k = off
    entries = [((j, k), 5), ((diag, diag), 6)]
    fig, axes = plt.subplots(2, 2, figsize=(8, 6), constrained_layout=True)
    for row, ((a, b), power) in enumerate(entries):
        ax = axes[row, 0]
        ax.plot(g_fine, series_fine[:, a, b], "-", label="series (4th order)")
        ax.plot(g, scan.numeric[:, a, b], "o", ms=4, label="numeric")
        # the truncated series runs away at large g; keep the data readable
        lo, hi = float(scan.numeric[:, a, b].min()), float(scan.numeric[:, a, b].max())
        pad = 0.5 * max(hi - lo, 1e-3)
        ax.set_ylim(lo - pad, hi + pad)
        ax.set_xlabel("g")
        ax.set_ylabel(f"P{a + 1}{b + 1}")
        ax.legend(fontsize=8)

        ax = axes[row, 1]
        fl = scan.floor[:, a, b]
        ax.plot(g[~fl], scan.ratios[~fl, a, b], "o", ms=4)
        if fl.any():
            ax.plot(g[fl], scan.ratios[fl, a, b], "o", ms=4, mfc="none", label="below precision floor")
            ax.legend(fontsize=8)
        ax.set_xlabel("g")
        ax.set_ylabel(f"dP{a + 1}{b + 1} / g^{power}")
    if title:
        fig.suptitle(title)
    fig.savefig(path, dpi=120)
    plt.close(fig)
