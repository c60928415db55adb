"""Small helpers shared by the demo scripts."""

from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parent / "out"


def table(rows, header):
    """Print rows of floats under ``header`` with fixed-width columns."""
    print("  ".join(f"{h:>12}" for h in header))
    for r in rows:
        print("  ".join(f"{v:12.3f}" if isinstance(v, float) else f"{v!s:>12}" for v in r))


def maybe_plot(name, curves, title, xlabel="delay alpha [ms]"):
    """Save a step plot of ``(label, curve)`` pairs if matplotlib is installed."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return None
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, c in curves:
        ax.step(c.alphas_ms, c.mse_db, where="post", label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("MSE [dB re target power]")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(fontsize="small")
    OUT.mkdir(exist_ok=True)
    path = OUT / f"{name}.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    print(f"saved {path}")
    return path


def at(curve, alpha_ms):
    """Curve value in dB at the grid point nearest ``alpha_ms``."""
    i = int(np.argmin(np.abs(curve.alphas_ms - alpha_ms)))
    return float(curve.mse_db[i])
