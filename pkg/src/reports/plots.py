import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from src.errors import EmptyCurveError  # noqa: E402
from src.utils.logger import logger  # noqa: E402

# fixed element ids and no timestamp, so identical runs give identical SVG bytes
plt.rcParams["svg.hashsalt"] = "thermoformal"
SVG_METADATA = {"Date": None}


def _save(figure, path: str) -> str:
    folder = os.path.dirname(path)
    try:
        if folder:
            os.makedirs(folder, exist_ok=True)
        figure.savefig(path, format="svg", metadata=SVG_METADATA)
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e
    finally:
        plt.close(figure)
    logger.info(f"Plot saved → {path}")
    return path


def plot_paths(plot_path: str) -> tuple:
    stem, _ = os.path.splitext(plot_path)
    return f"{stem}_spectrum.svg", f"{stem}_rate.svg"


def plot_spectrum(curve, path: str) -> str:
    """b(alpha) against alpha on a log axis, with b* as a dashed line."""
    if len(curve.points) < 2:
        raise EmptyCurveError(f"{len(curve.points)} solved points; a spectrum plot needs 2")
    figure, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.semilogx(curve.alphas, curve.column("b"), "o-", markersize=3, label="b(alpha)")
    ax.axhline(curve.b_star, linestyle="--", color="grey", label=f"b* = {curve.b_star:.6f}")
    ax.set_xlabel("alpha")
    ax.set_ylabel("b(alpha)")
    ax.set_title(f"Birkhoff spectrum: {curve.system_name}")
    ax.legend(loc="lower right")
    figure.tight_layout()
    return _save(figure, path)


def plot_rate(curve, fit, path: str) -> str:
    """log-log b* - b(alpha) with the fitted line and its slope against theory."""
    if len(curve.points) < 2:
        raise EmptyCurveError(f"{len(curve.points)} solved points; a rate plot needs 2")
    alpha, gap = curve.alphas, curve.gaps
    keep = gap > 0
    figure, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.loglog(alpha[keep], gap[keep], "o", markersize=3, label="b* - b(alpha)")
    if fit is not None:
        lo, hi = fit.window
        x = np.geomspace(lo, hi, 50)
        ax.loglog(x, np.exp(fit.intercept) * x ** (-fit.fitted_exponent), "-", color="C1",
                  label=f"fitted -{fit.fitted_exponent:.4f} vs theory -{fit.theoretical:.4f}")
    else:
        ax.text(0.05, 0.05, "no rate fit", transform=ax.transAxes)
    ax.set_xlabel("alpha")
    ax.set_ylabel("b* - b(alpha)")
    ax.set_title(f"Rate of approach: {curve.system_name}")
    ax.legend(loc="upper right")
    figure.tight_layout()
    return _save(figure, path)


def emit_plots(curve, fit, plot_path: str) -> tuple:
    if not curve.points:
        raise EmptyCurveError("no solved spectrum points to plot")
    spectrum_path, rate_path = plot_paths(plot_path)
    return plot_spectrum(curve, spectrum_path), plot_rate(curve, fit, rate_path)
