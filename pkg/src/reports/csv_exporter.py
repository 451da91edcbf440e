import os

import pandas as pd

from src.utils.helper import Helper
from src.utils.logger import logger

FLOAT_FORMAT = "%.17g"
SPECTRUM_COLUMNS = ["alpha", "q", "b", "lyapunov", "entropy", "residual_p", "residual_dpdq", "truncation_N", "iters"]
CENSUS_COLUMNS = ["shell_n", "omega_lo", "omega_hi", "count", "measure", "ratio", "lower_bound", "upper_bound"]


class CsvExporter:
    """
    Writes result tables as CSV with 17 significant digits, so identical
    runs produce identical bytes. Free-form sections (failures, fit
    summaries) follow the table as '# key=value' comment lines.

    Usage:
        exporter = CsvExporter("results")
        exporter.write(CsvExporter.spectrum_frame(curve), "spectrum.csv",
                       CsvExporter.failure_lines(curve))
    """

    def __init__(self, output_dir: str = "."):
        self.output_dir = output_dir

    def path_for(self, name: str) -> str:
        return name if os.path.isabs(name) else os.path.join(self.output_dir, name)

    def write(self, frame: pd.DataFrame, name: str, comments: list = None) -> str:
        path = self.path_for(name)
        folder = os.path.dirname(path)
        try:
            if folder:
                os.makedirs(folder, exist_ok=True)
            with open(path, "w", newline="") as handle:
                frame.to_csv(handle, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
                for line in comments or []:
                    handle.write(f"# {line}\n")
        except OSError as e:
            raise OSError(f"cannot write {path}: {e}") from e
        logger.info(f"CsvExporter: wrote {len(frame)} rows → {path}")
        return path

    # ---------------------------
    # Tables
    # ---------------------------
    @staticmethod
    def spectrum_frame(curve) -> pd.DataFrame:
        rows = [
            {"alpha": p.alpha, "q": p.q, "b": p.b, "lyapunov": p.lyapunov, "entropy": p.entropy,
             "residual_p": p.residual_p, "residual_dpdq": p.residual_dp,
             "truncation_N": int(p.truncation_N), "iters": int(p.newton_iters)}
            for p in curve.points
        ]
        return pd.DataFrame(rows, columns=SPECTRUM_COLUMNS)

    @staticmethod
    def failure_lines(curve) -> list:
        lines = [f"failures={len(curve.failures)}"]
        lines.extend(f"failure alpha={Helper.fmt(alpha)} diagnostic={' '.join(str(message).split())}"
                     for alpha, message in curve.failures)
        return lines

    @staticmethod
    def census_frame(stats: list, probe=None) -> pd.DataFrame:
        """Shell census rows, with the H3 ratio columns filled when a probe is given."""
        frame = pd.DataFrame(
            [{"shell_n": s.n, "omega_lo": s.omega_lo, "omega_hi": s.omega_hi, "count": s.count,
              "measure": s.measure} for s in stats],
            columns=CENSUS_COLUMNS[:5],
        )
        if probe is not None:
            ratios = pd.DataFrame(probe.rows())[["shell_n", "ratio", "lower_bound", "upper_bound"]]
            frame = frame.merge(ratios, on="shell_n", how="left")
        return frame.reindex(columns=CENSUS_COLUMNS)

    @staticmethod
    def rate_frame(curve, probes: list) -> pd.DataFrame:
        frame = pd.DataFrame({"alpha": curve.alphas, "gap": curve.gaps, "q": curve.column("q")})
        for probe in probes:
            column = f"product_x={Helper.fmt(probe.x)}"
            values = dict(zip(probe.alpha.tolist(), probe.product.tolist()))
            frame[column] = [values.get(a) for a in frame["alpha"]]
        return frame

    @staticmethod
    def summary_lines(summary: dict) -> list:
        return [f"{key}={Helper.fmt(value)}" for key, value in summary.items()]
