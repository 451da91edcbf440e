from src.utils.helper import Helper
from src.utils.logger import logger


class ReportBuilder:
    """
    Converts invariant records and run summaries into readable text.

    Input:
    [
        {"module": "pressure", "invariant": "convexity_in_b", "passed": True,
         "details": "min second difference 3.1e-03"},
        ...
    ]

    Output:
    🧪 Invariant report — lueroth(r=2)

    📦 pressure
       ✅ convexity_in_b — min second difference 3.1e-03
       🔴 gradient_agreement — max relative error 2.0e-04

    41 passed, 1 failed
    """

    @staticmethod
    def build(records: list, system_name: str) -> str:
        if not records:
            return f"⚠️ No invariants were checked for {system_name}."

        lines = [f"🧪 Invariant report — {system_name}", ""]
        modules = []
        for record in records:
            if record["module"] not in modules:
                modules.append(record["module"])

        for module in modules:
            lines.append(f"📦 {module}")
            for record in records:
                if record["module"] != module:
                    continue
                mark = "✅" if record["passed"] else "🔴"
                lines.append(f"   {mark} {record['invariant']} — {record['details']}")
            lines.append("")

        failed = sum(not r["passed"] for r in records)
        lines.append(f"{len(records) - failed} passed, {failed} failed")

        logger.info("Report built successfully.")
        return "\n".join(lines)

    @staticmethod
    def build_summary(summary: dict) -> str:
        """key=value lines (17 significant digits) for stdout."""
        return "\n".join(f"{key}={Helper.fmt(value)}" for key, value in summary.items())

    @staticmethod
    def rate_summary(fit, probes: list, q_table=None) -> dict:
        """Fit and probe results flattened for the CSV summary block and stdout."""
        summary = {
            "fitted_exponent": fit.fitted_exponent,
            "theoretical_exponent": fit.theoretical,
            "stderr": fit.stderr,
            "window_lo": fit.window[0],
            "window_hi": fit.window[1],
            "q_exponent_fit": fit.q_exponent_fit,
            "q_exponent_theory": fit.theoretical_q,
            "q_stderr": fit.q_stderr,
            "coherent": fit.coherent,
            "fit_points": fit.points,
        }
        if q_table is not None:
            lo, hi = q_table.band
            summary["q_integral_band_lo"] = lo
            summary["q_integral_band_hi"] = hi
        for probe in probes:
            key = f"probe_x{Helper.fmt(probe.x)}"
            summary[f"{key}_observed"] = probe.classification
            summary[f"{key}_expected"] = probe.expected
            summary[f"{key}_displayed_reading"] = probe.display_expected
        return summary
