"""
Write a RunResult to disk: CSV tables, field-map matrices and graymaps,
waveform files, a key = value report and the resolved configuration.

All numbers are printed with a fixed format so that identical (config, seed)
runs produce byte-identical files.
"""

from pathlib import Path

import numpy as np

from .config import write_config
from .geometry import write_pgm
from .pulses import write_iq_binary, write_iq_text

FORMATS = ("csv", "pgm", "both")
_NUM = "%.10e"


class ExportError(OSError):
    pass


def write_table_csv(path, table):
    """Comma-separated columns under a single header row of unit-suffixed names."""
    data = np.column_stack(table.columns) if table.columns else np.empty((0, 0))
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(table.names) + "\n")
        np.savetxt(fh, data, fmt=_NUM, delimiter=",")
    return Path(path)


def write_map_csv(path, fmap, unit="T"):
    """Matrix CSV: first row holds x (m), first column y (m), body the field values."""
    with open(path, "w", newline="\n") as fh:
        fh.write(f"y_m\\x_m [{unit}]," + ",".join(_NUM % v for v in fmap.x) + "\n")
        body = np.column_stack([fmap.y, fmap.values])
        np.savetxt(fh, body, fmt=_NUM, delimiter=",")
    return Path(path)


def read_map_csv(path):
    """Inverse of :func:`write_map_csv`; returns (x, y, values)."""
    with open(path) as fh:
        head = fh.readline().strip().split(",")
        body = np.loadtxt(fh, delimiter=",", ndmin=2)
    return np.array(head[1:], dtype=float), body[:, 0], body[:, 1:]


def export(result, out_dir, fmt="both", cfg=None):
    """Write every artifact of ``result`` under ``out_dir`` and return the paths.

    ``fmt`` selects map output: ``csv`` matrices, ``pgm`` graymaps, or both.
    Tables and reports are always written as text.
    """
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {', '.join(FORMATS)}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name, table in result.tables.items():
            written.append(write_table_csv(out / f"{name}.csv", table))
        if result.maps:
            # shared scale so recovered and truth graymaps compare directly
            vmax = max(float(np.max(np.abs(m.values))) for m in result.maps.values()) or 1.0
            for name, fmap in result.maps.items():
                if fmt in ("csv", "both"):
                    written.append(write_map_csv(out / f"{name}.csv", fmap))
                if fmt in ("pgm", "both"):
                    written.extend(write_pgm(out / f"{name}.pgm", fmap.values, -vmax, vmax))
        if result.waveform is not None:
            written.append(write_iq_text(out / "waveform_iq.txt", result.waveform))
            written.append(write_iq_binary(out / "waveform_iq.bin", result.waveform))
        report = out / "report.txt"
        report.write_text("\n".join(result.report_lines()) + "\n")
        written.append(report)
        if cfg is not None:
            written.append(write_config(cfg, out / "config_resolved.ini"))
    except OSError as exc:
        where = exc.filename or out
        raise ExportError(f"cannot write output under {where}: {exc.strerror or exc}") from exc
    return written
