"""Run manifests and paper-style comparison tables."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .metrics import EvalReport

__all__ = ["fmt4", "RunManifest", "manifest_path", "emit_comparison_table"]


def fmt4(x: float) -> str:
    """Four significant decimals, the tables' display precision."""
    return f"{x:.4g}"


def sha256_of(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    """Provenance record written alongside every output artifact."""

    command: str
    argv: list[str]
    config: dict
    seed: Optional[int]
    version: str
    input_digests: dict[str, str] = field(default_factory=dict)
    started_at: str = ""
    finished_at: str = ""

    def add_input(self, path: str | Path) -> None:
        p = Path(path)
        if p.exists() and p.is_file():
            self.input_digests[str(p)] = sha256_of(p)

    def start(self) -> "RunManifest":
        self.started_at = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        return self

    def finish(self) -> "RunManifest":
        self.finished_at = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        return self

    def write(self, artifact_path: str | Path) -> Path:
        out = manifest_path(artifact_path)
        out.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n",
                       encoding="utf-8")
        return out


def manifest_path(artifact_path: str | Path) -> Path:
    return Path(str(artifact_path) + ".manifest.json")


_BASE_COLUMNS = ["model", "latent_dim", "enc_recon", "kl", "rand_recon", "bleu1",
                 "param_count", "knn_entropy", "fitted_entropy", "entropy_ratio"]


def emit_comparison_table(reports: Sequence[tuple[str, EvalReport]]) -> tuple[str, str]:
    """Render labeled reports as (csv_text, aligned_text_table).

    The CSV carries full-precision values so it reparses exactly; the text
    table displays 4 significant decimals. Stdev columns appear only when
    some report averaged more than one run.
    """
    if not reports:
        raise ValueError("need at least one report")
    with_std = any(r.repeats > 1 for _, r in reports)
    columns = list(_BASE_COLUMNS)
    if with_std:
        columns.insert(3, "enc_recon_std")
        columns.insert(columns.index("rand_recon") + 1, "rand_recon_std")

    def row_values(label: str, r: EvalReport) -> dict:
        vals = {"model": label, "latent_dim": r.latent_dim, "enc_recon": r.enc_recon,
                "kl": r.kl, "rand_recon": r.rand_recon, "bleu1": r.bleu1,
                "param_count": r.param_count, "knn_entropy": r.knn_entropy,
                "fitted_entropy": r.fitted_entropy, "entropy_ratio": r.entropy_ratio}
        if with_std:
            vals["enc_recon_std"] = r.enc_recon_std
            vals["rand_recon_std"] = r.rand_recon_std
        return vals

    rows = [row_values(label, r) for label, r in reports]

    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v)
                         for k, v in row.items()})
    csv_text = buf.getvalue()

    display = [[col for col in columns]]
    for row in rows:
        display.append([fmt4(row[c]) if isinstance(row[c], float) else str(row[c])
                        for c in columns])
    widths = [max(len(line[i]) for line in display) for i in range(len(columns))]
    text_lines = ["  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip()
                  for line in display]
    return csv_text, "\n".join(text_lines) + "\n"
