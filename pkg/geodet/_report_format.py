"""Writing a :class:`~geodet.pipeline.ReportBundle` to disk, and reading it back.

Files written into the output directory:

- ``q_table.csv`` --- one row per group, one column per factor; cells are q
  to three decimals with ``*`` (p < 0.01) or ``†`` (p < 0.05), ``NA`` when
  the cell could not be computed.
- ``q_table.json`` --- every factor and pair cell with full detail.
- ``interaction_<group>.csv`` / ``.svg`` --- the 7x7 interaction matrix.
- ``dominant.csv`` --- strongest factor and interaction per group.
- ``region_comparison.csv`` --- north versus south t tests.
- ``run_manifest.json`` --- config, input digests and geodet version.

Nothing written depends on the clock or on thread scheduling, so two runs
with the same inputs produce byte-identical files.
"""

from __future__ import annotations

import json
import os
from collections.abc import Mapping
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from geodet._csv_io import FLOAT_FORMAT, file_digest, write_frame
from geodet._heatmap import write_heatmap
from geodet.common import FACTOR_LABELS, FACTORS, REGIONS, GroupKey, InteractionResult, QResult
from geodet.config import AnalysisConfig
from geodet.pipeline import FactorCell, PairCell, ReportBundle, dominant_effects

Q_TABLE_CSV = "q_table.csv"
Q_TABLE_JSON = "q_table.json"
MANIFEST = "run_manifest.json"

PathLike = str | os.PathLike[str]


def _dump_json(data: Any, path: Path) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def q_table_frame(bundle: ReportBundle) -> pd.DataFrame:
    rows = []
    for key in bundle.groups:
        row: dict[str, Any] = {
            "virus": key.virus,
            "region": key.region,
            "age_band": key.age_band or "",
            "sex": key.sex or "",
        }
        for name in FACTORS:
            row[name] = bundle.cell(key, name).text()
        rows.append(row)
    return pd.DataFrame.from_records(rows, columns=["virus", "region", "age_band", "sex", *FACTORS])


def matrix_frame(bundle: ReportBundle, key: GroupKey) -> pd.DataFrame:
    frame = pd.DataFrame(bundle.matrix(key), index=list(FACTORS), columns=list(FACTORS))
    frame.index.name = "factor"
    return frame


def write_report(
    bundle: ReportBundle,
    config: AnalysisConfig,
    out_dir: PathLike,
    *,
    inputs: Mapping[str, PathLike] | None = None,
    version: str = "0.0.0",
) -> list[Path]:
    """Write every report file for *bundle*; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    write_frame(q_table_frame(bundle), out / Q_TABLE_CSV)
    written.append(out / Q_TABLE_CSV)

    _dump_json(
        {
            "groups": [k.to_dict() for k in bundle.groups],
            "cells": [c.to_dict() for c in bundle.cells],
            "interactions": [p.to_dict() for p in bundle.pairs],
        },
        out / Q_TABLE_JSON,
    )
    written.append(out / Q_TABLE_JSON)

    written += write_matrices(bundle, out)

    dominant = pd.DataFrame.from_records(
        [
            {
                "virus": d.key.virus,
                "region": d.key.region,
                "age_band": d.key.age_band or "",
                "sex": d.key.sex or "",
                "factor": d.factor or "",
                "q": d.q,
                "p": d.p,
                "pair": "" if d.pair is None else f"{d.pair[0]}x{d.pair[1]}",
                "q12": d.q12,
            }
            for d in dominant_effects(bundle)
        ],
        columns=["virus", "region", "age_band", "sex", "factor", "q", "p", "pair", "q12"],
    )
    write_frame(dominant, out / "dominant.csv")
    written.append(out / "dominant.csv")

    comparisons = pd.DataFrame.from_records(
        [
            {
                "virus": c.virus,
                "age_band": c.age_band or "",
                "sex": c.sex or "",
                "measure": c.measure,
                "north_mean": c.north_mean,
                "south_mean": c.south_mean,
                "t": None if c.result is None else c.result.t,
                "df": None if c.result is None else c.result.df,
                "p": None if c.result is None else c.result.p,
                "status": c.status,
                "message": c.message,
            }
            for c in bundle.comparisons
        ],
        columns=["virus", "age_band", "sex", "measure", "north_mean", "south_mean", "t", "df", "p", "status", "message"],
    )
    write_frame(comparisons, out / "region_comparison.csv")
    written.append(out / "region_comparison.csv")

    manifest = {
        "version": version,
        "config": config.to_dict(),
        "inputs": {name: {"path": str(p), "sha256": file_digest(p)} for name, p in sorted((inputs or {}).items())},
        "outputs": sorted(p.name for p in written),
    }
    _dump_json(manifest, out / MANIFEST)
    written.append(out / MANIFEST)
    return written


def write_matrices(bundle: ReportBundle, out: Path) -> list[Path]:
    """Interaction CSV and SVG heatmap per group."""
    written = []
    labels = [FACTOR_LABELS[name] for name in FACTORS]
    for key in bundle.groups:
        csv_path = out / f"interaction_{key.slug}.csv"
        matrix_frame(bundle, key).to_csv(csv_path, lineterminator="\n", float_format=FLOAT_FORMAT, na_rep="NA")
        svg_path = out / f"interaction_{key.slug}.svg"
        write_heatmap(svg_path, bundle.matrix(key), labels, title=key.slug)
        written += [csv_path, svg_path]
    return written


def read_report(out_dir: PathLike) -> ReportBundle:
    """Rebuild a bundle (without region comparisons) from ``q_table.json``."""
    data = json.loads((Path(out_dir) / Q_TABLE_JSON).read_text(encoding="utf-8"))
    cells = tuple(
        FactorCell(
            key=GroupKey.from_dict(c),
            factor=c["factor"],
            status=c["status"],
            result=None if c["result"] is None else QResult.from_dict(c["result"]),
            strategy=c.get("strategy", ""),
            n=int(c.get("n", 0)),
            message=c.get("message", ""),
        )
        for c in data["cells"]
    )
    pairs = tuple(
        PairCell(
            key=GroupKey.from_dict(p),
            factor_a=p["factor_a"],
            factor_b=p["factor_b"],
            status=p["status"],
            result=None if p["result"] is None else InteractionResult.from_dict(p["result"]),
            effects=(p["effects"][0], p["effects"][1]) if p.get("effects") else ("", ""),
            message=p.get("message", ""),
        )
        for p in data["interactions"]
    )
    return ReportBundle(tuple(GroupKey.from_dict(k) for k in data["groups"]), cells, pairs)


def render_q_table(bundle: ReportBundle) -> str:
    """Plain-text q tables, one block per region: groups down, factors across."""
    blocks = []
    for region in REGIONS:
        keys = [k for k in bundle.groups if k.region == region]
        if not keys:
            continue
        frame = pd.DataFrame(
            [[bundle.cell(k, f).text() for f in FACTORS] for k in keys],
            index=[_group_label(k) for k in keys],
            columns=list(FACTORS),
        )
        blocks.append(f"Region: {region}\n{frame.to_string()}")
    blocks.append("* p<0.01. † p<0.05.")
    return "\n\n".join(blocks) + "\n"


def _group_label(key: GroupKey) -> str:
    parts = [key.virus]
    if key.age_band:
        parts.append(key.age_band)
    if key.sex:
        parts.append(key.sex)
    return " ".join(parts)


def top_factor(bundle: ReportBundle, key: GroupKey) -> str | None:
    """Factor with the largest q for *key*, or ``None`` if no cell was computed."""
    diag = np.diag(bundle.matrix(key))
    if np.all(np.isnan(diag)):
        return None
    return FACTORS[int(np.nanargmax(diag))]
