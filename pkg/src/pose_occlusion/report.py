"""Sensitivity reports: metric deltas of attacked variants against a baseline."""
from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .metrics import EvalResult

SUMMARY_HEADER = ("variant", "radius", "mode", "AP", "AP50", "AP75", "APM", "APL", "AR", "delta_AP")
JOINT_HEADER = ("variant", "joint", "ap", "delta")


def _sub(a: float | None, b: float | None) -> float | None:
    if a is None or b is None:
        return None
    return a - b


@dataclass
class Variant:
    name: str
    spec: dict
    result: EvalResult

    @property
    def radius(self) -> float | None:
        r = self.spec.get("radius")
        return None if r is None else float(r)

    @property
    def mode(self) -> str | None:
        return self.spec.get("mode")


@dataclass
class SensitivityReport:
    baseline: EvalResult
    variants: list[Variant] = field(default_factory=list)
    dataset_id: str | None = None

    def variant(self, name: str) -> Variant:
        for v in self.variants:
            if v.name == name:
                return v
        raise KeyError(f"no variant named {name!r}")

    def delta_ap(self, name: str) -> float | None:
        return _sub(self.variant(name).result.AP, self.baseline.AP)

    def joint_deltas(self, name: str) -> dict[str, float | None]:
        v = self.variant(name).result.per_joint_ap
        b = self.baseline.per_joint_ap
        return {j: _sub(v.get(j), b.get(j)) for j in b}


def _load_json(src: str | Path | Mapping) -> dict:
    if isinstance(src, Mapping):
        return dict(src)
    return json.loads(Path(src).read_text(encoding="utf-8"))


def build_report(
    baseline: str | Path | Mapping,
    variants: Sequence[tuple[str | Path | Mapping, str | Path | Mapping | None]],
) -> SensitivityReport:
    """Assemble a report from result documents (or paths to them).

    Each variant is ``(results, manifest)``; the manifest supplies the
    variant name and attack spec and may be ``None`` when the results
    document carries them itself. All documents must reference the same
    ground-truth ``dataset_id``.
    """
    if not variants:
        raise ValueError("at least one variant required")
    base = _load_json(baseline)
    ds_id = base.get("dataset_id")
    out = []
    for i, (res_src, man_src) in enumerate(variants):
        res = _load_json(res_src)
        if res.get("dataset_id") != ds_id:
            raise ValueError(
                f"variant {i}: dataset id {res.get('dataset_id')!r} does not match baseline {ds_id!r}"
            )
        man = _load_json(man_src) if man_src is not None else {}
        name = man.get("variant") or res.get("variant") or f"variant{i}"
        spec = man.get("spec") or res.get("spec") or {}
        out.append(Variant(name, dict(spec), EvalResult.from_dict(res)))
    return SensitivityReport(EvalResult.from_dict(base), out, ds_id)


def topk_affected(report: SensitivityReport, variant: str, k: int = 5) -> list[tuple[str, float]]:
    """Joints with the most negative per-joint AP delta, ties by joint order."""
    deltas = report.joint_deltas(variant)
    order = list(deltas)
    if k > len(order):
        warnings.warn(f"k={k} exceeds the number of joints ({len(order)}); clamping", stacklevel=2)
        k = len(order)
    if k <= 0:
        return []
    ranked = sorted(
        ((name, d) for name, d in deltas.items() if d is not None),
        key=lambda item: (item[1], order.index(item[0])),
    )
    return ranked[:k]


def group_sweep(report: SensitivityReport) -> dict[tuple[float, str], SensitivityReport]:
    """Split a report's variants by ``(radius, mode)``."""
    groups: dict[tuple[float, str], SensitivityReport] = {}
    for v in report.variants:
        if v.radius is None or v.mode is None:
            continue
        key = (v.radius, v.mode)
        groups.setdefault(key, SensitivityReport(report.baseline, [], report.dataset_id)).variants.append(v)
    return groups


def sweep_table(reports: Mapping[tuple[float, str], SensitivityReport]) -> dict[str, Any]:
    """Mean AP loss (baseline minus variant) per radius and mode.

    Rows ascend by radius; a missing ``(radius, mode)`` cell is ``None``.
    """
    modes = sorted({m for _, m in reports})
    radii = sorted({r for r, _ in reports})
    rows = []
    for r in radii:
        row: dict[str, Any] = {"radius": r}
        for m in modes:
            rep = reports.get((r, m))
            losses = [] if rep is None else [_sub(rep.baseline.AP, v.result.AP) for v in rep.variants]
            losses = [x for x in losses if x is not None]
            row[m] = sum(losses) / len(losses) if losses else None
        rows.append(row)
    return {"modes": modes, "rows": rows}


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue().encode("utf-8")


def summary_csv(report: SensitivityReport) -> bytes:
    rows = []
    for v in report.variants:
        r = v.result
        rows.append((v.name, v.radius, v.mode, r.AP, r.AP50, r.AP75, r.APM, r.APL, r.AR, report.delta_ap(v.name)))
    return _csv(SUMMARY_HEADER, rows)


def joint_csv(report: SensitivityReport) -> bytes:
    rows = []
    for v in report.variants:
        deltas = report.joint_deltas(v.name)
        for joint, d in deltas.items():
            rows.append((v.name, joint, v.result.per_joint_ap.get(joint), d))
    return _csv(JOINT_HEADER, rows)


def sweep_csv(table: Mapping[str, Any]) -> bytes:
    modes = table["modes"]
    return _csv(("radius", *modes), [(row["radius"], *(row[m] for m in modes)) for row in table["rows"]])
