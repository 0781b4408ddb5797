"""``pob`` command line: attack, augment, sweep, eval, report, inspect.

Every command accepts ``--config FILE`` (a JSON object whose keys mirror
the long flag names, with dashes or underscores) and flags override file
values. The effective configuration is echoed to ``run_config.json`` in the
output directory. ``--threads`` (default ``$POB_THREADS``, 0 = all cores)
only changes speed, never output, so it is left out of the echo.

Exit codes: 0 success, 1 invalid input, 2 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from .augment import AugmentPolicy, augment_dataset
from .metrics import PCKH_COLUMNS, OksParams, ap_summary, pckh
from .occlusion import OcclusionSpec, attack_dataset, radius_sweep
from .report import (
    build_report,
    group_sweep,
    joint_csv,
    summary_csv,
    sweep_csv,
    sweep_table,
    topk_affected,
)
from .schema import PoseDataset, canonical_json, dataset_id, parse_dataset, parse_predictions

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


def _add_common(p: argparse.ArgumentParser, needs_out: bool = True) -> None:
    p.add_argument("--config", help="JSON file with option values; flags take precedence")
    p.add_argument("--seed", type=int, help="global random seed (default 0)")
    p.add_argument("--threads", type=int, help="worker threads, 0 = all cores (default $POB_THREADS or 1)")
    if needs_out:
        p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pob", description="Occlusion attacks, augmentations and keypoint evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attack", help="occlude one keypoint or part of every instance")
    _add_common(p)
    p.add_argument("--dataset", help="ground-truth JSON (COCO or simplified MPII)")
    p.add_argument("--images", help="directory holding the dataset images")
    p.add_argument("--spec", help="attack spec JSON file")
    p.add_argument("--target", help="keypoint:<joint> or part:<part>")
    p.add_argument("--mode", help="blur, blackout or meanout")
    p.add_argument("--radius", type=float, help="disk radius for keypoint attacks (default 6)")
    p.add_argument("--kernel-size", type=int, help="blur kernel size (default 9 keypoint, 31 part)")
    p.add_argument("--sigma", type=float, help="blur sigma (default (k-1)/6 keypoint, 5 part)")

    p = sub.add_parser("augment", help="crop every instance and apply an augmentation policy")
    _add_common(p)
    p.add_argument("--dataset", help="ground-truth JSON")
    p.add_argument("--images", help="directory holding the dataset images")
    p.add_argument("--policy", help="augmentation policy JSON file")
    p.add_argument("--kind", help="tblur, tcutout, tblur_cutout, multikeypoint, partmix, halfbody or geometric")
    p.add_argument("--level", help="keypoint or part (tblur/tcutout/tblur_cutout)")
    p.add_argument("--p", type=float, help="probability of applying the augmentation")
    p.add_argument("--removal", action=argparse.BooleanOptionalAction, default=None,
                   help="drop labels of occluded joints from the targets")
    p.add_argument("--max-keypoints", type=int, help="cap for multikeypoint (default 5)")
    p.add_argument("--crop-width", type=int, help="crop width (default 192)")
    p.add_argument("--crop-height", type=int, help="crop height (default 256)")

    p = sub.add_parser("sweep", help="keypoint attacks over a grid of radii and modes")
    _add_common(p)
    p.add_argument("--dataset", help="ground-truth JSON")
    p.add_argument("--images", help="directory holding the dataset images")
    p.add_argument("--radii", help="comma separated ascending radii, e.g. 6,12,18")
    p.add_argument("--modes", help="comma separated modes, e.g. blackout,meanout,blur")

    p = sub.add_parser("eval", help="evaluate predictions against ground truth")
    _add_common(p)
    p.add_argument("--dataset", help="ground-truth JSON")
    p.add_argument("--predictions", help="predictions JSON (COCO results format)")
    p.add_argument("--metric", choices=("oks", "pckh"), help="default: oks for COCO, pckh for MPII")
    p.add_argument("--alpha", type=float, help="PCKh threshold factor (default 0.5)")
    p.add_argument("--manifest", help="attack manifest to tag the results with")

    p = sub.add_parser("report", help="sensitivity tables from evaluation results")
    _add_common(p)
    p.add_argument("--baseline", help="results JSON of the unattacked run")
    p.add_argument("--variant", action="append", help="results JSON of an attacked run (repeatable)")
    p.add_argument("--manifest", action="append", help="manifest for the matching --variant (repeatable)")
    p.add_argument("--topk", type=int, help="also write the k most affected joints per variant")

    p = sub.add_parser("inspect", help="print dataset statistics")
    _add_common(p, needs_out=False)
    p.add_argument("--dataset", help="ground-truth JSON")
    return parser


def _effective(args: argparse.Namespace) -> dict[str, Any]:
    cfg: dict[str, Any] = {}
    if args.config:
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ValueError("config file must hold a JSON object")
        cfg.update({k.replace("-", "_"): v for k, v in data.items()})
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        cfg[key] = value
    cfg.setdefault("seed", 0)
    if cfg.get("threads") is None:
        cfg["threads"] = int(os.environ.get("POB_THREADS", "1"))
    if cfg["threads"] == 0:
        cfg["threads"] = os.cpu_count() or 1
    return cfg


def _need(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if cfg.get(k) in (None, [])]
    if missing:
        raise ValueError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _echo(cfg: dict, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    echo = {k: v for k, v in cfg.items() if k != "threads"}
    (out / "run_config.json").write_bytes(canonical_json(echo, indent=1))


def _load_dataset(path: str) -> PoseDataset:
    return parse_dataset(Path(path).read_bytes())


def cmd_attack(cfg: dict) -> int:
    _need(cfg, "dataset", "images", "out")
    spec_d: dict[str, Any] = {}
    if cfg.get("spec"):
        spec_d.update(json.loads(Path(cfg["spec"]).read_text(encoding="utf-8")))
    if cfg.get("target"):
        spec_d["target"] = cfg["target"]
    for key in ("mode", "radius"):
        if cfg.get(key) is not None:
            spec_d[key] = cfg[key]
    if cfg.get("kernel_size") is not None:
        spec_d["blur"] = {"kernel_size": cfg["kernel_size"], "sigma": cfg.get("sigma")}
    if "target" not in spec_d or "mode" not in spec_d:
        raise ValueError("attack needs --target and --mode (or --spec)")
    spec = OcclusionSpec.from_dict(spec_d)
    dataset = _load_dataset(cfg["dataset"])
    out = Path(cfg["out"])
    _echo(cfg, out)
    manifest = attack_dataset(dataset, cfg["images"], spec, out, threads=cfg["threads"], seed=cfg["seed"])
    print(f"{manifest['variant']}: {len(manifest['entries'])} images written to {out}")
    return EXIT_OK


def cmd_augment(cfg: dict) -> int:
    _need(cfg, "dataset", "images", "out")
    pol: dict[str, Any] = {}
    if cfg.get("policy"):
        pol.update(json.loads(Path(cfg["policy"]).read_text(encoding="utf-8")))
    for key in ("kind", "level", "p", "removal", "max_keypoints"):
        if cfg.get(key) is not None:
            pol[key] = cfg[key]
    if "kind" not in pol:
        raise ValueError("augment needs --kind or --policy")
    policy = AugmentPolicy.from_dict(pol)
    size = (cfg.get("crop_width") or 192, cfg.get("crop_height") or 256)
    dataset = _load_dataset(cfg["dataset"])
    out = Path(cfg["out"])
    _echo(cfg, out)
    _, manifest = augment_dataset(
        dataset, cfg["images"], policy, cfg["seed"], out, threads=cfg["threads"], crop_size=size
    )
    applied = sum(e["applied"] for e in manifest["entries"])
    print(f"{manifest['variant']}: applied to {applied}/{len(manifest['entries'])} instances")
    return EXIT_OK


def _split(value) -> list[str]:
    if isinstance(value, (list, tuple)):
        return [str(v) for v in value]
    return [v.strip() for v in str(value).split(",") if v.strip()]


def cmd_sweep(cfg: dict) -> int:
    _need(cfg, "dataset", "images", "out", "radii", "modes")
    radii = [float(r) for r in _split(cfg["radii"])]
    modes = _split(cfg["modes"])
    dataset = _load_dataset(cfg["dataset"])
    out = Path(cfg["out"])
    _echo(cfg, out)
    manifests = radius_sweep(dataset, cfg["images"], radii, modes, out, threads=cfg["threads"], seed=cfg["seed"])
    for m in manifests:
        print(f"{m['variant']}: {len(m['entries'])} images")
    return EXIT_OK


def _table(header: Sequence[str], row: Sequence[Any]) -> str:
    cells = ["-" if v is None else f"{v:.3f}" if isinstance(v, float) else str(v) for v in row]
    widths = [max(len(h), len(c)) for h, c in zip(header, cells)]
    line1 = " | ".join(h.rjust(w) for h, w in zip(header, widths))
    line2 = " | ".join(c.rjust(w) for c, w in zip(cells, widths))
    return f"{line1}\n{'-' * len(line1)}\n{line2}"


def cmd_eval(cfg: dict) -> int:
    _need(cfg, "dataset", "predictions", "out")
    dataset = _load_dataset(cfg["dataset"])
    preds = parse_predictions(Path(cfg["predictions"]).read_bytes(), dataset.schema)
    metric = cfg.get("metric") or ("pckh" if dataset.schema.name == "mpii" else "oks")
    out = Path(cfg["out"])
    _echo(cfg, out)
    if metric == "pckh":
        res = pckh(preds, dataset, alpha=cfg.get("alpha") or 0.5)
        doc = res.to_dict()
        print(_table(PCKH_COLUMNS, [res.scores[c] for c in PCKH_COLUMNS]))
    else:
        if dataset.schema.num_joints != 17:
            raise ValueError("OKS evaluation needs the 17-joint COCO skeleton")
        res = ap_summary(preds, dataset, OksParams())
        doc = res.to_dict()
        keys = ("AP", "AP50", "AP75", "APM", "APL", "AR")
        print(_table(keys, [getattr(res, k) for k in keys]))
    doc["metric"] = metric
    doc["dataset_id"] = dataset_id(dataset)
    if cfg.get("manifest"):
        man = json.loads(Path(cfg["manifest"]).read_text(encoding="utf-8"))
        doc["variant"] = man.get("variant")
        doc["spec"] = man.get("spec")
    (out / "results.json").write_bytes(canonical_json(doc, indent=1))
    return EXIT_OK


def cmd_report(cfg: dict) -> int:
    _need(cfg, "baseline", "out")
    variants = cfg.get("variant") or []
    if not variants:
        raise ValueError("at least one variant required")
    manifests = cfg.get("manifest") or []
    if manifests and len(manifests) != len(variants):
        raise ValueError("give either no --manifest or one per --variant")
    for path in [cfg["baseline"], *variants, *manifests]:
        if not Path(path).is_file():
            raise FileNotFoundError(f"file not found: {path}")
    pairs = list(zip(variants, manifests or [None] * len(variants)))
    report = build_report(cfg["baseline"], pairs)
    out = Path(cfg["out"])
    _echo(cfg, out)
    (out / "summary.csv").write_bytes(summary_csv(report))
    (out / "joints.csv").write_bytes(joint_csv(report))
    groups = group_sweep(report)
    if groups:
        (out / "sweep.csv").write_bytes(sweep_csv(sweep_table(groups)))
    if cfg.get("topk") is not None:
        (out / "topk").mkdir(exist_ok=True)
        for v in report.variants:
            ranked = [{"joint": j, "delta": d} for j, d in topk_affected(report, v.name, cfg["topk"])]
            (out / "topk" / f"{v.name}.json").write_bytes(canonical_json(ranked, indent=1))
    for v in report.variants:
        d = report.delta_ap(v.name)
        print(f"{v.name}: AP {v.result.AP!r} delta {d!r}")
    return EXIT_OK


def cmd_inspect(cfg: dict) -> int:
    _need(cfg, "dataset")
    ds = _load_dataset(cfg["dataset"])
    print(f"schema: {ds.schema.name} ({ds.schema.num_joints} joints)")
    print(f"images: {len(ds.images)}")
    print(f"instances: {len(ds.instances)} ({sum(i.iscrowd for i in ds.instances)} crowd)")
    counts = [0] * ds.schema.num_joints
    for inst in ds.instances:
        for j, lab in enumerate(inst.labeled):
            counts[j] += int(lab)
    width = max(len(n) for n in ds.schema.joint_names)
    for name, c in zip(ds.schema.joint_names, counts):
        print(f"  {name.ljust(width)}  {c}")
    return EXIT_OK


COMMANDS = {
    "attack": cmd_attack,
    "augment": cmd_augment,
    "sweep": cmd_sweep,
    "eval": cmd_eval,
    "report": cmd_report,
    "inspect": cmd_inspect,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _effective(args)
        return COMMANDS[args.command](cfg)
    except OSError as exc:
        print(f"pob {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, TypeError) as exc:
        print(f"pob {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
