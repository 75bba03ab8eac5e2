"""Command-line front end: synthetic data, appearance training, inference, evaluation.

Every command writes a run manifest next to its outputs. The manifest
records the normalized arguments, the config document, input and output
checksums, and can be handed to ``gpgp replay`` to rerun the command.

Seeds: chain (or frame) ``i`` of a command uses ``seed ^ i``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import tempfile
import time
from dataclasses import replace

import numpy as np

from . import __version__
from .appearance import N_BINS, AppearanceModel, train_appearance
from .engine import ChainConfig, run_chain, write_trace_json
from .errors import ConfigError, DataError, GPGPError, GPGPIOError, ParameterError, UsageError
from .imageio import load_gray, load_mask, load_regions, load_rgb, save_gray, save_mask, save_regions
from .models.metrics import char_detection_rate, lane_pixel_accuracy
from .models.road import SCENE_FIELDS, RoadModelConfig, RoadPriors, decide_road, road_model
from .models.text import TextModelConfig, TextReading, decide_text, text_model, text_observers
from .render3d import LANE, Camera
from .synth import Synth2DConstraints, synth2d, synth3d, synthetic_appearance

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3
CONFIG_SECTIONS = ("text", "synth2d", "chain", "road", "synth3d")
DEFAULT_CANVAS = (200, 100)
POSTERIOR_COLUMNS = ("frame", "model", "sample") + SCENE_FIELDS + ("eps", "loglik")


# ------------------------------------------------------------------ config


def load_config(path):
    """Read a JSON config document; every section is optional."""
    if path is None:
        return {}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise GPGPIOError(f"no such config file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    except OSError as exc:
        raise GPGPIOError(f"cannot read {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    unknown = set(doc) - set(CONFIG_SECTIONS)
    if unknown:
        raise ConfigError(f"{path}: unknown config section(s) {sorted(unknown)}")
    return doc


def text_config(doc, canvas_w=None, canvas_h=None):
    sec = dict(doc.get("text", {}))
    names = set(TextModelConfig.__dataclass_fields__)
    unknown = set(sec) - names
    if unknown:
        raise ConfigError(f"unknown text config key(s) {sorted(unknown)}")
    if canvas_w is not None:
        sec["canvas_w"], sec["canvas_h"] = canvas_w, canvas_h
    sec.setdefault("canvas_w", DEFAULT_CANVAS[0])
    sec.setdefault("canvas_h", DEFAULT_CANVAS[1])
    return TextModelConfig.from_dict(sec)


def chain_config(doc, steps, seed):
    sec = dict(doc.get("chain", {}))
    allowed = {"gibbs_probability", "record_every"}
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown chain config key(s) {sorted(unknown)}")
    return ChainConfig(steps=steps, seed=seed, **sec)


def road_setup(doc, image_w, image_h):
    sec = dict(doc.get("road", {}))
    allowed = {"focal_length", "cx", "cy", "priors"}
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown road config key(s) {sorted(unknown)}")
    cam = Camera.default(image_w, image_h)
    try:
        cam = replace(cam, **{k: float(sec[k]) for k in ("focal_length", "cx", "cy") if k in sec})
    except UsageError as exc:
        raise ConfigError(str(exc)) from exc
    priors = RoadPriors.from_dict(sec.get("priors", {}))
    return cam, priors


# ------------------------------------------------------------------ manifest


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _checksums(paths):
    out = {}
    for p in paths:
        try:
            out[os.fspath(p)] = sha256(p)
        except OSError as exc:
            raise GPGPIOError(f"cannot read {p}: {exc}") from exc
    return out


def write_json_atomic(path, doc):
    d = os.path.dirname(os.fspath(path)) or "."
    try:
        os.makedirs(d, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".json")
        with os.fdopen(fd, "w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except OSError as exc:
        raise GPGPIOError(f"cannot write {path}: {exc}") from exc


def write_manifest(path, command, argv, config_path, config, seed, inputs, outputs, out_dir, started):
    """RunManifest: enough to rerun the command and check its outputs."""
    doc = {
        "command": command,
        "argv": argv,
        "config_path": config_path,
        "config": config,
        "seed": seed,
        "inputs": _checksums(inputs),
        "output_dir": os.fspath(out_dir),
        "outputs": _checksums(outputs),
        "cwd": os.getcwd(),
        "started": started,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "version": __version__,
    }
    write_json_atomic(path, doc)
    return doc


def _makedirs(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise GPGPIOError(f"cannot create {path}: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise GPGPIOError(f"output directory {path} is not writable")


def _stem(path):
    return os.path.splitext(os.path.basename(path))[0]


# ------------------------------------------------------------------ text


def infer_text(image, cfg, chains, chain_cfg, observe=True):
    """Run ``chains`` independent chains (seed ``chain_cfg.seed ^ i``) and decide a reading.

    Returns (reading, best index, final traces, diagnostics list).
    """
    if chains < 1:
        raise ConfigError("chains must be >= 1")
    model = text_model(cfg, image)
    obs = text_observers(model) if observe else None
    finals, diags = [], []
    for i in range(chains):
        c = replace(chain_cfg, seed=chain_cfg.seed ^ i, thin=None)
        samples, diag = run_chain(model, None, c, observers=obs)
        finals.append(samples[-1])
        diags.append(diag)
    reading, best = decide_text(finals, model.data)
    return reading, best, finals, diags


def cmd_synth2d(args, doc):
    cfg = text_config(doc)
    con = Synth2DConstraints.from_dict(doc.get("synth2d", {}))
    _makedirs(args.out)
    pairs = synth2d(cfg, con, args.n, args.seed, args.out)
    return [], [p for pair in pairs for p in pair], "manifest_synth2d.json"


def cmd_infer2d(args, doc):
    from .plotting import plot_text_trajectories

    _makedirs(args.out)
    outputs = []
    for path in args.images:
        data = load_gray(path)
        cfg = text_config(doc, data.shape[1], data.shape[0])
        ccfg = chain_config(doc, args.steps, args.seed)
        reading, best, finals, diags = infer_text(data, cfg, args.chains, ccfg)
        stem = os.path.join(args.out, _stem(path))
        doc_out = reading.to_json()
        doc_out.update({"image": os.path.basename(path), "chosen_chain": best})
        write_json_atomic(stem + "_reading.json", doc_out)
        outputs.append(stem + "_reading.json")
        for i, d in enumerate(diags):
            p = f"{stem}_chain{i}.csv"
            try:
                d.to_csv(p)
            except OSError as exc:
                raise GPGPIOError(f"cannot write {p}: {exc}") from exc
            outputs.append(p)
        save_gray(stem + "_best.png", finals[best].render.image)
        try:
            write_trace_json(finals[best], stem + "_best_trace.json")
        except OSError as exc:
            raise GPGPIOError(f"cannot write {stem}_best_trace.json: {exc}") from exc
        plot_text_trajectories(diags, stem + "_trajectories.png")
        outputs += [stem + "_best.png", stem + "_best_trace.json", stem + "_trajectories.png"]
        print(f"{os.path.basename(path)}: {reading.text!r} (chain {best})")
    name = "manifest_infer2d.json" if len(args.images) != 1 else f"manifest_infer2d_{_stem(args.images[0])}.json"
    return list(args.images), outputs, name


# ------------------------------------------------------------------ roads


def infer_road(rgb, models, samples, steps, seed, doc=None):
    """Posterior samples per appearance model and the max-likelihood decision.

    Chain ``m * samples + s`` (model m, sample s) uses seed ``seed ^ (m * samples + s)``.
    Returns (decision, per-model traces, posterior rows).
    """
    doc = doc or {}
    if samples < 1:
        raise ConfigError("samples per model must be >= 1")
    cam, priors = road_setup(doc, rgb.shape[1], rgb.shape[0])
    cfg = RoadModelConfig(cam, tuple(models), priors)
    per_model, rows = [], []
    for m, app in enumerate(models):
        spec = road_model(cfg, rgb, app)
        traces = []
        for s in range(samples):
            c = chain_config(doc, steps, seed ^ (m * samples + s))
            finals, _ = run_chain(spec, None, c)
            t = finals[-1]
            traces.append(t)
            row = {"model": m, "sample": s, "loglik": t.loglik}
            for a, rec in t.choices.items():
                row[a.name] = rec.value
            rows.append(row)
        per_model.append((app, traces))
    return decide_road(per_model), per_model, rows


def cmd_synth3d(args, doc):
    _makedirs(args.out)
    sec = dict(doc.get("synth3d", {}))
    allowed = {"image_w", "image_h", "appearance_seed"}
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown synth3d config key(s) {sorted(unknown)}")
    w, h = int(sec.get("image_w", 96)), int(sec.get("image_h", 72))
    cam, priors = road_setup(doc, w, h)
    inputs = []
    if args.appearance:
        app = AppearanceModel.load(args.appearance)
        inputs.append(args.appearance)
    else:
        app = synthetic_appearance(int(sec.get("appearance_seed", args.seed)))
    items = synth3d(app, cam, args.n, args.seed, args.out, priors)
    app_path = os.path.join(args.out, "appearance.json")
    app.save(app_path)
    outputs = [app_path] + [p for it in items for p in it.values()]
    return inputs, outputs, "manifest_synth3d.json"


def cmd_train_appearance(args, doc):
    rgb = load_rgb(args.image)
    labels = load_regions(args.labels)
    if labels.shape != rgb.shape[:2]:
        raise DataError("image and label map differ in size")
    model = train_appearance(rgb, labels, k=args.k, seed=args.seed)
    d = os.path.dirname(args.out)
    if d:
        _makedirs(d)
    model.save(args.out)
    manifest = os.path.splitext(args.out)[0] + "_manifest.json"
    return [args.image, args.labels], [args.out], manifest


def write_posterior_csv(path, rows):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(POSTERIOR_COLUMNS)
            for r in rows:
                w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in POSTERIOR_COLUMNS])
    except OSError as exc:
        raise GPGPIOError(f"cannot write {path}: {exc}") from exc


def cmd_infer3d(args, doc):
    from .plotting import plot_road_posterior

    if not args.models:
        raise ConfigError("infer3d needs at least one --model")
    models = [AppearanceModel.load(p) for p in args.models]
    _makedirs(args.out)
    outputs, all_rows = [], []
    for path in args.images:
        rgb = load_rgb(path)
        (region, model, _), _, rows = infer_road(rgb, models, args.samples, args.steps, args.seed, doc)
        stem = os.path.join(args.out, _stem(path))
        save_regions(stem + "_regions.png", region.labels)
        save_mask(stem + "_lane.png", region.labels == LANE)
        for r in rows:
            r["frame"] = _stem(path)
        all_rows += rows
        write_json_atomic(stem + "_decision.json", {
            "image": os.path.basename(path),
            "model": models.index(model),
            "model_path": args.models[models.index(model)],
        })
        outputs += [stem + "_regions.png", stem + "_lane.png", stem + "_decision.json"]
        print(f"{os.path.basename(path)}: model {models.index(model)}")
    csv_path = os.path.join(args.out, "posterior.csv")
    write_posterior_csv(csv_path, all_rows)
    fig = os.path.join(args.out, "posterior_lane_pos_x.png")
    plot_road_posterior(all_rows, fig)
    outputs += [csv_path, fig]
    return list(args.images) + list(args.models), outputs, "manifest_infer3d.json"


# ------------------------------------------------------------------ evaluate


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    except OSError as exc:
        raise GPGPIOError(f"cannot read {path}: {exc}") from exc


def _listdir(path):
    try:
        return sorted(os.listdir(path))
    except OSError as exc:
        raise GPGPIOError(f"cannot list {path}: {exc}") from exc


def evaluate_dirs(pred_dir, truth_dir, task):
    """Per-item scores and their mean over items present in both directories.

    text: ``<stem>_reading.json`` predictions against ``<stem>.json`` truths
    (their "reading" entry). road: ``<stem>_regions.png`` predictions against
    ``<stem>_lane.png`` truth masks.
    """
    if task == "text":
        pred_sfx, truth_sfx = "_reading.json", ".json"
    elif task == "road":
        pred_sfx, truth_sfx = "_regions.png", "_lane.png"
    else:
        raise ConfigError(f"unknown task {task!r}")
    preds = {f[: -len(pred_sfx)] for f in _listdir(pred_dir) if f.endswith(pred_sfx)}
    truths = set()
    for f in _listdir(truth_dir):
        if not f.endswith(truth_sfx):
            continue
        stem = f[: -len(truth_sfx)]
        if task == "text" and (stem.endswith("_reading") or "manifest" in stem):
            continue
        truths.add(stem)
    common = sorted(preds & truths)
    if not common:
        raise DataError("no prediction/truth pairs in common")
    per_item = {}
    for stem in common:
        if task == "text":
            pred = TextReading.from_json(_read_json(os.path.join(pred_dir, stem + pred_sfx)))
            tdoc = _read_json(os.path.join(truth_dir, stem + truth_sfx))
            if "reading" not in tdoc:
                raise DataError(f"{stem}{truth_sfx}: truth has no reading")
            per_item[stem] = char_detection_rate(pred, TextReading.from_json(tdoc["reading"]))
        else:
            pred = load_regions(os.path.join(pred_dir, stem + pred_sfx))
            truth = load_mask(os.path.join(truth_dir, stem + truth_sfx))
            try:
                per_item[stem] = lane_pixel_accuracy(pred, truth)
            except UsageError as exc:
                raise DataError(f"{stem}: {exc}") from exc
    metric = "char_detection_rate" if task == "text" else "lane_pixel_accuracy"
    return {
        "task": task,
        "metric": metric,
        "per_item": per_item,
        "aggregate": float(np.mean(list(per_item.values()))),
        "n_items": len(common),
        "unpaired_predictions": sorted(preds - truths),
        "unpaired_truths": sorted(truths - preds),
    }


def cmd_evaluate(args, doc):
    metrics = evaluate_dirs(args.pred_dir, args.truth_dir, args.task)
    write_json_atomic(args.out, metrics)
    print(f"{metrics['metric']}: {metrics['aggregate']:.4f} over {metrics['n_items']} item(s)")
    manifest = os.path.splitext(args.out)[0] + "_manifest.json"
    return [], [args.out], manifest


# ------------------------------------------------------------------ replay


def cmd_replay(args, doc):
    man = _read_json(args.manifest)
    argv = list(man.get("argv", []))
    if not argv or argv[0] == "replay":
        raise DataError(f"{args.manifest}: no replayable command")
    if args.out:
        argv = _with_out(argv, os.path.abspath(args.out))
    # recorded paths are relative to the directory the command ran in
    here = os.getcwd()
    try:
        os.chdir(man.get("cwd", here))
        return main(argv)
    finally:
        os.chdir(here)


def _with_out(argv, out):
    argv = list(argv)
    if "--out" in argv:
        argv[argv.index("--out") + 1] = out
    else:
        argv += ["--out", out]
    return argv


# ------------------------------------------------------------------ parser


def build_parser():
    p = argparse.ArgumentParser(prog="gpgp", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--config", help="JSON config document")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", required=True, help=out_help)

    sp = sub.add_parser("synth2d", help="sample text scenes from the prior")
    common(sp, "output directory")
    sp.add_argument("--n", type=int, required=True)
    sp.set_defaults(func=cmd_synth2d)

    sp = sub.add_parser("infer2d", help="read text in grayscale images")
    sp.add_argument("images", nargs="+")
    common(sp, "output directory")
    sp.add_argument("--steps", type=int, default=20000)
    sp.add_argument("--chains", type=int, default=5)
    sp.set_defaults(func=cmd_infer2d)

    sp = sub.add_parser("synth3d", help="sample road frames from the prior")
    common(sp, "output directory")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--appearance", help="appearance model JSON (default: a synthetic one)")
    sp.set_defaults(func=cmd_synth3d)

    sp = sub.add_parser("train-appearance", help="fit an appearance model to a labeled frame")
    sp.add_argument("image")
    sp.add_argument("labels")
    common(sp, "output model JSON")
    sp.add_argument("--k", type=int, default=N_BINS)
    sp.set_defaults(func=cmd_train_appearance)

    sp = sub.add_parser("infer3d", help="segment road frames")
    sp.add_argument("images", nargs="+")
    common(sp, "output directory")
    sp.add_argument("--model", dest="models", action="append", required=True,
                    help="appearance model JSON (repeatable)")
    sp.add_argument("--samples", type=int, default=10, help="posterior samples per model")
    sp.add_argument("--steps", type=int, default=5000)
    sp.add_argument("--chains", type=int, dest="samples", default=argparse.SUPPRESS,
                    help="alias of --samples")
    sp.set_defaults(func=cmd_infer3d)

    sp = sub.add_parser("evaluate", help="score predictions against truth")
    sp.add_argument("pred_dir")
    sp.add_argument("truth_dir")
    sp.add_argument("--task", choices=("text", "road"), required=True)
    sp.add_argument("--config", help=argparse.SUPPRESS)
    sp.add_argument("--seed", type=int, default=0, help=argparse.SUPPRESS)
    sp.add_argument("--out", required=True, help="metrics JSON path")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    sp.add_argument("manifest")
    sp.add_argument("--out", help="write to this location instead of the recorded one")
    sp.set_defaults(func=cmd_replay)
    return p


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    try:
        if args.command == "replay":
            return args.func(args, {})
        out_parent = os.path.dirname(args.out) if args.command in ("train-appearance", "evaluate") else args.out
        if out_parent:
            _makedirs(out_parent)
        for name in ("steps", "n", "samples", "chains", "k"):
            v = getattr(args, name, None)
            if v is not None and v < (0 if name == "n" else 1):
                raise ConfigError(f"--{name} must be >= {0 if name == 'n' else 1}")
        doc = load_config(args.config)
        inputs, outputs, manifest_name = args.func(args, doc)
        out_dir = out_parent or "."
        inputs = ([args.config] if args.config else []) + list(inputs)
        manifest = manifest_name if os.path.dirname(manifest_name) else os.path.join(out_dir, manifest_name)
        write_manifest(manifest, args.command, argv, args.config, doc, args.seed,
                       inputs, outputs, out_dir, started)
    except (ConfigError, DataError, UsageError, ParameterError) as exc:
        print(f"gpgp {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GPGPIOError, OSError) as exc:
        print(f"gpgp {args.command}: io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except GPGPError as exc:
        print(f"gpgp {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
