"""Command-line front end: ``texcov {synth,extract,loo,train,predict}``.

Exit codes: 0 success, 1 data error, 2 config error, 3 numeric or
convergence error.
"""
import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import covest, evaluation, imageio, spd, wavelets
from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateDataError,
    FormatError,
    NotPositiveDefiniteError,
)
from .svm import load_model, save_model, svm_train

log = logging.getLogger("texcov")

EXIT_DATA, EXIT_CONFIG, EXIT_NUMERIC = 1, 2, 3


class DataError(Exception):
    pass


# -- manifest and config -----------------------------------------------------

@dataclass(frozen=True)
class Entry:
    image_id: str
    path: Path
    label: int | None


def _parse_label(text, where):
    text = text.strip()
    if not text:
        return None
    try:
        v = int(text)
    except ValueError:
        v = None
    if v not in (-1, 1):
        raise DataError(f"{where}: label must be -1, +1 or blank, got {text!r}")
    return v


def read_manifest(path):
    """Read an ``id,path,label`` CSV; relative paths resolve against its folder."""
    path = Path(path)
    try:
        rows = list(csv.reader(path.read_text().splitlines()))
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    if not rows or [c.strip() for c in rows[0]] != ["id", "path", "label"]:
        raise DataError(f"{path}: header must be 'id,path,label'")
    entries, seen = [], set()
    for k, row in enumerate(rows[1:], 2):
        if not row or not "".join(row).strip():
            continue
        if len(row) != 3:
            raise DataError(f"{path}:{k}: expected 3 fields")
        image_id, img_path, label = (c.strip() for c in row)
        if not image_id or any(ch.isspace() for ch in image_id):
            raise DataError(f"{path}:{k}: invalid id {image_id!r}")
        if image_id in seen:
            raise DataError(f"{path}:{k}: duplicate id {image_id!r}")
        seen.add(image_id)
        p = Path(img_path)
        if not p.is_absolute():
            p = path.parent / p
        entries.append(Entry(image_id, p, _parse_label(label, f"{path}:{k}")))
    return entries


def write_manifest(path, entries):
    lines = ["id,path,label"]
    for e in entries:
        label = "" if e.label is None else f"{e.label:+d}"
        lines.append(f"{e.image_id},{e.path},{label}")
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class RunConfig:
    pipeline: str = "marginal-haar"
    kernel_ref: str | None = None
    mcd_alpha: float = 0.9
    mcd_n_trial: int = 500
    mcd_n_best: int = 10
    mcd_n_cstep_initial: int = 2
    c_grid: tuple = evaluation.DEFAULT_C_GRID
    seed: int = 0
    svm_tol: float = 1e-3
    gabor_wavelength_ratio: float = 1.0
    cache_dir: str | None = None

    def spec(self):
        try:
            mcd = covest.McdConfig(
                alpha=self.mcd_alpha,
                n_trial=self.mcd_n_trial,
                n_best=self.mcd_n_best,
                n_cstep_initial=self.mcd_n_cstep_initial,
                seed=self.seed,
            )
            overrides = {"mcd": mcd, "gabor_wavelength_ratio": self.gabor_wavelength_ratio}
            if self.kernel_ref is not None:
                overrides["kernel_ref"] = self.kernel_ref
            spec = evaluation.pipeline_spec(self.pipeline, **overrides)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if spec.kernel == "logeuclidean" and spec.kernel_ref not in ("identity", "riemannian-mean"):
            raise ConfigError(f"kernel_ref must be identity or riemannian-mean, got {spec.kernel_ref!r}")
        if spec.kernel == "linear" and self.kernel_ref not in (None, "-"):
            raise ConfigError("kernel_ref does not apply to the marginal-haar pipeline")
        return spec

    def descriptor_stamp(self):
        """Settings that determine descriptor values (cache key)."""
        s = self.spec()
        lines = [f"pipeline = {s.name}"]
        if s.estimator == "mcd":
            lines += [
                f"mcd_alpha = {self.mcd_alpha!r}",
                f"mcd_n_trial = {self.mcd_n_trial}",
                f"mcd_n_best = {self.mcd_n_best}",
                f"mcd_n_cstep_initial = {self.mcd_n_cstep_initial}",
                f"seed = {self.seed}",
            ]
        if s.feature == "gabor":
            lines.append(f"gabor_wavelength_ratio = {self.gabor_wavelength_ratio!r}")
        return "\n".join(lines) + "\n"

    def dump(self):
        lines = []
        for name in self.__dataclass_fields__:
            v = getattr(self, name)
            if v is None:
                continue
            if name == "c_grid":
                v = ",".join(f"{c:g}" for c in v)
            lines.append(f"{name} = {v}")
        return "\n".join(lines) + "\n"


_CONFIG_TYPES = {
    "pipeline": str,
    "kernel_ref": str,
    "mcd_alpha": float,
    "mcd_n_trial": int,
    "mcd_n_best": int,
    "mcd_n_cstep_initial": int,
    "c_grid": lambda s: tuple(float(x) for x in s.split(",") if x.strip()),
    "seed": int,
    "svm_tol": float,
    "gabor_wavelength_ratio": float,
    "cache_dir": str,
}


def parse_config(text, where="config"):
    """Parse ``key = value`` lines (``#`` starts a comment). Unknown keys are errors."""
    values = {}
    for k, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{where}:{k}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_TYPES:
            raise ConfigError(f"{where}:{k}: unknown key {key!r}")
        try:
            values[key] = _CONFIG_TYPES[key](value)
        except ValueError as exc:
            raise ConfigError(f"{where}:{k}: bad value for {key}: {value!r}") from exc
    return RunConfig(**values)


def load_config(args):
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        cfg = parse_config(text, args.config)
    else:
        cfg = RunConfig()
    if getattr(args, "pipeline", None):
        cfg = replace(cfg, pipeline=args.pipeline)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "cache", None):
        cfg = replace(cfg, cache_dir=args.cache)
    cfg.spec()
    return cfg


# -- descriptors and cache ---------------------------------------------------

def _describe(job):
    spec, path = job
    try:
        return evaluation.run_pipeline(spec, imageio.load_image(path)), None
    except (OSError, FormatError) as exc:
        return None, f"{path}: {exc}"


def compute_descriptors(spec, paths, jobs=1):
    work = [(spec, p) for p in paths]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_describe, work))
    return [_describe(w) for w in work]


class DescriptorCache:
    """One descriptor file per image (``<id>.spd``) or one ``marginals.txt``."""

    def __init__(self, root, cfg):
        self.cfg = cfg
        self.spec = cfg.spec()
        self.dir = Path(root) / self.spec.name
        self.stamp = self.dir / "descriptor.cfg"

    @property
    def is_marginal(self):
        return self.spec.feature == "haar"

    def _prepare(self, force):
        self.dir.mkdir(parents=True, exist_ok=True)
        stamp = self.cfg.descriptor_stamp()
        if force or not self.stamp.exists() or self.stamp.read_text() != stamp:
            for f in self.dir.iterdir():
                if f.suffix in (".spd", ".txt"):
                    f.unlink()
            self.stamp.write_text(stamp)

    def _cached(self, entries):
        out = {}
        if self.is_marginal:
            f = self.dir / "marginals.txt"
            if f.exists():
                stored = wavelets.load_marginals(f)
                mtime = f.stat().st_mtime
                for e in entries:
                    if e.image_id in stored and _mtime(e.path) <= mtime:
                        out[e.image_id] = stored[e.image_id]
            return out
        for e in entries:
            f = self.dir / f"{e.image_id}.spd"
            if f.exists() and _mtime(e.path) <= f.stat().st_mtime:
                out[e.image_id] = spd.load_spd(f)
        return out

    def extract(self, entries, force=False, jobs=1):
        """Return ``(descriptors by id, errors)``, computing only stale entries."""
        self._prepare(force)
        have = self._cached(entries)
        for image_id in have:
            log.info("cache hit %s", image_id)
        todo = [e for e in entries if e.image_id not in have]
        errors = []
        results = compute_descriptors(self.spec, [e.path for e in todo], jobs)
        for e, (desc, err) in zip(todo, results):
            if err is not None:
                errors.append(err)
                continue
            log.info("computed %s", e.image_id)
            have[e.image_id] = desc
            if not self.is_marginal:
                spd.save_spd(self.dir / f"{e.image_id}.spd", desc)
        if self.is_marginal and todo:
            f = self.dir / "marginals.txt"
            stored = wavelets.load_marginals(f) if f.exists() else {}
            stored.update({k: v for k, v in have.items()})
            ids = sorted(stored)
            wavelets.save_marginals(f, ids, [stored[i] for i in ids])
        return have, errors


def _mtime(path):
    try:
        return Path(path).stat().st_mtime
    except OSError:
        return float("inf")


def _cache_root(cfg, args):
    root = cfg.cache_dir or getattr(args, "cache", None)
    if root is None:
        raise ConfigError("a cache directory is required (--cache or cache_dir)")
    return root


def _labeled_descriptors(entries, cfg, args):
    if any(e.label is None for e in entries):
        raise ConfigError("every manifest entry needs a label for this command")
    cache = DescriptorCache(_cache_root(cfg, args), cfg)
    descs, errors = cache.extract(entries, force=args.force, jobs=args.jobs)
    if errors:
        raise DataError("; ".join(errors))
    stack = np.stack([descs[e.image_id] for e in entries])
    return stack, np.array([e.label for e in entries])


# -- commands ----------------------------------------------------------------

def cmd_synth(args, cfg):
    out = Path(args.out)
    img_dir = out / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    ids, images, labels = evaluation.synth_dataset(args.n_per_class, args.side, seed=cfg.seed)
    entries = []
    for image_id, img, label in zip(ids, images, labels):
        imageio.save_pgm(img_dir / f"{image_id}.pgm", img)
        entries.append(Entry(image_id, Path("images") / f"{image_id}.pgm", int(label)))
    write_manifest(out / "manifest.csv", entries)
    print(out / "manifest.csv")
    return 0


def cmd_extract(args, cfg):
    entries = read_manifest(args.manifest)
    cache = DescriptorCache(_cache_root(cfg, args), cfg)
    _, errors = cache.extract(entries, force=args.force, jobs=args.jobs)
    for err in errors:
        print(f"error: {err}", file=sys.stderr)
    return EXIT_DATA if errors else 0


def cmd_loo(args, cfg):
    entries = read_manifest(args.manifest)
    spec = cfg.spec()
    descs, labels = _labeled_descriptors(entries, cfg, args)
    report = evaluation.loo_cv(descs, labels, spec, cfg.c_grid, tol=cfg.svm_tol, jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    size = spec.input_size(imageio.load_image(entries[0].path).shape)
    evaluation.write_report(out / "report.txt", report, spec, size)
    (out / "predictions.txt").write_text(
        evaluation.format_predictions(
            [e.image_id for e in entries], labels, report.fold_predictions, report.fold_decisions
        )
    )
    print((out / "report.txt").read_text(), end="")
    return 0


def cmd_train(args, cfg):
    entries = read_manifest(args.manifest)
    spec = cfg.spec()
    descs, labels = _labeled_descriptors(entries, cfg, args)
    c = args.c
    if c is None:
        c = evaluation.loo_cv(descs, labels, spec, cfg.c_grid, tol=cfg.svm_tol).best_c
        log.info("selected C = %g by leave-one-out", c)
    kern = evaluation.fit_kernel(spec, descs)
    model = svm_train(kern(descs), labels, c, tol=cfg.svm_tol, kernel_spec=spec.kernel_spec)

    bundle = Path(args.model)
    bundle.mkdir(parents=True, exist_ok=True)
    save_model(bundle / "model.txt", model)
    (bundle / "config.txt").write_text(cfg.dump())
    ids = [e.image_id for e in entries]
    (bundle / "train_ids.txt").write_text("".join(i + "\n" for i in ids))
    if spec.kernel == "logeuclidean":
        spd.save_spd(bundle / "kernel_ref.spd", kern.ref.matrix)
        tdir = bundle / "train"
        tdir.mkdir(exist_ok=True)
        for image_id, d in zip(ids, descs):
            spd.save_spd(tdir / f"{image_id}.spd", d)
    else:
        wavelets.save_marginals(bundle / "zscore.txt", ["mean", "std"],
                                [kern.zscore.mean, kern.zscore.std])
        wavelets.save_marginals(bundle / "train_marginals.txt", ids, descs)
    print(bundle)
    return 0


def load_bundle(bundle):
    """Return ``(config, model, fitted kernel, training descriptors)``."""
    bundle = Path(bundle)
    try:
        cfg = parse_config((bundle / "config.txt").read_text(), str(bundle / "config.txt"))
        model = load_model(bundle / "model.txt")
        ids = (bundle / "train_ids.txt").read_text().split()
    except OSError as exc:
        raise DataError(f"incomplete model bundle {bundle}: {exc}") from exc
    spec = cfg.spec()
    if model.kernel_spec != spec.kernel_spec:
        raise ConfigError("model kernel does not match the bundled pipeline")
    if spec.kernel == "logeuclidean":
        ref = spd.KernelRef(spec.kernel_ref, spd.load_spd(bundle / "kernel_ref.spd"))
        kern = evaluation.FittedKernel("logeuclidean", ref=ref)
        train = np.stack([spd.load_spd(bundle / "train" / f"{i}.spd") for i in ids])
    else:
        z = wavelets.load_marginals(bundle / "zscore.txt")
        kern = evaluation.FittedKernel(
            "linear", zscore=wavelets.ZScoreStats(mean=z["mean"], std=z["std"])
        )
        stored = wavelets.load_marginals(bundle / "train_marginals.txt")
        train = np.stack([stored[i] for i in ids])
    if train.shape[0] != model.dual_coef.size:
        raise FormatError("training descriptors do not match the model size")
    return cfg, model, kern, train


def cmd_predict(args, _cfg):
    cfg, model, kern, train = load_bundle(args.model)
    if args.config or getattr(args, "pipeline", None):
        requested = load_config(args)
        if requested.pipeline != cfg.pipeline:
            raise ConfigError(
                f"model was trained with {cfg.pipeline}, not {requested.pipeline}"
            )
    entries = read_manifest(args.manifest)
    missing = [str(e.path) for e in entries if not e.path.is_file()]
    if missing:
        raise DataError("missing images: " + ", ".join(missing))
    results = compute_descriptors(cfg.spec(), [e.path for e in entries], args.jobs)
    errors = [err for _, err in results if err is not None]
    if errors:
        raise DataError("; ".join(errors))
    descs = np.stack([d for d, _ in results])
    decisions = model.decision(kern(descs, train))
    preds = np.where(decisions >= 0, 1, -1)
    text = evaluation.format_predictions(
        [e.image_id for e in entries], [e.label for e in entries], preds, decisions
    )
    out = Path(args.out)
    tmp = out.with_name(out.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, out)
    return 0


# -- entry point -------------------------------------------------------------

def _common_flags():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, help="key = value run configuration")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--force", action="store_true", default=argparse.SUPPRESS,
                   help="recompute cached descriptors")
    p.add_argument("--jobs", type=int, default=argparse.SUPPRESS)
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return p


def build_parser():
    common = _common_flags()
    parser = argparse.ArgumentParser(prog="texcov", parents=[common],
                                     description="Texture classification with covariance "
                                                 "descriptors and wavelet marginals.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic manifest and images")
    p.add_argument("--out", required=True)
    p.add_argument("--n-per-class", type=int, default=20)
    p.add_argument("--side", type=int, default=256)

    for name, helptext in (("extract", "compute and cache descriptors"),
                           ("loo", "leave-one-out evaluation over the C grid"),
                           ("train", "train a model bundle")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--manifest", required=True)
        p.add_argument("--cache")
        p.add_argument("--pipeline", choices=sorted(evaluation.PIPELINES))
        if name == "loo":
            p.add_argument("--out", required=True, help="directory for report and predictions")
        if name == "train":
            p.add_argument("--model", required=True, help="output bundle directory")
            p.add_argument("--c", type=float, help="box constraint (default: LOO selection)")

    p = sub.add_parser("predict", parents=[common], help="apply a model bundle")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pipeline", choices=sorted(evaluation.PIPELINES))
    return parser


COMMANDS = {
    "synth": cmd_synth,
    "extract": cmd_extract,
    "loo": cmd_loo,
    "train": cmd_train,
    "predict": cmd_predict,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    for name, default in (("config", None), ("seed", None), ("force", False),
                          ("jobs", 1), ("verbose", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError, FormatError, DegenerateDataError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConvergenceError, NotPositiveDefiniteError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
