"""Command-line entry point: ``sst simulate|train|translate|evaluate|pipeline``.

Artifacts land under the output directory::

    data/<structure>_<state>.sstsig        simulated responses
    data/<structure>_<state>.modal.json    analytic modal truth
    train/checkpoints/ckpt_<iter>.sstckpt
    train/monitor.csv, train/monitor.svg
    translate/<target>_<scenario>.sstsig   (+ .json sidecar)
    evaluate/<target>_<scenario>.{csv,json} (+ SVG figures)
    manifest.json

Exit codes: 0 success, 2 invalid input, 3 runtime or numerical failure, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .config import default_config, load_config
from .errors import (
    InvalidConfig,
    IoFailure,
    NonFiniteLoss,
    NumericalError,
    SSTError,
    ValidationError,
)
from .integrate import BACKEND
from .signals import read_container, split_channels, write_container

log = logging.getLogger("sst")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4
LOCK_NAME = ".sst.lock"


# ---------------------------------------------------------------------------
# helpers

def _out(config):
    return Path(config.output_dir)


def container_path(config, structure, state):
    return _out(config) / "data" / f"{structure}_{state}.sstsig"


def _write_json(path, payload):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def _rel(config, path):
    try:
        return str(Path(path).relative_to(_out(config)))
    except ValueError:
        return str(path)


@contextmanager
def output_lock(out_dir):
    """Exclusive lock file so two commands never write one directory at once."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        fd = os.open(out_dir / LOCK_NAME, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as exc:
        raise IoFailure(f"{out_dir} is locked by another run ({out_dir / LOCK_NAME})") from exc
    except OSError as exc:
        raise IoFailure(f"cannot lock {out_dir}: {exc}") from exc
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        try:
            os.unlink(out_dir / LOCK_NAME)
        except OSError:
            pass


def apply_determinism(config):
    import torch

    torch.manual_seed(config.seed)
    if config.deterministic:
        torch.use_deterministic_algorithms(True)
        torch.set_num_threads(1)


def versions():
    import scipy
    import torch

    return {"sst": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "torch": torch.__version__, "newmark_backend": BACKEND}


def _provenance(config):
    return {"config_sha256": config.digest(), "seed": config.seed}


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(config):
    """One container plus modal-truth sidecar per (structure, state)."""
    from .structures import apply_state, gaussian_excitation, preset, simulate_response, state_spec

    sim = config.simulation
    spec = config.excitation_spec()
    excitation = gaussian_excitation(spec)
    scale = config.architecture_config().output_scale
    structures = list(dict.fromkeys(list(sim.structures) + [sim.train_structure]
                                    + list(config.translation.targets)))
    paths = []
    for name in structures:
        base = preset(name)
        for label in sim.states:
            model = apply_state(base, state_spec(base, label, sim.stiffness_scale, sim.damage_element))
            result = simulate_response(model, excitation, sim.pattern, excitation_spec=spec,
                                       pattern_seed=spec.seed + 1)
            peak = float(np.max(np.abs(result.responses.data)))
            if peak > 0.95 * scale:
                log.warning("%s/%s peaks at %.3g, close to the generator output scale %.3g",
                            name, label, peak, scale)
            path = container_path(config, name, label)
            write_container(path, result.responses, extra={
                **_provenance(config), "pattern": sim.pattern, "excitation_seed": spec.seed})
            _write_json(path.with_suffix(".modal.json"),
                        {"structure_id": name, "state_label": label, "model": model.to_dict(),
                         **result.truth.to_dict()})
            paths.append(path)
            log.info("simulated %s", path)
    return paths


def _load_domain(config, structure, state):
    cs, _ = read_container(container_path(config, structure, state))
    return split_channels(cs, config.window_seconds)


def cmd_train(config, resume=None):
    """Train on the alpha/beta records of the training structure."""
    from .plots import plot_monitor
    from .training import train, write_monitor_csv

    name = config.simulation.train_structure
    alpha = _load_domain(config, name, "alpha")
    beta = _load_domain(config, name, "beta")
    out = _out(config) / "train"
    result = train(config.train_config(), config.weights, alpha, beta, config.architecture_config(),
                   resume=resume, checkpoint_dir=out / "checkpoints")
    records = result.records
    csv_path = out / "monitor.csv"
    if resume is not None and csv_path.exists():
        from .training import read_monitor_csv

        done = records[0].iteration if records else None
        records = [r for r in read_monitor_csv(csv_path) if done is None or r.iteration < done] + records
    write_monitor_csv(records, csv_path)
    artifacts = {"monitor_csv": csv_path, "checkpoints": result.checkpoints}
    if config.evaluation.plots and records:
        artifacts["monitor_svg"] = plot_monitor(records, out / "monitor.svg")
    return artifacts


def latest_checkpoint(config):
    found = sorted((_out(config) / "train" / "checkpoints").glob("ckpt_*.sstckpt"))
    if not found:
        raise IoFailure(f"no checkpoint under {_out(config) / 'train' / 'checkpoints'}")
    return found[-1]


def cmd_translate(config, checkpoint=None, scenario=None, target=None):
    """Run each requested scenario on each target structure."""
    from .dgcg import load_checkpoint
    from .translation import SCENARIOS, run_scenario, scenario as make_scenario, write_sidecar

    labels = [scenario] if scenario is not None else list(config.translation.scenarios)
    for label in labels:
        if label not in SCENARIOS:
            raise InvalidConfig(f"unknown scenario {label!r}; expected one of {sorted(SCENARIOS)}")
    targets = [target] if target is not None else list(config.translation.targets)
    checkpoint = Path(checkpoint or config.translation.checkpoint or latest_checkpoint(config))
    state, _, _ = load_checkpoint(checkpoint)
    outputs = []
    for name in targets:
        for label in labels:
            spec = make_scenario(label, name)
            source, _ = read_container(container_path(config, name, spec.source_state))
            result = run_scenario(state, source, spec, config.window_seconds, checkpoint.name)
            path = _out(config) / "translate" / f"{name}_{label}.sstsig"
            write_container(path, result.synthetic, extra={
                **_provenance(config), "scenario": spec.to_dict(), "checkpoint_id": checkpoint.name})
            write_sidecar(result, path.with_suffix(".json"))
            outputs.append((spec, path))
            log.info("translated %s scenario %s -> %s", name, label, path)
    return outputs


def cmd_evaluate(config, real_container, synthetic_container, stem=None, scenario=None):
    """Compare a real and a synthetic record; writes CSV/JSON and (optionally) SVG figures."""
    from .modal_id import compare_states
    from .reports import write_report

    real, _ = read_container(real_container)
    synthetic, header = read_container(synthetic_container)
    scenario = scenario or header.get("scenario") or {}
    report = compare_states(real, synthetic, config.evaluation.fdd, config.evaluation.mmsc, scenario)
    if stem is None:
        stem = _out(config) / "evaluate" / Path(synthetic_container).stem
    csv_path, json_path = write_report(report, stem)
    artifacts = {"csv": csv_path, "json": json_path}
    if config.evaluation.plots:
        from .plots import plot_mmsc_bars, plot_mode_shapes, plot_singular_values

        stem = Path(stem)
        artifacts["mmsc_svg"] = plot_mmsc_bars(report, stem.with_name(stem.name + "_mmsc.svg"))
        artifacts["svd_svg"] = plot_singular_values(report, stem.with_name(stem.name + "_svd.svg"))
        artifacts["shapes_svg"] = plot_mode_shapes(report, stem.with_name(stem.name + "_shapes.svg"))
    return report, artifacts


def cmd_pipeline(config):
    """simulate -> train -> translate every scenario -> evaluate every pair; writes the manifest."""
    artifacts = {"simulate": [_rel(config, p) for p in cmd_simulate(config)]}
    trained = cmd_train(config)
    artifacts["train"] = {k: ([_rel(config, p) for p in v] if isinstance(v, list) else _rel(config, v))
                          for k, v in trained.items()}
    final = trained["checkpoints"][-1]
    translated = cmd_translate(config, checkpoint=final)
    artifacts["translate"] = [_rel(config, p) for _, p in translated]
    reports = []
    for spec, path in translated:
        real = container_path(config, spec.target_structure_id, spec.reference_state)
        report, files = cmd_evaluate(config, real, path, scenario=spec.to_dict())
        reports.append({"scenario": spec.to_dict(), "average_mmsc": report.average_mmsc,
                        **{k: _rel(config, v) for k, v in files.items()}})
    artifacts["evaluate"] = reports
    write_manifest(config, artifacts)
    return artifacts


def write_manifest(config, artifacts):
    return _write_json(_out(config) / "manifest.json", {
        "config_sha256": config.digest(),
        "seed": config.seed,
        "deterministic": config.deterministic,
        "config": config.to_dict(),
        "versions": versions(),
        "artifacts": artifacts,
    })


# ---------------------------------------------------------------------------
# argument handling

def build_parser():
    parser = argparse.ArgumentParser(prog="sst", description="Structural state translation toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML configuration file")
    common.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")
    common.add_argument("--deterministic", action="store_true", default=None,
                        help="deterministic torch kernels, single thread")
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate structure responses")
    p = sub.add_parser("train", parents=[common], help="train the translation networks")
    p.add_argument("--resume", type=Path, help="checkpoint to continue from")
    p = sub.add_parser("translate", parents=[common], help="translate target records")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--scenario", help="I, II, III or IV (default: all configured)")
    p.add_argument("--target", help="target structure (default: all configured)")
    p = sub.add_parser("evaluate", parents=[common], help="compare a real and a synthetic record")
    p.add_argument("real", type=Path)
    p.add_argument("synthetic", type=Path)
    p.add_argument("--stem", type=Path, help="report path without suffix")
    sub.add_parser("pipeline", parents=[common], help="run every stage")
    return parser


_STAGES = {
    "simulate": ("simulate",),
    "train": ("train",),
    "translate": ("translate",),
    "evaluate": ("evaluate",),
    "pipeline": ("simulate", "train", "translate", "evaluate"),
}


def _resolve_config(args):
    config = load_config(args.config) if args.config else default_config()
    config = config.with_overrides(seed=args.seed, deterministic=args.deterministic, output_dir=args.out)
    checkpoint = getattr(args, "checkpoint", None)
    if checkpoint is not None and not Path(checkpoint).is_file():
        raise IoFailure(f"no such checkpoint: {checkpoint}")
    return config.validate(_STAGES[args.command])


def run(args):
    config = _resolve_config(args)
    apply_determinism(config)
    with output_lock(config.output_dir):
        if args.command == "simulate":
            cmd_simulate(config)
        elif args.command == "train":
            cmd_train(config, resume=args.resume)
        elif args.command == "translate":
            cmd_translate(config, args.checkpoint, args.scenario, args.target)
        elif args.command == "evaluate":
            report, _ = cmd_evaluate(config, args.real, args.synthetic, args.stem)
            print(f"average MMSC {report.average_mmsc:.4f}")
            for p in report.pairs:
                if p.f_synthetic is None:
                    print(f"mode {p.order}: {p.f_real:.3f} Hz unpaired")
                else:
                    print(f"mode {p.order}: {p.f_real:.3f} -> {p.f_synthetic:.3f} Hz  "
                          f"CNF {p.cnf_percent:.2f}%  MAC {p.mac:.3f}")
        else:
            cmd_pipeline(config)
    return EXIT_OK


def exit_code(exc):
    if isinstance(exc, IoFailure):
        return EXIT_IO
    if isinstance(exc, ValidationError):
        return EXIT_INVALID
    return EXIT_RUNTIME


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except NonFiniteLoss as exc:
        print(f"error: {exc} (iteration {exc.iteration})", file=sys.stderr)
        return exit_code(exc)
    except (SSTError, NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
