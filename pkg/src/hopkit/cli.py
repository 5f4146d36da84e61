"""Command-line interface: dataset batch driver and report tools.

Exit codes form a stable contract: 0 success, 1 validation or
synthesis failure, 2 usage or IO error.

All randomness flows from one root seed (``--seed``, falling back to
the ``HOPKIT_SEED`` environment variable, then 0). Item ``i`` of a
batch draws from ``np.random.SeedSequence([root_seed, i])``, so
datasets are reproducible item by item and parallelize across workers
without coordination.

A ``--config`` JSON file supplies values that override command-line
flags. Sections:

    {"args":   {<flag dest>: value, ...},
     "synth":  {<SynthConfig field>: value, ...},
     "reward": {<RewardConfig field>: value, ...},
     "distill": {<DistillConfig field>: value, ...}}
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys

import numpy as np

from .errors import HopkitError, PlanError, SynthesisError, ValidationError
from .grasps import GraspSet, load_grasp_set
from .io import (
    FORMATS,
    canonical_json,
    load_trajectory,
    sha256_bytes,
    sha256_file,
    trajectory_to_binary,
    trajectory_to_json_bytes,
    write_manifest,
)
from .kinematics import BUILTIN_HANDS, KinematicTree, load_hand_model
from .plans import parse_plan, plan_to_demonstration
from .rewards import RewardConfig, score_report
from .scene import ObjectModel, enumerate_stable_poses, load_object
from .synth import SynthConfig, synth_chain, synth_skill, trajectory_issues
from .training import DistillConfig, DistillState, SamplingState, distill_schedule, sampling_probabilities

MANIFEST_NAME = "manifest.json"
MANIFEST_FORMAT = "hopkit-manifest/1"

SKILLS = ("free_move", "grasp", "place", "move", "rotate", "general_rotate", "regrasp", "catch", "throw")

_EXTENSIONS = {"json": "json", "binary": "bin"}


def _eprint(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit(doc, as_json: bool, text_lines) -> None:
    """Print a machine report or its human rendering."""
    if as_json:
        print(json.dumps(doc, sort_keys=True))
    else:
        for line in text_lines:
            print(line)


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return int(args.seed)
    env = os.environ.get("HOPKIT_SEED", "").strip()
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"HOPKIT_SEED must be an integer, got {env!r}") from None
    return 0


class UsageError(Exception):
    """Bad invocation or unreadable input: exit code 2."""


def _load_config_file(path: str) -> dict:
    with open(path, "rb") as fh:
        try:
            doc = json.loads(fh.read().decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise UsageError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    unknown = set(doc) - {"args", "synth", "reward", "distill"}
    if unknown:
        raise UsageError(f"{path}: unknown config sections {sorted(unknown)}")
    return doc


def _apply_arg_overrides(args, overrides: dict, valid_dests: set) -> None:
    """Config file values win over command-line flags."""
    for key, value in overrides.items():
        dest = key.replace("-", "_")
        if dest not in valid_dests:
            raise UsageError(f"config args section: unknown option {key!r}")
        setattr(args, dest, value)


def _item_rng(root_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([root_seed, index]))


def _resolve_hand(hand: str | None, grasps_path: str | None) -> KinematicTree:
    """Hand model from --hand, else from the grasp file's header."""
    if hand is None:
        if grasps_path is None:
            raise UsageError("--hand is required when no grasp file names one")
        with open(grasps_path, "rb") as fh:
            try:
                doc = json.loads(fh.read().decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise UsageError(f"{grasps_path}: not valid JSON: {exc}") from None
        hand = doc.get("hand_model") if isinstance(doc, dict) else None
        if not isinstance(hand, str):
            raise UsageError(f"{grasps_path}: no hand_model field; pass --hand")
    return load_hand_model(hand)


_INPUT_CACHE: dict = {}


def _load_synth_inputs(
    hand: str | None, object_path: str | None, grasps_path: str | None
) -> tuple[KinematicTree, ObjectModel | None, GraspSet | None]:
    key = (hand, object_path, grasps_path)
    if key not in _INPUT_CACHE:
        tree = _resolve_hand(hand, grasps_path)
        obj = load_object(object_path) if object_path else None
        gs = None
        if grasps_path is not None:
            if obj is None:
                raise UsageError("--grasps requires --object")
            gs = load_grasp_set(grasps_path, tree, obj)
        _INPUT_CACHE[key] = (tree, obj, gs)
    return _INPUT_CACHE[key]


def _synth_item(task: dict) -> dict:
    """Synthesize one dataset item. Runs in a worker process; returns a
    manifest entry or a failure record."""
    index = task["index"]
    entry = {"index": index, "seed": [task["root_seed"], index]}
    try:
        tree, obj, gs = _load_synth_inputs(task["hand"], task["object_path"], task["grasps_path"])
        cfg = SynthConfig.from_dict(task["synth_overrides"])
        rng = _item_rng(task["root_seed"], index)
        skills = task["skills"]
        if len(skills) == 1:
            traj = synth_skill(cfg, tree, gs, obj, rng, skills[0])
        else:
            traj = synth_chain(cfg, tree, gs, obj, rng, skills)
        issues = trajectory_issues(traj, tree, obj, velocity_bound=cfg.velocity_bound)
        if issues:
            raise SynthesisError(f"synthesized clip failed validation: {issues[0]}")
        if task["format"] == "json":
            data = trajectory_to_json_bytes(traj)
        else:
            data = trajectory_to_binary(traj)
        name = f"item_{index:05d}.{_EXTENSIONS[task['format']]}"
        with open(os.path.join(task["out_dir"], name), "wb") as fh:
            fh.write(data)
        entry.update(
            {
                "path": name,
                "sha256": sha256_bytes(data),
                "bytes": len(data),
                "frames": len(traj),
                "skills": skills,
                "object": obj.id if obj is not None else None,
                "status": "ok",
            }
        )
    except (HopkitError, ValueError) as exc:
        entry.update({"status": "error", "error": str(exc)})
    return entry


def cmd_synth(args) -> int:
    skills = [s.strip() for s in args.skills.split(",") if s.strip()]
    if not skills:
        raise UsageError("--skills must name at least one skill")
    for s in skills:
        if s not in SKILLS:
            raise UsageError(f"unknown skill {s!r}; choose from {', '.join(SKILLS)}")
    needs_object = skills != ["free_move"]
    if needs_object and (args.object is None or args.grasps is None):
        raise UsageError("these skills require --object and --grasps")
    if args.count < 0:
        raise UsageError("--count must be non-negative")
    root_seed = _resolve_seed(args)
    os.makedirs(args.out, exist_ok=True)
    # Fail fast on unloadable inputs before fanning out.
    tree, obj, _ = _load_synth_inputs(args.hand, args.object, args.grasps)
    SynthConfig.from_dict(args.synth_overrides)

    tasks = [
        {
            "index": i,
            "root_seed": root_seed,
            "skills": skills,
            "hand": args.hand,
            "object_path": args.object,
            "grasps_path": args.grasps,
            "synth_overrides": args.synth_overrides,
            "out_dir": args.out,
            "format": args.format,
        }
        for i in range(args.count)
    ]
    if args.workers > 1 and len(tasks) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.workers) as pool:
            entries = list(pool.map(_synth_item, tasks, chunksize=8))
    else:
        entries = [_synth_item(t) for t in tasks]
    entries.sort(key=lambda e: e["index"])

    items = [e for e in entries if e["status"] == "ok"]
    failures = [e for e in entries if e["status"] != "ok"]
    manifest = {
        "format": MANIFEST_FORMAT,
        # Entry paths are relative to the manifest's own directory, so
        # regenerating into a differently named directory still yields
        # byte-identical files, manifest included.
        "root": ".",
        "root_seed": root_seed,
        "skills": skills,
        "object": obj.id if obj is not None else None,
        "hand_model": tree.id,
        "trajectory_format": args.format,
        "count": args.count,
        "synth_overrides": args.synth_overrides,
        "items": items,
        "failures": failures,
    }
    manifest_path = os.path.join(args.out, MANIFEST_NAME)
    write_manifest(manifest_path, manifest)
    for f in failures:
        _eprint(f"item {f['index']} (seed {f['seed']}): {f['error']}")
    _emit(
        manifest,
        args.json,
        [f"wrote {len(items)}/{args.count} items to {args.out} ({len(failures)} failures)"],
    )
    return 1 if failures else 0


def _validate_targets(paths: list[str]) -> list[tuple[str, str | None]]:
    """Expand files and directories into (path, expected_sha) pairs."""
    targets: list[tuple[str, str | None]] = []
    for path in paths:
        if os.path.isdir(path):
            manifest_path = os.path.join(path, MANIFEST_NAME)
            if os.path.exists(manifest_path):
                with open(manifest_path, "rb") as fh:
                    manifest = json.loads(fh.read().decode("utf-8"))
                for item in manifest.get("items", []):
                    targets.append((os.path.join(path, item["path"]), item.get("sha256")))
            else:
                for name in sorted(os.listdir(path)):
                    if name == MANIFEST_NAME or not name.endswith((".json", ".bin")):
                        continue
                    targets.append((os.path.join(path, name), None))
        else:
            targets.append((path, None))
    return targets


def cmd_validate(args) -> int:
    obj = load_object(args.object) if args.object else None
    tree = load_hand_model(args.hand) if args.hand else None
    reports = []
    for path, expected_sha in _validate_targets(args.paths):
        issues: list[str] = []
        try:
            if expected_sha is not None:
                actual = sha256_file(path)
                if actual != expected_sha:
                    issues.append(f"checksum mismatch: manifest says {expected_sha}, file is {actual}")
            traj = load_trajectory(path)
        except ValidationError as exc:
            issues.append(str(exc))
        else:
            file_tree = tree
            if file_tree is None:
                name = traj.provenance.get("hand_model")
                if name in BUILTIN_HANDS:
                    file_tree = load_hand_model(name)
            issues.extend(trajectory_issues(traj, file_tree, obj))
        reports.append({"path": path, "ok": not issues, "issues": issues})
    ok = all(r["ok"] for r in reports)
    lines = []
    for r in reports:
        lines.append(("OK   " if r["ok"] else "FAIL ") + r["path"])
        lines.extend(f"  - {issue}" for issue in r["issues"])
    lines.append(f"{sum(r['ok'] for r in reports)}/{len(reports)} files valid")
    _emit({"ok": ok, "files": reports}, args.json, lines)
    return 0 if ok else 1


def cmd_score(args) -> int:
    rollout = load_trajectory(args.rollout)
    reference = load_trajectory(args.reference)
    cfg = RewardConfig.from_dict(args.reward_overrides)
    report = score_report(rollout, reference, cfg, include_hand=args.include_hand)
    doc = report if args.per_frame else {"summary": report["summary"]}
    s = report["summary"]
    _emit(
        doc,
        args.json,
        [
            f"frames:            {s['frames']}",
            f"mean reward:       {s['mean_reward']:.6f}",
            f"obj pos err (cm):  {s['obj_pos_err_cm']:.4f}",
            f"obj rot err (deg): {s['obj_rot_err_deg']:.4f}",
            f"hand err (cm):     {s['hand_err_cm']:.4f}",
            f"success rate:      {s['success_rate']:.4f} ({s['success_criteria']})",
        ],
    )
    return 0


def cmd_plan(args) -> int:
    with open(args.plan, "rb") as fh:
        raw = fh.read()
    try:
        plan = parse_plan(raw)
    except PlanError as exc:
        _eprint(f"{args.plan}: {exc}")
        return 1
    obj = load_object(args.object)
    tree = _resolve_hand(args.hand, args.grasps)
    gs = load_grasp_set(args.grasps, tree, obj)
    traj = plan_to_demonstration(
        plan,
        gs,
        obj,
        tree,
        fps=args.fps,
        samples_per_keypoint=args.samples_per_keypoint,
    )
    issues = trajectory_issues(traj, tree, obj)
    if issues:
        raise SynthesisError(f"plan produced an invalid trajectory: {issues[0]}")
    data = trajectory_to_json_bytes(traj) if args.format == "json" else trajectory_to_binary(traj)
    with open(args.out, "wb") as fh:
        fh.write(data)
    info = {
        "out": args.out,
        "frames": len(traj),
        "sha256": sha256_bytes(data),
        "plan": traj.provenance["plan"],
    }
    _emit(info, args.json, [f"wrote {len(traj)} frames to {args.out}"])
    return 0


def cmd_stable_poses(args) -> int:
    obj = load_object(args.object)
    poses = enumerate_stable_poses(obj)
    doc = {
        "object": obj.id,
        "poses": [
            {
                "face": sp.face_index,
                "p": sp.pose.position.tolist(),
                "q": sp.pose.orientation.tolist(),
                "support_normal": sp.support_normal.tolist(),
            }
            for sp in poses
        ],
    }
    lines = [f"{obj.id}: {len(poses)} stable pose(s)"]
    for sp in poses:
        p = ", ".join(f"{v:.4f}" for v in sp.pose.position)
        q = ", ".join(f"{v:.4f}" for v in sp.pose.orientation)
        lines.append(f"  face {sp.face_index}: p=({p}) q=({q})")
    _emit(doc, args.json, lines)
    return 0


def _csv_out(lines: list[str], out: str | None) -> None:
    text = "\n".join(lines) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text, end="")


def cmd_weights(args) -> int:
    if (args.rewards is None) == (args.rewards_file is None):
        raise UsageError("pass exactly one of --rewards or --rewards-file")
    if args.rewards is not None:
        try:
            rewards = [float(v) for v in args.rewards.split(",") if v.strip()]
        except ValueError:
            raise UsageError(f"--rewards must be comma-separated numbers, got {args.rewards!r}") from None
    else:
        with open(args.rewards_file, "r", encoding="utf-8") as fh:
            try:
                rewards = [float(line) for line in fh if line.strip()]
            except ValueError as exc:
                raise UsageError(f"{args.rewards_file}: {exc}") from None
    state = SamplingState(mean_rewards=np.asarray(rewards), lam=args.lam)
    probs = sampling_probabilities(state)
    if args.json:
        print(json.dumps({"lam": args.lam, "probabilities": probs.tolist()}, sort_keys=True))
    else:
        lines = ["index,mean_reward,probability"]
        lines += [f"{i},{r!r},{float(p)!r}" for i, (r, p) in enumerate(zip(rewards, probs))]
        _csv_out(lines, args.out)
    return 0


def cmd_schedule_dump(args) -> int:
    cfg = DistillConfig.from_dict(args.distill_overrides)
    # A passing history stands in for a critic that has warmed up.
    ev = tuple([cfg.ev_gate + 0.1] * cfg.ev_consecutive) if args.assume_ev_pass else ()
    rows = []
    for epoch in range(0, args.epochs, args.step):
        step = distill_schedule(DistillState(epoch=epoch, ev_history=ev), cfg)
        w = step.loss_weights
        rows.append(
            {
                "epoch": epoch,
                "stage": step.stage,
                "teacher_prob": step.teacher_probability,
                "w_expert": w["expert"],
                "w_policy_gradient": w["policy_gradient"],
                "w_value": w["value"],
                "w_boundary": w["boundary"],
            }
        )
    if args.json:
        print(json.dumps({"rows": rows}, sort_keys=True))
    else:
        header = "epoch,stage,teacher_prob,w_expert,w_policy_gradient,w_value,w_boundary"
        lines = [header]
        for r in rows:
            lines.append(
                f"{r['epoch']},{r['stage']},{r['teacher_prob']!r},{r['w_expert']!r},"
                f"{r['w_policy_gradient']!r},{r['w_value']!r},{r['w_boundary']!r}"
            )
        _csv_out(lines, args.out)
    return 0


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="hopkit",
        description="Synthesize and inspect hand-object interaction demonstrations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers = {}

    def add(name: str, func, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file; its values override flags")
        p.add_argument("--json", action="store_true", help="machine-readable JSON to stdout")
        p.set_defaults(func=func)
        subparsers[name] = p
        return p

    p = add("synth", cmd_synth, "batch-synthesize demonstration clips plus a manifest")
    p.add_argument("--skills", required=True, help="comma-separated chain, e.g. grasp,move,place")
    p.add_argument("--object", help="object model JSON file")
    p.add_argument("--grasps", help="grasp set JSON file")
    p.add_argument("--hand", help="hand model name or JSON file (default: from the grasp file)")
    p.add_argument("--count", type=int, default=1, help="number of items (default 1)")
    p.add_argument("--seed", type=int, default=None, help="root seed (default: HOPKIT_SEED or 0)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", choices=FORMATS, default="json", help="trajectory file format")
    p.add_argument("--workers", type=int, default=1, help="parallel synthesis processes")

    p = add("validate", cmd_validate, "check trajectory files or dataset directories")
    p.add_argument("paths", nargs="+", help="trajectory files or dataset directories")
    p.add_argument("--object", help="object model JSON for keypoint checks")
    p.add_argument("--hand", help="hand model for forward-kinematics checks")

    p = add("score", cmd_score, "score a rollout against a reference")
    p.add_argument("rollout", help="rollout trajectory file")
    p.add_argument("reference", help="reference trajectory file")
    p.add_argument("--include-hand", action="store_true", help="hand error joins the success criterion")
    p.add_argument("--per-frame", action="store_true", help="include per-frame rows in JSON output")

    p = add("plan", cmd_plan, "densify a sparse plan into a demonstration")
    p.add_argument("plan", help="plan JSON file")
    p.add_argument("--grasps", required=True, help="grasp set JSON file")
    p.add_argument("--object", required=True, help="object model JSON file")
    p.add_argument("--hand", help="hand model name or JSON file (default: from the grasp file)")
    p.add_argument("--out", required=True, help="output trajectory file")
    p.add_argument("--fps", type=float, default=60.0)
    p.add_argument("--samples-per-keypoint", type=int, default=20)
    p.add_argument("--format", choices=FORMATS, default="json")

    p = add("stable-poses", cmd_stable_poses, "enumerate resting poses of an object")
    p.add_argument("--object", required=True, help="object model JSON file")

    p = add("weights", cmd_weights, "adaptive sampling probabilities as CSV")
    p.add_argument("--rewards", help="comma-separated mean rewards")
    p.add_argument("--rewards-file", help="file with one mean reward per line")
    p.add_argument("--lam", type=float, default=10.0, help="softmax sharpness (0 = uniform)")
    p.add_argument("--out", help="write CSV here instead of stdout")

    p = add("schedule-dump", cmd_schedule_dump, "distillation schedule as CSV")
    p.add_argument("--epochs", type=int, default=8000, help="dump epochs [0, N)")
    p.add_argument("--step", type=int, default=250, help="epoch stride")
    p.add_argument("--assume-ev-pass", action="store_true", help="treat the explained-variance gate as passed")
    p.add_argument("--out", help="write CSV here instead of stdout")

    return parser, subparsers


def main(argv: list[str] | None = None) -> int:
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config_file(args.config) if args.config else {}
        valid = {a.dest for a in subparsers[args.command]._actions} - {"help", "func"}
        _apply_arg_overrides(args, config.get("args", {}), valid)
        args.synth_overrides = config.get("synth", {})
        args.reward_overrides = config.get("reward", {})
        args.distill_overrides = config.get("distill", {})
        return args.func(args)
    except UsageError as exc:
        _eprint(f"error: {exc}")
        return 2
    except OSError as exc:
        _eprint(f"error: {exc}")
        return 2
    except HopkitError as exc:
        _eprint(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
