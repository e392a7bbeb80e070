"""Command-line surface: asset building, training, placement, evaluation.

Exit codes: 0 success, 2 usage error, 3 validation failure, 4 no feasible
placement.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from scene_placer import __version__
from scene_placer.body import build_capsule_body, load_body_asset, save_body_asset
from scene_placer.body.model import PoseVector, pose_body
from scene_placer.config import PipelineConfig, load_config
from scene_placer.fixtures import fixture_room
from scene_placer.generators import (
    ACTIONS,
    ContactCvae,
    PoseCvae,
    TrainConfig,
    load_checkpoint,
    load_contact_corpus,
    load_pose_corpus,
    make_contact_corpus,
    make_pose_corpus,
    save_checkpoint,
    save_contact_corpus,
    save_pose_corpus,
    train_contact,
    train_pose,
)
from scene_placer.geometry.io import save_mesh
from scene_placer.geometry.sdf import build_sdf_grid, load_sdf_cache, save_sdf_cache
from scene_placer.metrics import EvaluationReport, body_interior
from scene_placer.optimizer import save_trace_csv
from scene_placer.placement import run_pipeline
from scene_placer.scene import Scene, load_scene, save_labels

logger = logging.getLogger(__name__)

EXIT_VALIDATION = 3
EXIT_NO_PLACEMENT = 4


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolve_scene(config: PipelineConfig, assets: Path) -> Scene:
    mesh_path = config.scene_mesh or str(assets / "scene.ply")
    labels_path = config.scene_labels or str(assets / "scene.labels.json")
    if not Path(mesh_path).exists():
        _fail(EXIT_VALIDATION, f"scene mesh not found: {mesh_path}")
    if not Path(labels_path).exists():
        _fail(EXIT_VALIDATION, f"scene labels not found: {labels_path}")
    try:
        scene = load_scene(mesh_path, labels_path)
    except ValueError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    cache = assets / "scene.sdf"
    key = _sha256(Path(mesh_path))
    key_file = assets / "scene.sdf.key"
    if cache.exists() and key_file.exists() and key_file.read_text().split()[0] == key:
        scene.sdf = load_sdf_cache(cache)
        logger.info("SDF cache hit: %s", cache)
    else:
        scene.sdf = build_sdf_grid(
            scene.mesh, config.sdf.voxel_size, config.sdf.padding,
            config.sdf.sign_mode,
        )
        save_sdf_cache(scene.sdf, cache)
        key_file.write_text(f"{key} voxel={config.sdf.voxel_size}\n")
    return scene


def _load_models(assets: Path):
    pose_path = assets / "pose.spnet"
    contact_path = assets / "contact.spnet"
    if not pose_path.exists() or not contact_path.exists():
        _fail(EXIT_VALIDATION,
              f"missing checkpoints under {assets}; run 'train' first")
    return (
        load_checkpoint(pose_path),
        load_checkpoint(contact_path, dtype=np.float32),
    )


@click.group()
@click.version_option(__version__)
@click.option("--verbose", is_flag=True, help="Debug logging.")
def main(verbose):
    """Instruction-driven placement of an articulated body in a scene."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


_config_option = click.option(
    "--config", "config_path", type=click.Path(exists=True), default=None,
    help="JSON config file; flags override its keys.",
)
_seed_option = click.option("--seed", type=int, default=None,
                            help="RNG seed (env SCENE_PLACER_SEED as fallback).")


@main.command("build-assets")
@_config_option
@_seed_option
@click.option("--assets-dir", type=click.Path(), default=None)
@click.option("--scene-mesh", type=click.Path(exists=True), default=None,
              help="Scene mesh (.obj/.ply); omit to generate the demo room.")
@click.option("--scene-labels", type=click.Path(exists=True), default=None,
              help="Labels sidecar for --scene-mesh.")
def cmd_build_assets(config_path, seed, assets_dir, scene_mesh, scene_labels):
    """Build the body asset, demo scene, SDF cache, and training corpora."""
    config = load_config(config_path, {
        "seed": seed, "assets_dir": assets_dir,
        "scene_mesh": scene_mesh, "scene_labels": scene_labels,
    })
    assets = Path(config.assets_dir)
    assets.mkdir(parents=True, exist_ok=True)

    body_path = assets / "body.spbody"
    body = build_capsule_body(seed=config.seed + 77)
    save_body_asset(body, body_path)
    click.echo(f"body asset: {body_path} ({body.vertex_count} vertices)")

    if config.scene_mesh is None:
        scene = fixture_room()
        save_mesh(scene.mesh, assets / "scene.ply")
        save_labels(assets / "scene.labels.json", scene.mesh.face_labels,
                    scene.categories)
        click.echo(f"demo scene: {assets / 'scene.ply'}")
    scene = _resolve_scene(config, assets)
    click.echo(f"scene SDF: {assets / 'scene.sdf'} dims {scene.sdf.dims}")

    pose_corpus = make_pose_corpus(
        config.training.pose_corpus_per_action, seed=config.seed + 101
    )
    save_pose_corpus(assets / "pose_corpus.spcorpus", pose_corpus)
    contact_corpus = make_contact_corpus(
        body, scene, config.training.contact_corpus_per_combo,
        seed=config.seed + 103,
    )
    save_contact_corpus(assets / "contact_corpus.spcorpus", contact_corpus)
    click.echo(
        f"corpora: {len(pose_corpus['theta'])} poses, "
        f"{len(contact_corpus['f'])} contact records"
    )

    manifest = {
        "seed": config.seed,
        "artifacts": {
            p.name: _sha256(p)
            for p in sorted(assets.iterdir())
            if p.is_file() and p.suffix not in (".json",) and p.name != "manifest.json"
        },
        "meta": {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
                 "version": __version__},
    }
    _write_json(assets / "manifest.json", manifest)
    click.echo(f"manifest: {assets / 'manifest.json'}")


@main.command("train")
@_config_option
@_seed_option
@click.option("--assets-dir", type=click.Path(), default=None)
@click.option("--which", type=click.Choice(["pose", "contact", "both"]),
              default="both")
def cmd_train(config_path, seed, assets_dir, which):
    """Train the pose and/or contact generator on the built corpora."""
    config = load_config(config_path, {"seed": seed, "assets_dir": assets_dir})
    assets = Path(config.assets_dir)
    body_path = assets / "body.spbody"
    if not body_path.exists():
        _fail(EXIT_VALIDATION, f"missing body asset {body_path}; run build-assets")
    body = load_body_asset(body_path)

    if which in ("pose", "both"):
        corpus_path = assets / "pose_corpus.spcorpus"
        if not corpus_path.exists():
            _fail(EXIT_VALIDATION, f"missing corpus {corpus_path}")
        corpus = load_pose_corpus(corpus_path)
        model = PoseCvae(seed=config.seed + 11)
        train_cfg = TrainConfig(
            learning_rate=config.training.learning_rate,
            steps=config.training.pose_steps,
            batch_size=max(config.training.batch_size, 48),
            seed=config.seed + 11,
            weights=config.loss,
            kl_warmup_steps=config.training.kl_warmup_steps,
        )
        start = time.time()
        history = train_pose(model, body, corpus, train_cfg)
        save_checkpoint(assets / "pose.spnet", model,
                        {"seed": train_cfg.seed, "steps": train_cfg.steps})
        _write_loss_curve(assets / "pose_loss.csv", history)
        click.echo(
            f"pose generator: {len(history)} steps in {time.time() - start:.1f}s, "
            f"final loss {history[-1]['total']:.4f}"
        )

    if which in ("contact", "both"):
        corpus_path = assets / "contact_corpus.spcorpus"
        if not corpus_path.exists():
            _fail(EXIT_VALIDATION, f"missing corpus {corpus_path}")
        corpus = load_contact_corpus(corpus_path)
        model = ContactCvae(body.spiral_indices, seed=config.seed + 13,
                            dtype=np.float32)
        train_cfg = TrainConfig(
            learning_rate=config.training.learning_rate,
            steps=config.training.contact_steps,
            batch_size=min(config.training.batch_size, 16),
            seed=config.seed + 13,
            weights=config.loss,
        )
        start = time.time()
        history = train_contact(model, corpus, train_cfg)
        save_checkpoint(assets / "contact.spnet", model,
                        {"seed": train_cfg.seed, "steps": train_cfg.steps})
        _write_loss_curve(assets / "contact_loss.csv", history)
        click.echo(
            f"contact generator: {len(history)} steps in {time.time() - start:.1f}s, "
            f"final loss {history[-1]['total']:.4f}"
        )


def _write_loss_curve(path: Path, history: list[dict]) -> None:
    keys = sorted(set().union(*(h.keys() for h in history)) - {"step"})
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step," + ",".join(keys) + "\n")
        for h in history:
            fh.write(str(h["step"]) + ","
                     + ",".join(f"{h.get(k, ''):.9g}" for k in keys) + "\n")


@main.command("place")
@_config_option
@_seed_option
@click.option("--assets-dir", type=click.Path(), default=None)
@click.option("--output-dir", type=click.Path(), default=None)
@click.option("--action", required=True)
@click.option("--object", "category", required=True)
@click.option("--no-pft", is_flag=True, help="Disable the feasibility tests.")
@click.option("--no-opt", is_flag=True, help="Disable pose optimization.")
@click.option("--optimize-root/--no-optimize-root", default=True,
              help="Include translation and yaw in the optimization.")
@click.option("--jobs", type=int, default=None,
              help="Worker threads (default: available cores; 1 = sequential).")
def cmd_place(config_path, seed, assets_dir, output_dir, action, category,
              no_pft, no_opt, optimize_root, jobs):
    """Place the body for an action-object instruction; write meshes + report."""
    if action not in ACTIONS:
        _fail(2, f"unknown action '{action}'; valid actions: {', '.join(ACTIONS)}")
    config = load_config(config_path, {
        "seed": seed, "assets_dir": assets_dir, "output_dir": output_dir,
    })
    assets = Path(config.assets_dir)
    body_path = assets / "body.spbody"
    if not body_path.exists():
        _fail(EXIT_VALIDATION, f"missing body asset {body_path}")
    body = load_body_asset(body_path)
    scene = _resolve_scene(config, assets)
    known = sorted({obj.category for obj in scene.objects})
    if category not in known:
        _fail(2, f"unknown object category '{category}'; scene has: "
                 f"{', '.join(known)}")
    pose_model, contact_model = _load_models(assets)

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    result = run_pipeline(
        scene, action, category, body, pose_model, contact_model,
        cfg=config.feasibility, weights=config.energy, seed=config.seed,
        enable_pft=not no_pft, enable_opt=not no_opt,
        optimize_root=optimize_root,
        object_point_count=config.pipeline.object_point_count,
        jobs=jobs if jobs is not None else (config.pipeline.jobs or os.cpu_count() or 1),
    )
    elapsed = time.time() - started

    for rank, placement in enumerate(result.placements):
        posed = pose_body(body, placement["pose"])
        save_mesh(posed.mesh, out / f"placement_{rank:03d}.obj")
        if placement["trace"]:
            save_trace_csv(placement["trace"], out / f"trace_{rank:03d}.csv")

    report = result.report_dict()
    report["ablation"] = {"pft": not no_pft, "opt": not no_opt}
    report["config"] = config.to_dict()
    report["meta"] = {
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "elapsed_seconds": round(elapsed, 3),
        "version": __version__,
    }
    _write_json(out / "report.json", report)
    click.echo(
        f"{result.feasible_count} placement(s); tallies {result.tallies}; "
        f"report {out / 'report.json'}"
    )
    if result.feasible_count == 0:
        _fail(EXIT_NO_PLACEMENT,
              f"no feasible placement for ({action}, {category})")


@main.command("evaluate")
@_config_option
@_seed_option
@click.option("--assets-dir", type=click.Path(), default=None)
@click.option("--placements-dir", type=click.Path(exists=True), required=True)
@click.option("--clusters", type=int, default=50, show_default=True)
def cmd_evaluate(config_path, seed, assets_dir, placements_dir, clusters):
    """Compute plausibility and diversity metrics over placement reports."""
    config = load_config(config_path, {"seed": seed, "assets_dir": assets_dir})
    assets = Path(config.assets_dir)
    body = load_body_asset(assets / "body.spbody")
    scene = _resolve_scene(config, assets)

    reports = sorted(Path(placements_dir).glob("**/report.json"))
    if not reports:
        _fail(EXIT_VALIDATION, f"no report.json under {placements_dir}")
    placements = []
    for path in reports:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        placements.extend(payload.get("placements", []))
    if not placements:
        _fail(EXIT_VALIDATION, "reports contain no placements")

    evaluation = EvaluationReport(cluster_count=clusters, seed=config.seed)
    rows = []
    for p in placements:
        pose = PoseVector(np.array(p["theta"]), p["yaw"],
                          np.array(p["translation"]))
        posed = pose_body(body, pose)
        evaluation.add_placement(scene, body, posed)
        rows.append({
            "nc": evaluation.nc[-1],
            "vnc": evaluation.vnc[-1],
            "contact": evaluation.contact[-1],
        })
    thetas = np.array([p["theta"] for p in placements])
    if len(thetas) >= clusters:
        evaluation.add_diversity(thetas)
    else:
        click.echo(
            f"warning: {len(thetas)} placements < {clusters} clusters; "
            "diversity metrics skipped", err=True,
        )

    out = Path(placements_dir)
    payload = {"summary": evaluation.summary(), "per_placement": rows}
    payload["meta"] = {
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "version": __version__,
    }
    _write_json(out / "evaluation.json", payload)
    with open(out / "evaluation.csv", "w", encoding="utf-8") as fh:
        fh.write("index,nc,vnc,contact\n")
        for i, row in enumerate(rows):
            fh.write(f"{i},{row['nc']:.6f},{row['vnc']:.6f},{row['contact']}\n")
    summary = evaluation.summary()
    click.echo(
        f"evaluated {summary['count']} placements: "
        f"NC {summary['nc_mean']:.3f} VNC {summary['vnc_mean']:.3f} "
        f"Contact {summary['contact_rate']:.2f}"
        + (f" entropy {summary['entropy']:.3f}" if summary["entropy"] else "")
    )


@main.command("pipeline")
@_config_option
@_seed_option
@click.option("--assets-dir", type=click.Path(), default=None)
@click.option("--output-dir", type=click.Path(), default=None)
@click.option("--action", required=True)
@click.option("--object", "category", required=True)
@click.pass_context
def cmd_pipeline(ctx, config_path, seed, assets_dir, output_dir, action, category):
    """Build assets and train if missing, then place and evaluate."""
    config = load_config(config_path, {
        "seed": seed, "assets_dir": assets_dir, "output_dir": output_dir,
    })
    assets = Path(config.assets_dir)
    if not (assets / "body.spbody").exists():
        ctx.invoke(cmd_build_assets, config_path=config_path, seed=seed,
                   assets_dir=assets_dir, scene_mesh=None, scene_labels=None)
    if not (assets / "pose.spnet").exists() or not (assets / "contact.spnet").exists():
        ctx.invoke(cmd_train, config_path=config_path, seed=seed,
                   assets_dir=assets_dir, which="both")
    ctx.invoke(cmd_place, config_path=config_path, seed=seed,
               assets_dir=assets_dir, output_dir=output_dir, action=action,
               category=category, no_pft=False, no_opt=False,
               optimize_root=True, jobs=None)
    ctx.invoke(cmd_evaluate, config_path=config_path, seed=seed,
               assets_dir=assets_dir, placements_dir=config.output_dir,
               clusters=50)


if __name__ == "__main__":
    main()
