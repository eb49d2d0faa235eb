"""Paired dataset generation (D_p: parallel imaging, D_m: motion/T2 mapping).

Every sample is a pure function of (resolved config, master seed, index), so
datasets are byte-identical across runs and worker counts. Workers write their
own files atomically; only the parent process writes the manifest.
"""

from __future__ import annotations

import hashlib
import json
import multiprocessing
import os
import re
from concurrent.futures import ProcessPoolExecutor, as_completed
from functools import lru_cache
from pathlib import Path

import numpy as np

from .container import atomic_write_bytes, read_msd, write_msd
from .fields import MotionSpec, NoiseSpec, NonIdealSet, gen_b1
from .forward import SamplePair, forward_motion_pair, forward_parallel_pair
from .mriops import SamplingMask, analytic_coils
from .phantom import augment, builtin_template_pool
from .presets import Preset, get_preset
from .randomize import (
    RandomizationBounds,
    RandomizationDraw,
    bounds_from_config,
    sample_config,
    scale_t2_distribution,
)
from .sequence import build_se_moled

KINDS = ("Dp", "Dm")
MANIFEST = "manifest.json"
MANIFEST_FORMAT = "forge-dataset/1"
_SAMPLE_FILE = re.compile(r"^(\d{6})_[a-z0-9_]+\.msd$")

MOTION_PARAMS = ("v_ro", "v_pe", "omega")


class SampleError(RuntimeError):
    """A sample failed; carries the sample index."""

    def __init__(self, index: int, cause: BaseException):
        super().__init__(f"sample {index}: {type(cause).__name__}: {cause}")
        self.index = index


def resolve_config(kind: str, config: dict | None = None) -> dict:
    """Merge a parsed key/value config onto its preset into a plain dict."""
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    config = dict(config or {})
    preset = get_preset(config.pop("preset", "desk")).updated(**config)
    bounds = bounds_from_config(config)
    if kind == "Dp":
        bounds = bounds.disable(*MOTION_PARAMS)
    return {"kind": kind, "preset": preset.to_dict(), "bounds": bounds.to_dict()}


def _bounds(resolved: dict) -> RandomizationBounds:
    b = dict(resolved["bounds"])
    enabled = frozenset(b.pop("enabled"))
    kw = {k: (float(v[0]), float(v[1])) if isinstance(v, list) else v for k, v in b.items()}
    return RandomizationBounds(**kw, enabled=enabled)


@lru_cache(maxsize=4)
def _resources(resolved_json: str):
    resolved = json.loads(resolved_json)
    p = Preset(**resolved["preset"])
    templates = builtin_template_pool(p.template_pool, p.source_size, p.spin_size, seed=p.pool_seed)
    coils = [analytic_coils(p.num_coils, p.matrix, p.matrix, seed=p.pool_seed * 1000 + k) for k in range(p.coil_pool)]
    program = build_se_moled(matrix=p.matrix, fov_cm=p.fov_cm, esp_ms=p.esp_ms)
    return p, _bounds(resolved), templates, coils, program


def _key(resolved: dict) -> str:
    return json.dumps(resolved, sort_keys=True)


def draw_for(resolved: dict, master_seed: int, index: int) -> RandomizationDraw:
    p, bounds, templates, coils, _ = _resources(_key(resolved))
    return sample_config(bounds, master_seed, index, len(templates), len(coils))


def regenerate_pair(resolved: dict, draw: RandomizationDraw) -> SamplePair:
    """Re-simulate a sample from its stored draw."""
    p, _, templates, coils, program = _resources(_key(resolved))
    tset = augment(templates[draw.template_id], draw.rot, draw.flip)
    tset = scale_t2_distribution(tset, draw)
    spec = draw.b1_field_spec()
    b1 = None if spec is None else gen_b1(spec, p.spin_size, p.spin_size)
    noise = NoiseSpec(draw.snr_db, draw.noise_seed)
    if resolved["kind"] == "Dp":
        mask = SamplingMask.uniform(p.matrix, p.R, p.mask_offset)
        nonideals = NonIdealSet(b1=b1, grad_max_frac=draw.grad_fluct, grad_seed=draw.grad_seed, noise=noise)
        pair = forward_parallel_pair(tset, coils[draw.coil_set_id], mask, nonideals, program)
    else:
        motion = MotionSpec(draw.v_ro, draw.v_pe, draw.omega)
        pair = forward_motion_pair(
            tset, motion, b1, program,
            grad_max_frac=draw.grad_fluct, grad_seed=draw.grad_seed, noise=noise, label_size=p.label_size,
        )
    pair.draw = draw
    pair.ids = {"template_id": draw.template_id, "coil_set_id": draw.coil_set_id, "noise_seed": draw.noise_seed}
    return pair


def sample_files(pair: SamplePair, index: int) -> dict[str, tuple[np.ndarray, str]]:
    stem = f"{index:06d}"
    out = {f"{stem}_input.msd": (pair.input.astype(np.complex64), "complex64")}
    for name, arr in pair.labels.items():
        dtype = "complex64" if np.iscomplexobj(arr) else "float32"
        out[f"{stem}_{name.lower()}.msd"] = (arr, dtype)
    return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def generate_sample(resolved: dict, master_seed: int, index: int, out_dir: str) -> dict:
    """Simulate and write one sample; returns its manifest entry."""
    try:
        draw = draw_for(resolved, master_seed, index)
        pair = regenerate_pair(resolved, draw)
        files = {}
        for fname, (arr, dtype) in sample_files(pair, index).items():
            role = fname[7:-4]
            meta = {"kind": resolved["kind"], "index": index, "role": role}
            if role == "input":
                meta["draw"] = draw.to_dict()
            raw = write_msd(Path(out_dir) / fname, arr, dtype=dtype, domain="image", meta=meta)
            files[fname] = hashlib.sha256(raw).hexdigest()
        return {"index": index, "draw": draw.to_dict(), "files": files}
    except Exception as exc:
        raise SampleError(index, exc) from exc


def _worker_init():
    import numba

    numba.set_num_threads(1)


def _write_manifest(out_dir: Path, manifest: dict) -> None:
    raw = json.dumps(manifest, sort_keys=True, indent=1).encode() + b"\n"
    atomic_write_bytes(out_dir / MANIFEST, raw)


def _valid_entry(out_dir: Path, entry: dict) -> bool:
    return all((out_dir / f).is_file() and _sha256(out_dir / f) == h for f, h in entry["files"].items())


def gen_dataset(
    kind: str,
    config: dict | None,
    count: int,
    master_seed: int,
    out_dir,
    workers: int = 1,
    progress=None,
) -> dict:
    """Generate (or resume) ``count`` samples into ``out_dir``; returns the manifest.

    Samples already listed in an existing manifest with matching hashes are
    kept. Stray sample files and temporaries not listed are removed, so the
    directory and manifest always agree after a successful run.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    resolved = resolve_config(kind, config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": MANIFEST_FORMAT,
        "kind": kind,
        "master_seed": int(master_seed),
        "count": int(count),
        "config": resolved,
        "samples": [],
    }

    done: dict[int, dict] = {}
    path = out / MANIFEST
    if path.exists():
        old = json.loads(path.read_text())
        if old.get("config") != resolved or old.get("master_seed") != int(master_seed):
            raise ValueError(f"{path} was written with a different config or seed")
        done = {e["index"]: e for e in old["samples"] if e["index"] < count and _valid_entry(out, e)}

    def commit():
        manifest["samples"] = [done[i] for i in sorted(done)]
        _write_manifest(out, manifest)

    todo = [i for i in range(count) if i not in done]
    if workers <= 1 or len(todo) <= 1:
        for i in todo:
            done[i] = generate_sample(resolved, master_seed, i, str(out))
            commit()
            if progress:
                progress(i)
    else:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx, initializer=_worker_init) as pool:
            futs = [pool.submit(generate_sample, resolved, master_seed, i, str(out)) for i in todo]
            for fut in as_completed(futs):
                entry = fut.result()
                done[entry["index"]] = entry
                commit()
                if progress:
                    progress(entry["index"])

    commit()
    listed = {f for e in done.values() for f in e["files"]}
    for f in os.listdir(out):
        stale = (_SAMPLE_FILE.match(f) and f not in listed) or f.endswith(".tmp")
        if stale:
            (out / f).unlink()
    return manifest


def load_manifest(out_dir) -> dict:
    return json.loads((Path(out_dir) / MANIFEST).read_text())


def verify_dataset(out_dir, resimulate: bool = False) -> list[str]:
    """Problems found (empty list when consistent). With ``resimulate`` each
    input is regenerated from its stored draw and compared byte for byte."""
    out = Path(out_dir)
    manifest = load_manifest(out)
    problems = []
    listed = set()
    for e in manifest["samples"]:
        for f, h in e["files"].items():
            listed.add(f)
            if not (out / f).is_file():
                problems.append(f"missing {f}")
            elif _sha256(out / f) != h:
                problems.append(f"hash mismatch {f}")
        if resimulate:
            draw = RandomizationDraw.from_dict(e["draw"])
            pair = regenerate_pair(manifest["config"], draw)
            for fname, (arr, dtype) in sample_files(pair, e["index"]).items():
                if not fname.endswith("_input.msd"):
                    continue
                stored, _ = read_msd(out / fname)
                if stored.tobytes() != np.ascontiguousarray(arr, dtype="<c8").tobytes():
                    problems.append(f"re-simulation differs for {fname}")
    on_disk = {f for f in os.listdir(out) if _SAMPLE_FILE.match(f)}
    problems += [f"unlisted {f}" for f in sorted(on_disk - listed)]
    return problems


def dataset_digest(out_dir) -> str:
    """SHA-256 over the manifest and every listed file, in sorted order."""
    out = Path(out_dir)
    h = hashlib.sha256((out / MANIFEST).read_bytes())
    for f in sorted(os.listdir(out)):
        if _SAMPLE_FILE.match(f):
            h.update(f.encode())
            h.update((out / f).read_bytes())
    return h.hexdigest()


__all__ = [
    "KINDS",
    "SampleError",
    "dataset_digest",
    "draw_for",
    "gen_dataset",
    "generate_sample",
    "load_manifest",
    "regenerate_pair",
    "resolve_config",
    "verify_dataset",
]
