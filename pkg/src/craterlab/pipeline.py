"""Experiment orchestration: configs, manifests, and the two-stage protocol.

An experiment generates simulated scenes plus an independently generated,
fixed-corruption "pseudo-real" domain, trains the unpaired translator
between them, translates the simulated tiles, trains one segmenter on raw
simulated tiles and one on translated tiles, and evaluates both on the
held-out pseudo-real split. Every stage writes its artifacts and config
under {out}/{run-id}/{stage}/ and is reproducible from the global seed.
"""

import dataclasses
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from craterlab import evalmetrics, imgio, kernels, masks, segment, tiling, translate
from craterlab.simgen import SimSceneSpec, generate_scene
from craterlab.translate import TranslatorConfig
from craterlab.segment import SegmenterConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

# fixed pseudo-real corruption (desk-scale stand-in for a real image domain)
PSEUDO_REAL_BLUR_SIGMA = 1.5
PSEUDO_REAL_NOISE_SIGMA = 0.05
PSEUDO_REAL_GAMMA = 0.8
PSEUDO_REAL_MOTTLE_AMPLITUDE = 0.08
PSEUDO_REAL_MOTTLE_CELLS = 3.0


@dataclass(frozen=True)
class ExperimentConfig:
    """Top-level run configuration; sub-configs are individually validated."""

    scene: SimSceneSpec = SimSceneSpec()
    translator: TranslatorConfig = TranslatorConfig()
    segmenter: SegmenterConfig = SegmenterConfig()
    tile_px: int = 64
    stride_px: int = 32
    n_train_scenes: int = 8
    n_val_scenes: int = 2
    seed: int = 0
    device: str = "cpu"

    def __post_init__(self):
        if self.tile_px <= 0 or not 0 < self.stride_px <= self.tile_px:
            raise ValueError("need 0 < stride_px <= tile_px")
        if self.n_train_scenes < 1 or self.n_val_scenes < 1:
            raise ValueError("scene counts must be >= 1")
        if self.device not in ("cpu", "gpu"):
            raise ValueError("device must be 'cpu' or 'gpu'")


_SECTIONS = {
    "scene": SimSceneSpec,
    "translator": TranslatorConfig,
    "segmenter": SegmenterConfig,
}
_EXPERIMENT_KEYS = ("tile_px", "stride_px", "n_train_scenes", "n_val_scenes",
                    "seed", "device")


def _build_section(cls, values, section):
    fields = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - fields
    if unknown:
        raise ValueError(f"unknown keys in [{section}]: {sorted(unknown)}")
    if "age_range" in values:
        values = {**values, "age_range": tuple(values["age_range"])}
    return cls(**values)


def config_from_dict(doc):
    """Strict construction of an ExperimentConfig from nested dicts."""
    doc = dict(doc)
    exp = dict(doc.pop("experiment", {}))
    unknown = set(exp) - set(_EXPERIMENT_KEYS)
    if unknown:
        raise ValueError(f"unknown keys in [experiment]: {sorted(unknown)}")
    kwargs = dict(exp)
    for section, cls in _SECTIONS.items():
        values = doc.pop(section, {})
        if not isinstance(values, dict):
            raise ValueError(f"[{section}] must be a table")
        kwargs[section] = _build_section(cls, values, section)
    if doc:
        raise ValueError(f"unknown config sections: {sorted(doc)}")
    return ExperimentConfig(**kwargs)


def _coerce_toml_value(text):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(doc, overrides):
    """Apply repeatable --set section.key=value pairs onto the config dict."""
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        parts = key.strip().split(".")
        if len(parts) != 2:
            raise ValueError(f"--set key must be section.key, got {key!r}")
        section, name = parts
        doc.setdefault(section, {})[name] = _coerce_toml_value(raw.strip())
    return doc


def load_config(path=None, overrides=(), seed=None, device=None):
    """Load a TOML config file, apply --set/--seed/--device overrides."""
    doc = {}
    if path is not None:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    doc = apply_overrides(doc, overrides)
    if seed is not None:
        doc.setdefault("experiment", {})["seed"] = int(seed)
    if device is not None:
        doc.setdefault("experiment", {})["device"] = device
    return config_from_dict(doc)


def config_hash(cfg):
    """Stable short hash of the full configuration."""
    doc = json.dumps(dataclasses.asdict(cfg), sort_keys=True, default=str)
    return hashlib.sha256(doc.encode()).hexdigest()[:12]


def torch_device(device):
    if device == "gpu":
        import torch

        if not torch.cuda.is_available():
            raise ValueError("device 'gpu' requested but CUDA is unavailable")
        return "cuda"
    return "cpu"


def scene_seed(global_seed, domain, split, index):
    """Stable per-scene seed derivation."""
    codes = {"sim": 0, "real": 1}
    splits = {"train": 0, "val": 1}
    ss = np.random.SeedSequence((int(global_seed), codes[domain], splits[split], int(index)))
    return int(ss.generate_state(1)[0])


def pseudo_real(pixels, seed):
    """Fixed corruption pipeline that fakes a real-sensor domain.

    Gaussian blur, additive Gaussian noise, gamma remap, and mild
    low-frequency multiplicative albedo mottling, in that order.
    """
    rng = np.random.default_rng(seed)
    h, w = pixels.shape
    out = gaussian_filter(np.asarray(pixels, dtype=np.float64),
                          PSEUDO_REAL_BLUR_SIGMA, mode="nearest")
    out = out + rng.normal(0.0, PSEUDO_REAL_NOISE_SIGMA, out.shape)
    out = np.clip(out, 0.0, 1.0) ** PSEUDO_REAL_GAMMA
    cell = max(h, w) / PSEUDO_REAL_MOTTLE_CELLS
    nx = int((w - 1) / cell) + 2
    ny = int((h - 1) / cell) + 2
    lattice = rng.uniform(-1.0, 1.0, size=(ny + 1, nx + 1))
    mottle = 1.0 + PSEUDO_REAL_MOTTLE_AMPLITUDE * kernels.value_noise(w, h, cell, lattice)
    return np.clip(out * mottle, 0.0, 1.0)


@dataclass
class ManifestEntry:
    tile: str
    mask: str
    provenance: str
    tile_id: str
    parent_id: str


@dataclass
class DatasetManifest:
    """Paths and provenance of one dataset split."""

    split: str
    entries: list
    config_hash: str
    seed: int
    filter: dict

    def parent_ids(self):
        return {e.parent_id for e in self.entries}

    def to_json(self, path):
        ids = [e.tile_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate tile ids in manifest")
        doc = {
            "split": self.split,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "filter": self.filter,
            "entries": [dataclasses.asdict(e) for e in self.entries],
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            doc = json.load(fh)
        return cls(
            split=doc["split"],
            entries=[ManifestEntry(**e) for e in doc["entries"]],
            config_hash=doc["config_hash"],
            seed=doc["seed"],
            filter=doc["filter"],
        )


def load_manifest_pairs(manifest_path):
    """Load (tile, mask) arrays for every manifest entry, validating dims."""
    manifest = DatasetManifest.from_json(manifest_path)
    base = Path(manifest_path).parent
    pairs = []
    for e in manifest.entries:
        tile = imgio.load_grayscale(base / e.tile)
        mask = imgio.load_mask(base / e.mask)
        if tile.shape != mask.shape:
            raise ValueError(f"{e.tile_id}: tile/mask dims differ")
        pairs.append((tile, mask))
    return manifest, pairs


def check_split_disjoint(manifest_a, manifest_b):
    """No parent scene (and hence no tile) may appear in both splits."""
    shared_parents = manifest_a.parent_ids() & manifest_b.parent_ids()
    if shared_parents:
        raise ValueError(f"splits share parent scenes: {sorted(shared_parents)[:5]}")
    shared_ids = {e.tile_id for e in manifest_a.entries} & {
        e.tile_id for e in manifest_b.entries}
    if shared_ids:
        raise ValueError(f"splits share tile ids: {sorted(shared_ids)[:5]}")


def generate_scene_set(cfg, domain, split, count, out_dir):
    """Render scenes (corrupting them for the pseudo-real domain) with GT CSVs.

    Returns a list of (scene_id, image_path, placements).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = []
    for i in range(count):
        seed = scene_seed(cfg.seed, domain, split, i)
        spec = dataclasses.replace(cfg.scene, seed=seed)
        raster, placements = generate_scene(spec)
        pixels = raster.pixels
        if domain == "real":
            pixels = pseudo_real(pixels, seed=seed + 1)
        scene_id = f"{domain}_{split}_{i:03d}"
        img_path = out_dir / f"{scene_id}.png"
        imgio.save_grayscale(img_path, pixels)
        imgio.save_placements(out_dir / f"{scene_id}.csv", placements)
        results.append((scene_id, img_path, placements))
    return results


def tile_scene_set(cfg, scenes, provenance, out_dir):
    """Slice scenes into tiles, rasterize their masks, return manifest entries."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for scene_id, img_path, placements in scenes:
        pixels = imgio.load_grayscale(img_path)
        tiles = tiling.slice_raster(pixels, cfg.tile_px, cfg.stride_px,
                                    parent_id=scene_id, provenance=provenance)
        projected = [(p.cx_px, p.cy_px, p.r_px) for p in placements]
        for t in tiles:
            mask = masks.mask_for_tile(t, projected)
            tile_file = f"{t.tile_id}.png"
            mask_file = f"{t.tile_id}_mask.png"
            imgio.save_grayscale(out_dir / tile_file, t.pixels)
            imgio.save_mask(out_dir / mask_file, mask.pixels)
            entries.append(ManifestEntry(
                tile=tile_file,
                mask=mask_file,
                provenance=provenance,
                tile_id=t.tile_id,
                parent_id=t.parent_id,
            ))
    return entries


def write_split_manifest(cfg, split, entries, path):
    manifest = DatasetManifest(
        split=split,
        entries=entries,
        config_hash=config_hash(cfg),
        seed=cfg.seed,
        filter={"r_min_px": cfg.scene.r_min_px, "r_max_px": cfg.scene.r_max_px},
    )
    manifest.to_json(path)
    return manifest


def translate_dataset(state, manifest_path, out_dir, manifest_out):
    """Translate every tile of a dataset; masks keep pointing at the originals."""
    manifest = DatasetManifest.from_json(manifest_path)
    src_dir = Path(manifest_path).parent
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for e in manifest.entries:
        pixels = imgio.load_grayscale(src_dir / e.tile)
        translated = translate.translate_array(state, pixels)
        tile_file = f"{e.tile_id}.png"
        imgio.save_grayscale(out_dir / tile_file, translated)
        mask_rel = Path(e.mask)
        if not mask_rel.is_absolute():
            # reference the original mask file relative to the new manifest
            mask_rel = Path(os.path.relpath(src_dir / e.mask, out_dir))
        entries.append(ManifestEntry(
            tile=tile_file,
            mask=str(mask_rel),
            provenance="translated",
            tile_id=e.tile_id,
            parent_id=e.parent_id,
        ))
    out = DatasetManifest(
        split=manifest.split,
        entries=entries,
        config_hash=manifest.config_hash,
        seed=manifest.seed,
        filter=manifest.filter,
    )
    out.to_json(manifest_out)
    return out


def run_experiment(cfg, out_root):
    """The full two-stage protocol; returns a summary dict.

    Stage 1 trains the sim -> pseudo-real translator; stage 2 trains the
    two segmenters and evaluates them on the held-out pseudo-real split.
    """
    device = torch_device(cfg.device)
    run_id = f"{config_hash(cfg)}-seed{cfg.seed}"
    run_dir = Path(out_root) / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "config.json", "w") as fh:
        json.dump(dataclasses.asdict(cfg), fh, indent=2, sort_keys=True, default=list)
        fh.write("\n")

    log.info("run %s: generating scenes", run_id)
    scenes_dir = run_dir / "simgen"
    scene_sets = {}
    for domain in ("sim", "real"):
        for split, count in (("train", cfg.n_train_scenes), ("val", cfg.n_val_scenes)):
            scene_sets[(domain, split)] = generate_scene_set(
                cfg, domain, split, count, scenes_dir)

    log.info("run %s: tiling and rasterizing", run_id)
    tiles_dir = run_dir / "tiles"
    manifests = {}
    for (domain, split), scenes in scene_sets.items():
        entries = tile_scene_set(cfg, scenes, domain, tiles_dir)
        path = tiles_dir / f"manifest_{domain}_{split}.json"
        manifests[(domain, split)] = write_split_manifest(cfg, split, entries, path)
    for domain in ("sim", "real"):
        check_split_disjoint(manifests[(domain, "train")], manifests[(domain, "val")])

    log.info("run %s: training translator", run_id)
    translator_dir = run_dir / "translator"
    translator_dir.mkdir(exist_ok=True)
    _, sim_train_pairs = load_manifest_pairs(tiles_dir / "manifest_sim_train.json")
    _, real_train_pairs = load_manifest_pairs(tiles_dir / "manifest_real_train.json")
    t_state = translate.train_translator(
        [t for t, _ in sim_train_pairs],
        [t for t, _ in real_train_pairs],
        cfg.translator, device=device, checkpoint_dir=str(translator_dir))
    translate.save_checkpoint(t_state, translator_dir / "translator_final.pt")
    translate.write_loss_history(translator_dir / "loss_history.csv", t_state.history)

    log.info("run %s: translating sim tiles", run_id)
    translated_dir = run_dir / "translated"
    translated_manifests = {}
    for split in ("train", "val"):
        translated_manifests[split] = translate_dataset(
            t_state,
            tiles_dir / f"manifest_sim_{split}.json",
            translated_dir,
            translated_dir / f"manifest_translated_{split}.json")

    results = {}
    reports = {}
    for label, man_dir, man_prefix in (
            ("sim", tiles_dir, "manifest_sim"),
            ("translated", translated_dir, "manifest_translated")):
        log.info("run %s: training %s-trained segmenter", run_id, label)
        seg_dir = run_dir / f"segmenter_{label}"
        seg_dir.mkdir(exist_ok=True)
        _, train_pairs = load_manifest_pairs(man_dir / f"{man_prefix}_train.json")
        _, val_pairs = load_manifest_pairs(man_dir / f"{man_prefix}_val.json")
        s_state = segment.train_segmenter(
            train_pairs, val_pairs, cfg.segmenter, device=device,
            checkpoint_path=seg_dir / "segmenter_best.pt")
        segment.save_checkpoint(s_state, seg_dir / "segmenter_final.pt")
        segment.write_loss_history(seg_dir / "loss_history.csv", s_state.history)
        results[label] = s_state

    eval_dir = run_dir / "eval"
    eval_dir.mkdir(exist_ok=True)
    _, heldout_pairs = load_manifest_pairs(tiles_dir / "manifest_real_val.json")
    for label, s_state in results.items():
        log.info("run %s: evaluating %s-trained segmenter on held-out split", run_id, label)
        report = evalmetrics.evaluate(
            s_state, heldout_pairs,
            threshold=cfg.segmenter.threshold,
            provenance={"dataset": "real_val", "model": f"{label}-trained"})
        report.to_json(eval_dir / f"report_{label}.json")
        reports[label] = report

    comparison = evalmetrics.compare_reports(
        reports["sim"], reports["translated"],
        label_a="sim-trained", label_b="translated-trained")
    compare_dir = run_dir / "compare"
    compare_dir.mkdir(exist_ok=True)
    comparison.to_csv(compare_dir / "comparison.csv")
    with open(compare_dir / "comparison.txt", "w") as fh:
        fh.write(comparison.to_text() + "\n")
    log.info("run %s comparison:\n%s", run_id, comparison.to_text())

    return {
        "run_id": run_id,
        "run_dir": str(run_dir),
        "mean_sim": reports["sim"].mean,
        "mean_translated": reports["translated"].mean,
        "comparison": comparison,
    }
