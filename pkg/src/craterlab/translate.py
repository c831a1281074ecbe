"""Unpaired sim-to-real tile translation (CycleGAN-style).

Two generators (G: sim -> real, F: real -> sim) trained against per-domain
patch discriminators with a least-squares adversarial objective and a
cycle-consistency L1 term; identity regularization is off by default.
Tiles live in [0, 1] externally and [-1, 1] inside the networks.
"""

import csv
import logging
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TranslatorConfig:
    residual_blocks: int = 9
    gen_base_channels: int = 64
    disc_conv_layers: int = 3
    cycle_weight: float = 10.0
    identity_weight: float = 0.0
    adversarial_mode: str = "least-squares"
    learning_rate: float = 2e-4
    batch_size: int = 1
    iterations: int = 10000
    seed: int = 0
    buffer_size: int = 50
    checkpoint_every: int = 500
    flip_augment: bool = True

    def __post_init__(self):
        if self.residual_blocks < 1:
            raise ValueError("residual_blocks must be >= 1")
        if self.cycle_weight < 0 or self.identity_weight < 0:
            raise ValueError("loss weights must be non-negative")
        if self.adversarial_mode != "least-squares":
            raise ValueError(f"unsupported adversarial mode {self.adversarial_mode!r}")
        if self.batch_size < 1 or self.iterations < 0:
            raise ValueError("batch_size must be >= 1 and iterations >= 0")


def check_tile_side(side):
    """Generators downsample twice; sides must be divisible by 4."""
    if side % 4 != 0:
        raise ValueError(f"tile side {side} not divisible by 4")


class ResidualBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.block = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, 3),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, 3),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x):
        return x + self.block(x)


class Generator(nn.Module):
    """7x7 stem, two stride-2 downs, residual trunk, two stride-2 ups, tanh."""

    def __init__(self, base_channels=64, residual_blocks=9):
        super().__init__()
        c = base_channels
        layers = [
            nn.ReflectionPad2d(3),
            nn.Conv2d(1, c, 7),
            nn.InstanceNorm2d(c),
            nn.ReLU(inplace=True),
            nn.Conv2d(c, 2 * c, 3, stride=2, padding=1),
            nn.InstanceNorm2d(2 * c),
            nn.ReLU(inplace=True),
            nn.Conv2d(2 * c, 4 * c, 3, stride=2, padding=1),
            nn.InstanceNorm2d(4 * c),
            nn.ReLU(inplace=True),
        ]
        layers += [ResidualBlock(4 * c) for _ in range(residual_blocks)]
        layers += [
            nn.ConvTranspose2d(4 * c, 2 * c, 3, stride=2, padding=1, output_padding=1),
            nn.InstanceNorm2d(2 * c),
            nn.ReLU(inplace=True),
            nn.ConvTranspose2d(2 * c, c, 3, stride=2, padding=1, output_padding=1),
            nn.InstanceNorm2d(c),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(3),
            nn.Conv2d(c, 1, 7),
            nn.Tanh(),
        ]
        self.model = nn.Sequential(*layers)

    def forward(self, x):
        check_tile_side(x.shape[-1])
        check_tile_side(x.shape[-2])
        return self.model(x)


class PatchDiscriminator(nn.Module):
    """Stride-2 conv stack emitting a grid of per-patch real/fake scores."""

    def __init__(self, base_channels=64, conv_layers=3):
        super().__init__()
        feats = []
        c_in = 1
        c_out = base_channels
        for i in range(conv_layers):
            feats.append(nn.Conv2d(c_in, c_out, 4, stride=2, padding=1))
            if i < 2:
                feats.append(nn.ReLU(inplace=True))
            c_in = c_out
            c_out = 2 * c_out
        self.features = nn.Sequential(*feats)
        self.head = nn.Conv2d(c_in, 1, 4, stride=1, padding=1)

    def forward(self, x):
        return self.head(self.features(x))


def build_generator(cfg):
    return Generator(base_channels=cfg.gen_base_channels,
                     residual_blocks=cfg.residual_blocks)


def build_discriminator(cfg):
    return PatchDiscriminator(base_channels=cfg.gen_base_channels,
                              conv_layers=cfg.disc_conv_layers)


def cycle_loss(x, x_rec):
    """Mean absolute difference over all elements."""
    if x.shape != x_rec.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_rec.shape)}")
    return torch.mean(torch.abs(x - x_rec))


class ImageBuffer:
    """History pool of generated images for discriminator updates."""

    def __init__(self, capacity, rng):
        self.capacity = capacity
        self.rng = rng
        self.images = []

    def query(self, batch):
        if self.capacity == 0:
            return batch
        out = []
        for img in batch:
            img = img.detach().unsqueeze(0)
            if len(self.images) < self.capacity:
                self.images.append(img)
                out.append(img)
            elif self.rng.random() < 0.5:
                idx = int(self.rng.integers(len(self.images)))
                out.append(self.images[idx])
                self.images[idx] = img
            else:
                out.append(img)
        return torch.cat(out, dim=0)


class TranslatorState:
    """Generators, discriminators, optimizers, and the training trace."""

    def __init__(self, cfg, g_sim2real, g_real2sim, d_real, d_sim,
                 opt_g, opt_d, iteration=0, history=None):
        self.cfg = cfg
        self.g_sim2real = g_sim2real
        self.g_real2sim = g_real2sim
        self.d_real = d_real
        self.d_sim = d_sim
        self.opt_g = opt_g
        self.opt_d = opt_d
        self.iteration = iteration
        self.history = history if history is not None else []

    def modules(self):
        return {
            "g_sim2real": self.g_sim2real,
            "g_real2sim": self.g_real2sim,
            "d_real": self.d_real,
            "d_sim": self.d_sim,
        }


def build_translator_state(cfg, device="cpu"):
    """Seeded construction of all networks and optimizers."""
    torch.manual_seed(cfg.seed)
    g_s2r = build_generator(cfg).to(device)
    g_r2s = build_generator(cfg).to(device)
    d_r = build_discriminator(cfg).to(device)
    d_s = build_discriminator(cfg).to(device)
    opt_g = torch.optim.Adam(
        list(g_s2r.parameters()) + list(g_r2s.parameters()),
        lr=cfg.learning_rate, betas=(0.5, 0.999))
    opt_d = torch.optim.Adam(
        list(d_r.parameters()) + list(d_s.parameters()),
        lr=cfg.learning_rate, betas=(0.5, 0.999))
    return TranslatorState(cfg, g_s2r, g_r2s, d_r, d_s, opt_g, opt_d)


def _to_stack(tiles):
    """Normalize a dataset (arrays, Tiles, or an (n, H, W) stack) to float32 [0, 1]."""
    arrays = []
    for t in tiles:
        arr = np.asarray(getattr(t, "pixels", t), dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError(f"expected 2-D tiles, got shape {arr.shape}")
        arrays.append(arr)
    if not arrays:
        raise ValueError("empty tile dataset")
    stack = np.stack(arrays)
    check_tile_side(stack.shape[-1])
    check_tile_side(stack.shape[-2])
    return stack


class _BatchSampler:
    """Shuffled-cycle index sampler with optional flip augmentation."""

    def __init__(self, n, batch_size, rng, flips):
        self.n = n
        self.batch_size = batch_size
        self.rng = rng
        self.flips = flips
        self.order = []

    def next_indices(self):
        idx = []
        while len(idx) < self.batch_size:
            if not self.order:
                self.order = list(self.rng.permutation(self.n))
            idx.append(self.order.pop())
        return idx

    def next_batch(self, stack, device):
        batch = stack[self.next_indices()].copy()
        if self.flips:
            for i in range(batch.shape[0]):
                if self.rng.random() < 0.5:
                    batch[i] = batch[i, :, ::-1].copy()
                if self.rng.random() < 0.5:
                    batch[i] = batch[i, ::-1, :].copy()
        t = torch.from_numpy(np.ascontiguousarray(batch)).unsqueeze(1).to(device)
        return t * 2.0 - 1.0


def train_translator(sim_tiles, real_tiles, cfg, device="cpu", checkpoint_dir=None):
    """Alternate generator and discriminator updates over unpaired tiles.

    Generator objective: least-squares adversarial terms for both mapping
    directions plus cycle_weight * (both cycle L1 terms) plus optional
    identity terms. Discriminators train on a replay buffer of generated
    images. Sampling, flips, and init are all reproducible from cfg.seed.
    """
    sim = _to_stack(sim_tiles)
    real = _to_stack(real_tiles)
    state = build_translator_state(cfg, device=device)
    rng = np.random.default_rng(cfg.seed)
    sim_sampler = _BatchSampler(len(sim), cfg.batch_size, rng, cfg.flip_augment)
    real_sampler = _BatchSampler(len(real), cfg.batch_size, rng, cfg.flip_augment)
    buf_real = ImageBuffer(cfg.buffer_size, rng)
    buf_sim = ImageBuffer(cfg.buffer_size, rng)
    mse = nn.MSELoss()

    for step in range(1, cfg.iterations + 1):
        s = sim_sampler.next_batch(sim, device)
        r = real_sampler.next_batch(real, device)

        # generator update
        state.opt_g.zero_grad()
        fake_r = state.g_sim2real(s)
        rec_s = state.g_real2sim(fake_r)
        fake_s = state.g_real2sim(r)
        rec_r = state.g_sim2real(fake_s)
        pred_fake_r = state.d_real(fake_r)
        pred_fake_s = state.d_sim(fake_s)
        loss_g_adv = mse(pred_fake_r, torch.ones_like(pred_fake_r))
        loss_f_adv = mse(pred_fake_s, torch.ones_like(pred_fake_s))
        cyc = cycle_loss(s, rec_s) + cycle_loss(r, rec_r)
        loss_gen = loss_g_adv + loss_f_adv + cfg.cycle_weight * cyc
        if cfg.identity_weight > 0:
            loss_gen = loss_gen + cfg.identity_weight * (
                cycle_loss(state.g_sim2real(r), r) + cycle_loss(state.g_real2sim(s), s))
        loss_gen.backward()
        state.opt_g.step()

        # discriminator update on buffered fakes
        state.opt_d.zero_grad()
        fr = buf_real.query(fake_r)
        fs = buf_sim.query(fake_s)
        pred_real_r = state.d_real(r)
        pred_fake_r = state.d_real(fr)
        loss_d_r = 0.5 * (mse(pred_real_r, torch.ones_like(pred_real_r))
                          + mse(pred_fake_r, torch.zeros_like(pred_fake_r)))
        pred_real_s = state.d_sim(s)
        pred_fake_s = state.d_sim(fs)
        loss_d_s = 0.5 * (mse(pred_real_s, torch.ones_like(pred_real_s))
                          + mse(pred_fake_s, torch.zeros_like(pred_fake_s)))
        (loss_d_r + loss_d_s).backward()
        state.opt_d.step()

        row = {
            "iteration": step,
            "loss_G": float(loss_g_adv),
            "loss_F": float(loss_f_adv),
            "loss_D_R": float(loss_d_r),
            "loss_D_S": float(loss_d_s),
            "loss_cyc": float(cyc),
        }
        if not all(np.isfinite(v) for v in row.values()):
            raise RuntimeError(f"non-finite translator loss at iteration {step}: {row}")
        state.history.append(row)
        state.iteration = step
        if checkpoint_dir is not None and step % cfg.checkpoint_every == 0:
            save_checkpoint(state, f"{checkpoint_dir}/translator_{step:06d}.pt")
        if step % 50 == 0 or step == cfg.iterations:
            log.info("translator iter %d: cyc %.4f G %.4f F %.4f",
                     step, row["loss_cyc"], row["loss_G"], row["loss_F"])
    return state


def translate_array(state, pixels):
    """Apply the sim -> real generator to one [0, 1] grayscale array."""
    arr = np.asarray(pixels, dtype=np.float32)
    check_tile_side(arr.shape[-1])
    check_tile_side(arr.shape[-2])
    device = next(state.g_sim2real.parameters()).device
    state.g_sim2real.eval()
    with torch.no_grad():
        t = torch.from_numpy(arr).reshape(1, 1, *arr.shape).to(device) * 2.0 - 1.0
        out = state.g_sim2real(t)
    state.g_sim2real.train()
    res = (out.cpu().numpy()[0, 0].astype(np.float64) + 1.0) / 2.0
    return np.clip(res, 0.0, 1.0)


def translate(state, tile):
    """Translate one Tile, preserving geometry and identity metadata."""
    from craterlab.tiling import Tile

    out = translate_array(state, tile.pixels)
    return Tile(
        pixels=out,
        origin_x=tile.origin_x,
        origin_y=tile.origin_y,
        parent_id=tile.parent_id,
        tile_id=tile.tile_id,
        provenance="translated",
    )


def save_checkpoint(state, path):
    """Single-file checkpoint with config and iteration embedded."""
    torch.save({
        "kind": "translator",
        "config": asdict(state.cfg),
        "iteration": state.iteration,
        "history": state.history,
        "models": {k: m.state_dict() for k, m in state.modules().items()},
        "optimizers": {"g": state.opt_g.state_dict(), "d": state.opt_d.state_dict()},
    }, path)


def load_checkpoint(path, device="cpu"):
    blob = torch.load(path, map_location=device, weights_only=False)
    if blob.get("kind") != "translator":
        raise ValueError(f"{path} is not a translator checkpoint")
    cfg = TranslatorConfig(**blob["config"])
    state = build_translator_state(cfg, device=device)
    for k, m in state.modules().items():
        m.load_state_dict(blob["models"][k])
    state.opt_g.load_state_dict(blob["optimizers"]["g"])
    state.opt_d.load_state_dict(blob["optimizers"]["d"])
    state.iteration = blob["iteration"]
    state.history = blob["history"]
    return state


def write_loss_history(path, history):
    """Loss trace as CSV (iteration, loss_G, loss_F, loss_D_R, loss_D_S, loss_cyc)."""
    cols = ["iteration", "loss_G", "loss_F", "loss_D_R", "loss_D_S", "loss_cyc"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in history:
            writer.writerow([row[c] if c == "iteration" else repr(row[c]) for c in cols])
