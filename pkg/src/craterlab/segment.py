"""U-Net binary crater segmentation.

Contracting path of single instance-normalised 3x3 convolutions with
max-pool downsampling, a bottleneck conv, and a symmetric expanding path
with skip concatenation; a 1x1 sigmoid head emits per-pixel crater
probabilities. Trained with binary cross-entropy.
"""

import copy
import csv
import logging
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SegmenterConfig:
    down_blocks: int = 4
    up_blocks: int = 4
    base_channels: int = 64
    kernel: int = 3
    stride: int = 1
    padding: int = 1
    normalisation: str = "instance"
    epochs: int = 30
    batch_size: int = 15
    learning_rate: float = 1e-4
    loss: str = "bce"
    threshold: float = 0.5
    seed: int = 0
    flip_augment: bool = True

    def __post_init__(self):
        if self.down_blocks != self.up_blocks:
            raise ValueError("down_blocks must equal up_blocks (symmetric paths)")
        if self.down_blocks < 1:
            raise ValueError("need at least one block per path")
        if (self.kernel, self.stride, self.padding) != (3, 1, 1):
            raise ValueError("only 3x3 stride-1 pad-1 convolutions are supported")
        if self.normalisation != "instance":
            raise ValueError("only instance normalisation is supported")
        if self.loss != "bce":
            raise ValueError("only binary cross-entropy is supported")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


def _conv_block(c_in, c_out):
    return nn.Sequential(
        nn.Conv2d(c_in, c_out, 3, stride=1, padding=1),
        nn.InstanceNorm2d(c_out),
        nn.ReLU(inplace=True),
    )


class UNet(nn.Module):
    def __init__(self, base_channels=64, blocks=4):
        super().__init__()
        self.blocks = blocks
        self.down = nn.ModuleList()
        c_in = 1
        for i in range(blocks):
            c_out = base_channels * 2 ** i
            self.down.append(_conv_block(c_in, c_out))
            c_in = c_out
        self.pool = nn.MaxPool2d(2)
        self.bottleneck = _conv_block(c_in, 2 * c_in)
        self.up_samplers = nn.ModuleList()
        self.up_convs = nn.ModuleList()
        c = 2 * c_in
        for _ in range(blocks):
            self.up_samplers.append(nn.ConvTranspose2d(c, c // 2, 2, stride=2))
            self.up_convs.append(_conv_block(c, c // 2))
            c = c // 2
        self.head = nn.Conv2d(c, 1, 1)

    def check_input(self, x):
        div = 2 ** self.blocks
        if x.shape[-1] % div or x.shape[-2] % div:
            raise ValueError(
                f"input side {tuple(x.shape[-2:])} not divisible by 2^{self.blocks}")

    def forward(self, x):
        self.check_input(x)
        skips = []
        for block in self.down:
            x = block(x)
            skips.append(x)
            x = self.pool(x)
        x = self.bottleneck(x)
        for upsample, conv, skip in zip(self.up_samplers, self.up_convs, reversed(skips)):
            x = upsample(x)
            x = conv(torch.cat([skip, x], dim=1))
        return torch.sigmoid(self.head(x))


def build_unet(cfg):
    return UNet(base_channels=cfg.base_channels, blocks=cfg.down_blocks)


def architecture_table(cfg, side):
    """Expected (stage, channels, side) ledger for a square input."""
    rows = []
    s = side
    for i in range(cfg.down_blocks):
        c = cfg.base_channels * 2 ** i
        rows.append((f"down{i + 1}", c, s))
        s //= 2
    rows.append(("bottleneck", cfg.base_channels * 2 ** cfg.down_blocks, s))
    c = cfg.base_channels * 2 ** cfg.down_blocks
    for i in range(cfg.up_blocks):
        s *= 2
        c //= 2
        rows.append((f"up{i + 1}", c, s))
    rows.append(("head", 1, s))
    return rows


def trace_shapes(net, side, device="cpu"):
    """Run a probe input through the net, capturing each stage's output shape."""
    shapes = []
    hooks = []

    def record(name):
        def hook(_module, _inp, out):
            shapes.append((name, out.shape[1], out.shape[-1]))
        return hook

    for i, block in enumerate(net.down):
        hooks.append(block.register_forward_hook(record(f"down{i + 1}")))
    hooks.append(net.bottleneck.register_forward_hook(record("bottleneck")))
    for i, conv in enumerate(net.up_convs):
        hooks.append(conv.register_forward_hook(record(f"up{i + 1}")))
    hooks.append(net.head.register_forward_hook(record("head")))
    with torch.no_grad():
        net(torch.zeros(1, 1, side, side, device=device))
    for h in hooks:
        h.remove()
    return shapes


class SegmenterState:
    """Network, optimizer, epoch counter, and loss history."""

    def __init__(self, cfg, net, opt, epoch=0, history=None,
                 best_val_loss=None, best_epoch=0):
        self.cfg = cfg
        self.net = net
        self.opt = opt
        self.epoch = epoch
        self.history = history if history is not None else []
        self.best_val_loss = best_val_loss
        self.best_epoch = best_epoch


def build_segmenter_state(cfg, device="cpu"):
    torch.manual_seed(cfg.seed)
    net = build_unet(cfg).to(device)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)
    return SegmenterState(cfg, net, opt)


def _to_pairs(samples):
    tiles, masks = [], []
    for tile, mask in samples:
        t = np.asarray(getattr(tile, "pixels", tile), dtype=np.float32)
        m = np.asarray(getattr(mask, "pixels", mask), dtype=bool)
        if t.shape != m.shape:
            raise ValueError(f"tile/mask dims differ: {t.shape} vs {m.shape}")
        tiles.append(t)
        masks.append(m.astype(np.float32))
    if not tiles:
        raise ValueError("empty dataset")
    return np.stack(tiles), np.stack(masks)


def batch_loss(state, tiles, masks, device="cpu"):
    """Mean BCE of the current network on a fixed batch, without grad."""
    bce = nn.BCELoss()
    state.net.eval()
    with torch.no_grad():
        t = torch.from_numpy(np.asarray(tiles, dtype=np.float32)).unsqueeze(1).to(device)
        m = torch.from_numpy(np.asarray(masks, dtype=np.float32)).unsqueeze(1).to(device)
        loss = float(bce(state.net(t), m))
    state.net.train()
    return loss


def train_segmenter(train, val, cfg, device="cpu", checkpoint_path=None):
    """Minimize mean BCE over (tile, mask) pairs; retain the best-val epoch.

    Per-epoch train and validation losses are recorded; on completion the
    network carries the parameters of the epoch with the lowest validation
    loss. Deterministic given cfg.seed.
    """
    train_tiles, train_masks = _to_pairs(train)
    val_tiles, val_masks = _to_pairs(val)
    state = build_segmenter_state(cfg, device=device)
    if cfg.epochs == 0:
        return state
    rng = np.random.default_rng(cfg.seed)
    bce = nn.BCELoss()
    best_params = None
    n = len(train_tiles)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            bt = train_tiles[idx].copy()
            bm = train_masks[idx].copy()
            if cfg.flip_augment:
                for i in range(len(idx)):
                    if rng.random() < 0.5:
                        bt[i] = bt[i, :, ::-1].copy()
                        bm[i] = bm[i, :, ::-1].copy()
                    if rng.random() < 0.5:
                        bt[i] = bt[i, ::-1, :].copy()
                        bm[i] = bm[i, ::-1, :].copy()
            t = torch.from_numpy(bt).unsqueeze(1).to(device)
            m = torch.from_numpy(bm).unsqueeze(1).to(device)
            state.opt.zero_grad()
            loss = bce(state.net(t), m)
            loss.backward()
            state.opt.step()
            step_loss = float(loss)
            if not np.isfinite(step_loss):
                raise RuntimeError(f"non-finite segmenter loss at epoch {epoch}")
            epoch_losses.append(step_loss)
        train_loss = float(np.mean(epoch_losses))
        val_loss = batch_loss(state, val_tiles, val_masks, device=device)
        state.history.append({"epoch": epoch, "train_loss": train_loss,
                              "val_loss": val_loss})
        state.epoch = epoch
        if state.best_val_loss is None or val_loss < state.best_val_loss:
            state.best_val_loss = val_loss
            state.best_epoch = epoch
            best_params = copy.deepcopy(state.net.state_dict())
            if checkpoint_path is not None:
                save_checkpoint(state, checkpoint_path)
        if epoch % 5 == 0 or epoch == cfg.epochs:
            log.info("segmenter epoch %d: train %.4f val %.4f", epoch, train_loss, val_loss)
    if best_params is not None:
        state.net.load_state_dict(best_params)
    return state


def predict_mask(state, tile, threshold=None, device="cpu"):
    """Probability map plus thresholded BinaryMask for one tile."""
    from craterlab.masks import BinaryMask

    if threshold is None:
        threshold = state.cfg.threshold
    arr = np.asarray(getattr(tile, "pixels", tile), dtype=np.float32)
    state.net.check_input(torch.empty(1, 1, *arr.shape))
    state.net.eval()
    with torch.no_grad():
        t = torch.from_numpy(arr).reshape(1, 1, *arr.shape).to(device)
        prob = state.net(t).cpu().numpy()[0, 0].astype(np.float64)
    state.net.train()
    mask = BinaryMask(
        pixels=prob >= threshold,
        origin_x=getattr(tile, "origin_x", 0),
        origin_y=getattr(tile, "origin_y", 0),
        parent_id=getattr(tile, "parent_id", ""),
        tile_id=getattr(tile, "tile_id", ""),
    )
    return prob, mask


def save_checkpoint(state, path):
    torch.save({
        "kind": "segmenter",
        "config": asdict(state.cfg),
        "epoch": state.epoch,
        "history": state.history,
        "best_val_loss": state.best_val_loss,
        "best_epoch": state.best_epoch,
        "model": state.net.state_dict(),
        "optimizer": state.opt.state_dict(),
    }, path)


def load_checkpoint(path, device="cpu"):
    blob = torch.load(path, map_location=device, weights_only=False)
    if blob.get("kind") != "segmenter":
        raise ValueError(f"{path} is not a segmenter checkpoint")
    cfg = SegmenterConfig(**blob["config"])
    state = build_segmenter_state(cfg, device=device)
    state.net.load_state_dict(blob["model"])
    state.opt.load_state_dict(blob["optimizer"])
    state.epoch = blob["epoch"]
    state.history = blob["history"]
    state.best_val_loss = blob["best_val_loss"]
    state.best_epoch = blob["best_epoch"]
    return state


def write_loss_history(path, history):
    """Per-epoch losses as CSV (epoch, train_loss, val_loss)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for row in history:
            writer.writerow([row["epoch"], repr(row["train_loss"]), repr(row["val_loss"])])
