"""DeepSegFace: one convolutional column per segment kind, 1x1 dimension
reduction, concatenation, a fully connected + softmax head, and prior-based
re-ranking of the face probability.

Missing segments feed an exactly-zero input into their column (applied after
mean subtraction). Because a batch's absent entries share that zero input,
each column is evaluated once on its present rows plus a single shared zero
row whose output (and summed gradient) stands in for all absent rows; the
result is bit-identical to evaluating every row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigShapeError, DegenerateTrainingSetError, ParseError
from .imaging import GrayImageF, extract_patch
from .neuralnet import FC, Conv2D, MaxPool2, ReLU, Softmax, backward, forward, sgd_step
from .priors import PriorTable, build_priors, priors_from_entries, priors_to_entries, rerank_multiplier
from .proposals import LabeledProposal, Proposal
from .segments import ALL_KINDS, SegmentKind, SegmentLayout, default_layout, kind_name
from .seeding import derive_seed
from . import store


@dataclass(frozen=True)
class ConvBlock:
    channels: int
    convs: int = 1
    pool: bool = True


@dataclass(frozen=True)
class NetworkConfig:
    """Layer-graph parameters; the full and toy presets are both instances."""

    scale: str
    channels: int
    inputs: dict[SegmentKind, tuple[int, int]]  # (h, w) per kind
    blocks: tuple[ConvBlock, ...]
    reduce_maps: int
    fc_units: int
    classes: int = 2
    mean_pixel: float = 117.0  # on the 0..255 sample scale
    dtype: str = "float64"  # compute/parameter precision; float32 for speed
    expected_flatten: dict[SegmentKind, int] | None = None

    def feature_grid(self, kind: SegmentKind) -> tuple[int, int]:
        """Spatial dims after the conv blocks (same-padding convs, pool-2 floors)."""
        h, w = self.inputs[kind]
        for blk in self.blocks:
            if blk.pool:
                h, w = h // 2, w // 2
            if h < 1 or w < 1:
                raise ConfigShapeError(
                    f"{kind_name(kind)}: input {self.inputs[kind]} collapses to zero "
                    f"spatial extent inside the column"
                )
        return h, w

    @property
    def feature_channels(self) -> int:
        return self.blocks[-1].channels

    def flatten_size(self, kind: SegmentKind) -> int:
        gh, gw = self.feature_grid(kind)
        return self.reduce_maps * gh * gw

    @property
    def concat_size(self) -> int:
        return sum(self.flatten_size(k) for k in ALL_KINDS)

    def validate(self) -> None:
        for kind in ALL_KINDS:
            got = self.flatten_size(kind)
            if self.expected_flatten is not None:
                want = self.expected_flatten[kind]
                if got != want:
                    raise ConfigShapeError(
                        f"{kind_name(kind)}: flatten size {got} != expected {want}"
                    )


# Flatten sizes of the validated full-scale configuration.
FULL_FLATTEN_SIZES: dict[SegmentKind, int] = {
    SegmentKind.NOSE: 200,
    SegmentKind.EYE: 250,
    SegmentKind.UL34: 800,
    SegmentKind.UR34: 800,
    SegmentKind.U12: 900,
    SegmentKind.L34: 1200,
    SegmentKind.UL12: 450,
    SegmentKind.R12: 900,
    SegmentKind.L12: 900,
}

VGG_BLOCKS = (
    ConvBlock(64, 2),
    ConvBlock(128, 2),
    ConvBlock(256, 3),
    ConvBlock(512, 3),
    ConvBlock(512, 3),
)

TOY_BLOCKS = (ConvBlock(8, 1), ConvBlock(16, 1))


def full_config(layout: SegmentLayout | None = None) -> NetworkConfig:
    layout = layout or default_layout("full")
    return NetworkConfig(
        scale="full",
        channels=3,
        inputs=dict(layout.canonical),
        blocks=VGG_BLOCKS,
        reduce_maps=50,
        fc_units=250,
        expected_flatten=dict(FULL_FLATTEN_SIZES),
    )


def toy_config(layout: SegmentLayout | None = None, dtype: str = "float64") -> NetworkConfig:
    layout = layout or default_layout("toy")
    return NetworkConfig(
        scale="toy",
        channels=1,
        inputs=dict(layout.canonical),
        blocks=TOY_BLOCKS,
        reduce_maps=8,
        fc_units=64,
        dtype=dtype,
    )


def network_config(scale: str, layout: SegmentLayout | None = None, dtype: str = "float64") -> NetworkConfig:
    if scale == "full":
        return full_config(layout)
    if scale == "toy":
        return toy_config(layout, dtype)
    raise ValueError(f"unknown network scale {scale!r}")


@dataclass
class DeepSegFaceModel:
    config: NetworkConfig
    columns: dict[SegmentKind, list]  # conv blocks + 1x1 reduce, per kind
    reduce_start: dict[SegmentKind, int]  # index where the reduce sublayers begin per column
    head: list
    layout: SegmentLayout
    priors: PriorTable | None = None

    def column_params(self):
        out = []
        for kind in ALL_KINDS:
            start = self.reduce_start[kind]
            for layer in self.columns[kind][:start]:
                out.extend(layer.params())
        return out

    def reduce_params(self):
        out = []
        for kind in ALL_KINDS:
            start = self.reduce_start[kind]
            for layer in self.columns[kind][start:]:
                out.extend(layer.params())
        return out

    def head_params(self):
        out = []
        for layer in self.head:
            out.extend(layer.params())
        return out


def build_network(config: NetworkConfig, seed: int = 0, layout: SegmentLayout | None = None) -> DeepSegFaceModel:
    """Construct and randomly initialize all columns and the head."""
    config.validate()
    if layout is None:
        layout = default_layout(config.scale)
    dtype = np.dtype(config.dtype)
    columns: dict[SegmentKind, list] = {}
    reduce_start: dict[SegmentKind, int] = {}
    for kind in ALL_KINDS:
        rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "column", kind_name(kind))))
        layers = []
        in_c = config.channels
        for blk in config.blocks:
            for _ in range(blk.convs):
                layers.append(Conv2D(in_c, blk.channels, 3, "same", rng=rng, dtype=dtype))
                layers.append(ReLU())
                in_c = blk.channels
            if blk.pool:
                layers.append(MaxPool2())
        reduce_start[kind] = len(layers)
        layers.append(Conv2D(in_c, config.reduce_maps, 1, "valid", rng=rng, dtype=dtype))
        layers.append(ReLU())
        columns[kind] = layers
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "head")))
    head = [
        FC(config.concat_size, config.fc_units, rng=rng, dtype=dtype),
        ReLU(),
        FC(config.fc_units, config.classes, rng=rng, dtype=dtype),
        Softmax(),
    ]
    return DeepSegFaceModel(config, columns, reduce_start, head, layout)


FACE_CLASS = 0  # softmax output index for "face"


def _input_tensor(model: DeepSegFaceModel, det, image: GrayImageF, cache: dict | None, image_id: str) -> np.ndarray:
    """Canonical-size mean-subtracted patch for one present segment."""
    cfg = model.config
    key = (image_id, int(det.kind), det.box.astuple())
    if cache is not None and key in cache:
        patch = cache[key]
    else:
        h, w = cfg.inputs[det.kind]
        patch = extract_patch(image, det.box, h, w).data
        if cache is not None:
            cache[key] = patch
    x = (patch - cfg.mean_pixel / 255.0).astype(cfg.dtype, copy=False)
    if cfg.channels == 1:
        return x[None, :, :]
    return np.repeat(x[None, :, :], cfg.channels, axis=0)


class _BatchState:
    """Bookkeeping for one batched forward pass (used again by backward)."""

    def __init__(self):
        self.column_acts: dict[SegmentKind, list] = {}
        self.present_rows: dict[SegmentKind, np.ndarray] = {}
        self.zero_row: dict[SegmentKind, bool] = {}
        self.head_acts: list = []
        self.flat_sizes: dict[SegmentKind, int] = {}


def _forward_batch(
    model: DeepSegFaceModel,
    batch: list[Proposal],
    images: dict[str, GrayImageF],
    cache: dict | None = None,
) -> tuple[np.ndarray, _BatchState]:
    """Probabilities (N, classes) for a batch of proposals."""
    cfg = model.config
    dtype = np.dtype(cfg.dtype)
    n = len(batch)
    state = _BatchState()
    parts = []
    for kind in ALL_KINDS:
        h, w = cfg.inputs[kind]
        present = np.array([i for i, p in enumerate(batch) if kind in p.segments], dtype=np.intp)
        use_zero = len(present) < n
        rows = len(present) + (1 if use_zero else 0)
        x = np.zeros((rows, cfg.channels, h, w), dtype=dtype)
        for r, i in enumerate(present.tolist()):
            p = batch[i]
            x[r] = _input_tensor(model, p.segments[kind], images[p.source_image], cache, p.source_image)
        acts = forward(model.columns[kind], x)
        out = acts[-1]
        flat = out.reshape(rows, -1)
        fsize = flat.shape[1]
        full = np.empty((n, fsize), dtype=dtype)
        if use_zero:
            full[:] = flat[-1]  # zero-input output stands in for absent rows
        if len(present):
            full[present] = flat[: len(present)]
        state.column_acts[kind] = acts
        state.present_rows[kind] = present
        state.zero_row[kind] = use_zero
        state.flat_sizes[kind] = fsize
        parts.append(full)
    concat = np.concatenate(parts, axis=1)
    state.head_acts = forward(model.head, concat)
    return state.head_acts[-1], state


def _backward_batch(
    model: DeepSegFaceModel,
    state: _BatchState,
    grad_probs: np.ndarray,
    freeze_columns: bool,
):
    """Parameter gradients in the order column_params + reduce_params + head_params
    (column grads omitted when freeze_columns)."""
    head_grads, grad_concat = backward(model.head, state.head_acts, grad_probs)
    n = grad_concat.shape[0]
    col_grads: list[np.ndarray] = []
    red_grads: list[np.ndarray] = []
    offset = 0
    for kind in ALL_KINDS:
        fsize = state.flat_sizes[kind]
        g_full = grad_concat[:, offset : offset + fsize]
        offset += fsize
        present = state.present_rows[kind]
        rows = len(present) + (1 if state.zero_row[kind] else 0)
        g_rows = np.zeros((rows, fsize), dtype=g_full.dtype)
        if len(present):
            g_rows[: len(present)] = g_full[present]
        if state.zero_row[kind]:
            absent = np.setdiff1d(np.arange(n), present, assume_unique=True)
            g_rows[-1] = g_full[absent].sum(axis=0)
        acts = state.column_acts[kind]
        out_shape = acts[-1].shape
        g_out = g_rows.reshape(out_shape)
        layers = model.columns[kind]
        start = model.reduce_start[kind] if freeze_columns else 0
        sub_layers = layers[start:]
        sub_acts = acts[start:]
        pgrads, _ = backward(sub_layers, sub_acts, g_out)
        flat = [g for layer_g in pgrads for g in layer_g]
        if freeze_columns:
            red_grads.extend(flat)
        else:
            nred = sum(len(l.params()) for l in layers[model.reduce_start[kind] :])
            col_grads.extend(flat[: len(flat) - nred])
            red_grads.extend(flat[len(flat) - nred :])
    head_flat = [g for layer_g in head_grads for g in layer_g]
    return col_grads, red_grads, head_flat


def forward_proposal(
    model: DeepSegFaceModel,
    p: Proposal,
    image: GrayImageF,
    cache: dict | None = None,
) -> tuple[float, float]:
    """(p_face, p_nonface) for one proposal; the pair sums to one."""
    probs, _ = _forward_batch(model, [p], {p.source_image: image}, cache)
    return float(probs[0, FACE_CLASS]), float(probs[0, 1 - FACE_CLASS])


def score_proposals(
    model: DeepSegFaceModel,
    proposals: list[Proposal],
    images: dict[str, GrayImageF],
    cache: dict | None = None,
    batch: int = 64,
) -> np.ndarray:
    """Face probabilities for many proposals, batched."""
    out = np.zeros(len(proposals), dtype=np.float64)
    for lo in range(0, len(proposals), batch):
        chunk = proposals[lo : lo + batch]
        probs, _ = _forward_batch(model, chunk, images, cache)
        out[lo : lo + len(chunk)] = probs[:, FACE_CLASS]
    return out


@dataclass(frozen=True)
class TrainParams:
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    epochs: int = 12
    batch: int = 32
    freeze_columns: bool = False
    # per-batch face fraction is clamped to this band to stabilize the head
    balance_min: float = 0.25
    balance_max: float = 0.75


def train(
    model: DeepSegFaceModel,
    labeled: list[LabeledProposal],
    images: dict[str, GrayImageF],
    params: TrainParams = TrainParams(),
    seed: int = 0,
    cache: dict | None = None,
) -> list[float]:
    """Minibatch SGD on cross-entropy over labeled proposals.

    Proposals are segment subsets, so columns see their inputs dropping out
    naturally; no synthetic input noise is added. Batches are sampled with
    the face fraction clamped into the balance band. Returns the per-epoch
    mean loss trace; attaches priors built from the training proposals.
    """
    faces = [i for i, lp in enumerate(labeled) if lp.is_face]
    nonfaces = [i for i, lp in enumerate(labeled) if not lp.is_face]
    if not faces or not nonfaces:
        raise DegenerateTrainingSetError(
            f"need both classes to train ({len(faces)} face, {len(nonfaces)} nonface)"
        )
    model.priors = build_priors(labeled)
    if cache is None:
        cache = {}
    rng = np.random.Generator(np.random.PCG64(seed))
    ratio = min(max(len(faces) / len(labeled), params.balance_min), params.balance_max)
    n_face = min(max(int(round(params.batch * ratio)), 1), params.batch - 1)

    if params.freeze_columns:
        trainable = model.reduce_params() + model.head_params()
    else:
        trainable = model.column_params() + model.reduce_params() + model.head_params()
    velocity = [np.zeros_like(w) for w in trainable]
    labels = np.array([FACE_CLASS if lp.is_face else 1 - FACE_CLASS for lp in labeled])
    steps = max(1, math.ceil(len(labeled) / params.batch))
    trace = []
    for _ in range(params.epochs):
        epoch_loss = 0.0
        for _ in range(steps):
            pick = np.concatenate(
                [
                    rng.choice(np.array(faces), size=n_face, replace=True),
                    rng.choice(np.array(nonfaces), size=params.batch - n_face, replace=True),
                ]
            )
            batch = [labeled[i].proposal for i in pick]
            y = labels[pick]
            probs, state = _forward_batch(model, batch, images, cache)
            b = len(batch)
            losses = -np.log(np.maximum(probs[np.arange(b), y], 1e-12))
            epoch_loss += float(losses.mean())
            gprobs = np.zeros_like(probs)
            gprobs[np.arange(b), y] = -1.0 / np.maximum(probs[np.arange(b), y], 1e-12) / b
            col_g, red_g, head_g = _backward_batch(model, state, gprobs, params.freeze_columns)
            grads = (col_g if not params.freeze_columns else []) + red_g + head_g
            sgd_step(trainable, grads, velocity, params.lr, params.momentum, params.weight_decay)
        trace.append(epoch_loss / steps)
    return trace


def detect(
    model: DeepSegFaceModel,
    image: GrayImageF,
    proposals: list[Proposal],
    cache: dict | None = None,
):
    """Re-ranked argmax detection: score = p_face * prior multiplier.

    Returns (box, score) of the winning proposal, or None without proposals.
    """
    if not proposals:
        return None
    if model.priors is None:
        raise DegenerateTrainingSetError("model has no priors; train or load before detecting")
    images = {p.source_image: image for p in proposals}
    pface = score_proposals(model, proposals, images, cache)
    scores = pface * np.array([rerank_multiplier(p, model.priors) for p in proposals])
    best = int(np.argmax(scores))
    return proposals[best].box, float(scores[best])


# --- model file --------------------------------------------------------------

DSF_MAGIC = "DEEPSEGFACE-MODEL v1"


def save_deepsegface(model: DeepSegFaceModel, path) -> None:
    from .segface import layout_to_entries

    cfg = model.config
    cfg_entries = [
        ("scale", cfg.scale),
        ("channels", str(cfg.channels)),
        ("blocks", " ".join(f"{b.channels}:{b.convs}:{int(b.pool)}" for b in cfg.blocks)),
        ("reduce_maps", str(cfg.reduce_maps)),
        ("fc_units", str(cfg.fc_units)),
        ("classes", str(cfg.classes)),
        ("mean_pixel", repr(cfg.mean_pixel)),
        ("dtype", cfg.dtype),
    ]
    for kind in ALL_KINDS:
        h, w = cfg.inputs[kind]
        cfg_entries.append((f"input.{kind_name(kind)}", f"{h} {w}"))
    sections = [("config", cfg_entries)]
    for kind in ALL_KINDS:
        entries = []
        for li, layer in enumerate(model.columns[kind]):
            for pi, arr in enumerate(layer.params()):
                entries.append((f"p{li}.{pi}", store.array_to_blob(arr)))
        sections.append((f"column kind={kind_name(kind)}", entries))
    head_entries = []
    for li, layer in enumerate(model.head):
        for pi, arr in enumerate(layer.params()):
            head_entries.append((f"p{li}.{pi}", store.array_to_blob(arr)))
    sections.append(("head", head_entries))
    if model.priors is None:
        raise DegenerateTrainingSetError("refusing to save a model without priors")
    sections.append(("priors", priors_to_entries(model.priors)))
    sections.append(("layout", layout_to_entries(model.layout)))
    store.write_sections(path, DSF_MAGIC, sections)


def load_deepsegface(path) -> DeepSegFaceModel:
    from .segface import layout_from_entries

    if not Path(path).is_file():
        raise FileNotFoundError(f"no such model file: {path}")
    sections = store.read_sections(path, DSF_MAGIC)
    by_name = dict(sections)
    if "config" not in by_name or "layout" not in by_name or "priors" not in by_name:
        raise ParseError(f"{path}: model file is missing required sections")
    cfg_e = by_name["config"]
    layout = layout_from_entries(by_name["layout"])
    blocks = tuple(
        ConvBlock(int(c), int(v), bool(int(pl)))
        for c, v, pl in (tok.split(":") for tok in cfg_e["blocks"].split())
    )
    inputs = {}
    for kind in ALL_KINDS:
        h, w = cfg_e[f"input.{kind_name(kind)}"].split()
        inputs[kind] = (int(h), int(w))
    cfg = NetworkConfig(
        scale=cfg_e["scale"],
        channels=int(cfg_e["channels"]),
        inputs=inputs,
        blocks=blocks,
        reduce_maps=int(cfg_e["reduce_maps"]),
        fc_units=int(cfg_e["fc_units"]),
        classes=int(cfg_e["classes"]),
        mean_pixel=float(cfg_e["mean_pixel"]),
        dtype=cfg_e.get("dtype", "float64"),
    )
    model = build_network(cfg, seed=0, layout=layout)
    for kind in ALL_KINDS:
        entries = by_name[f"column kind={kind_name(kind)}"]
        for li, layer in enumerate(model.columns[kind]):
            for pi, arr in enumerate(layer.params()):
                arr[...] = store.blob_to_array(entries[f"p{li}.{pi}"])
    for li, layer in enumerate(model.head):
        for pi, arr in enumerate(layer.params()):
            arr[...] = store.blob_to_array(by_name["head"][f"p{li}.{pi}"])
    model.priors = priors_from_entries(by_name["priors"])
    return model
