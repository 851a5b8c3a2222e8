"""SegFace: per-segment HoG + linear SVM scorers and a master SVM.

Each segment kind gets a linear SVM over the HoG descriptor of the segment
patch at its canonical size. A proposal becomes a 3M+2 vector: the M
per-segment margins (zero for absent segments) followed by the 2M+2 prior
features; the master SVM's margin on that vector is the proposal score.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateLabelsError,
    DegenerateTrainingSetError,
    DimensionMismatchError,
    ParseError,
    PatchTooSmallError,
)
from .imaging import GrayImageF, extract_patch
from .priors import PriorTable, build_priors, prior_features, priors_from_entries, priors_to_entries
from .proposals import LabeledProposal, Proposal
from .segments import (
    ALL_KINDS,
    NUM_KINDS,
    SegmentKind,
    SegmentLayout,
    SegmentRegion,
    kind_from_name,
    kind_name,
)
from .seeding import derive_seed
from . import store

FEATURE_LEN = 3 * NUM_KINDS + 2  # 29 for the nine-segment taxonomy


@dataclass(frozen=True)
class HogParams:
    cell: int = 8  # pixels per cell side
    block: int = 2  # cells per block side
    bins: int = 9  # unsigned orientation bins over [0, 180)
    block_stride: int = 1  # cells between block origins
    clip: float = 0.2  # L2-Hys clipping value

    def __post_init__(self):
        if self.cell < 2 or self.bins < 2 or self.block < 1 or self.block_stride < 1:
            raise ValueError(f"invalid HoG parameters {self}")
        if not (0.0 < self.clip <= 1.0):
            raise ValueError(f"clip must be in (0, 1], got {self.clip}")


def hog_length(h: int, w: int, p: HogParams) -> int:
    ncy, ncx = h // p.cell, w // p.cell
    nby = (ncy - p.block) // p.block_stride + 1
    nbx = (ncx - p.block) // p.block_stride + 1
    return nby * nbx * p.block * p.block * p.bins


def hog(patch: GrayImageF, params: HogParams = HogParams()) -> np.ndarray:
    """Histogram of oriented gradients with L2-Hys block normalization.

    Central-difference gradients, unsigned orientations with linear vote
    interpolation between neighboring bins, per-cell histograms, overlapping
    blocks normalized, clipped and renormalized, concatenated row-major.
    """
    img = patch.data
    h, w = img.shape
    p = params
    ncy, ncx = h // p.cell, w // p.cell
    if ncy < p.block or ncx < p.block:
        raise PatchTooSmallError(
            f"patch {h}x{w} yields {ncy}x{ncx} cells; need at least {p.block} per side"
        )
    gy, gx = np.gradient(img)
    mag = np.hypot(gx, gy)
    ang = np.degrees(np.arctan2(gy, gx)) % 180.0

    hy, hx = ncy * p.cell, ncx * p.cell
    mag = mag[:hy, :hx]
    ang = ang[:hy, :hx]
    binw = 180.0 / p.bins
    pos = ang / binw - 0.5
    b0 = np.floor(pos)
    frac = pos - b0
    b0 = b0.astype(np.intp) % p.bins
    b1 = (b0 + 1) % p.bins

    cy = np.repeat(np.arange(ncy), p.cell)[:, None]
    cx = np.repeat(np.arange(ncx), p.cell)[None, :]
    cy = np.broadcast_to(cy, (hy, hx))
    cx = np.broadcast_to(cx, (hy, hx))
    hist = np.zeros((ncy, ncx, p.bins), dtype=np.float64)
    np.add.at(hist, (cy, cx, b0), mag * (1.0 - frac))
    np.add.at(hist, (cy, cx, b1), mag * frac)

    win = np.lib.stride_tricks.sliding_window_view(hist, (p.block, p.block), axis=(0, 1))
    win = win[:: p.block_stride, :: p.block_stride]
    nby, nbx = win.shape[0], win.shape[1]
    blocks = win.transpose(0, 1, 3, 4, 2).reshape(nby, nbx, -1).astype(np.float64)
    eps = 1e-9
    norms = np.sqrt((blocks**2).sum(axis=2, keepdims=True))
    blocks = blocks / (norms + eps)
    blocks = np.minimum(blocks, p.clip)
    norms = np.sqrt((blocks**2).sum(axis=2, keepdims=True))
    blocks = blocks / (norms + eps)
    return blocks.reshape(-1)


@dataclass
class LinearModel:
    """Weight vector plus bias for any linear classifier."""

    weights: np.ndarray
    bias: float

    @property
    def dim(self) -> int:
        return len(self.weights)

    def score(self, x: np.ndarray) -> float:
        return float(self.weights @ x + self.bias)

    @classmethod
    def zero(cls, dim: int) -> "LinearModel":
        return cls(np.zeros(dim, dtype=np.float64), 0.0)


def svm_objective(model: LinearModel, X: np.ndarray, y: np.ndarray, lam: float) -> float:
    """Regularized empirical hinge loss."""
    margins = X @ model.weights + model.bias
    hinge = np.maximum(0.0, 1.0 - y * margins).mean()
    return 0.5 * lam * float(model.weights @ model.weights) + float(hinge)


def train_linear_svm(
    X: np.ndarray, y: np.ndarray, lam: float = 1e-4, epochs: int = 20, seed: int = 0
) -> LinearModel:
    """Primal hinge-loss SVM by stochastic subgradient descent with the
    1/(lam*t) step schedule and a deterministic per-epoch shuffle.

    The bias rides along as a constant augmented feature (so it is stepped
    and regularized like the weights), and the returned model averages the
    second half of the iterate path, which damps the raw path's oscillation.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise DimensionMismatchError(f"X {X.shape} does not align with y {y.shape}")
    if len(X) < 2:
        raise DegenerateLabelsError("need at least 2 samples")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise DegenerateLabelsError("both classes must be present")
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    rng = np.random.Generator(np.random.PCG64(seed))
    w = np.zeros(d + 1, dtype=np.float64)
    w_sum = np.zeros(d + 1, dtype=np.float64)
    kept = 0
    total = epochs * n
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            margin = y[i] * (w @ Xa[i])
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += eta * y[i] * Xa[i]
            if 2 * t > total:
                w_sum += w
                kept += 1
    avg = w_sum / kept
    return LinearModel(avg[:d], float(avg[d]))


@dataclass
class SegFaceModel:
    hog_params: HogParams
    per_segment: dict[SegmentKind, LinearModel]
    master: LinearModel
    priors: PriorTable
    layout: SegmentLayout


def _segment_hog(
    image: GrayImageF,
    det,
    layout: SegmentLayout,
    params: HogParams,
    cache: dict | None,
    image_id: str = "",
) -> np.ndarray:
    key = (image_id, int(det.kind), det.box.astuple())
    if cache is not None and key in cache:
        return cache[key]
    h, w = layout.canonical[det.kind]
    vec = hog(extract_patch(image, det.box, h, w), params)
    if cache is not None:
        cache[key] = vec
    return vec


def build_feature_vector(
    p: Proposal,
    model: SegFaceModel,
    image: GrayImageF,
    cache: dict | None = None,
) -> np.ndarray:
    """The 3M+2 vector: per-segment SVM margins (0 for absent kinds) followed
    by the prior features."""
    out = np.zeros(FEATURE_LEN, dtype=np.float64)
    for kind, det in p.segments.items():
        vec = _segment_hog(image, det, model.layout, model.hog_params, cache, p.source_image)
        out[int(kind)] = model.per_segment[kind].score(vec)
    out[NUM_KINDS:] = prior_features(p, model.priors)
    return out


def score_proposal_segface(
    p: Proposal, model: SegFaceModel, image: GrayImageF, cache: dict | None = None
) -> float:
    """Master SVM margin; higher means more face-like."""
    return model.master.score(build_feature_vector(p, model, image, cache))


def train_segface(
    labeled: list[LabeledProposal],
    images: dict[str, GrayImageF],
    layout: SegmentLayout,
    hog_params: HogParams = HogParams(),
    lam: float = 1e-4,
    epochs: int = 20,
    seed: int = 0,
) -> SegFaceModel:
    """Two-stage training.

    Stage 1 trains one SVM per segment kind on HoG of that kind's patches,
    face proposals against non-face proposals containing the kind; a kind
    with fewer than two classes of patches falls back to the zero model.
    Stage 2 builds the 3M+2 vectors for every training proposal and trains
    the master SVM. Priors come from the same training proposals.
    """
    priors = build_priors(labeled)  # raises DegenerateTrainingSetError when one class is empty
    cache: dict = {}
    per_segment: dict[SegmentKind, LinearModel] = {}
    for kind in ALL_KINDS:
        h, w = layout.canonical[kind]
        dim = hog_length(h, w, hog_params)
        rows = []
        ys = []
        for lp in labeled:
            det = lp.proposal.segments.get(kind)
            if det is None:
                continue
            img = images[lp.proposal.source_image]
            rows.append(_segment_hog(img, det, layout, hog_params, cache, lp.proposal.source_image))
            ys.append(1.0 if lp.is_face else -1.0)
        ysa = np.array(ys)
        if len(rows) < 2 or not (np.any(ysa > 0) and np.any(ysa < 0)):
            per_segment[kind] = LinearModel.zero(dim)  # absent-class fallback
            continue
        per_segment[kind] = train_linear_svm(
            np.stack(rows), ysa, lam, epochs, derive_seed(seed, "segsvm", kind_name(kind))
        )

    partial = SegFaceModel(hog_params, per_segment, LinearModel.zero(FEATURE_LEN), priors, layout)
    F = np.stack(
        [
            build_feature_vector(lp.proposal, partial, images[lp.proposal.source_image], cache)
            for lp in labeled
        ]
    )
    y = np.array([1.0 if lp.is_face else -1.0 for lp in labeled])
    master = train_linear_svm(F, y, lam, epochs, derive_seed(seed, "master"))
    return SegFaceModel(hog_params, per_segment, master, priors, layout)


# --- model file --------------------------------------------------------------

SEGFACE_MAGIC = "SEGFACE-MODEL v1"


def layout_to_entries(layout: SegmentLayout) -> list[tuple[str, str]]:
    entries = []
    for kind in ALL_KINDS:
        r = layout.regions[kind]
        h, w = layout.canonical[kind]
        entries.append((kind_name(kind), f"{r.u0!r} {r.v0!r} {r.u1!r} {r.v1!r} {h} {w}"))
    return entries


def layout_from_entries(entries: dict[str, str]) -> SegmentLayout:
    regions = {}
    canonical = {}
    for name, value in entries.items():
        kind = kind_from_name(name)
        u0, v0, u1, v1, h, w = value.split()
        regions[kind] = SegmentRegion(float(u0), float(v0), float(u1), float(v1))
        canonical[kind] = (int(h), int(w))
    return SegmentLayout(regions, canonical)


def save_segface(model: SegFaceModel, path) -> None:
    sections = [
        (
            "hog",
            [
                ("cell", str(model.hog_params.cell)),
                ("block", str(model.hog_params.block)),
                ("bins", str(model.hog_params.bins)),
                ("block_stride", str(model.hog_params.block_stride)),
                ("clip", repr(model.hog_params.clip)),
            ],
        )
    ]
    for kind in ALL_KINDS:
        m = model.per_segment[kind]
        sections.append(
            (
                f"svm kind={kind_name(kind)}",
                [
                    ("dim", str(m.dim)),
                    ("bias", repr(m.bias)),
                    ("weights", store.floats_to_text(m.weights)),
                ],
            )
        )
    sections.append(
        (
            "master",
            [
                ("dim", str(model.master.dim)),
                ("bias", repr(model.master.bias)),
                ("weights", store.floats_to_text(model.master.weights)),
            ],
        )
    )
    sections.append(("priors", priors_to_entries(model.priors)))
    sections.append(("layout", layout_to_entries(model.layout)))
    store.write_sections(path, SEGFACE_MAGIC, sections)


def load_segface(path) -> SegFaceModel:
    if not Path(path).is_file():
        raise FileNotFoundError(f"no such model file: {path}")
    hog_params = None
    per_segment: dict[SegmentKind, LinearModel] = {}
    master = None
    priors = None
    layout = None
    for name, entries in store.read_sections(path, SEGFACE_MAGIC):
        if name == "hog":
            hog_params = HogParams(
                int(entries["cell"]),
                int(entries["block"]),
                int(entries["bins"]),
                int(entries["block_stride"]),
                float(entries["clip"]),
            )
        elif name.startswith("svm kind="):
            kind = kind_from_name(name.split("=", 1)[1])
            per_segment[kind] = LinearModel(
                store.floats_from_text(entries["weights"]), float(entries["bias"])
            )
        elif name == "master":
            master = LinearModel(store.floats_from_text(entries["weights"]), float(entries["bias"]))
        elif name == "priors":
            priors = priors_from_entries(entries)
        elif name == "layout":
            layout = layout_from_entries(entries)
        else:
            raise ParseError(f"{path}: unexpected section [{name}]")
    if hog_params is None or master is None or priors is None or layout is None:
        raise ParseError(f"{path}: model file is missing required sections")
    return SegFaceModel(hog_params, per_segment, master, priors, layout)
