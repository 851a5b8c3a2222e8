"""Face proposals from per-image segment detections.

Detections whose implied face centers fall near each other are grouped
greedily into clusters; duplicate clusters are collapsed; each cluster then
yields up to zeta proposals: its full member set first, then distinct random
subsets of at least min_segments members. Proposals carry the smallest box
encapsulating their member segments and can be labeled against ground truth
at the 50% overlap rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .evaluate import iou
from .imaging import BoxI, union_box
from .segments import (
    SegmentDetection,
    SegmentKind,
    SegmentLayout,
    implied_face_box,
    implied_face_center,
    implied_face_diagonal,
    kinds_mask,
)


@dataclass
class Cluster:
    """Co-located detections, at most one per segment kind."""

    members: list[SegmentDetection]
    center: tuple[float, float]
    box: BoxI

    def kinds(self) -> set[SegmentKind]:
        return {m.kind for m in self.members}

    def total_score(self) -> float:
        return sum(m.score for m in self.members)


def _cluster_box(members: list[SegmentDetection], layout: SegmentLayout, box_mode: str) -> BoxI:
    if box_mode == "segments":
        return union_box(m.box for m in members)
    if box_mode == "implied":
        boxes = [implied_face_box(m, layout) for m in members]
        x = round(sum(b.x for b in boxes) / len(boxes))
        y = round(sum(b.y for b in boxes) / len(boxes))
        w = round(sum(b.w for b in boxes) / len(boxes))
        h = round(sum(b.h for b in boxes) / len(boxes))
        return BoxI(x, y, w, h)
    raise ValueError(f"unknown box_mode {box_mode!r}")


def cluster_detections(
    dets: list[SegmentDetection],
    layout: SegmentLayout,
    radius_frac: float = 0.25,
    box_mode: str = "segments",
) -> list[Cluster]:
    """Greedy clustering by implied face center.

    Detections are processed in descending score order and join the first
    cluster whose running mean center lies within radius_frac times the
    diagonal of the detection's implied face box; otherwise they open a new
    cluster. Only the highest-scoring detection per kind is retained.
    """
    if radius_frac <= 0:
        raise ValueError("radius_frac must be positive")
    ordered = sorted(dets, key=lambda d: (-d.score, int(d.kind), d.box.x, d.box.y, d.box.w, d.box.h))
    clusters: list[tuple[list[SegmentDetection], list[tuple[float, float]]]] = []
    for det in ordered:
        c = implied_face_center(det, layout)
        radius = radius_frac * implied_face_diagonal(det, layout)
        placed = False
        for members, centers in clusters:
            mx = sum(p[0] for p in centers) / len(centers)
            my = sum(p[1] for p in centers) / len(centers)
            if math.hypot(c[0] - mx, c[1] - my) <= radius:
                if all(m.kind != det.kind for m in members):
                    members.append(det)
                    centers.append(c)
                # lower-scoring duplicate kinds are absorbed and dropped
                placed = True
                break
        if not placed:
            clusters.append(([det], [c]))
    out = []
    for members, centers in clusters:
        cx = sum(p[0] for p in centers) / len(centers)
        cy = sum(p[1] for p in centers) / len(centers)
        out.append(Cluster(members, (cx, cy), _cluster_box(members, layout, box_mode)))
    return out


def dedupe_clusters(clusters: list[Cluster]) -> list[Cluster]:
    """Collapse clusters with identical segment-kind sets and identical boxes;
    the duplicate with the highest total score is kept, order preserved."""
    kept: list[Cluster] = []
    index: dict[tuple, int] = {}
    for c in clusters:
        key = (tuple(sorted(int(k) for k in c.kinds())), c.box.astuple())
        if key in index:
            i = index[key]
            if c.total_score() > kept[i].total_score():
                kept[i] = c
        else:
            index[key] = len(kept)
            kept.append(c)
    return kept


def count_subsets(n: int, kmin: int) -> int:
    """Number of subsets of size kmin..n of an n-element set."""
    if not (0 <= kmin <= n <= 9):
        raise ValueError(f"need 0 <= kmin <= n <= 9, got n={n}, kmin={kmin}")
    return sum(math.comb(n, k) for k in range(kmin, n + 1))


@dataclass(frozen=True)
class Proposal:
    """A co-clustered segment subset plus its encapsulating face box."""

    segments: dict[SegmentKind, SegmentDetection]
    box: BoxI
    cluster_id: int
    source_image: str

    def mask(self) -> int:
        return kinds_mask(self.segments.keys())

    def kinds(self) -> tuple[SegmentKind, ...]:
        return tuple(sorted(self.segments.keys()))


@dataclass(frozen=True)
class LabeledProposal:
    proposal: Proposal
    is_face: bool
    overlap: float


def _subset_proposal(
    members: list[SegmentDetection],
    picked: list[SegmentDetection],
    cluster_id: int,
    image_id: str,
    layout: SegmentLayout,
    box_mode: str,
) -> Proposal:
    segs = {m.kind: m for m in sorted(picked, key=lambda m: int(m.kind))}
    return Proposal(segs, _cluster_box(picked, layout, box_mode), cluster_id, image_id)


def generate_proposals(
    clusters: list[Cluster],
    layout: SegmentLayout,
    zeta: int = 10,
    min_segments: int = 3,
    seed: int = 0,
    image_id: str = "",
    box_mode: str = "segments",
) -> list[Proposal]:
    """Up to zeta proposals per cluster: the full member set first, then
    distinct uniformly sampled subsets of size >= min_segments (without
    replacement over subsets). Deterministic for a given seed. Duplicate
    proposals (same kinds and same box) across clusters are removed."""
    if zeta < 1:
        raise ValueError("zeta must be >= 1")
    if min_segments < 1:
        raise ValueError("min_segments must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    out: list[Proposal] = []
    seen: set[tuple] = set()
    for ci, cluster in enumerate(clusters):
        members = sorted(cluster.members, key=lambda m: int(m.kind))
        n = len(members)
        if n < min_segments:
            continue
        chosen: list[list[SegmentDetection]] = [members]
        if zeta > 1 and n > min_segments:
            subsets = []
            for bits in range(1, 1 << n):
                size = bits.bit_count()
                if size >= min_segments and size < n:
                    subsets.append([members[i] for i in range(n) if bits >> i & 1])
            take = min(zeta - 1, len(subsets))
            for idx in rng.choice(len(subsets), size=take, replace=False):
                chosen.append(subsets[int(idx)])
        for picked in chosen[:zeta]:
            p = _subset_proposal(members, picked, ci, image_id, layout, box_mode)
            key = (tuple(int(k) for k in p.kinds()), p.box.astuple())
            if key not in seen:
                seen.add(key)
                out.append(p)
    return out


def label_proposals(proposals: list[Proposal], truth: BoxI | None) -> list[LabeledProposal]:
    """Face label iff the image has a truth box and IoU >= 0.5."""
    out = []
    for p in proposals:
        overlap = iou(p.box, truth) if truth is not None else 0.0
        out.append(LabeledProposal(p, overlap >= 0.5, overlap))
    return out


# --- proposal interchange format ---------------------------------------------
# image_id,cluster_id,x,y,w,h,label,overlap,k, then k member records of
# kind,x,y,w,h,score. label/overlap are empty for unlabeled proposals.

from .segments import kind_from_name, kind_name  # noqa: E402
from .errors import ParseError, UnknownSegmentKindError  # noqa: E402


def export_proposals(labeled_by_image: dict[str, list[LabeledProposal]], path) -> None:
    lines = ["# image_id,cluster_id,x,y,w,h,label,overlap,k,(kind,x,y,w,h,score)*k"]
    for image_id, lps in labeled_by_image.items():
        for lp in lps:
            p = lp.proposal
            fields = [
                image_id,
                str(p.cluster_id),
                str(p.box.x),
                str(p.box.y),
                str(p.box.w),
                str(p.box.h),
                "face" if lp.is_face else "nonface",
                repr(lp.overlap),
                str(len(p.segments)),
            ]
            for kind in p.kinds():
                d = p.segments[kind]
                fields += [kind_name(kind), str(d.box.x), str(d.box.y), str(d.box.w), str(d.box.h), repr(d.score)]
            lines.append(",".join(fields))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def import_proposals(path) -> dict[str, list[LabeledProposal]]:
    out: dict[str, list[LabeledProposal]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) < 9:
                raise ParseError(f"{path}:{lineno}: expected at least 9 fields")
            try:
                image_id = parts[0]
                cluster_id = int(parts[1])
                box = BoxI(int(parts[2]), int(parts[3]), int(parts[4]), int(parts[5]))
                label = parts[6]
                overlap = float(parts[7]) if parts[7] else 0.0
                k = int(parts[8])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: malformed header fields") from exc
            if label not in ("face", "nonface", ""):
                raise ParseError(f"{path}:{lineno}: bad label {label!r}")
            if len(parts) != 9 + 6 * k:
                raise ParseError(f"{path}:{lineno}: expected {9 + 6 * k} fields for {k} members")
            segs: dict[SegmentKind, SegmentDetection] = {}
            for m in range(k):
                f = parts[9 + 6 * m : 15 + 6 * m]
                try:
                    kind = kind_from_name(f[0])
                except KeyError:
                    raise UnknownSegmentKindError(
                        f"{path}:{lineno}: unknown segment kind {f[0]!r}"
                    ) from None
                try:
                    segs[kind] = SegmentDetection(
                        kind, BoxI(int(f[1]), int(f[2]), int(f[3]), int(f[4])), float(f[5])
                    )
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: malformed member record") from exc
            p = Proposal(segs, box, cluster_id, image_id)
            out.setdefault(image_id, []).append(LabeledProposal(p, label == "face", overlap))
    return out
