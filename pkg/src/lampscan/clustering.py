"""Greedy clustering of projected detections, per-cluster identification by
accumulated score, and detection/identification/localization statistics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

DEFAULT_CLUSTER_RADIUS = 0.5  # m
REFERENCE_MATCH_RADIUS = 0.5  # m, cluster-to-reference association


@dataclass
class Cluster:
    center: np.ndarray
    members: list = field(default_factory=list)          # detection indices
    accumulated_score: dict = field(default_factory=dict)  # model -> score sum
    state_score: dict = field(default_factory=dict)      # True/False -> score sum
    winning_model: int = -1
    state: bool = False
    reference_id: int | None = None


@dataclass(frozen=True)
class LocalizationStats:
    mean_dist_to_center: float        # cm
    var_dist_to_center: float         # cm^2
    mean_dist_to_reference: float     # cm, nan when no references
    per_model: dict                   # model -> (mean cm, var cm^2, count)


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[expected][detected] over individual detections."""

    models: tuple
    counts: np.ndarray

    def accuracy(self) -> float:
        total = self.counts.sum()
        return float(np.trace(self.counts) / total) if total else float("nan")


def cluster(detections, radius: float = DEFAULT_CLUSTER_RADIUS) -> list[Cluster]:
    """Greedy agglomerative clustering, deterministic.

    Detections are visited in frame order (stable); each joins the nearest
    existing cluster whose center lies within the radius, else seeds a new
    one. Centers are incremental means of member positions.
    """
    if radius <= 0:
        raise InvalidArgumentError("radius must be positive")
    order = sorted(range(len(detections)), key=lambda i: detections[i].frame_index)
    clusters: list[Cluster] = []
    for i in order:
        d = detections[i]
        best = None
        best_dist = radius
        for c in clusters:
            dist = float(np.linalg.norm(c.center - d.position))
            if dist <= best_dist:
                best = c
                best_dist = dist
        if best is None:
            best = Cluster(center=d.position.copy())
            clusters.append(best)
        best.members.append(i)
        n = len(best.members)
        best.center = best.center + (d.position - best.center) / n
        best.accumulated_score[d.model_id] = best.accumulated_score.get(d.model_id, 0.0) + d.score
        best.state_score[d.state] = best.state_score.get(d.state, 0.0) + d.score
    for c in clusters:
        c.winning_model, c.state = identify(c)
    return clusters


def identify(cluster: Cluster):
    """(model, state) of a cluster: score-argmax model (ties -> lowest id) and
    score-weighted majority state (ties -> off)."""
    if not cluster.accumulated_score:
        raise InvalidArgumentError("cannot identify an empty cluster")
    best = max(sorted(cluster.accumulated_score), key=lambda m: (cluster.accumulated_score[m], -m))
    on = cluster.state_score.get(True, 0.0)
    off = cluster.state_score.get(False, 0.0)
    return best, on > off


def _match_references(clusters, references):
    """Greedy nearest cluster-reference pairs, each side used at most once."""
    pairs = []
    for ci, c in enumerate(clusters):
        for ri, ref in enumerate(references):
            dist = float(np.linalg.norm(c.center - np.asarray(ref[0], dtype=float)))
            pairs.append((dist, ci, ri))
    pairs.sort()
    used_c, used_r = set(), set()
    matches = {}
    for dist, ci, ri in pairs:
        if ci in used_c or ri in used_r or dist > REFERENCE_MATCH_RADIUS:
            continue
        used_c.add(ci)
        used_r.add(ri)
        matches[ci] = (ri, dist)
    return matches


def compute_stats(clusters, detections, references=()):
    """Localization statistics, confusion matrix and detection counts.

    ``references`` are (position, model, state) triples; when empty, the
    reference-dependent outputs are NaN/empty. A detection counts as correct
    when its cluster is linked to a reference of the same model within the
    association radius. Variances use population (1/N) normalization, in cm^2.
    """
    references = list(references)
    matches = _match_references(clusters, references) if references else {}
    for ci, c in enumerate(clusters):
        c.reference_id = matches[ci][0] if ci in matches else None

    dists_cm = []
    per_model: dict = {}
    for c in clusters:
        for i in c.members:
            d_cm = float(np.linalg.norm(detections[i].position - c.center)) * 100.0
            dists_cm.append(d_cm)
            per_model.setdefault(c.winning_model, []).append(d_cm)
    dists_cm = np.asarray(dists_cm)
    mean_c = float(dists_cm.mean()) if dists_cm.size else float("nan")
    var_c = float(dists_cm.var()) if dists_cm.size else float("nan")
    per_model_stats = {m: (float(np.mean(v)), float(np.var(v)), len(v))
                       for m, v in sorted(per_model.items())}

    ref_d = [matches[ci][1] * 100.0 for ci in matches]
    mean_r = float(np.mean(ref_d)) if ref_d else float("nan")

    model_ids = sorted({d.model_id for d in detections}
                       | {int(r[1]) for r in references}) or [0]
    index = {m: k for k, m in enumerate(model_ids)}
    counts = np.zeros((len(model_ids), len(model_ids)), dtype=np.int64)
    correct = 0
    attributed = 0
    for ci, c in enumerate(clusters):
        if c.reference_id is None:
            continue
        expected = int(references[c.reference_id][1])
        for i in c.members:
            detected = detections[i].model_id
            counts[index[expected], index[detected]] += 1
            attributed += 1
            if (detected == expected
                    and np.linalg.norm(detections[i].position - c.center) <= REFERENCE_MATCH_RADIUS):
                correct += 1

    stats = LocalizationStats(mean_c, var_c, mean_r, per_model_stats)
    confusion = ConfusionMatrix(tuple(model_ids), counts)
    counts_summary = {
        "detections": len(detections),
        "clusters": len(clusters),
        "attributed": attributed,
        "correct": correct,
    }
    return stats, confusion, counts_summary


# ---------------------------------------------------------------------------
# Report writers
# ---------------------------------------------------------------------------

def save_cluster_report_csv(clusters, detections, references, path) -> None:
    with open(path, "w") as f:
        f.write("cluster,model,state,members,cx,cy,cz,reference,ref_dist_m\n")
        for ci, c in enumerate(clusters):
            if c.reference_id is not None:
                ref = references[c.reference_id]
                rd = float(np.linalg.norm(c.center - np.asarray(ref[0], dtype=float)))
                ref_s, rd_s = str(c.reference_id), f"{rd:.9g}"
            else:
                ref_s, rd_s = "", ""
            f.write(f"{ci},{c.winning_model},{int(c.state)},{len(c.members)},"
                    f"{c.center[0]:.9g},{c.center[1]:.9g},{c.center[2]:.9g},"
                    f"{ref_s},{rd_s}\n")


def save_confusion_csv(confusion: ConfusionMatrix, path) -> None:
    with open(path, "w") as f:
        f.write("expected\\detected," + ",".join(str(m) for m in confusion.models) + "\n")
        for i, m in enumerate(confusion.models):
            f.write(f"{m}," + ",".join(str(int(v)) for v in confusion.counts[i]) + "\n")


def save_scatter_svg(detections, clusters, references, path,
                     size: int = 640) -> None:
    """Top-down (x, y) scatter: detections as dots, cluster centers as
    crosses, references as squares colored by state."""
    pts = [d.position[:2] for d in detections]
    pts += [c.center[:2] for c in clusters]
    pts += [np.asarray(r[0], dtype=float)[:2] for r in references]
    if not pts:
        lo, hi = np.zeros(2), np.ones(2)
    else:
        arr = np.array(pts)
        lo = arr.min(axis=0) - 0.5
        hi = arr.max(axis=0) + 0.5
    span = float(max(hi[0] - lo[0], hi[1] - lo[1], 1e-9))
    scale = (size - 40) / span

    def sx(p):
        return 20 + (float(p[0]) - lo[0]) * scale

    def sy(p):
        return size - 20 - (float(p[1]) - lo[1]) * scale

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">',
             f'<rect width="{size}" height="{size}" fill="white"/>']
    for d in detections:
        parts.append(f'<circle cx="{sx(d.position):.1f}" cy="{sy(d.position):.1f}" '
                     f'r="2" fill="#1f77b4" fill-opacity="0.45"/>')
    for r in references:
        p = np.asarray(r[0], dtype=float)
        color = "#2ca02c" if r[2] else "#7f7f7f"
        parts.append(f'<rect x="{sx(p) - 5:.1f}" y="{sy(p) - 5:.1f}" width="10" height="10" '
                     f'fill="none" stroke="{color}" stroke-width="1.5"/>')
    for c in clusters:
        x, y = sx(c.center), sy(c.center)
        parts.append(f'<path d="M {x - 5:.1f} {y:.1f} H {x + 5:.1f} M {x:.1f} {y - 5:.1f} '
                     f'V {y + 5:.1f}" stroke="#d62728" stroke-width="1.5"/>')
        parts.append(f'<text x="{x + 6:.1f}" y="{y - 6:.1f}" font-size="9" '
                     f'fill="#d62728">{c.winning_model}</text>')
    parts.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(parts) + "\n")
