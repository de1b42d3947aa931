"""Seeded degradation-tree simulator and synthetic observation model.

Trees are emitted as operation manifests (no pixels). Every tree draws from its
own RNG stream derived from ``(master seed, source_id)``, so generating trees in
any order or in parallel gives the same result.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from .calibration import ClassCoefficients
from .errors import InputError
from .types import Dataset, ImageFormat, InstanceMeta, InstanceRecord, Label, QuerySet

MANIFEST_SCHEMA = "quadcal.tree-manifest"
MANIFEST_SCHEMA_VERSION = 1

_STREAM_PURPOSE = {"tree": 1, "obs": 2, "avail": 3, "random": 4, "split": 5}


def rng_stream(seed: int, source_id: str = "", purpose: str = "tree", *extra: int) -> np.random.Generator:
    """Independent generator keyed by (seed, source_id, purpose, *extra)."""
    digest = hashlib.sha256(source_id.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence([int(seed), *words, _STREAM_PURPOSE[purpose], *extra]))


class OpKind(str, enum.Enum):
    CROP = "CROP"
    RESIZE = "RESIZE"
    COMPRESS = "COMPRESS"


@dataclass(frozen=True)
class CropParams:
    axis: str  # "W" or "H"
    keep_fraction: float
    offset_fraction: float


@dataclass(frozen=True)
class ResizeParams:
    short_side: int
    backend_tag: str  # LIB_A / LIB_B
    interpolation: str  # BILINEAR / BICUBIC / LANCZOS


@dataclass(frozen=True)
class CompressParams:
    format: str  # JPEG / WEBP
    qf: int
    encoder_tag: Optional[str]  # ENC_A / ENC_B for JPEG; None for WEBP


@dataclass(frozen=True)
class DegradationOp:
    kind: OpKind
    crop: Optional[CropParams] = None
    resize: Optional[ResizeParams] = None
    compress: Optional[CompressParams] = None

    def __post_init__(self):
        active = {OpKind.CROP: self.crop, OpKind.RESIZE: self.resize, OpKind.COMPRESS: self.compress}
        for kind, params in active.items():
            if (params is not None) != (kind == self.kind):
                raise InputError(f"{self.kind.value} op must populate exactly its own parameters")

    @property
    def params(self):
        return {OpKind.CROP: self.crop, OpKind.RESIZE: self.resize, OpKind.COMPRESS: self.compress}[self.kind]

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "params": dict(vars(self.params))}

    @classmethod
    def from_dict(cls, d: dict) -> "DegradationOp":
        kind = OpKind(d["kind"])
        ptype = {OpKind.CROP: CropParams, OpKind.RESIZE: ResizeParams, OpKind.COMPRESS: CompressParams}[kind]
        return cls(kind, **{kind.value.lower(): ptype(**d["params"])})


def _triangular_qf(lo=50, hi=100, mode=88):
    qf = np.arange(lo, hi + 1)
    w = np.where(qf <= mode, (qf - lo) / (mode - lo), (hi - qf) / (hi - mode))
    keep = w > 0
    return tuple(int(v) for v in qf[keep]), tuple(float(v) for v in w[keep] / w[keep].sum())


_DEFAULT_QF = _triangular_qf()


@dataclass(frozen=True)
class PipelineConfig:
    p_crop: float = 0.5
    p_resize: float = 0.6
    p_compress: float = 0.95
    keep_range: tuple[float, float] = (0.6, 0.999)
    short_side_range: tuple[int, int] = (256, 2048)
    webp_fraction: float = 0.15
    qf_values: tuple[int, ...] = _DEFAULT_QF[0]
    qf_probs: tuple[float, ...] = _DEFAULT_QF[1]

    def __post_init__(self):
        for name in ("p_crop", "p_resize", "p_compress", "webp_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InputError(f"{name} must be a probability")
        if len(self.qf_values) != len(self.qf_probs) or not self.qf_values:
            raise InputError("qf_values and qf_probs must be non-empty and the same length")
        if any(not 1 <= v <= 100 for v in self.qf_values):
            raise InputError("qf values must lie in [1, 100]")
        if abs(sum(self.qf_probs) - 1.0) > 1e-9 or min(self.qf_probs) < 0:
            raise InputError("qf_probs must be a probability vector")


@dataclass(frozen=True)
class TreeConfig:
    branching: tuple[int, ...] = (4, 2, 2, 2, 2)
    clean_size: tuple[int, int] = (4288, 2848)

    @property
    def depth(self) -> int:
        return len(self.branching)

    def level_sizes(self) -> list[int]:
        sizes, n = [], 1
        for b in self.branching:
            n *= b
            sizes.append(n)
        return sizes

    @property
    def n_nodes(self) -> int:
        return sum(self.level_sizes())


@dataclass(frozen=True)
class SeverityWeights:
    crop: float = 0.4
    resize: float = 0.06
    compress: float = 0.4

    def __post_init__(self):
        for v in (self.crop, self.resize, self.compress):
            if not math.isfinite(v) or v < 0:
                raise InputError("severity weights must be finite and non-negative")


def op_intensity(op: DegradationOp) -> float:
    if op.kind == OpKind.CROP:
        return 1.0 - op.crop.keep_fraction
    if op.kind == OpKind.RESIZE:
        return abs(math.log2(op.resize.short_side / 1024))
    return (100 - op.compress.qf) / 100


def op_severity(op: DegradationOp, w: SeverityWeights) -> float:
    weight = {OpKind.CROP: w.crop, OpKind.RESIZE: w.resize, OpKind.COMPRESS: w.compress}[op.kind]
    return weight * op_intensity(op)


def sample_pipelines(rng: np.random.Generator, n: int, cfg: PipelineConfig = PipelineConfig()) -> list[list[DegradationOp]]:
    """Draw ``n`` independent CROP?/RESIZE?/COMPRESS? pipelines.

    Every candidate parameter is drawn whether or not its op is included, so the
    number of values consumed from ``rng`` depends only on ``n``.
    """
    u = rng.random((n, 3))
    crop_axis = rng.integers(0, 2, n)
    keep = rng.uniform(cfg.keep_range[0], cfg.keep_range[1], n)
    offset = rng.random(n)
    short = rng.integers(cfg.short_side_range[0], cfg.short_side_range[1] + 1, n)
    backend = rng.integers(0, 2, n)
    interp = rng.integers(0, 3, n)
    webp = rng.random(n) < cfg.webp_fraction
    qf = rng.choice(np.asarray(cfg.qf_values), size=n, p=np.asarray(cfg.qf_probs))
    encoder = rng.integers(0, 2, n)

    out = []
    for i in range(n):
        ops = []
        if u[i, 0] < cfg.p_crop:
            ops.append(DegradationOp(OpKind.CROP, crop=CropParams(
                "WH"[crop_axis[i]], float(keep[i]), float(offset[i]))))
        if u[i, 1] < cfg.p_resize:
            ops.append(DegradationOp(OpKind.RESIZE, resize=ResizeParams(
                int(short[i]), ("LIB_A", "LIB_B")[backend[i]],
                ("BILINEAR", "BICUBIC", "LANCZOS")[interp[i]])))
        if u[i, 2] < cfg.p_compress:
            fmt = "WEBP" if webp[i] else "JPEG"
            ops.append(DegradationOp(OpKind.COMPRESS, compress=CompressParams(
                fmt, int(qf[i]), None if webp[i] else ("ENC_A", "ENC_B")[encoder[i]])))
        out.append(ops)
    return out


def sample_pipeline(rng: np.random.Generator, cfg: PipelineConfig = PipelineConfig()) -> list[DegradationOp]:
    return sample_pipelines(rng, 1, cfg)[0]


@dataclass(frozen=True)
class TreeNode:
    node_id: str
    parent_id: Optional[str]
    level: int
    ops_from_parent: tuple[DegradationOp, ...]
    cumulative_severity: float

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "parent_id": self.parent_id,
            "level": self.level,
            "cumulative_severity": self.cumulative_severity,
            "ops": [op.to_dict() for op in self.ops_from_parent],
        }


@dataclass(frozen=True)
class DegradationTree:
    source_id: str
    nodes: tuple[TreeNode, ...]
    seed: int
    label: Optional[Label] = None
    config: TreeConfig = field(default_factory=TreeConfig)

    @property
    def depth(self) -> int:
        return self.config.depth

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    @property
    def near_duplicates(self) -> tuple[TreeNode, ...]:
        return self.nodes[1:]

    def level_sizes(self) -> list[int]:
        counts = [0] * self.depth
        for n in self.near_duplicates:
            counts[n.level - 1] += 1
        return counts

    def path(self, node: TreeNode) -> list[TreeNode]:
        """Nodes from the first level down to ``node`` (root excluded)."""
        by_id = {n.node_id: n for n in self.nodes}
        chain = []
        while node.parent_id is not None:
            chain.append(node)
            node = by_id[node.parent_id]
        return chain[::-1]

    def to_dict(self) -> dict:
        return {
            "schema": MANIFEST_SCHEMA,
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "source_id": self.source_id,
            "label": None if self.label is None else self.label.name.lower(),
            "seed": self.seed,
            "depth": self.depth,
            "branching": list(self.config.branching),
            "clean_size": list(self.config.clean_size),
            "nodes": [n.to_dict() for n in self.nodes],
            "edges": [[n.parent_id, n.node_id] for n in self.near_duplicates],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "DegradationTree":
        if d.get("schema") != MANIFEST_SCHEMA:
            raise InputError("not a tree manifest")
        nodes = tuple(
            TreeNode(n["node_id"], n["parent_id"], n["level"],
                     tuple(DegradationOp.from_dict(o) for o in n["ops"]), n["cumulative_severity"])
            for n in d["nodes"]
        )
        label = None if d.get("label") is None else Label.parse(d["label"])
        cfg = TreeConfig(tuple(d["branching"]), tuple(d["clean_size"]))
        return cls(d["source_id"], nodes, d["seed"], label, cfg)


def generate_tree(
    source_id: str,
    label: Optional[Label],
    seed: int,
    config: TreeConfig = TreeConfig(),
    pipeline: PipelineConfig = PipelineConfig(),
    weights: SeverityWeights = SeverityWeights(),
) -> DegradationTree:
    """Build one degradation tree; nodes are listed level by level, root first."""
    rng = rng_stream(seed, source_id, "tree")
    pipelines = iter(sample_pipelines(rng, config.n_nodes, pipeline))
    root = TreeNode("L0-000", None, 0, (), 0.0)
    nodes = [root]
    frontier = [root]
    for level, b in enumerate(config.branching, start=1):
        nxt = []
        for parent in frontier:
            for _ in range(b):
                ops = tuple(next(pipelines))
                sev = parent.cumulative_severity + sum(op_severity(op, weights) for op in ops)
                node = TreeNode(f"L{level}-{len(nxt):03d}", parent.node_id, level, ops, sev)
                nxt.append(node)
        nodes.extend(nxt)
        frontier = nxt
    return DegradationTree(source_id, tuple(nodes), seed, label, config)


@dataclass(frozen=True)
class ObservationModelConfig:
    """Ground truth for the synthetic (quality, logit) generator.

    Qualities are ``q_clean`` minus the cumulative severity plus noise, clamped
    to ``[0, q_clean]``; the class coefficients are evaluated at ``q / q_clean``.
    """

    true_real: ClassCoefficients = ClassCoefficients(-0.8, -0.2, -1.5, 1.5)
    true_fake: ClassCoefficients = ClassCoefficients(1.2, -0.5, -1.5, 1.5)
    q_clean: float = 1.0
    severity_weights: SeverityWeights = SeverityWeights()
    quality_noise_sd: float = 0.05
    source_offset_sd: float = 0.0
    start_time: float = 1.6e9
    mean_repost_delay: float = 86400.0

    def __post_init__(self):
        if not math.isfinite(self.q_clean) or self.q_clean <= 0:
            raise InputError("q_clean must be finite and positive")
        for name in ("quality_noise_sd", "source_offset_sd"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise InputError(f"{name} must be finite and non-negative")

    def coefficients(self, label: Label) -> ClassCoefficients:
        return self.true_fake if label == Label.FAKE else self.true_real


def _node_meta(tree: DegradationTree):
    """Width, height, last-codec format and QF for every non-root node."""
    state = {tree.root.node_id: (tree.config.clean_size[0], tree.config.clean_size[1], ImageFormat.PNG, None)}
    out = []
    for node in tree.near_duplicates:
        w, h, fmt, qf = state[node.parent_id]
        for op in node.ops_from_parent:
            if op.kind == OpKind.CROP:
                if op.crop.axis == "W":
                    w = max(1, round(w * op.crop.keep_fraction))
                else:
                    h = max(1, round(h * op.crop.keep_fraction))
            elif op.kind == OpKind.RESIZE:
                scale = op.resize.short_side / min(w, h)
                w, h = max(1, round(w * scale)), max(1, round(h * scale))
            else:
                fmt, qf = ImageFormat(op.compress.format), op.compress.qf
        state[node.node_id] = (w, h, fmt, qf)
        out.append(state[node.node_id])
    return out


def simulate_observations(
    tree: DegradationTree,
    label: Label,
    cfg: ObservationModelConfig = ObservationModelConfig(),
    rng: Optional[np.random.Generator] = None,
) -> list[InstanceRecord]:
    """Draw one (quality, logit) record per non-root node of ``tree``."""
    if rng is None:
        rng = rng_stream(tree.seed, tree.source_id, "obs")
    label = Label(label)
    nodes = tree.near_duplicates
    n = len(nodes)
    sev = {tree.root.node_id: 0.0}
    for node in nodes:
        sev[node.node_id] = sev[node.parent_id] + sum(
            op_severity(op, cfg.severity_weights) for op in node.ops_from_parent)
    severity = np.array([sev[node.node_id] for node in nodes])

    noise = rng.normal(0.0, 1.0, n) * cfg.quality_noise_sd
    q = np.clip(cfg.q_clean - severity + noise, 0.0, cfg.q_clean)
    qn = q / cfg.q_clean
    c = cfg.coefficients(label)
    mu = c.a * qn + c.b + (0.0 if c.a2 is None else c.a2 * qn * qn)
    sd = np.exp(0.5 * (c.alpha * qn + c.beta))
    logits = mu + sd * rng.normal(0.0, 1.0, n)
    # shared by every instance of the source, so instances are not conditionally independent
    logits += cfg.source_offset_sd * rng.normal()

    delays = rng.exponential(cfg.mean_repost_delay, n)
    ts = {tree.root.node_id: cfg.start_time}
    for node, d in zip(nodes, delays):
        ts[node.node_id] = ts[node.parent_id] + float(d)

    records = []
    for i, (node, (w, h, fmt, qf)) in enumerate(zip(nodes, _node_meta(tree))):
        meta = InstanceMeta(width=w, height=h, jpeg_qf=qf, format=fmt,
                            timestamp=round(ts[node.node_id], 3), tree_level=node.level)
        records.append(InstanceRecord(tree.source_id, node.node_id, float(logits[i]), float(q[i]), label, meta))
    return records


def subsample_availability(records: Sequence[InstanceRecord], n_available: int,
                           rng: np.random.Generator) -> list[InstanceRecord]:
    """Uniform random subset of ``n_available`` records, kept in their original order."""
    if not 1 <= n_available <= len(records):
        raise InputError(f"n_available must be in [1, {len(records)}], got {n_available}")
    if n_available == len(records):
        return list(records)
    idx = np.sort(rng.choice(len(records), size=n_available, replace=False))
    return [records[i] for i in idx]


def source_ids(n_real: int, n_fake: int) -> list[tuple[str, Label]]:
    width = max(4, len(str(max(n_real, n_fake, 1))))
    return ([(f"real-{i:0{width}d}", Label.REAL) for i in range(n_real)]
            + [(f"fake-{i:0{width}d}", Label.FAKE) for i in range(n_fake)])


def simulate_dataset(
    n_real: int,
    n_fake: int,
    seed: int,
    obs: ObservationModelConfig = ObservationModelConfig(),
    tree_config: TreeConfig = TreeConfig(),
    pipeline: PipelineConfig = PipelineConfig(),
    keep_trees: bool = False,
) -> tuple[Dataset, list[DegradationTree]]:
    """Simulate one independent tree per source and its observations."""
    sets, trees = [], []
    for sid, label in source_ids(n_real, n_fake):
        tree = generate_tree(sid, label, seed, tree_config, pipeline, obs.severity_weights)
        recs = simulate_observations(tree, label, obs)
        sets.append(QuerySet(sid, tuple(recs), label))
        if keep_trees:
            trees.append(tree)
    return Dataset(tuple(sets)), trees


def observation_config_from_dict(d: dict[str, Any]) -> ObservationModelConfig:
    kw = dict(d)
    for key in ("true_real", "true_fake"):
        if key in kw:
            kw[key] = ClassCoefficients(**kw[key])
    if "severity_weights" in kw:
        kw["severity_weights"] = SeverityWeights(**kw["severity_weights"])
    return ObservationModelConfig(**kw)
