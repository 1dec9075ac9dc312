"""Synthetic heterogeneous graphs with planted attribute/label correlation.

Layout mimics an author/paper/venue network: target nodes link to
"hub" nodes of the first auxiliary type, which in turn link to nodes of the
remaining auxiliary types.  Every auxiliary node belongs to a latent class
community.  A target usually links to hubs of its own class; with its
personal bridge probability it links to a hub of another class instead, so
neighbourhood attribute disparity varies from node to node.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..rng import stream
from .graph import CONTINUOUS, DISCRETE, HeteroGraph, NodeTypeInfo, fill_attributes


@dataclass
class SynthSpec:
    seed: int = 7
    num_target: int = 1200
    num_aux_types: int = 2
    classes: int = 3
    target_attr_dim: int = 64
    # 0 = no attributes (one-hot type fill); >0 = continuous attributes
    aux_attr_dims: list[int] = field(default_factory=lambda: [0, 0])
    rho: float = 0.8
    # fraction of prototype bits that carry class signal; the rest are shared
    class_signal: float = 0.25
    attr_density: float = 0.2
    # hubs per target, and nodes per class for the other auxiliary types
    hub_ratio: float = 1.0
    aux_per_class: int = 4
    # mean target->hub edges per target, hub->aux edges per hub
    densities: list[float] = field(default_factory=lambda: [3.0, 1.0])
    bridge_fraction: float = 0.3
    aux_noise: float = 0.1

    def validate(self) -> None:
        if self.classes < 1:
            raise ValueError("synth needs at least one class")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if self.num_aux_types < 1:
            raise ValueError("need at least one auxiliary node type")
        if len(self.densities) != self.num_aux_types or any(d <= 0 for d in self.densities):
            raise ValueError("one positive density per relation is required")
        if len(self.aux_attr_dims) != self.num_aux_types:
            raise ValueError("one attribute dim per auxiliary type is required")
        if not 0.0 <= self.bridge_fraction <= 1.0:
            raise ValueError("bridge_fraction must lie in [0, 1]")
        if self.num_target < self.classes:
            raise ValueError("need at least one target per class")

    def to_dict(self) -> dict:
        return asdict(self)


def _class_prototypes(rng: np.random.Generator, spec: SynthSpec) -> np.ndarray:
    d, c = spec.target_attr_dim, spec.classes
    base = rng.random(d) < spec.attr_density
    protos = np.repeat(base[None, :], c, axis=0)
    n_signal = max(1, int(round(spec.class_signal * d)))
    signal = rng.choice(d, size=n_signal, replace=False)
    protos[:, signal] = rng.random((c, n_signal)) < 0.5
    # keep prototypes pairwise distinct and nonempty
    for k in range(c):
        if not protos[k].any():
            protos[k, signal[k % n_signal]] = True
    return protos


def synth_hin(spec: SynthSpec) -> HeteroGraph:
    spec.validate()
    rng = stream(spec.seed, "synthesis")
    c = spec.classes
    nt = spec.num_target
    labels = np.arange(nt) % c
    rng.shuffle(labels)

    protos = _class_prototypes(rng, spec)
    copy = rng.random((nt, spec.target_attr_dim)) < spec.rho
    noise = rng.random((nt, spec.target_attr_dim)) < spec.attr_density
    x_target = np.where(copy, protos[labels], noise).astype(np.float64)

    # auxiliary node counts and communities
    aux_counts = [max(c, int(round(spec.hub_ratio * nt)))]
    aux_counts += [spec.aux_per_class * c] * (spec.num_aux_types - 1)
    aux_class = [np.arange(n) % c for n in aux_counts]
    for arr in aux_class:
        rng.shuffle(arr)

    offsets = np.cumsum([0, nt] + aux_counts)
    n_total = int(offsets[-1])
    node_type_of = np.concatenate([np.full(n, t) for t, n in enumerate([nt] + aux_counts)])
    local_id = np.concatenate([np.arange(n) for n in [nt] + aux_counts])

    members = [[np.flatnonzero(cls == k) for k in range(c)] for cls in aux_class]

    def pick(type_idx: int, own: int, bridge: bool) -> int:
        k = own
        if bridge and c > 1:
            k = (own + 1 + int(rng.integers(c - 1))) % c
        pool = members[type_idx][k]
        return int(offsets[type_idx + 1] + pool[rng.integers(pool.size)])

    src, dst, etype = [], [], []
    bridge_prob = np.minimum(1.0, rng.random(nt) * 2 * spec.bridge_fraction)
    for i in range(nt):
        deg = 1 + rng.poisson(spec.densities[0] - 1) if spec.densities[0] > 1 else 1
        chosen = set()
        for _ in range(deg):
            h = pick(0, labels[i], rng.random() < bridge_prob[i])
            if h not in chosen:
                chosen.add(h)
                src.append(i); dst.append(h); etype.append(0)
    for t in range(1, spec.num_aux_types):
        for h in range(aux_counts[0]):
            own = aux_class[0][h]
            deg = max(1, int(round(spec.densities[t])))
            chosen = set()
            for _ in range(deg):
                a = pick(t, own, rng.random() < spec.aux_noise)
                if a not in chosen:
                    chosen.add(a)
                    src.append(int(offsets[1] + h)); dst.append(a); etype.append(t)

    src_a, dst_a, type_a = (np.asarray(v, dtype=np.int64) for v in (src, dst, etype))
    order = np.arange(src_a.size)
    uid = np.repeat(order, 2)
    edge_src = np.empty(2 * src_a.size, dtype=np.int64)
    edge_dst = np.empty_like(edge_src)
    edge_src[0::2], edge_src[1::2] = src_a, dst_a
    edge_dst[0::2], edge_dst[1::2] = dst_a, src_a
    edge_type = np.repeat(type_a, 2)

    n_types = 1 + spec.num_aux_types
    infos = [NodeTypeInfo("target", DISCRETE, spec.target_attr_dim, True)]
    attributes = [x_target]
    for t in range(spec.num_aux_types):
        dim = spec.aux_attr_dims[t]
        name = f"aux{t}"
        if dim > 0:
            centers = rng.normal(size=(c, dim))
            x = centers[aux_class[t]] * 0.5 + rng.normal(size=(aux_counts[t], dim))
            infos.append(NodeTypeInfo(name, CONTINUOUS, dim, True))
        else:
            x = fill_attributes(t + 1, aux_counts[t], n_types, n_types)
            infos.append(NodeTypeInfo(name, CONTINUOUS, n_types, False))
        attributes.append(x)

    edge_names = ["target-aux0"] + [f"aux0-aux{t}" for t in range(1, spec.num_aux_types)]
    return HeteroGraph(
        node_types=infos, edge_type_names=edge_names, node_type_of=node_type_of,
        local_id=local_id, edge_src=edge_src, edge_dst=edge_dst, edge_type_of=edge_type,
        edge_uid=uid, attributes=attributes, target_type=0, num_classes=c,
        labels=labels.astype(np.int64), labeled=np.ones(nt, dtype=bool), name=f"synth-{spec.seed}",
    )
