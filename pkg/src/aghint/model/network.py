"""The AGHINT network: projection, AGM layers, AGT transformer, classifier."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import ndiff as nd
from ..hin.graph import HeteroGraph
from ..ndiff import Tensor
from ..pathsample import GuidanceSets
from ..rng import stream, sub_seed
from .config import ModelConfig
from .layers import (
    NO_DROPOUT,
    AGTLayerParams,
    Dropout,
    MessageGraph,
    SequenceBatch,
    agm_layer,
    agt_forward,
    project_features,
)


class GuidanceMismatchError(ValueError):
    pass


def check_guidance(graph: HeteroGraph, guidance: GuidanceSets, config: ModelConfig) -> None:
    if guidance.graph_hash != graph.content_hash():
        raise GuidanceMismatchError(
            f"guidance was built for graph {guidance.graph_hash}, not {graph.content_hash()}")
    if guidance.params != config.guidance_params():
        raise GuidanceMismatchError(
            f"guidance params {guidance.params} do not match model config {config.guidance_params()}")


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def init_params(graph: HeteroGraph, config: ModelConfig, seed: int) -> dict[str, Tensor]:
    """Parameters keyed by name; only the sublayers the variant uses are created."""
    config.validate()
    rng = stream(seed, "init")
    d0, dh = config.d0, config.d_hidden
    raw: dict[str, np.ndarray] = {}
    for t, info in enumerate(graph.node_types):
        raw[f"proj.{t}.W"] = _glorot(rng, info.attr_dim, d0)
        raw[f"proj.{t}.b"] = np.zeros(d0)
    if config.variant in ("no_agm",):
        if d0 != dh:
            raw["skip.W"] = _glorot(rng, d0, dh)
    else:
        for layer in range(config.L_M):
            d_in = d0 if layer == 0 else dh
            raw[f"agm.{layer}.W"] = _glorot(rng, d_in, dh)
            raw[f"agm.{layer}.a_dst"] = _glorot(rng, 2 * dh, config.heads_M, (dh, config.heads_M))
            raw[f"agm.{layer}.a_src"] = _glorot(rng, 2 * dh, config.heads_M, (dh, config.heads_M))
    if config.variant != "no_agt":
        dk = dh // config.heads_T
        for layer in range(config.L_T):
            for h in range(config.heads_T):
                for name in ("Wq", "Wk", "Wv"):
                    raw[f"agt.{layer}.{h}.{name}"] = _glorot(rng, dh, dk)
            raw[f"agt.{layer}.Wo"] = _glorot(rng, dk * config.heads_T, dh)
            raw[f"agt.{layer}.ln_gain"] = np.ones(dh)
            raw[f"agt.{layer}.ln_bias"] = np.zeros(dh)
            if config.ffn_in_agt:
                raw[f"agt.{layer}.ffn.W1"] = _glorot(rng, dh, dh)
                raw[f"agt.{layer}.ffn.b1"] = np.zeros(dh)
                raw[f"agt.{layer}.ffn.W2"] = _glorot(rng, dh, dh)
                raw[f"agt.{layer}.ffn.b2"] = np.zeros(dh)
                raw[f"agt.{layer}.ffn.ln_gain"] = np.ones(dh)
                raw[f"agt.{layer}.ffn.ln_bias"] = np.zeros(dh)
    raw["cls.W"] = _glorot(rng, dh, graph.num_classes)
    raw["cls.b"] = np.zeros(graph.num_classes)
    return {name: nd.parameter(value, name=name) for name, value in raw.items()}


def agt_layer_params(params: dict[str, Tensor], config: ModelConfig, layer: int) -> AGTLayerParams:
    pre = f"agt.{layer}."
    heads = range(config.heads_T)
    ffn = None
    if config.ffn_in_agt:
        ffn = tuple(params[pre + "ffn." + k] for k in ("W1", "b1", "W2", "b2", "ln_gain", "ln_bias"))
    return AGTLayerParams(
        Wq=[params[f"{pre}{h}.Wq"] for h in heads],
        Wk=[params[f"{pre}{h}.Wk"] for h in heads],
        Wv=[params[f"{pre}{h}.Wv"] for h in heads],
        Wo=params[pre + "Wo"], ln_gain=params[pre + "ln_gain"], ln_bias=params[pre + "ln_bias"],
        ffn=ffn,
    )


@dataclass
class ModelInputs:
    """Constant per-graph inputs, prepared once and reused every step."""

    features: list[Tensor]
    type_nodes: list[np.ndarray]
    mg: MessageGraph
    edge_w: np.ndarray
    batch: SequenceBatch
    targets: np.ndarray
    num_nodes: int


def prepare_inputs(graph: HeteroGraph, guidance: GuidanceSets, config: ModelConfig,
                   message_weights: Optional[np.ndarray] = None) -> ModelInputs:
    """Index structures for ``config.variant``.

    ``message_weights`` overrides the guidance weights (used to compare the
    decayed path against an all-ones path).
    """
    check_guidance(graph, guidance, config)
    mg = MessageGraph.from_graph(graph)
    if message_weights is None:
        message_weights = guidance.message_weights
    if config.variant == "no_ag":
        message_weights = np.ones(graph.edge_count)
        sequences = guidance.hop_sequences
    else:
        sequences = guidance.attr_sequences
    if len(message_weights) != graph.edge_count:
        raise GuidanceMismatchError("message weight vector length differs from edge count")
    features = [nd.Tensor(x) for x in graph.attributes]
    return ModelInputs(features, list(graph.type_nodes), mg, mg.edge_weights(message_weights),
                       SequenceBatch.from_sequences(sequences), graph.targets, graph.node_count)


def model_forward(inputs: ModelInputs, params: dict[str, Tensor], config: ModelConfig,
                  dropout: Dropout = NO_DROPOUT) -> Tensor:
    """Target logits (|targets| x classes) for the configured variant."""
    n_types = len(inputs.features)
    H = project_features(inputs.features, inputs.type_nodes,
                         [params[f"proj.{t}.W"] for t in range(n_types)],
                         [params[f"proj.{t}.b"] for t in range(n_types)], inputs.num_nodes)
    H = dropout(H)
    if config.variant == "no_agm":
        if "skip.W" in params:
            H = nd.matmul(H, params["skip.W"])
    else:
        for layer in range(config.L_M):
            H = agm_layer(H, inputs.mg, inputs.edge_w, params[f"agm.{layer}.W"],
                          params[f"agm.{layer}.a_dst"], params[f"agm.{layer}.a_src"],
                          slope=config.slope, dropout=dropout)
    if config.variant == "no_agt":
        H_final = nd.gather_rows(H, inputs.targets)
    else:
        layers = [agt_layer_params(params, config, layer) for layer in range(config.L_T)]
        H_final = agt_forward(H, inputs.batch, layers, eps=config.ln_eps, dropout=dropout)
    return nd.add(nd.matmul(H_final, params["cls.W"]), params["cls.b"])


class AGHINT:
    """Parameters plus prepared inputs for one graph and guidance set."""

    def __init__(self, graph: HeteroGraph, guidance: GuidanceSets, config: ModelConfig,
                 seed: int = 0, params: Optional[dict[str, Tensor]] = None,
                 message_weights: Optional[np.ndarray] = None):
        config.validate()
        if config.multi_label != graph.multi_label:
            raise ValueError("config.multi_label must match the dataset")
        self.config = config
        self.seed = seed
        self.inputs = prepare_inputs(graph, guidance, config, message_weights)
        self.params = params if params is not None else init_params(graph, config, seed)
        self._dropout_seed = sub_seed(seed, "dropout")

    def parameters(self) -> list[Tensor]:
        return [self.params[k] for k in sorted(self.params)]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def forward(self, training: bool = False, step: int = 0) -> Tensor:
        drop = Dropout(self.config.dropout, self._dropout_seed, step, training)
        return model_forward(self.inputs, self.params, self.config, drop)

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for k, v in state.items():
            self.params[k].data[...] = v
