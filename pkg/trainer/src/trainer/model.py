"""Graph attention regression model whose parameterization mirrors the
weight-bundle tensor layout exactly, so exported weights reproduce the
inference engine's forward pass."""
from __future__ import annotations

import math
from typing import Dict

import torch
from torch import nn
from torch.nn import functional as F

LEAKY_SLOPE = 0.2

DEFAULT_DESCRIPTOR = {
    "conv_layers": 3,
    "conv_channels": 32,
    "heads": 12,
    "linear_layers": 3,
    "linear_channels": 64,
    "activation": "ELU",
    "final": "Sigmoid",
    "in_features": 11,
}


def _segment_softmax(scores: torch.Tensor, index: torch.Tensor,
                     n: int) -> torch.Tensor:
    """Softmax over groups along dim 1; scores: (heads, E) or (E,)."""
    shaped = scores.dim() == 2
    s = scores if shaped else scores.unsqueeze(0)
    smax = s.new_full((s.shape[0], n), float("-inf"))
    smax = smax.index_reduce(1, index, s, "amax", include_self=True)
    ex = torch.exp(s - smax[:, index])
    denom = s.new_zeros((s.shape[0], n)).index_add(1, index, ex)
    out = ex / denom[:, index]
    return out if shaped else out.squeeze(0)


class GatConv(nn.Module):
    """Multi-head attention over incoming edges (self-loops supplied by the
    batch), heads concatenated, shared bias, ELU."""

    def __init__(self, in_dim: int, channels: int, heads: int,
                 attention_dropout: float = 0.0):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(heads, in_dim, channels))
        self.att_dst = nn.Parameter(torch.empty(heads, channels))
        self.att_src = nn.Parameter(torch.empty(heads, channels))
        self.bias = nn.Parameter(torch.zeros(heads * channels))
        self.attention_dropout = attention_dropout
        gain = math.sqrt(2.0 / (in_dim + channels))
        nn.init.normal_(self.weight, 0.0, gain)
        nn.init.normal_(self.att_dst, 0.0, math.sqrt(2.0 / (channels + 1)))
        nn.init.normal_(self.att_src, 0.0, math.sqrt(2.0 / (channels + 1)))

    def forward(self, h: torch.Tensor, src: torch.Tensor,
                dst: torch.Tensor) -> torch.Tensor:
        n = h.shape[0]
        p = torch.einsum("nf,hfc->hnc", h, self.weight)  # (heads, N, C)
        s_dst = (p * self.att_dst[:, None, :]).sum(-1)  # (heads, N)
        s_src = (p * self.att_src[:, None, :]).sum(-1)
        e = F.leaky_relu(s_dst[:, dst] + s_src[:, src], LEAKY_SLOPE)
        alpha = _segment_softmax(e, dst, n)  # (heads, E)
        if self.training and self.attention_dropout > 0:
            alpha = F.dropout(alpha, self.attention_dropout)
        msg = p[:, src] * alpha.unsqueeze(-1)
        out = p.new_zeros(p.shape).index_add(1, dst, msg)
        heads, _, ch = out.shape
        out = out.permute(1, 0, 2).reshape(n, heads * ch) + self.bias
        return F.elu(out)


class AttentionalAggregation(nn.Module):
    """Gate-softmax weighted sum of transformed node features per graph."""

    def __init__(self, hidden: int):
        super().__init__()
        self.gate_weight = nn.Parameter(torch.empty(hidden))
        self.gate_bias = nn.Parameter(torch.zeros(1))
        self.transform_weight = nn.Parameter(torch.empty(hidden, hidden))
        self.transform_bias = nn.Parameter(torch.zeros(hidden))
        nn.init.normal_(self.gate_weight, 0.0, math.sqrt(2.0 / (hidden + 1)))
        nn.init.normal_(self.transform_weight, 0.0, math.sqrt(1.0 / hidden))

    def forward(self, h: torch.Tensor, graph_index: torch.Tensor,
                n_graphs: int) -> torch.Tensor:
        scores = h @ self.gate_weight + self.gate_bias
        w = _segment_softmax(scores, graph_index, n_graphs)
        transformed = h @ self.transform_weight.T + self.transform_bias
        pooled = transformed.new_zeros((n_graphs, h.shape[1]))
        return pooled.index_add(0, graph_index, transformed * w[:, None])


class CeffRatioModel(nn.Module):
    """Stacked attention layers, attentional readout, MLP head, sigmoid."""

    def __init__(self, descriptor: Dict = None, layer_dropout: float = 0.0,
                 attention_dropout: float = 0.0):
        super().__init__()
        desc = dict(DEFAULT_DESCRIPTOR if descriptor is None else descriptor)
        self.descriptor = desc
        heads, ch = desc["heads"], desc["conv_channels"]
        hidden = heads * ch
        self.layer_dropout = layer_dropout
        convs = []
        in_dim = desc["in_features"]
        for _ in range(desc["conv_layers"]):
            convs.append(GatConv(in_dim, ch, heads, attention_dropout))
            in_dim = hidden
        self.convs = nn.ModuleList(convs)
        self.agg = AttentionalAggregation(hidden)
        dims = [hidden] + [desc["linear_channels"]] * (desc["linear_layers"] - 1) + [1]
        self.mlps = nn.ModuleList(
            nn.Linear(dims[k], dims[k + 1]) for k in range(desc["linear_layers"])
        )
        for lin in self.mlps:
            nn.init.normal_(lin.weight, 0.0, math.sqrt(2.0 / sum(lin.weight.shape)))
            nn.init.zeros_(lin.bias)

    def forward(self, x: torch.Tensor, src: torch.Tensor, dst: torch.Tensor,
                graph_index: torch.Tensor, n_graphs: int) -> torch.Tensor:
        h = x
        for conv in self.convs:
            h = conv(h, src, dst)
            if self.training and self.layer_dropout > 0:
                h = F.dropout(h, self.layer_dropout)
        z = self.agg(h, graph_index, n_graphs)
        for k, lin in enumerate(self.mlps):
            z = lin(z)
            if k < len(self.mlps) - 1:
                z = F.elu(z)
        return torch.sigmoid(z[:, 0])


def parameter_count(descriptor: Dict) -> int:
    """Closed-form parameter count implied by the descriptor."""
    heads, ch = descriptor["heads"], descriptor["conv_channels"]
    hidden = heads * ch
    total = 0
    in_dim = descriptor["in_features"]
    for _ in range(descriptor["conv_layers"]):
        total += heads * in_dim * ch  # per-head projections
        total += 2 * heads * ch  # attention vectors
        total += hidden  # bias
        in_dim = hidden
    total += hidden + 1 + hidden * hidden + hidden  # aggregation
    dims = [hidden] + [descriptor["linear_channels"]] * (
        descriptor["linear_layers"] - 1
    ) + [1]
    for k in range(descriptor["linear_layers"]):
        total += dims[k] * dims[k + 1] + dims[k + 1]
    return total
