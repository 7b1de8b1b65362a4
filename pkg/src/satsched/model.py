"""Learned satellite-task matcher: constraint head, encoder-decoder, losses.

Architecture, per timestep:

1. A pairwise constraint head ``C`` maps every concatenated (satellite,
   task) feature pair to a feasibility logit ``s_hat`` and a predicted wait
   ``t_hat`` (seconds until useful imaging could begin).
2. Task features (plus a sinusoidal timestep embedding and a status-code
   lookup) are encoded by a self-attention stack into task summaries h_T;
   no positional encoding is used, so task order carries no information.
3. Satellite tokens are decoded against h_T with cross-attention whose
   additive mask is ``M = w * s_hat + b`` (w, b trainable scalars starting
   at 0, so the mask is initially inert and bit-transparent).
4. Assignment scores ``A = h_S @ [h_phi; h_T]^T`` of shape
   (N_S, 1 + N_T); column 0 scores the null action via the trainable
   vector h_phi.

Everything runs batched over a leading timestep axis.  Attention is
implemented directly (projections + softmax) rather than with a fused
library block so the mask path is auditable: adding a zero mask is a
bit-exact no-op.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .features import D_SAT, D_TASK, N_SENSOR_CODES, N_STATUS_CODES

__all__ = [
    "MatcherConfig",
    "toy_config",
    "full_scale_config",
    "Matcher",
    "loss_feasibility",
    "loss_time",
    "loss_assignment",
    "total_loss",
    "infer_assignment",
    "torch_time_embedding",
]


@dataclass(frozen=True)
class MatcherConfig:
    width: int = 64
    depth: int = 2
    heads: int = 4
    time_dim: int = 16
    constraint_hidden: int = 64
    ffn_mult: int = 4
    d_sat: int = D_SAT
    d_task: int = D_TASK
    tau_s: float = 0.5

    def __post_init__(self) -> None:
        if self.width % self.heads != 0:
            raise ValueError("width must be divisible by heads")
        if self.time_dim % 2 != 0 or self.time_dim >= self.width:
            raise ValueError("time_dim must be even and smaller than width")


def toy_config(**over) -> MatcherConfig:
    """Desk-scale default: trains in seconds on a CPU."""
    return MatcherConfig(**over)


def full_scale_config() -> MatcherConfig:
    """The published operating point (width 512, depth 12, 16 heads)."""
    return MatcherConfig(width=512, depth=12, heads=16, time_dim=64,
                         constraint_hidden=512)


def torch_time_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Batched interleaved sin/cos ladder; mirrors features.time_embedding."""
    if dim % 2 != 0:
        raise ValueError(f"time embedding dim must be even, got {dim}")
    half = torch.arange(dim // 2, dtype=t.dtype, device=t.device)
    freq = torch.pow(
        torch.tensor(10000.0, dtype=t.dtype, device=t.device), -2.0 * half / dim
    )
    ang = t[..., None] * freq
    out = torch.empty(*t.shape, dim, dtype=t.dtype, device=t.device)
    out[..., 0::2] = torch.sin(ang)
    out[..., 1::2] = torch.cos(ang)
    return out


class TokenEmbedding(nn.Module):
    """Linear map for continuous columns + lookup for the categorical code,
    with the timestep embedding appended to reach the model width."""

    def __init__(self, d_in: int, n_codes: int, width: int, time_dim: int):
        super().__init__()
        self.core = nn.Linear(d_in, width - time_dim)
        self.lookup = nn.Embedding(n_codes, width - time_dim)
        self.time_dim = time_dim

    def forward(self, x: torch.Tensor, codes: torch.Tensor,
                t: torch.Tensor) -> torch.Tensor:
        core = self.core(x) + self.lookup(codes)
        te = torch_time_embedding(t.to(x.dtype), self.time_dim)
        te = te[:, None, :].expand(core.shape[0], core.shape[1], self.time_dim)
        return torch.cat([core, te], dim=-1)


class Attention(nn.Module):
    def __init__(self, width: int, heads: int):
        super().__init__()
        self.heads = heads
        self.dk = width // heads
        self.q = nn.Linear(width, width)
        self.k = nn.Linear(width, width)
        self.v = nn.Linear(width, width)
        self.o = nn.Linear(width, width)

    def forward(self, query: torch.Tensor, memory: torch.Tensor,
                mask: torch.Tensor | None = None) -> torch.Tensor:
        b, lq, _ = query.shape
        lk = memory.shape[1]
        q = self.q(query).view(b, lq, self.heads, self.dk).transpose(1, 2)
        k = self.k(memory).view(b, lk, self.heads, self.dk).transpose(1, 2)
        v = self.v(memory).view(b, lk, self.heads, self.dk).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.dk)
        if mask is not None:
            scores = scores + mask  # additive, broadcast over heads
        att = torch.softmax(scores, dim=-1)
        out = (att @ v).transpose(1, 2).reshape(b, lq, self.heads * self.dk)
        return self.o(out)


def _ffn(width: int, mult: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(width, mult * width), nn.GELU(), nn.Linear(mult * width, width)
    )


class EncoderBlock(nn.Module):
    def __init__(self, width: int, heads: int, ffn_mult: int):
        super().__init__()
        self.attn = Attention(width, heads)
        self.ffn = _ffn(width, ffn_mult)
        self.ln1 = nn.LayerNorm(width)
        self.ln2 = nn.LayerNorm(width)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.ln1(x + self.attn(x, x))
        return self.ln2(x + self.ffn(x))


class DecoderBlock(nn.Module):
    def __init__(self, width: int, heads: int, ffn_mult: int):
        super().__init__()
        self.self_attn = Attention(width, heads)
        self.cross_attn = Attention(width, heads)
        self.ffn = _ffn(width, ffn_mult)
        self.ln1 = nn.LayerNorm(width)
        self.ln2 = nn.LayerNorm(width)
        self.ln3 = nn.LayerNorm(width)

    def forward(self, x: torch.Tensor, memory: torch.Tensor,
                mask: torch.Tensor | None) -> torch.Tensor:
        x = self.ln1(x + self.self_attn(x, x))
        x = self.ln2(x + self.cross_attn(x, memory, mask))
        return self.ln3(x + self.ffn(x))


class ConstraintNet(nn.Module):
    """Two-hidden-layer head on each concatenated raw feature pair."""

    def __init__(self, d_sat: int, d_task: int, hidden: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(d_sat + d_task, hidden), nn.GELU(),
            nn.Linear(hidden, hidden), nn.GELU(),
            nn.Linear(hidden, 2),
        )

    def forward(self, sat: torch.Tensor, task: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        b, ns, _ = sat.shape
        nt = task.shape[1]
        pair = torch.cat(
            [
                sat[:, :, None, :].expand(b, ns, nt, sat.shape[-1]),
                task[:, None, :, :].expand(b, ns, nt, task.shape[-1]),
            ],
            dim=-1,
        )
        out = self.net(pair)
        return out[..., 0], out[..., 1]


class Matcher(nn.Module):
    def __init__(self, config: MatcherConfig = MatcherConfig()):
        super().__init__()
        self.config = config
        c = config
        self.sat_embed = TokenEmbedding(c.d_sat, N_SENSOR_CODES, c.width, c.time_dim)
        self.task_embed = TokenEmbedding(c.d_task, N_STATUS_CODES, c.width, c.time_dim)
        self.constraint = ConstraintNet(c.d_sat, c.d_task, c.constraint_hidden)
        self.encoder = nn.ModuleList(
            EncoderBlock(c.width, c.heads, c.ffn_mult) for _ in range(c.depth)
        )
        self.decoder = nn.ModuleList(
            DecoderBlock(c.width, c.heads, c.ffn_mult) for _ in range(c.depth)
        )
        self.h_phi = nn.Parameter(torch.randn(c.width) / math.sqrt(c.width))
        self.mask_w = nn.Parameter(torch.tensor(0.0))  # inert at init
        self.mask_b = nn.Parameter(torch.tensor(0.0))

    def constraint_forward(self, sat: torch.Tensor, task: torch.Tensor):
        """Feasibility logit and wait estimate for every (satellite, task)
        pair; a pure function of (params, inputs)."""
        return self.constraint(sat, task)

    def forward(
        self,
        sat: torch.Tensor,  # (B, N_S, d_sat) normalized features
        task: torch.Tensor,  # (B, N_T, d_task)
        sensor_code: torch.Tensor,  # (B, N_S) long
        status_code: torch.Tensor,  # (B, N_T) long
        t: torch.Tensor,  # (B,) timestep
        use_mask: bool = True,
    ) -> dict[str, torch.Tensor]:
        if not (torch.isfinite(sat).all() and torch.isfinite(task).all()):
            raise ValueError("non-finite feature input")
        s_hat, t_hat = self.constraint(sat, task)

        h_t = self.task_embed(task, status_code, t)
        for block in self.encoder:
            h_t = block(h_t)

        mask = None
        if use_mask:
            mask = (self.mask_w * s_hat + self.mask_b)[:, None, :, :]
        h_s = self.sat_embed(sat, sensor_code, t)
        for block in self.decoder:
            h_s = block(h_s, h_t, mask)

        null_col = self.h_phi[None, None, :].expand(h_t.shape[0], 1, -1)
        columns = torch.cat([null_col, h_t], dim=1)
        scores = h_s @ columns.transpose(1, 2)  # (B, N_S, 1 + N_T)
        return {"s_hat": s_hat, "t_hat": t_hat, "h_T": h_t, "h_S": h_s,
                "A": scores}


# -- losses --------------------------------------------------------------------


def loss_feasibility(s_hat: torch.Tensor, s_tilde: torch.Tensor) -> torch.Tensor:
    """Mean binary cross-entropy over all satellite-task pairs."""
    return F.binary_cross_entropy_with_logits(s_hat, s_tilde.to(s_hat.dtype))


def loss_time(t_hat: torch.Tensor, t_tilde: torch.Tensor,
              s_tilde: torch.Tensor) -> torch.Tensor:
    """Squared wait-time error averaged over positive pairs; 0 when none."""
    mask = s_tilde.to(t_hat.dtype)
    count = mask.sum()
    if count.item() == 0:
        return t_hat.new_zeros(())
    return (mask * (t_hat - t_tilde.to(t_hat.dtype)) ** 2).sum() / count


def loss_assignment(a_scores: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Cross-entropy over the 1 + N_T action columns, averaged over
    satellites (and any leading batch axis); target 0 is the null column."""
    n_actions = a_scores.shape[-1]
    return F.cross_entropy(
        a_scores.reshape(-1, n_actions), target.reshape(-1).long()
    )


def total_loss(l_s: torch.Tensor, l_t: torch.Tensor, l_a: torch.Tensor,
               w_s: float = 1.0, w_t: float = 1.0, w_a: float = 1.0) -> torch.Tensor:
    return w_s * l_s + w_t * l_t + w_a * l_a


# -- inference -----------------------------------------------------------------


def infer_assignment(a_scores, s_hat, tau_s: float = 0.5) -> np.ndarray:
    """Feasibility-filtered decoding of one timestep's assignment.

    Per satellite: tasks with sigmoid(s_hat) > tau_s form the feasible set;
    empty set -> null action, otherwise the feasible task with the highest
    assignment score (ties to the lowest task id).
    """
    a = np.asarray(a_scores.detach().cpu() if torch.is_tensor(a_scores) else a_scores,
                   dtype=np.float64)
    s = np.asarray(s_hat.detach().cpu() if torch.is_tensor(s_hat) else s_hat,
                   dtype=np.float64)
    if a.ndim != 2 or s.ndim != 2 or a.shape != (s.shape[0], s.shape[1] + 1):
        raise ValueError(f"shape mismatch: A {a.shape} vs s_hat {s.shape}")
    feasible = 1.0 / (1.0 + np.exp(-s)) > tau_s
    task_scores = np.where(feasible, a[:, 1:], -np.inf)
    best = np.argmax(task_scores, axis=1)  # first max = lowest task id
    any_feasible = feasible.any(axis=1)
    return np.where(any_feasible, best + 1, 0).astype(np.int64)
