"""Tiny pre-norm transformer shared by the reconstruction and i2t objectives.

One trunk serves both tasks. For reconstruction the input is the hint, text,
and corrupted-patch segments concatenated under the three-block layout mask;
predictions are read at the patch positions, either as embedding regressions
(continuous mode) or as code logits (discrete mode). For image-to-text
scoring the input is the clean patches followed by question and answer codes
under a plain causal mask, trained teacher-forced.

The patch placeholder is a trainable parameter substituted in-graph at the
masked rows, so reconstruction gradient reaches it. Everything is float64 on
CPU: small enough to be fast, precise enough for central-difference gradient
checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..errors import InputError, ParameterError
from ..supervision import AttentionMask, CorruptedSequence
from ..textfilter import TokenSequence

__all__ = ["ToyModelConfig", "ToyModel", "sinusoid_encoding"]

_MODES = ("continuous", "discrete")


@dataclass
class ToyModelConfig:
    """Shape and mode of the toy transformer.

    ``dim`` must be divisible by ``n_heads``. ``vocab_size`` bounds the code
    indices used by discrete reconstruction and by the i2t head. ``seed``
    fixes the parameter initialization bit for bit. The defaults stay under
    5000 parameters, the size class the gradient check is meant for.
    """

    dim: int = 12
    n_layers: int = 2
    n_heads: int = 2
    vocab_size: int = 16
    mode: str = "continuous"
    seed: int = 0
    mlp_ratio: int = 2

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise ParameterError(f"dim must be >= 2, got {self.dim}")
        if self.n_layers < 1:
            raise ParameterError(f"n_layers must be >= 1, got {self.n_layers}")
        if self.n_heads < 1 or self.dim % self.n_heads != 0:
            raise ParameterError(
                f"n_heads must be >= 1 and divide dim: dim={self.dim} n_heads={self.n_heads}"
            )
        if self.vocab_size < 2:
            raise ParameterError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.mode not in _MODES:
            raise ParameterError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.mlp_ratio < 1:
            raise ParameterError(f"mlp_ratio must be >= 1, got {self.mlp_ratio}")


def sinusoid_encoding(positions, dim: int) -> torch.Tensor:
    """Classic sine/cosine positional code for arbitrary integer positions.

    Works for any dim >= 1: even channels carry sines, odd channels cosines
    of geometrically spaced frequencies.
    """
    pos = torch.as_tensor(np.asarray(positions, dtype=np.float64))
    out = torch.zeros(pos.shape[0], dim, dtype=torch.float64)
    half = (dim + 1) // 2
    freq = torch.exp(
        torch.arange(half, dtype=torch.float64) * (-math.log(10000.0) * 2.0 / dim)
    )
    angles = pos[:, None] * freq[None, :]
    out[:, 0::2] = torch.sin(angles)
    out[:, 1::2] = torch.cos(angles[:, : dim // 2])
    return out


class _Block(nn.Module):
    """Pre-norm attention + MLP block with an explicit boolean layout mask."""

    def __init__(self, dim: int, n_heads: int, hidden: int) -> None:
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = dim // n_heads
        self.norm1 = nn.LayerNorm(dim)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.norm2 = nn.LayerNorm(dim)
        self.ff1 = nn.Linear(dim, hidden)
        self.ff2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor, allowed: torch.Tensor) -> torch.Tensor:
        seq, dim = x.shape
        q, k, v = self.qkv(self.norm1(x)).chunk(3, dim=-1)
        # (heads, seq, head_dim)
        q = q.view(seq, self.n_heads, self.head_dim).transpose(0, 1)
        k = k.view(seq, self.n_heads, self.head_dim).transpose(0, 1)
        v = v.view(seq, self.n_heads, self.head_dim).transpose(0, 1)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        scores = scores.masked_fill(~allowed, float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        mixed = (attn @ v).transpose(0, 1).reshape(seq, dim)
        x = x + self.proj(mixed)
        x = x + self.ff2(torch.nn.functional.gelu(self.ff1(self.norm2(x))))
        return x


_SEG_HINT, _SEG_TEXT, _SEG_IMAGE = 0, 1, 2


class ToyModel(nn.Module):
    def __init__(self, cfg: ToyModelConfig) -> None:
        super().__init__()
        self.cfg = cfg
        hidden = cfg.dim * cfg.mlp_ratio
        self.mask_embedding = nn.Parameter(torch.zeros(cfg.dim))
        self.segment_embed = nn.Parameter(torch.empty(3, cfg.dim))
        self.code_embed = nn.Parameter(torch.empty(cfg.vocab_size, cfg.dim))
        self.blocks = nn.ModuleList(
            _Block(cfg.dim, cfg.n_heads, hidden) for _ in range(cfg.n_layers)
        )
        self.final_norm = nn.LayerNorm(cfg.dim)
        self.patch_head = nn.Linear(cfg.dim, cfg.dim)
        self.code_head = nn.Linear(cfg.dim, cfg.vocab_size)
        self._init_parameters(cfg.seed)
        self.double()

    def _init_parameters(self, seed: int) -> None:
        # one generator, fixed visit order: bit-identical parameters per seed
        gen = torch.Generator().manual_seed(int(seed) & 0x7FFFFFFFFFFFFFFF)
        with torch.no_grad():
            self.segment_embed.normal_(0.0, 0.1, generator=gen)
            self.code_embed.normal_(0.0, 0.5, generator=gen)
            for block in self.blocks:
                for lin in (block.qkv, block.proj, block.ff1, block.ff2):
                    lin.weight.normal_(0.0, 0.2, generator=gen)
                    lin.bias.zero_()
            for lin in (self.patch_head, self.code_head):
                lin.weight.normal_(0.0, 0.2, generator=gen)
                lin.bias.zero_()

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def features(self, x: torch.Tensor, allowed: torch.Tensor) -> torch.Tensor:
        """Run the trunk over an already-embedded sequence."""
        if x.shape[0] != allowed.shape[0] or allowed.shape[0] != allowed.shape[1]:
            raise InputError(
                f"sequence length {x.shape[0]} does not match mask shape {tuple(allowed.shape)}"
            )
        for block in self.blocks:
            x = block(x, allowed)
        return self.final_norm(x)

    def reconstruct(
        self,
        hints: TokenSequence,
        text: TokenSequence,
        corrupted: CorruptedSequence,
        attn: AttentionMask,
    ) -> torch.Tensor:
        """Predict every patch from [hints | text | corrupted].

        Returns an (n_patches, dim) regression in continuous mode or an
        (n_patches, vocab) logit matrix in discrete mode. Masked rows of the
        corrupted input are overridden by the live placeholder parameter.
        """
        plan = corrupted.plan
        n = plan.n_patches
        dim = self.cfg.dim
        for name, seq in (("hints", hints), ("text", text)):
            if seq.dim != dim:
                raise InputError(f"{name} width {seq.dim} does not match model dim {dim}")
        if corrupted.embeddings.shape != (n, dim):
            raise InputError(
                f"corrupted embeddings must be ({n}, {dim}), got {corrupted.embeddings.shape}"
            )
        if hints.count != plan.hint_indices.size:
            raise InputError(
                f"{hints.count} hint rows for {plan.hint_indices.size} hint indices"
            )
        if (attn.n_hint, attn.n_text, attn.n_img) != (hints.count, text.count, n):
            raise InputError(
                f"attention mask segments {(attn.n_hint, attn.n_text, attn.n_img)} "
                f"do not match inputs {(hints.count, text.count, n)}"
            )
        masked = torch.zeros(n, dtype=torch.bool)
        masked[torch.from_numpy(plan.masked_indices)] = True
        patches = torch.from_numpy(corrupted.embeddings)
        patches = torch.where(masked[:, None], self.mask_embedding.expand(n, dim), patches)
        parts = [
            torch.from_numpy(hints.embeddings)
            + sinusoid_encoding(plan.hint_indices, dim)
            + self.segment_embed[_SEG_HINT],
            torch.from_numpy(text.embeddings)
            + sinusoid_encoding(np.arange(text.count), dim)
            + self.segment_embed[_SEG_TEXT],
            patches
            + sinusoid_encoding(np.arange(n), dim)
            + self.segment_embed[_SEG_IMAGE],
        ]
        feats = self.features(torch.cat(parts), torch.from_numpy(attn.allowed))
        out = feats[-n:]
        if self.cfg.mode == "continuous":
            return self.patch_head(out)
        return self.code_head(out)

    def i2t_nll(self, image: TokenSequence, question_codes, answer_codes) -> torch.Tensor:
        """Teacher-forced negative log-likelihood per answer position.

        The sequence is [patches | question codes | answer codes] under a
        full causal mask; the code at sequence position p is scored from the
        logits at p - 1, so each answer token is predicted from its prefix
        only. Returns a tensor of length len(answer_codes).
        """
        q = np.asarray(question_codes, dtype=np.int64).reshape(-1)
        a = np.asarray(answer_codes, dtype=np.int64).reshape(-1)
        if a.size == 0:
            raise InputError("answer must contain at least one code")
        vocab = self.cfg.vocab_size
        for name, codes in (("question", q), ("answer", a)):
            if codes.size and (codes.min() < 0 or codes.max() >= vocab):
                raise InputError(f"{name} codes out of range for vocab {vocab}")
        if image.dim != self.cfg.dim:
            raise InputError(
                f"image width {image.dim} does not match model dim {self.cfg.dim}"
            )
        n = image.count
        codes = np.concatenate([q, a])
        parts = [
            torch.from_numpy(image.embeddings)
            + sinusoid_encoding(np.arange(n), self.cfg.dim)
            + self.segment_embed[_SEG_IMAGE],
            self.code_embed[torch.from_numpy(codes)]
            + sinusoid_encoding(n + np.arange(codes.size), self.cfg.dim)
            + self.segment_embed[_SEG_TEXT],
        ]
        x = torch.cat(parts)
        total = x.shape[0]
        causal = torch.tril(torch.ones(total, total, dtype=torch.bool))
        logits = self.code_head(self.features(x, causal))
        pred_positions = torch.from_numpy(n + q.size + np.arange(a.size) - 1)
        return torch.nn.functional.cross_entropy(
            logits[pred_positions], torch.from_numpy(a), reduction="none"
        )
