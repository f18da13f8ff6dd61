"""Differentiable scorer: a tiny byte-level causal LM with exact gradients.

The reference model is a single pre-norm transformer block (one causal
self-attention head + a GELU feed-forward) over a byte vocabulary with
four reserved specials. Everything runs in float64 numpy with manual
backpropagation, so gradients of the answer log-probability with respect
to input token embeddings are exact up to round-off and can be verified
by central finite differences.

The model output F scored here is the summed log-probability of the
target (answer) tokens given the context. Probe scorers (`LinearScorer`,
`QuadraticScorer`) implement the same scoring interface with closed-form
gradients for quadrature tests.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .errors import CapacityError, ConfigError
from .trace import ReasoningTrace, Token

N_SPECIALS = 4
DEFAULT_VOCAB = 256 + N_SPECIALS
DEFAULT_EMBED_DIM = 32
DEFAULT_CONTEXT_LEN = 512
DEFAULT_ANSWER_MARKER = "final answer:"

_LN_EPS = 1e-8
_GELU_C = math.sqrt(2.0 / math.pi)


class ByteTokenizer:
    """Byte-level tokenizer: ids 0..255 are raw bytes, then pad/bos/eos/ans."""

    def __init__(self, vocab_size: int = DEFAULT_VOCAB):
        if vocab_size < 256 + N_SPECIALS:
            raise ConfigError(
                f"vocab_size {vocab_size} too small for 256 bytes + {N_SPECIALS} specials"
            )
        self.vocab_size = vocab_size
        self.pad_id = 256
        self.bos_id = 257
        self.eos_id = 258
        self.ans_id = 259

    def encode(self, text: str) -> list[int]:
        return list(text.encode("utf-8"))

    def decode(self, ids: Sequence[int], strip_specials: bool = True) -> str:
        if strip_specials:
            data = bytes(i for i in ids if i < 256)
        else:
            data = bytes(min(i, 255) for i in ids)
        return data.decode("utf-8", errors="replace")

    def tokens(self, text: str) -> list[Token]:
        data = text.encode("utf-8")
        return [
            Token(index=i, text=chr(b) if b < 128 else f"<0x{b:02x}>", start=i, end=i + 1)
            for i, b in enumerate(data)
        ]


@dataclass(frozen=True)
class SamplingConfig:
    """Decoding parameters; temperature 0.0 selects the greedy limit."""

    temperature: float = 0.6
    top_p: float = 1.0
    max_new_tokens: int = 16
    seed: int = 0
    repetition_penalty: float = 1.0

    def __post_init__(self):
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ConfigError("top_p must lie in (0, 1]")
        if self.max_new_tokens < 1:
            raise ConfigError("max_new_tokens must be >= 1")
        if self.repetition_penalty < 1:
            raise ConfigError("repetition_penalty must be >= 1")


@dataclass(frozen=True)
class PreparedTrace:
    """Context/target ids for one trace plus which context rows carry
    interpolatable embeddings and which of those are CoT tokens."""

    context_ids: tuple[int, ...]
    target_ids: tuple[int, ...]
    attributed_rows: tuple[int, ...]
    cot_rows: tuple[int, ...]


@runtime_checkable
class GradOracle(Protocol):
    """Scoring interface consumed by the attribution quadrature."""

    model_id: str
    embed_dim: int

    @property
    def pad_embedding(self) -> np.ndarray: ...

    def context_embeddings(self, context: Sequence[int]) -> np.ndarray: ...

    def score_target(
        self,
        context: Sequence[int],
        target: Sequence[int],
        embeddings_override: np.ndarray | None = None,
    ) -> float: ...

    def grad_wrt_embeddings(
        self,
        context: Sequence[int],
        target: Sequence[int],
        embeddings_override: np.ndarray,
    ) -> np.ndarray: ...

    def prepare_trace_inputs(
        self, trace: ReasoningTrace, attributed_region: str
    ) -> PreparedTrace: ...


def _gelu(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """tanh-approximation GELU; returns (value, cached tanh term)."""
    t = np.tanh(_GELU_C * (u + 0.044715 * (u * u * u)))
    return 0.5 * u * (1.0 + t), t


def _gelu_grad(u: np.ndarray, t: np.ndarray) -> np.ndarray:
    du = _GELU_C * (1.0 + (3 * 0.044715) * (u * u))
    return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * du


def _layernorm_forward(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc**2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xh = xc * inv
    return g * xh + b, (xh, inv)


def _layernorm_backward(dy, g, cache):
    xh, inv = cache
    dxh = dy * g
    dg = (dy * xh).sum(axis=tuple(range(dy.ndim - 1)))
    db = dy.sum(axis=tuple(range(dy.ndim - 1)))
    mean_dxh = dxh.mean(axis=-1, keepdims=True)
    mean_dxh_xh = (dxh * xh).mean(axis=-1, keepdims=True)
    dx = inv * (dxh - mean_dxh - xh * mean_dxh_xh)
    return dx, dg, db


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


_PARAM_NAMES = (
    "tok_emb", "pos_emb",
    "ln1_g", "ln1_b", "wq", "wk", "wv", "wo",
    "ln2_g", "ln2_b", "w1", "b1", "w2", "b2",
    "lnf_g", "lnf_b", "w_out", "b_out",
)


class TinyCausalLM:
    """Deterministic seeded reference model; parameters are read-only after init."""

    def __init__(self, params: dict[str, np.ndarray], context_len: int, model_id: str):
        self.params = params
        self.context_len = context_len
        self.model_id = model_id
        self.tokenizer = ByteTokenizer(params["tok_emb"].shape[0])
        self.vocab_size = params["tok_emb"].shape[0]
        self.embed_dim = params["tok_emb"].shape[1]
        self.answer_marker = DEFAULT_ANSWER_MARKER
        for name in _PARAM_NAMES:
            params[name].setflags(write=False)

    # -- construction ------------------------------------------------------

    @classmethod
    def create(
        cls,
        seed: int,
        vocab_size: int = DEFAULT_VOCAB,
        embed_dim: int = DEFAULT_EMBED_DIM,
        context_len: int = DEFAULT_CONTEXT_LEN,
        ff_mult: int = 4,
        init_scale: float = 0.02,
        emb_scale: float | None = None,
        zeroed: bool = False,
    ) -> "TinyCausalLM":
        if vocab_size < 256 + N_SPECIALS:
            raise ConfigError(f"vocab_size must be >= {256 + N_SPECIALS}")
        if embed_dim < 2:
            raise ConfigError("embed_dim must be >= 2")
        if context_len < 8:
            raise ConfigError("context_len must be >= 8")
        d, h, v = embed_dim, ff_mult * embed_dim, vocab_size
        rng = np.random.default_rng(seed)
        # O(1/sqrt(d)) embedding rows keep the first layernorm well away
        # from its singular small-variance regime, which is what makes the
        # eps=1e-3 finite-difference gate meaningful.
        if emb_scale is None:
            emb_scale = 1.0 / math.sqrt(d)

        def w(*shape, scale=init_scale):
            if zeroed:
                return np.zeros(shape)
            return rng.normal(0.0, scale, size=shape)

        # Sinusoidal positional init (trainable): gives the single attention
        # head a usable relative-offset structure from the start, which a
        # one-block model cannot easily discover from random absolute rows.
        if zeroed:
            pos = np.zeros((context_len, d))
        else:
            positions = np.arange(context_len)[:, None]
            freqs = np.exp(-math.log(10000.0) * (2 * (np.arange(d) // 2)) / d)
            angles = positions * freqs[None, :]
            pos = np.where(np.arange(d)[None, :] % 2 == 0, np.sin(angles), np.cos(angles))

        params = {
            "tok_emb": w(v, d, scale=emb_scale),
            "pos_emb": pos,
            "ln1_g": np.zeros(d) if zeroed else np.ones(d),
            "ln1_b": np.zeros(d),
            "wq": w(d, d),
            "wk": w(d, d),
            "wv": w(d, d),
            "wo": w(d, d),
            "ln2_g": np.zeros(d) if zeroed else np.ones(d),
            "ln2_b": np.zeros(d),
            "w1": w(d, h),
            "b1": np.zeros(h),
            "w2": w(h, d),
            "b2": np.zeros(d),
            "lnf_g": np.zeros(d) if zeroed else np.ones(d),
            "lnf_b": np.zeros(d),
            "w_out": w(d, v),
            "b_out": np.zeros(v),
        }
        model_id = f"tiny-byte-lm-v1(seed={seed},V={v},d={d},ctx={context_len})"
        if zeroed:
            model_id = f"tiny-byte-lm-v1(zeroed,V={v},d={d},ctx={context_len})"
        return cls(params, context_len, model_id)

    def with_params(self, params: dict[str, np.ndarray], model_id: str | None = None) -> "TinyCausalLM":
        copies = {k: np.array(v) for k, v in params.items()}
        return TinyCausalLM(copies, self.context_len, model_id or self.model_id)

    def param_checksum(self) -> str:
        h = hashlib.sha256()
        for name in _PARAM_NAMES:
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.params[name]).tobytes())
        return h.hexdigest()

    def save(self, path: str | Path) -> None:
        np.savez(
            path,
            model_id=np.array(self.model_id),
            context_len=np.array(self.context_len),
            **self.params,
        )

    @classmethod
    def load(cls, path: str | Path) -> "TinyCausalLM":
        with np.load(path, allow_pickle=False) as data:
            params = {name: np.array(data[name]) for name in _PARAM_NAMES}
            return cls(params, int(data["context_len"]), str(data["model_id"]))

    # -- embeddings --------------------------------------------------------

    @property
    def pad_embedding(self) -> np.ndarray:
        return self.params["tok_emb"][self.tokenizer.pad_id].copy()

    def embed(self, token_id: int) -> np.ndarray:
        return self.params["tok_emb"][token_id].copy()

    def context_embeddings(self, context: Sequence[int]) -> np.ndarray:
        return self.params["tok_emb"][np.asarray(context, dtype=np.intp)].copy()

    # -- forward / backward ------------------------------------------------

    def _check_capacity(self, n_ctx: int, n_tgt: int) -> None:
        if n_ctx + n_tgt > self.context_len:
            raise CapacityError(
                f"sequence of {n_ctx}+{n_tgt} tokens exceeds context_len={self.context_len}"
            )

    def _forward(self, x_in: np.ndarray) -> dict:
        """Run the block on input embeddings (B, T, d); returns the cache."""
        p = self.params
        _, t, d = x_in.shape
        x = x_in + p["pos_emb"][:t]
        a_in, ln1c = _layernorm_forward(x, p["ln1_g"], p["ln1_b"])
        q = a_in @ p["wq"]
        k = a_in @ p["wk"]
        v = a_in @ p["wv"]
        scores = (q @ k.transpose(0, 2, 1)) / math.sqrt(d)
        mask = np.triu(np.full((t, t), -np.inf), k=1)
        attn = _softmax_rows(scores + mask)
        ctxv = attn @ v
        h1 = x + ctxv @ p["wo"]
        f_in, ln2c = _layernorm_forward(h1, p["ln2_g"], p["ln2_b"])
        u = f_in @ p["w1"] + p["b1"]
        g, gelu_t = _gelu(u)
        h2 = h1 + g @ p["w2"] + p["b2"]
        o, lnfc = _layernorm_forward(h2, p["lnf_g"], p["lnf_b"])
        logits = o @ p["w_out"] + p["b_out"]
        return {
            "x": x, "a_in": a_in, "ln1c": ln1c, "q": q, "k": k, "v": v,
            "attn": attn, "ctxv": ctxv, "h1": h1, "f_in": f_in, "ln2c": ln2c,
            "u": u, "g": g, "gelu_t": gelu_t, "h2": h2, "o": o, "lnfc": lnfc,
            "logits": logits,
        }

    def _backward(
        self, cache: dict, dlogits: np.ndarray, want_param_grads: bool = False
    ) -> tuple[np.ndarray, dict[str, np.ndarray] | None]:
        """Backprop dlogits (B, T, V) to input embeddings (B, T, d)."""
        p = self.params
        d = self.embed_dim
        grads: dict[str, np.ndarray] = {}

        do = dlogits @ p["w_out"].T
        if want_param_grads:
            grads["w_out"] = np.einsum("btd,btv->dv", cache["o"], dlogits)
            grads["b_out"] = dlogits.sum(axis=(0, 1))
        dh2, dgf, dbf = _layernorm_backward(do, p["lnf_g"], cache["lnfc"])
        if want_param_grads:
            grads["lnf_g"], grads["lnf_b"] = dgf, dbf

        dh1 = dh2.copy()
        dgelu = dh2 @ p["w2"].T
        du = dgelu * _gelu_grad(cache["u"], cache["gelu_t"])
        df_in = du @ p["w1"].T
        if want_param_grads:
            grads["w2"] = np.einsum("bth,btd->hd", cache["g"], dh2)
            grads["b2"] = dh2.sum(axis=(0, 1))
            grads["w1"] = np.einsum("btd,bth->dh", cache["f_in"], du)
            grads["b1"] = du.sum(axis=(0, 1))
        dh1_ln, dg2, db2 = _layernorm_backward(df_in, p["ln2_g"], cache["ln2c"])
        dh1 += dh1_ln
        if want_param_grads:
            grads["ln2_g"], grads["ln2_b"] = dg2, db2

        dx = dh1.copy()
        dctxv = dh1 @ p["wo"].T
        dattn = dctxv @ cache["v"].transpose(0, 2, 1)
        dv = cache["attn"].transpose(0, 2, 1) @ dctxv
        attn = cache["attn"]
        dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
        dscores /= math.sqrt(d)
        dq = dscores @ cache["k"]
        dk = dscores.transpose(0, 2, 1) @ cache["q"]
        da_in = dq @ p["wq"].T + dk @ p["wk"].T + dv @ p["wv"].T
        if want_param_grads:
            grads["wo"] = np.einsum("btd,bte->de", cache["ctxv"], dh1)
            grads["wq"] = np.einsum("btd,bte->de", cache["a_in"], dq)
            grads["wk"] = np.einsum("btd,bte->de", cache["a_in"], dk)
            grads["wv"] = np.einsum("btd,bte->de", cache["a_in"], dv)
        dx_ln, dg1, db1 = _layernorm_backward(da_in, p["ln1_g"], cache["ln1c"])
        dx += dx_ln
        if want_param_grads:
            grads["ln1_g"], grads["ln1_b"] = dg1, db1
            grads["pos_emb_rows"] = dx.sum(axis=0)  # (T, d); caller scatters

        return dx, (grads if want_param_grads else None)

    def _build_inputs(
        self,
        context: Sequence[int],
        target: Sequence[int],
        overrides: np.ndarray | None,
    ) -> np.ndarray:
        """Input embedding tensor (B, L, d) for scoring the target."""
        c, a = len(context), len(target)
        self._check_capacity(c, a)
        ids = list(context) + list(target[:-1])
        base = self.params["tok_emb"][np.asarray(ids, dtype=np.intp)]
        if overrides is None:
            return base[None, :, :].copy()
        if overrides.ndim == 2:
            overrides = overrides[None, :, :]
        if overrides.shape[1] != c or overrides.shape[2] != self.embed_dim:
            raise ConfigError(
                f"override shape {overrides.shape} does not match context ({c}, {self.embed_dim})"
            )
        x = np.repeat(base[None, :, :], overrides.shape[0], axis=0)
        x[:, :c, :] = overrides
        return x

    def _target_logprob_grads(
        self, context: Sequence[int], target: Sequence[int], cache: dict
    ) -> tuple[np.ndarray, np.ndarray]:
        """Per-batch F = sum of target log-probs, and dF/dlogits."""
        logits = cache["logits"]
        b, t, v = logits.shape
        c = len(context)
        positions = np.arange(c - 1, c - 1 + len(target))
        rows = logits[:, positions, :]
        rows = rows - rows.max(axis=-1, keepdims=True)
        log_z = np.log(np.exp(rows).sum(axis=-1))
        tgt = np.asarray(target, dtype=np.intp)
        logp = rows[:, np.arange(len(target)), tgt] - log_z
        f = logp.sum(axis=-1)
        probs = _softmax_rows(logits[:, positions, :])
        dpos = -probs
        dpos[:, np.arange(len(target)), tgt] += 1.0
        dlogits = np.zeros_like(logits)
        dlogits[:, positions, :] = dpos
        return f, dlogits

    def score_target(
        self,
        context: Sequence[int],
        target: Sequence[int],
        embeddings_override: np.ndarray | None = None,
    ) -> float:
        if len(target) == 0:
            self._check_capacity(len(context), 0)
            return 0.0
        x = self._build_inputs(context, target, embeddings_override)
        cache = self._forward(x)
        f, _ = self._target_logprob_grads(context, target, cache)
        return float(f[0])

    def grad_wrt_embeddings(
        self,
        context: Sequence[int],
        target: Sequence[int],
        embeddings_override: np.ndarray,
    ) -> np.ndarray:
        out = self.grad_wrt_embeddings_many(
            context, target, embeddings_override[None, :, :]
        )
        return out[0]

    def grad_wrt_embeddings_many(
        self,
        context: Sequence[int],
        target: Sequence[int],
        overrides: np.ndarray,
    ) -> np.ndarray:
        """Gradients of F for a batch of context overrides (B, C, d)."""
        c = len(context)
        if len(target) == 0:
            self._check_capacity(c, 0)
            return np.zeros_like(overrides)
        x = self._build_inputs(context, target, overrides)
        cache = self._forward(x)
        _, dlogits = self._target_logprob_grads(context, target, cache)
        dx, _ = self._backward(cache, dlogits)
        return dx[:, :c, :]

    # -- token-level statistics -------------------------------------------

    def token_nlls(self, context: Sequence[int], target: Sequence[int]) -> np.ndarray:
        """Negative log-probability (nats) of each target token."""
        if len(target) == 0:
            return np.zeros(0)
        x = self._build_inputs(context, target, None)
        cache = self._forward(x)
        c = len(context)
        positions = np.arange(c - 1, c - 1 + len(target))
        rows = cache["logits"][0, positions, :]
        rows = rows - rows.max(axis=-1, keepdims=True)
        log_z = np.log(np.exp(rows).sum(axis=-1))
        tgt = np.asarray(target, dtype=np.intp)
        return -(rows[np.arange(len(target)), tgt] - log_z)

    def token_entropies(self, context: Sequence[int], target: Sequence[int]) -> np.ndarray:
        """Shannon entropy (nats) of the next-token distribution at each
        position where a target token is predicted."""
        if len(target) == 0:
            return np.zeros(0)
        x = self._build_inputs(context, target, None)
        cache = self._forward(x)
        c = len(context)
        positions = np.arange(c - 1, c - 1 + len(target))
        probs = _softmax_rows(cache["logits"][0, positions, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            plogp = np.where(probs > 0, probs * np.log(probs), 0.0)
        return -plogp.sum(axis=-1)

    # -- sampling ------------------------------------------------------------

    def _next_token_logits(self, ids: list[int]) -> np.ndarray:
        x = self.params["tok_emb"][np.asarray(ids, dtype=np.intp)][None, :, :]
        cache = self._forward(x)
        return cache["logits"][0, -1, :].copy()

    def sample_answers(
        self, context: Sequence[int], cfg: SamplingConfig, k: int
    ) -> list[list[int]]:
        """Draw k generations; each sequence seed derives from (cfg.seed, i)."""
        if k < 1:
            raise ConfigError("k must be >= 1")
        self._check_capacity(len(context), 1)
        out = []
        for i in range(k):
            rng = np.random.default_rng([cfg.seed, i])
            out.append(self._sample_one(list(context), cfg, rng))
        return out

    def _sample_one(self, ids: list[int], cfg: SamplingConfig, rng) -> list[int]:
        generated: list[int] = []
        for _ in range(cfg.max_new_tokens):
            if len(ids) >= self.context_len:
                break
            logits = self._next_token_logits(ids)
            if cfg.repetition_penalty > 1.0:
                seen = np.unique(np.asarray(ids, dtype=np.intp))
                pos = logits[seen] > 0
                logits[seen[pos]] /= cfg.repetition_penalty
                logits[seen[~pos]] *= cfg.repetition_penalty
            if cfg.temperature == 0.0:
                nxt = int(np.argmax(logits))
            else:
                probs = _softmax_rows(logits / cfg.temperature)
                if cfg.top_p < 1.0:
                    order = np.argsort(-probs, kind="stable")
                    sorted_p = probs[order]
                    cum = np.cumsum(sorted_p)
                    keep = cum - sorted_p < cfg.top_p
                    keep[0] = True
                    kept = order[keep]
                    p = probs[kept] / probs[kept].sum()
                    nxt = int(kept[rng.choice(len(kept), p=p)])
                else:
                    nxt = int(rng.choice(self.vocab_size, p=probs))
            if nxt == self.tokenizer.eos_id:
                break
            generated.append(nxt)
            ids.append(nxt)
        return generated

    # -- trace plumbing ------------------------------------------------------

    def marker_ids(self) -> list[int]:
        return self.tokenizer.encode(self.answer_marker)

    def trace_context_ids(self, trace: ReasoningTrace, n_segments: int | None = None) -> list[int]:
        """[bos] + query + cot (optionally truncated to a segment prefix) + marker."""
        tok = self.tokenizer
        if n_segments is None:
            cot_ids = tok.encode(trace.cot)
        else:
            if n_segments == 0:
                cot_ids = []
            else:
                end = trace.segments[n_segments - 1].char_span[1]
                cot_ids = list(trace.cot_bytes()[:end])
        return [tok.bos_id] + tok.encode(trace.query) + cot_ids + self.marker_ids()

    def prepare_trace_inputs(
        self, trace: ReasoningTrace, attributed_region: str = "cot-only"
    ) -> PreparedTrace:
        tok = self.tokenizer
        q_ids = tok.encode(trace.query)
        cot_ids = tok.encode(trace.cot)
        context = [tok.bos_id] + q_ids + cot_ids + self.marker_ids()
        target = tok.encode(trace.answer)
        cot_rows = tuple(range(1 + len(q_ids), 1 + len(q_ids) + len(cot_ids)))
        if attributed_region == "cot-only":
            attributed = cot_rows
        elif attributed_region == "query-and-cot":
            attributed = tuple(range(1, 1 + len(q_ids))) + cot_rows
        else:
            raise ConfigError(f"unknown attributed_region '{attributed_region}'")
        return PreparedTrace(tuple(context), tuple(target), attributed, cot_rows)


def init_reference_model(
    seed: int,
    vocab_size: int = DEFAULT_VOCAB,
    embed_dim: int = DEFAULT_EMBED_DIM,
    context_len: int = DEFAULT_CONTEXT_LEN,
    **kwargs,
) -> TinyCausalLM:
    """Build the deterministic built-in reference model."""
    return TinyCausalLM.create(
        seed, vocab_size=vocab_size, embed_dim=embed_dim, context_len=context_len, **kwargs
    )


# -- probe scorers for quadrature tests ------------------------------------


class _ProbeBase:
    """Shared plumbing for closed-form scorers over byte 'traces'."""

    def __init__(self, embed_dim: int, point: Sequence[float]):
        self.embed_dim = embed_dim
        self._point = np.asarray(point, dtype=float)
        if self._point.shape != (embed_dim,):
            raise ConfigError("point must have shape (embed_dim,)")

    @property
    def pad_embedding(self) -> np.ndarray:
        return np.zeros(self.embed_dim)

    def context_embeddings(self, context: Sequence[int]) -> np.ndarray:
        return np.tile(self._point, (len(context), 1))

    def prepare_trace_inputs(
        self, trace: ReasoningTrace, attributed_region: str = "cot-only"
    ) -> PreparedTrace:
        n = len(trace.cot.encode("utf-8"))
        rows = tuple(range(n))
        return PreparedTrace(rows, (), rows, rows)


class LinearScorer(_ProbeBase):
    """F(x) = sum over rows of w . row; gradient is constant."""

    def __init__(self, weights: Sequence[float], point: Sequence[float]):
        self.weights = np.asarray(weights, dtype=float)
        super().__init__(len(self.weights), point)
        self.model_id = "probe-linear"

    def score_target(self, context, target, embeddings_override=None) -> float:
        x = embeddings_override
        if x is None:
            x = self.context_embeddings(context)
        return float((x @ self.weights).sum())

    def grad_wrt_embeddings(self, context, target, embeddings_override) -> np.ndarray:
        return np.tile(self.weights, (len(context), 1))


class QuadraticScorer(_ProbeBase):
    """F(x) = sum over rows and dims of row_i^2; curvature probes quadrature."""

    def __init__(self, point: Sequence[float]):
        super().__init__(len(tuple(point)), point)
        self.model_id = "probe-quadratic"

    def score_target(self, context, target, embeddings_override=None) -> float:
        x = embeddings_override
        if x is None:
            x = self.context_embeddings(context)
        return float((x**2).sum())

    def grad_wrt_embeddings(self, context, target, embeddings_override) -> np.ndarray:
        return 2.0 * embeddings_override


def probe_trace(text: str = "x", trace_id: str = "probe") -> ReasoningTrace:
    """Minimal trace whose cot bytes drive a probe scorer."""
    return ReasoningTrace(trace_id=trace_id, query="", answer="", cot=text)


# -- finite-difference gate --------------------------------------------------


def fd_check(
    oracle,
    context: Sequence[int] | None = None,
    target: Sequence[int] | None = None,
    eps: float = 1e-3,
    seed: int = 0,
    n_ctx: int = 6,
    n_tgt: int = 3,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Probes a random (context, target) pair when none is given. The 0/0
    case counts as zero error.
    """
    if not 1e-6 <= eps <= 1e-2:
        raise ConfigError("eps must lie in [1e-6, 1e-2]")
    rng = np.random.default_rng(seed)
    if context is None:
        context = list(rng.integers(0, 256, size=n_ctx))
    if target is None:
        target = list(rng.integers(0, 256, size=n_tgt))
    x = oracle.context_embeddings(context)
    analytic = oracle.grad_wrt_embeddings(context, target, x)
    numeric = np.zeros_like(analytic)
    for r in range(x.shape[0]):
        for cidx in range(x.shape[1]):
            xp = x.copy()
            xp[r, cidx] += eps
            xm = x.copy()
            xm[r, cidx] -= eps
            fp = oracle.score_target(context, target, embeddings_override=xp)
            fm = oracle.score_target(context, target, embeddings_override=xm)
            numeric[r, cidx] = (fp - fm) / (2 * eps)
    denom = np.maximum(np.abs(analytic), np.abs(numeric))
    err = np.abs(analytic - numeric)
    rel = np.where(denom > 0, err / np.where(denom > 0, denom, 1.0), 0.0)
    return float(rel.max())
