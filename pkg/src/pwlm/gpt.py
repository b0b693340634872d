"""Autoregressive character-level password model.

A decoder-only transformer over byte tokens. Training minimizes
next-token cross-entropy over encoded passwords; each password is an
independent padded row (no cross-password packing). After training the
model is immutable: sampling and scoring are read-only and safe to run
from many workers, each on its own seeded RNG stream.

Sampling note: the BOS sentinel can never legally appear after position
0, so the sampler (free and guided) removes it from the draw and
renormalizes. `next_distribution` itself never masks BOS; its BOS entry
simply trains toward zero.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import nn
from .corpus import Corpus
from .errors import (
    ConfigError, EmptyCorpus, LengthExceeded, MalformedPrefix, NonFiniteLoss,
)
from .nn import functional as F
from .nn import tensor as T
from .rng import generator
from .tokenizer import FULL_ALPHABET, Vocab

log = logging.getLogger(__name__)

UNIQUE = "unique"
ALL_OCCURRENCES = "all-occurrences"

_SAMPLE_CHUNK = 4096  # fixed so (seed, n) alone determines sampler output


@dataclass
class GptConfig:
    d_model: int = 768
    heads: int = 12
    layers: int = 8
    vocab: int = 258
    max_len: int = 16          # password bytes; context = max_len + 2 sentinels
    dropout: float = 0.1
    batch_size: int = 256
    epochs: int = 1
    base_lr: float = 5e-5
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    init_std: float = 0.02
    dtype: str = "float32"     # "float64" is the reference mode for oracles
    alphabet: Optional[bytes] = FULL_ALPHABET  # None for non-byte vocabularies

    def __post_init__(self):
        if self.d_model % self.heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by {self.heads} heads")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.alphabet is not None and self.vocab != len(self.alphabet) + 2:
            raise ConfigError(
                f"vocab {self.vocab} != |alphabet| + 2 = {len(self.alphabet) + 2}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"unsupported dtype {self.dtype!r}")

    @property
    def context(self) -> int:
        return self.max_len + 2

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


@dataclass
class SampleOpts:
    temperature: float = 1.0
    top_k: Optional[int] = None
    seed: int = 0
    max_new: Optional[int] = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0 (0 means argmax)")
        if self.top_k is not None and self.top_k < 1:
            raise ConfigError("top_k must be >= 1")


def _init_gpt_params(cfg: GptConfig) -> Dict[str, nn.Tensor]:
    rng = generator(cfg.seed)
    dt = cfg.np_dtype
    std = cfg.init_std
    resid_std = std / math.sqrt(2.0 * cfg.layers)
    d, h4 = cfg.d_model, 4 * cfg.d_model

    def w(*shape, s=std):
        return T.param(rng.normal(0.0, s, shape), dtype=dt)

    def zeros(*shape):
        return T.param(np.zeros(shape), dtype=dt)

    def ones(*shape):
        return T.param(np.ones(shape), dtype=dt)

    p: Dict[str, nn.Tensor] = {}
    p["tok_emb"] = w(cfg.vocab, d)
    p["pos_emb"] = w(cfg.context, d)
    for i in range(cfg.layers):
        pre = f"h{i}."
        p[pre + "ln1.g"] = ones(d)
        p[pre + "ln1.b"] = zeros(d)
        p[pre + "attn.wq"] = w(d, d)
        p[pre + "attn.wk"] = w(d, d)
        p[pre + "attn.wv"] = w(d, d)
        p[pre + "attn.wo"] = w(d, d, s=resid_std)
        p[pre + "attn.bq"] = zeros(d)
        p[pre + "attn.bk"] = zeros(d)
        p[pre + "attn.bv"] = zeros(d)
        p[pre + "attn.bo"] = zeros(d)
        p[pre + "ln2.g"] = ones(d)
        p[pre + "ln2.b"] = zeros(d)
        p[pre + "mlp.w_up"] = w(d, h4)
        p[pre + "mlp.b_up"] = zeros(h4)
        p[pre + "mlp.w_down"] = w(h4, d, s=resid_std)
        p[pre + "mlp.b_down"] = zeros(d)
    p["ln_f.g"] = ones(d)
    p["ln_f.b"] = zeros(d)
    p["head.w"] = w(d, cfg.vocab)
    return p


def _block_views(params: Dict[str, nn.Tensor], layers: int) -> List[nn.BlockParams]:
    out = []
    for i in range(layers):
        pre = f"h{i}."
        out.append(nn.BlockParams(
            ln1_g=params[pre + "ln1.g"], ln1_b=params[pre + "ln1.b"],
            attn=nn.AttentionParams(
                wq=params[pre + "attn.wq"], wk=params[pre + "attn.wk"],
                wv=params[pre + "attn.wv"], wo=params[pre + "attn.wo"],
                bq=params[pre + "attn.bq"], bk=params[pre + "attn.bk"],
                bv=params[pre + "attn.bv"], bo=params[pre + "attn.bo"],
            ),
            ln2_g=params[pre + "ln2.g"], ln2_b=params[pre + "ln2.b"],
            mlp=nn.MlpParams(
                w_up=params[pre + "mlp.w_up"], b_up=params[pre + "mlp.b_up"],
                w_down=params[pre + "mlp.w_down"], b_down=params[pre + "mlp.b_down"],
            ),
        ))
    return out


class GptModel:
    """Trained (or freshly initialized) decoder-only password model."""

    kind = "gpt"

    def __init__(self, cfg: GptConfig, params: Optional[Dict[str, nn.Tensor]] = None):
        self.cfg = cfg
        self.params = params if params is not None else _init_gpt_params(cfg)
        self.blocks = _block_views(self.params, cfg.layers)
        self.vocab = Vocab(cfg.alphabet) if cfg.alphabet is not None else None
        self.train_log: Dict[str, list] = {}

    # ----- training-time forward (records the autodiff graph) -----

    def forward_graph(self, tokens: np.ndarray, dropout_p: float = 0.0,
                      rng: Optional[np.random.Generator] = None) -> nn.Tensor:
        """Logits [B, T, V] for input ids [B, T]; records gradients."""
        b, t = tokens.shape
        pos = np.arange(t)
        x = T.add(T.embedding(self.params["tok_emb"], tokens),
                  T.embedding(self.params["pos_emb"], pos))
        x = T.dropout(x, dropout_p, rng)
        for blk in self.blocks:
            x = nn.transformer_block(x, blk, self.cfg.heads,
                                     dropout_p=dropout_p, rng=rng, causal=True)
        x = T.layer_norm(x, self.params["ln_f.g"], self.params["ln_f.b"])
        return T.matmul(x, self.params["head.w"])

    # ----- inference forward (graph-free, optional KV cache) -----

    def new_cache(self, batch: int) -> "KvCache":
        return KvCache(self.cfg, batch)

    def forward_np(self, tokens: np.ndarray, cache: Optional["KvCache"] = None
                   ) -> np.ndarray:
        """Logits [B, T_new, V] without recording gradients.

        With a cache, `tokens` holds only the not-yet-seen columns and the
        cache advances; token positions continue from cache.length.
        """
        cfg = self.cfg
        p = {k: v.data for k, v in self.params.items()}
        b, t_new = tokens.shape
        offset = cache.length if cache is not None else 0
        if offset + t_new > cfg.context:
            raise LengthExceeded(
                f"sequence of {offset + t_new} tokens exceeds context {cfg.context}")
        pos = np.arange(offset, offset + t_new)
        x = p["tok_emb"][tokens] + p["pos_emb"][pos]
        scale = 1.0 / math.sqrt(cfg.d_model // cfg.heads)
        bias = _attn_bias(t_new, offset, x.dtype)
        for i in range(cfg.layers):
            pre = f"h{i}."
            h, _, _ = F.layer_norm_np(x, p[pre + "ln1.g"], p[pre + "ln1.b"])
            q = _heads(h @ p[pre + "attn.wq"] + p[pre + "attn.bq"], cfg.heads)
            k = _heads(h @ p[pre + "attn.wk"] + p[pre + "attn.bk"], cfg.heads)
            v = _heads(h @ p[pre + "attn.wv"] + p[pre + "attn.bv"], cfg.heads)
            if cache is not None:
                k, v = cache.extend(i, k, v, t_new)
            w = F.softmax_np(q @ np.swapaxes(k, -1, -2) * scale + bias, axis=-1)
            att = _unheads(w @ v)
            x = x + att @ p[pre + "attn.wo"] + p[pre + "attn.bo"]
            h, _, _ = F.layer_norm_np(x, p[pre + "ln2.g"], p[pre + "ln2.b"])
            h = F.gelu_np(h @ p[pre + "mlp.w_up"] + p[pre + "mlp.b_up"])
            x = x + h @ p[pre + "mlp.w_down"] + p[pre + "mlp.b_down"]
        if cache is not None:
            cache.length += t_new
        x, _, _ = F.layer_norm_np(x, p["ln_f.g"], p["ln_f.b"])
        return x @ p["head.w"]

    # ----- convenience wrappers -----

    def sample(self, opts: SampleOpts) -> bytes:
        return sample(self, opts)

    def log_prob(self, password: bytes) -> float:
        return log_prob(self, password)

    def entropy_profile(self, password: bytes) -> np.ndarray:
        return entropy_profile(self, password)

    def next_distribution(self, prefix: Sequence[int]) -> np.ndarray:
        return next_distribution(self, prefix)


class KvCache:
    """Preallocated per-layer key/value store for incremental decoding."""

    def __init__(self, cfg: GptConfig, batch: int):
        hd = cfg.d_model // cfg.heads
        shape = (batch, cfg.heads, cfg.context, hd)
        self.k = [np.zeros(shape, dtype=cfg.np_dtype) for _ in range(cfg.layers)]
        self.v = [np.zeros(shape, dtype=cfg.np_dtype) for _ in range(cfg.layers)]
        self.length = 0

    def extend(self, layer: int, k_new, v_new, t_new: int):
        end = self.length + t_new
        self.k[layer][:, :, self.length:end] = k_new
        self.v[layer][:, :, self.length:end] = v_new
        return self.k[layer][:, :, :end], self.v[layer][:, :, :end]


def _heads(x: np.ndarray, heads: int) -> np.ndarray:
    b, t, d = x.shape
    return np.swapaxes(x.reshape(b, t, heads, d // heads), 1, 2)


def _unheads(x: np.ndarray) -> np.ndarray:
    b, h, t, hd = x.shape
    return np.swapaxes(x, 1, 2).reshape(b, t, h * hd)


def _attn_bias(t_new: int, offset: int, dtype) -> np.ndarray:
    """Additive mask [t_new, offset+t_new]: query offset+i sees keys <= offset+i."""
    t_all = offset + t_new
    bias = np.zeros((t_new, t_all), dtype=dtype)
    cols = np.arange(t_all)
    rows = offset + np.arange(t_new)
    bias[cols[None, :] > rows[:, None]] = -np.inf
    return bias


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def train(corpus: Corpus, cfg: GptConfig, view: str = UNIQUE) -> GptModel:
    """Fit a fresh model on the corpus, one padded row per password.

    `view` selects the training multiset: UNIQUE trains on distinct
    passwords once each, ALL_OCCURRENCES repeats each password by its
    leak count.
    """
    if not corpus.entries:
        raise EmptyCorpus("cannot train on an empty corpus")
    if cfg.alphabet is None:
        raise ConfigError("password training requires a byte alphabet")
    if corpus.max_len > cfg.max_len:
        raise ConfigError(
            f"corpus max_len {corpus.max_len} exceeds model max_len {cfg.max_len}")
    vocab = Vocab(cfg.alphabet)
    if view == UNIQUE:
        rows = [vocab.encode(pw, cfg.max_len) for pw in sorted(corpus.entries)]
    elif view == ALL_OCCURRENCES:
        rows = []
        for pw in sorted(corpus.entries):
            rows.extend([vocab.encode(pw, cfg.max_len)] * corpus.entries[pw])
    else:
        raise ConfigError(f"unknown training view {view!r}")
    return train_sequences(rows, cfg)


def train_sequences(rows: List[List[int]], cfg: GptConfig) -> GptModel:
    """Train on raw token rows (each already wrapped in BOS/EOS)."""
    if not rows:
        raise EmptyCorpus("no training rows")
    model = GptModel(cfg)
    seqs = np.random.SeedSequence(cfg.seed).spawn(2)
    shuffle_rng = np.random.Generator(np.random.PCG64(seqs[0]))
    drop_rng = np.random.Generator(np.random.PCG64(seqs[1]))

    padded = np.full((len(rows), cfg.context), fill_value=-1, dtype=np.int64)
    for i, row in enumerate(rows):
        padded[i, :len(row)] = row

    n = len(rows)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    opt = nn.init_opt_state(model.params, base_lr=cfg.base_lr,
                            weight_decay=cfg.weight_decay, beta1=cfg.beta1,
                            beta2=cfg.beta2, eps=cfg.adam_eps)
    eos_pad = rows[0][-1]  # EOS id; harmless input filler past the row end
    step_losses: List[float] = []
    epoch_means: List[float] = []
    global_step = 0
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, cfg.batch_size):
            batch = padded[order[start:start + cfg.batch_size]]
            inputs = batch[:, :-1].copy()
            targets = batch[:, 1:].reshape(-1)
            inputs[inputs < 0] = eos_pad
            logits = model.forward_graph(inputs, dropout_p=cfg.dropout, rng=drop_rng)
            flat = T.reshape(logits, (logits.shape[0] * logits.shape[1],
                                      logits.shape[2]))
            loss = nn.cross_entropy(flat, targets, ignore_index=-1)
            loss_val = float(loss.data)
            if not math.isfinite(loss_val):
                raise NonFiniteLoss(
                    f"loss {loss_val} at step {global_step} (epoch {epoch})")
            loss.backward()
            grads = nn.grads_of(model.params)
            nn.zero_grads(model.params.values())
            lr_t = nn.linear_decay_lr(global_step, total_steps, cfg.base_lr)
            nn.adamw_step(model.params, grads, opt, lr_t)
            step_losses.append(loss_val)
            epoch_losses.append(loss_val)
            log.debug("step %d lr %.3g loss %.4f", global_step, lr_t, loss_val)
            global_step += 1
        epoch_means.append(float(np.mean(epoch_losses)))
        log.info("epoch %d mean loss %.4f", epoch, epoch_means[-1])
    model.train_log = {"step_losses": step_losses, "epoch_mean_losses": epoch_means}
    return model


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _next_probs(logits: np.ndarray, temperature: float, top_k: Optional[int],
                forbid: Sequence[int]) -> np.ndarray:
    """Rowwise float64 sampling distribution after temperature and top-k."""
    z = logits.astype(np.float64, copy=True)
    z[:, list(forbid)] = -np.inf
    if temperature != 1.0:
        z = z / temperature
    probs = F.softmax_np(z, axis=-1)
    if top_k is not None and top_k < probs.shape[1]:
        # stable argsort on -z: ties keep the lowest token id
        order = np.argsort(-z, axis=-1, kind="stable")[:, :top_k]
        kept = np.zeros_like(probs)
        np.put_along_axis(kept, order, np.take_along_axis(probs, order, axis=-1),
                          axis=-1)
        probs = kept / kept.sum(axis=-1, keepdims=True)
    return probs


def _draw(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random((probs.shape[0], 1))
    idx = (cdf < u).sum(axis=-1)
    return np.minimum(idx, probs.shape[1] - 1)


def _sample_chunk(model: GptModel, batch: int, opts: SampleOpts,
                  rng: np.random.Generator) -> List[List[int]]:
    """Token rows (without sentinels) for one chunk of sequences."""
    cfg = model.cfg
    bos, eos = cfg.vocab - 2, cfg.vocab - 1
    max_new = opts.max_new if opts.max_new is not None else cfg.max_len + 1
    max_new = min(max_new, cfg.context - 1)

    cache = model.new_cache(batch)
    tokens = np.full((batch, 1), bos, dtype=np.int64)
    out = np.full((batch, max_new), eos, dtype=np.int64)
    alive = np.ones(batch, dtype=bool)
    for step in range(max_new):
        logits = model.forward_np(tokens, cache)[:, -1, :]
        if opts.temperature == 0.0:
            z = logits.astype(np.float64, copy=True)
            z[:, bos] = -np.inf
            nxt = np.argmax(z, axis=-1)
        else:
            probs = _next_probs(logits, opts.temperature, opts.top_k, (bos,))
            nxt = _draw(probs, rng)
        nxt = np.where(alive, nxt, eos)
        out[:, step] = nxt
        alive &= nxt != eos
        if not alive.any():
            break
        tokens = nxt[:, None]
    rows = []
    for r in range(batch):
        row = out[r]
        stop = np.nonzero(row == eos)[0]
        rows.append(row[:stop[0]].tolist() if stop.size else row.tolist())
    return rows


def sample_token_rows(model: GptModel, n: int, opts: SampleOpts) -> List[List[int]]:
    """n sampled token rows (sentinels stripped), deterministic in (seed, n).

    Work is cut into fixed-size chunks, each driven by its own RNG stream
    spawned from the master seed, so results do not depend on scheduling.
    """
    n_chunks = math.ceil(n / _SAMPLE_CHUNK)
    streams = np.random.SeedSequence(opts.seed).spawn(max(n_chunks, 1))
    rows: List[List[int]] = []
    for c in range(n_chunks):
        batch = min(_SAMPLE_CHUNK, n - c * _SAMPLE_CHUNK)
        rng = np.random.Generator(np.random.PCG64(streams[c]))
        rows.extend(_sample_chunk(model, batch, opts, rng))
    return rows


def sample_many(model: GptModel, n: int, opts: SampleOpts) -> List[bytes]:
    """n password byte-strings; output bytes are capped at cfg.max_len."""
    if model.vocab is None:
        raise ConfigError("model has no byte alphabet; sample token rows instead")
    alphabet = model.vocab.alphabet
    return [bytes(alphabet[t] for t in row[:model.cfg.max_len])
            for row in sample_token_rows(model, n, opts)]


def sample(model: GptModel, opts: SampleOpts) -> bytes:
    """One sampled password (possibly empty when EOS comes first)."""
    return sample_many(model, 1, opts)[0]


# ---------------------------------------------------------------------------
# scoring
# ---------------------------------------------------------------------------

def _score_rows(model: GptModel, rows: List[List[int]]) -> np.ndarray:
    """Float64 log-softmax [n_rows, context-1, V] over padded forwards.

    Rows are always padded to the full context so each password's logits
    are bit-identical regardless of what it is batched with.
    """
    cfg = model.cfg
    eos = cfg.vocab - 1
    padded = np.full((len(rows), cfg.context - 1), eos, dtype=np.int64)
    for i, row in enumerate(rows):
        padded[i, :len(row) - 1] = row[:-1]
    with T.no_grad():
        logits = model.forward_np(padded)
    return F.log_softmax_np(logits.astype(np.float64), axis=-1)


def _encode_many(model: GptModel, passwords: Sequence[bytes]) -> List[List[int]]:
    if model.vocab is None:
        raise ConfigError("model has no byte alphabet")
    return [model.vocab.encode(pw, model.cfg.max_len) for pw in passwords]


_LOG10E = math.log10(math.e)


def log_prob_many(model: GptModel, passwords: Sequence[bytes],
                  include_eos: bool = True) -> np.ndarray:
    """log10 probability of each password, including the terminal EOS factor.

    With include_eos=False this is the log10 prefix mass: the probability
    that generation produces these bytes so far, terminated or not.
    """
    if not len(passwords):
        return np.zeros(0)
    rows = _encode_many(model, passwords)
    out = np.empty(len(rows))
    batch = 1024
    for start in range(0, len(rows), batch):
        part = rows[start:start + batch]
        logp = _score_rows(model, part)
        for i, row in enumerate(part):
            stop = len(row) - 1 if include_eos else len(row) - 2
            positions = np.arange(stop)
            targets = np.asarray(row[1:stop + 1])
            out[start + i] = logp[i, positions, targets].sum() * _LOG10E
    return out


def log_prob(model: GptModel, password: bytes) -> float:
    """log10 model probability of the password (always <= 0)."""
    return float(log_prob_many(model, [password])[0])


def prefix_log_prob(model: GptModel, prefix: bytes) -> float:
    """log10 probability mass of all passwords beginning with `prefix`."""
    return float(log_prob_many(model, [prefix], include_eos=False)[0])


def entropy_profile(model: GptModel, password: bytes) -> np.ndarray:
    """Per-position entropies H_i in bits, i = 1..len(password).

    H_i is the Shannon entropy of p(. | x_<i); position 1 is identical
    for every password because its conditioning context is just BOS.
    """
    rows = _encode_many(model, [password])
    logp = _score_rows(model, rows)[0]  # [context-1, V]
    n = len(password)
    h = np.empty(n)
    for i in range(n):
        lp = logp[i]
        p = np.exp(lp)
        h[i] = -(p * lp).sum() / math.log(2.0)
    return h


def next_distribution(model: GptModel, prefix: Sequence[int]) -> np.ndarray:
    """Probability vector over the vocabulary given a BOS-led prefix."""
    cfg = model.cfg
    prefix = list(prefix)
    bos, eos = cfg.vocab - 2, cfg.vocab - 1
    if not prefix or prefix[0] != bos:
        raise MalformedPrefix("prefix must begin with BOS")
    if eos in prefix:
        raise MalformedPrefix("prefix must not contain EOS")
    if any(t < 0 or t >= cfg.vocab for t in prefix):
        raise MalformedPrefix("prefix token outside the vocabulary")
    if len(prefix) >= cfg.context:
        raise MalformedPrefix(f"prefix length {len(prefix)} >= context {cfg.context}")
    # pad to the full context so logits match the batched scorer bit for bit
    padded = np.full((1, cfg.context - 1), eos, dtype=np.int64)
    padded[0, :len(prefix)] = prefix
    with T.no_grad():
        logits = model.forward_np(padded)[0, len(prefix) - 1]
    return F.softmax_np(logits.astype(np.float64))


def brute_force_logprob(length: int, alphabet_size: int) -> float:
    """log10 chance of one uniform random guess: -length * log10(alphabet)."""
    if length < 1 or alphabet_size < 2:
        raise ConfigError("need length >= 1 and alphabet_size >= 2")
    return -length * math.log10(alphabet_size)
