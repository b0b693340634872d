"""Vector-quantized password transformer.

A bidirectional transformer encoder maps each token (sentinels included)
to a latent, a linear layer projects it down to a small code dimension,
and the result snaps to its nearest codebook entry. The quantized
vectors are projected back up and fed to a causal decoder trained to
reconstruct the password character by character. Training is end to end:
reconstruction cross-entropy plus a commitment term beta*||z - sg(q)||^2,
with gradients copied straight through the quantizer and the codebook
maintained by EMA k-means.

Generation trains a second, autoregressive model over code indices
(reusing the GPT machinery with a code vocabulary); sampling draws a code
sequence and the decoder turns it into bytes. The encoder is not needed
at that point.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import gpt, nn
from .corpus import Corpus
from .errors import ConfigError, DeadCodebook, EmptyCorpus, LengthExceeded, NonFiniteLoss
from .gpt import GptConfig, GptModel, SampleOpts, UNIQUE, ALL_OCCURRENCES
from .nn import tensor as T
from .rng import generator
from .tokenizer import FULL_ALPHABET, Vocab

log = logging.getLogger(__name__)

_LAPLACE_EPS = 1e-5


@dataclass
class VqtConfig:
    d_model: int = 768
    heads: int = 12
    enc_layers: int = 8
    dec_layers: int = 8
    code_dim: int = 10
    codebook_size: int = 300
    commitment_beta: float = 0.25
    ema_decay: float = 0.99
    dead_code_threshold: float = 0.5  # warn when unused fraction reaches this
    max_len: int = 16
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
    dtype: str = "float32"
    alphabet: Optional[bytes] = FULL_ALPHABET

    def __post_init__(self):
        if self.d_model % self.heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by {self.heads} heads")
        if self.codebook_size < 2:
            raise ConfigError("codebook needs at least 2 entries")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")

    @property
    def vocab(self) -> int:
        return (len(self.alphabet) if self.alphabet is not None else 256) + 2

    @property
    def context(self) -> int:
        return self.max_len + 2

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


def _init_vqt_params(cfg: VqtConfig) -> Dict[str, nn.Tensor]:
    rng = generator(cfg.seed)
    dt = cfg.np_dtype
    std = cfg.init_std
    d, h4, cd = cfg.d_model, 4 * cfg.d_model, cfg.code_dim

    def w(*shape, s=std):
        return T.param(rng.normal(0.0, s, shape), dtype=dt)

    def zeros(*shape):
        return T.param(np.zeros(shape), dtype=dt)

    def ones(*shape):
        return T.param(np.ones(shape), dtype=dt)

    def block(p, pre, layers):
        resid = std / math.sqrt(2.0 * layers)
        p[pre + "ln1.g"] = ones(d)
        p[pre + "ln1.b"] = zeros(d)
        p[pre + "attn.wq"] = w(d, d)
        p[pre + "attn.wk"] = w(d, d)
        p[pre + "attn.wv"] = w(d, d)
        p[pre + "attn.wo"] = w(d, d, s=resid)
        p[pre + "attn.bq"] = zeros(d)
        p[pre + "attn.bk"] = zeros(d)
        p[pre + "attn.bv"] = zeros(d)
        p[pre + "attn.bo"] = zeros(d)
        p[pre + "ln2.g"] = ones(d)
        p[pre + "ln2.b"] = zeros(d)
        p[pre + "mlp.w_up"] = w(d, h4)
        p[pre + "mlp.b_up"] = zeros(h4)
        p[pre + "mlp.w_down"] = w(h4, d, s=resid)
        p[pre + "mlp.b_down"] = zeros(d)

    p: Dict[str, nn.Tensor] = {}
    p["enc.tok_emb"] = w(cfg.vocab, d)
    p["enc.pos_emb"] = w(cfg.context, d)
    for i in range(cfg.enc_layers):
        block(p, f"enc.h{i}.", cfg.enc_layers)
    p["enc.ln_f.g"] = ones(d)
    p["enc.ln_f.b"] = zeros(d)
    p["down.w"] = w(d, cd)
    p["down.b"] = zeros(cd)
    p["up.w"] = w(cd, d)
    p["up.b"] = zeros(d)
    p["dec.pos_emb"] = w(cfg.context, d)
    for i in range(cfg.dec_layers):
        block(p, f"dec.h{i}.", cfg.dec_layers)
    p["dec.ln_f.g"] = ones(d)
    p["dec.ln_f.b"] = zeros(d)
    p["dec.head.w"] = w(d, cfg.vocab)
    return p


class VqtModel:
    """Encoder / quantizer / decoder triple with its codebook state."""

    kind = "vqt"

    def __init__(self, cfg: VqtConfig, params: Optional[Dict[str, nn.Tensor]] = None,
                 codebook: Optional[np.ndarray] = None,
                 ema_counts: Optional[np.ndarray] = None,
                 ema_sums: Optional[np.ndarray] = None):
        self.cfg = cfg
        self.params = params if params is not None else _init_vqt_params(cfg)
        self.enc_blocks = self._views("enc.")
        self.dec_blocks = self._views("dec.")
        n, cd = cfg.codebook_size, cfg.code_dim
        self.codebook = (codebook if codebook is not None
                         else np.zeros((n, cd), dtype=cfg.np_dtype))
        self.ema_counts = (ema_counts if ema_counts is not None
                           else np.zeros(n, dtype=cfg.np_dtype))
        self.ema_sums = (ema_sums if ema_sums is not None
                         else np.zeros((n, cd), dtype=cfg.np_dtype))
        self.vocab = Vocab(cfg.alphabet) if cfg.alphabet is not None else None
        self.train_log: Dict[str, list] = {}

    def _views(self, prefix: str) -> List[nn.BlockParams]:
        layers = self.cfg.enc_layers if prefix == "enc." else self.cfg.dec_layers
        sub = {k[len(prefix):]: v for k, v in self.params.items()
               if k.startswith(prefix + "h")}
        return gpt._block_views(sub, layers)

    # ----- graph forwards (run under no_grad for inference) -----

    def encode_latents(self, rows: np.ndarray, dropout_p: float = 0.0,
                       rng: Optional[np.random.Generator] = None) -> nn.Tensor:
        """Down-projected encoder latents z: [B, L, code_dim]."""
        b, L = rows.shape
        if L > self.cfg.context:
            raise LengthExceeded(f"{L} tokens exceed context {self.cfg.context}")
        p = self.params
        pos = np.arange(L)
        x = T.add(T.embedding(p["enc.tok_emb"], rows),
                  T.embedding(p["enc.pos_emb"], pos))
        x = T.dropout(x, dropout_p, rng)
        for blk in self.enc_blocks:
            x = nn.transformer_block(x, blk, self.cfg.heads, dropout_p=dropout_p,
                                     rng=rng, causal=False)
        x = T.layer_norm(x, p["enc.ln_f.g"], p["enc.ln_f.b"])
        return T.add(T.matmul(x, p["down.w"]), p["down.b"])

    def decode_logits(self, latents: nn.Tensor, dropout_p: float = 0.0,
                      rng: Optional[np.random.Generator] = None) -> nn.Tensor:
        """Causal decoder logits [B, L, V] from (quantized) latents."""
        b, L, _ = latents.shape
        p = self.params
        pos = np.arange(L)
        x = T.add(T.add(T.matmul(latents, p["up.w"]), p["up.b"]),
                  T.embedding(p["dec.pos_emb"], pos))
        x = T.dropout(x, dropout_p, rng)
        for blk in self.dec_blocks:
            x = nn.transformer_block(x, blk, self.cfg.heads, dropout_p=dropout_p,
                                     rng=rng, causal=True)
        x = T.layer_norm(x, p["dec.ln_f.g"], p["dec.ln_f.b"])
        return T.matmul(x, p["dec.head.w"])

    def quantize(self, z: np.ndarray) -> np.ndarray:
        """Nearest codebook index per latent; ties break to the lowest index."""
        flat = z.reshape(-1, self.cfg.code_dim)
        d2 = (np.sum(flat * flat, axis=1, keepdims=True)
              - 2.0 * flat @ self.codebook.T
              + np.sum(self.codebook * self.codebook, axis=1))
        return np.argmin(d2, axis=1).reshape(z.shape[:-1])


def _length_batches(lengths: Sequence[int], order: np.ndarray,
                    batch_size: int) -> List[List[int]]:
    """Group a shuffled index order into same-length batches (no padding)."""
    buckets: Dict[int, List[int]] = {}
    batches: List[List[int]] = []
    for idx in order:
        bucket = buckets.setdefault(lengths[idx], [])
        bucket.append(int(idx))
        if len(bucket) == batch_size:
            batches.append(bucket)
            buckets[lengths[idx]] = []
    batches.extend(b for b in buckets.values() if b)
    return batches


def train_vqt(corpus: Corpus, cfg: VqtConfig, view: str = UNIQUE) -> VqtModel:
    """End-to-end reconstruction training with EMA k-means codebook updates.

    The codebook seeds from randomly chosen down-projected latents of the
    first batch. Emits a DeadCodebook warning after any epoch in which at
    least `dead_code_threshold` of the entries went unused.
    """
    if not corpus.entries:
        raise EmptyCorpus("cannot train on an empty corpus")
    if corpus.max_len > cfg.max_len:
        raise ConfigError(
            f"corpus max_len {corpus.max_len} exceeds model max_len {cfg.max_len}")
    vocab = Vocab(cfg.alphabet)
    if view == UNIQUE:
        pws = sorted(corpus.entries)
    elif view == ALL_OCCURRENCES:
        pws = [pw for pw in sorted(corpus.entries)
               for _ in range(corpus.entries[pw])]
    else:
        raise ConfigError(f"unknown training view {view!r}")
    rows = [vocab.encode(pw, cfg.max_len) for pw in pws]
    lengths = [len(r) for r in rows]

    model = VqtModel(cfg)
    seqs = np.random.SeedSequence(cfg.seed).spawn(3)
    shuffle_rng = np.random.Generator(np.random.PCG64(seqs[0]))
    drop_rng = np.random.Generator(np.random.PCG64(seqs[1]))
    seed_rng = np.random.Generator(np.random.PCG64(seqs[2]))

    opt = nn.init_opt_state(model.params, base_lr=cfg.base_lr,
                            weight_decay=cfg.weight_decay, beta1=cfg.beta1,
                            beta2=cfg.beta2, eps=cfg.adam_eps)
    n = len(rows)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch

    seeded = False
    step_losses: List[float] = []
    epoch_means: List[float] = []
    global_step = 0
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        used_codes: set = set()
        epoch_losses = []
        for batch_idx in _length_batches(lengths, order, cfg.batch_size):
            batch = np.asarray([rows[i] for i in batch_idx], dtype=np.int64)
            z = model.encode_latents(batch, dropout_p=cfg.dropout, rng=drop_rng)
            if not seeded:
                _seed_codebook(model, z.data, seed_rng)
                seeded = True
            codes = model.quantize(z.data)
            used_codes.update(np.unique(codes).tolist())
            q_data = model.codebook[codes].astype(z.data.dtype)

            diff = T.add(z, -q_data)
            commit = T.mul(T.tmean(T.mul(diff, diff)), cfg.commitment_beta)
            q_st = T.add(z, q_data - z.data)  # straight-through copy
            logits = model.decode_logits(q_st, dropout_p=cfg.dropout, rng=drop_rng)
            L = batch.shape[1]
            pred = T.reshape(logits, (batch.shape[0] * L, cfg.vocab))
            targets = np.concatenate(
                [batch[:, 1:], np.full((batch.shape[0], 1), -1, dtype=np.int64)],
                axis=1).reshape(-1)
            recon = nn.cross_entropy(pred, targets, ignore_index=-1)
            loss = T.add(recon, commit)
            loss_val = float(loss.data)
            if not math.isfinite(loss_val):
                raise NonFiniteLoss(f"loss {loss_val} at step {global_step}")
            loss.backward()
            grads = nn.grads_of(model.params)
            nn.zero_grads(model.params.values())
            lr_t = nn.linear_decay_lr(global_step, total_steps, cfg.base_lr)
            nn.adamw_step(model.params, grads, opt, lr_t)
            _ema_update(model, z.data, codes)
            step_losses.append(loss_val)
            epoch_losses.append(loss_val)
            log.debug("vqt step %d loss %.4f (recon %.4f)", global_step, loss_val,
                      float(recon.data))
            global_step += 1
        epoch_means.append(float(np.mean(epoch_losses)))
        log.info("vqt epoch %d mean loss %.4f", epoch, epoch_means[-1])
        unused = 1.0 - len(used_codes) / cfg.codebook_size
        if unused >= cfg.dead_code_threshold:
            warnings.warn(
                f"{unused:.0%} of codebook entries unused in epoch {epoch}",
                DeadCodebook)
    model.train_log = {"step_losses": step_losses, "epoch_mean_losses": epoch_means}
    return model


def _seed_codebook(model: VqtModel, z: np.ndarray, rng: np.random.Generator) -> None:
    """Seed entries from randomly selected first-batch latents."""
    flat = z.reshape(-1, model.cfg.code_dim)
    n = model.cfg.codebook_size
    if flat.shape[0] >= n:
        picks = rng.choice(flat.shape[0], size=n, replace=False)
        init = flat[picks]
    else:
        picks = rng.choice(flat.shape[0], size=n, replace=True)
        init = flat[picks] + rng.normal(0, 1e-3, (n, model.cfg.code_dim))
    model.codebook = init.astype(model.cfg.np_dtype)
    model.ema_counts = np.ones(n, dtype=model.cfg.np_dtype)
    model.ema_sums = model.codebook.copy()


def _ema_update(model: VqtModel, z: np.ndarray, codes: np.ndarray) -> None:
    cfg = model.cfg
    flat = z.reshape(-1, cfg.code_dim)
    idx = codes.reshape(-1)
    counts = np.bincount(idx, minlength=cfg.codebook_size).astype(flat.dtype)
    sums = np.zeros_like(model.ema_sums)
    np.add.at(sums, idx, flat)
    d = cfg.ema_decay
    model.ema_counts = d * model.ema_counts + (1.0 - d) * counts
    model.ema_sums = d * model.ema_sums + (1.0 - d) * sums
    total = model.ema_counts.sum()
    smoothed = ((model.ema_counts + _LAPLACE_EPS)
                / (total + cfg.codebook_size * _LAPLACE_EPS) * total)
    model.codebook = (model.ema_sums / smoothed[:, None]).astype(cfg.np_dtype)


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------

def encode_codes(model: VqtModel, password: bytes) -> List[int]:
    """One codebook index per token, sentinels included; deterministic."""
    row = np.asarray([model.vocab.encode(password, model.cfg.max_len)],
                     dtype=np.int64)
    with T.no_grad():
        z = model.encode_latents(row)
    return model.quantize(z.data)[0].tolist()


def _decode_codes_batch(model: VqtModel, code_rows: Sequence[Sequence[int]]
                        ) -> List[bytes]:
    """Greedy per-position decode of same-length code rows to byte strings."""
    cfg = model.cfg
    bos, eos = cfg.vocab - 2, cfg.vocab - 1
    out: List[bytes] = []
    codes_arr = np.asarray(code_rows, dtype=np.int64)
    latents = model.codebook[codes_arr].astype(cfg.np_dtype)
    with T.no_grad():
        logits = model.decode_logits(T.Tensor(latents)).data
    pred = np.argmax(logits, axis=-1)  # position j predicts token j+1
    alphabet = model.vocab.alphabet
    for row in pred:
        chars: List[int] = []
        for t in row[:-1]:  # final position would predict beyond the sequence
            if t == eos or t == bos:
                break
            chars.append(int(t))
        out.append(bytes(alphabet[t] for t in chars[:cfg.max_len]))
    return out


def reconstruct(model: VqtModel, password: bytes) -> bytes:
    """Greedy reconstruction through the quantized bottleneck."""
    codes = encode_codes(model, password)
    return _decode_codes_batch(model, [codes])[0]


# ---------------------------------------------------------------------------
# codes model
# ---------------------------------------------------------------------------

def codes_model_config(vqt_cfg: VqtConfig, **overrides) -> GptConfig:
    """A GptConfig sized for sequences of code indices.

    Code rows are as long as token rows (max_len + 2) and get their own
    BOS/EOS wrapper, so the codes context is the VQT context + 2.
    """
    base = dict(
        d_model=vqt_cfg.d_model, heads=vqt_cfg.heads, layers=vqt_cfg.dec_layers,
        vocab=vqt_cfg.codebook_size + 2, max_len=vqt_cfg.max_len + 2,
        dropout=vqt_cfg.dropout, batch_size=vqt_cfg.batch_size,
        epochs=vqt_cfg.epochs, base_lr=vqt_cfg.base_lr, seed=vqt_cfg.seed,
        alphabet=None, dtype=vqt_cfg.dtype,
    )
    base.update(overrides)
    return GptConfig(**base)


def train_codes_model(corpus: Corpus, vqt: VqtModel, cfg: GptConfig,
                      view: str = UNIQUE) -> GptModel:
    """Autoregressive model over the corpus's quantized code sequences."""
    if cfg.vocab != vqt.cfg.codebook_size + 2:
        raise ConfigError(
            f"codes vocab {cfg.vocab} != codebook size + 2 = "
            f"{vqt.cfg.codebook_size + 2}")
    if cfg.max_len < vqt.cfg.max_len + 2:
        raise ConfigError("codes model context too small for VQT token rows")
    if view == UNIQUE:
        pws = sorted(corpus.entries)
    else:
        pws = [pw for pw in sorted(corpus.entries)
               for _ in range(corpus.entries[pw])]
    code_bos, code_eos = cfg.vocab - 2, cfg.vocab - 1
    vocab = vqt.vocab
    by_len: Dict[int, List[Tuple[int, bytes]]] = {}
    for i, pw in enumerate(pws):
        by_len.setdefault(len(pw), []).append((i, pw))
    rows: List[Optional[List[int]]] = [None] * len(pws)
    with T.no_grad():
        for length, group in sorted(by_len.items()):
            batch = np.asarray(
                [vocab.encode(pw, vqt.cfg.max_len) for _, pw in group],
                dtype=np.int64)
            z = vqt.encode_latents(batch)
            codes = vqt.quantize(z.data)
            for (i, _), crow in zip(group, codes):
                rows[i] = [code_bos] + crow.tolist() + [code_eos]
    model = gpt.train_sequences([r for r in rows if r is not None], cfg)
    model.kind = "codes"
    return model


def sample_vqt_many(vqt: VqtModel, codes_model: GptModel, n: int,
                    opts: SampleOpts) -> List[bytes]:
    """Sample code sequences, decode them greedily to byte strings."""
    token_rows = gpt.sample_token_rows(codes_model, n, opts)
    ctx = vqt.cfg.context
    out: List[Optional[bytes]] = [None] * n
    by_len: Dict[int, List[Tuple[int, List[int]]]] = {}
    for i, row in enumerate(token_rows):
        row = row[:ctx]
        if len(row) < 2:
            out[i] = b""  # too few codes to cover BOS + any character
            continue
        by_len.setdefault(len(row), []).append((i, row))
    for length, group in sorted(by_len.items()):
        decoded = _decode_codes_batch(vqt, [row for _, row in group])
        for (i, _), pw in zip(group, decoded):
            out[i] = pw
    return [pw if pw is not None else b"" for pw in out]


def sample_vqt(vqt: VqtModel, codes_model: GptModel, opts: SampleOpts) -> bytes:
    return sample_vqt_many(vqt, codes_model, 1, opts)[0]
