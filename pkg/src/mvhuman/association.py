"""Cross-view identity association.

Stages: intra-view self-attention, contrastive projection, soft assignment of
person queries to all detections, aggregation, identity readout. Losses: the
Hungarian-aligned assignment cross-entropy and InfoNCE over cross-view pairs.

Person queries are the learnable bank Q plus a projection of the reference
view's enhanced tokens (sorted by pixel), so that each active slot is tied to
one concrete person of the current scene.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .errors import EmptySceneError
from .hungarian import hungarian_match
from .nn import LayerNorm, Linear, Module, MultiHeadAttention, attention_scores, make_rng, uniform_init

LOG_EPS = 1e-12
QUERY_INIT_SCALE = 0.1


@dataclass
class AssocConfig:
    dim: int = 32
    proj_dim: int = 16
    heads: int = 4
    max_queries: int = 8
    tau: float = 0.07
    mode: str = "learned"      # "learned" or "cosine" (parameter-free oracle path)
    cosine_tau: float = 0.02
    seed: int = 0


@dataclass
class TokenSet:
    features: np.ndarray   # N x D
    pixels: np.ndarray     # N x 2
    view_ids: np.ndarray   # N
    indices: np.ndarray    # N, index within view
    confidence: np.ndarray
    labels: np.ndarray     # GT person id per token (-1 if unknown)

    def __len__(self):
        return len(self.view_ids)

    def counts(self, num_views):
        return np.bincount(self.view_ids, minlength=num_views)


def scene_tokens(scene):
    dets = scene.detections()
    D = scene.spec.feature_dim
    return TokenSet(
        np.array([d.feature for d in dets]).reshape(-1, D),
        np.array([d.pixel for d in dets]).reshape(-1, 2),
        np.array([d.view_id for d in dets], dtype=int),
        np.array([d.index for d in dets], dtype=int),
        np.array([d.confidence for d in dets]),
        np.array([d.person_id for d in dets], dtype=int),
    )


# -- stage functions -------------------------------------------------------------

def reference_view(counts):
    """View with the most detections; ties go to the lowest view id."""
    counts = np.asarray(counts)
    return int(np.argmax(counts))


def select_active_queries(num_queries, counts):
    counts = list(counts)
    return int(min(max(counts) if counts else 0, num_queries))


def enhance_intra_view(features, view_ids, sa, ln):
    """z~ = LN(z + SA(z)) computed separately within each view; rows keep input order."""
    z = ad.as_var(features)
    view_ids = np.asarray(view_ids)
    parts, order = [], []
    for v in np.unique(view_ids):
        idx = np.flatnonzero(view_ids == v)
        zv = z[idx]
        out, _ = sa(zv, zv, zv)
        parts.append(ln(zv + out))
        order.append(idx)
    if not parts:
        raise EmptySceneError("no detections in any view")
    stacked = ad.concat(parts, axis=0)
    perm = np.concatenate(order)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    return stacked[inv]


def project_contrastive(z, layer):
    return ad.l2_normalize(layer(z), axis=-1)


def soft_assign(queries, keys, wq, wk, heads):
    """Head-averaged softmax(Q W_h^Q (K W_h^K)^T / sqrt(D/H)), rows stochastic."""
    keys = ad.as_var(keys)
    if keys.shape[0] == 0:
        raise EmptySceneError("soft assignment over zero tokens")
    scores = attention_scores(ad.as_var(queries), keys, wq, wk, heads)
    return ad.softmax(scores, axis=-1).mean(axis=0)


def aggregate(A, K, ln):
    return ln(ad.matmul(A, K))


def assign_identities(A):
    """Per-detection argmax over queries (ties to the lowest query index).

    Returns (person id per detection, sorted list of queries that received any
    detection). Queries with nothing assigned are filtered out.
    """
    A = A.data if isinstance(A, Var) else np.asarray(A)
    if A.shape[1] == 0:
        return np.zeros(0, dtype=int), []
    ids = np.argmax(A, axis=0)
    return ids, sorted(set(ids.tolist()))


def seed_order(pixels):
    """Reference-view seeds ordered by pixel u, then v."""
    pixels = np.asarray(pixels)
    return np.lexsort((pixels[:, 1], pixels[:, 0]))


# -- losses ------------------------------------------------------------------------

def gt_assignment(labels):
    """Row-normalized GT matrix over persons present in ``labels`` (sorted ids)."""
    labels = np.asarray(labels)
    pids = sorted(set(int(x) for x in labels if x >= 0))
    G = np.zeros((len(pids), len(labels)))
    for r, pid in enumerate(pids):
        G[r, labels == pid] = 1.0
    sums = G.sum(axis=1, keepdims=True)
    return G / np.where(sums > 0, sums, 1.0), pids


def match_queries(A, G):
    """Hungarian alignment of GT rows to queries on cost -sum_n G[p,n] log A[q,n]."""
    A = A.data if isinstance(A, Var) else np.asarray(A)
    cost = -G @ np.log(A + LOG_EPS).T
    return hungarian_match(cost).cols


def loss_assign(A, G):
    """-(1/P*) sum_p sum_n G[p,n] log A[pi(p), n]; matching is held constant.

    Returns (loss Var, matched query per GT row, -1 if unmatched).
    """
    A = ad.as_var(A)
    G = np.asarray(G, dtype=float)
    active = G.sum(axis=1) > 0
    if not active.all():
        warnings.warn("GT person with zero detections skipped in assignment loss")
    G = G[active]
    if G.shape[0] == 0 or A.shape[0] == 0:
        return Var(0.0), np.full(len(active), -1)
    cols = match_queries(A, G)
    rows = np.flatnonzero(cols >= 0)
    matched = np.full(len(active), -1)
    matched[np.flatnonzero(active)] = cols
    if len(rows) == 0:
        return Var(0.0), matched
    picked = A[cols[rows]]
    logA = ad.log(picked + LOG_EPS)
    total = ad.vsum(ad.mul(logA, G[rows]))
    return total * (-1.0 / G.shape[0]), matched


def positive_pairs(labels, view_ids):
    labels = np.asarray(labels)
    view_ids = np.asarray(view_ids)
    same = (labels[:, None] == labels[None, :]) & (labels[:, None] >= 0)
    cross = view_ids[:, None] != view_ids[None, :]
    return np.argwhere(same & cross)


def loss_contrastive(h, labels, view_ids, tau=0.07):
    """InfoNCE over ordered same-person cross-view pairs; denominator over k != i.

    Returns (loss Var, has_pairs flag).
    """
    h = ad.as_var(h)
    pairs = positive_pairs(labels, view_ids)
    if len(pairs) == 0:
        return Var(0.0), False
    n = h.shape[0]
    sim = ad.matmul(h, ad.transpose(h)) * (1.0 / tau)
    mask = np.where(np.eye(n, dtype=bool), -np.inf, 0.0)
    logits = sim + mask
    m = np.max(np.where(np.isinf(mask), -np.inf, sim.data), axis=1, keepdims=True)
    shifted = logits - m
    lse = ad.log(ad.vsum(ad.exp(shifted), axis=1)) + m[:, 0]
    i, j = pairs[:, 0], pairs[:, 1]
    pos = sim[i, j]
    return ad.vmean(lse[i] - pos), True


# -- model -------------------------------------------------------------------------

@dataclass
class AssocOutput:
    enhanced: Var
    h: Var
    A: Var
    f_agg: Var
    ref_view: int
    seeds: np.ndarray      # token indices of the reference-view seeds, in query order
    identities: np.ndarray
    active: list


class AssociationModel(Module):
    def __init__(self, cfg=None):
        cfg = cfg or AssocConfig()
        self.cfg = cfg
        rng = make_rng(cfg.seed)
        D = cfg.dim
        self.sa = MultiHeadAttention(D, cfg.heads, rng)
        self.ln_in = LayerNorm(D)
        self.contrast = Linear(D, cfg.proj_dim, rng, bias=False)
        self.queries = ad.parameter(QUERY_INIT_SCALE * uniform_init(rng, (cfg.max_queries, D), D))
        # queries start as their seeds and scores as a PSD similarity, so the
        # first Hungarian matchings already agree with the seeding
        self.seed_proj = Linear(D, D, rng)
        self.seed_proj.weight.data[...] = np.eye(D)
        self.seed_proj.bias.data[...] = 0.0
        self.wq = ad.parameter(uniform_init(rng, (D, D), D))
        self.wk = ad.parameter(self.wq.data.copy())
        self.ln_agg = LayerNorm(D)

    def forward(self, tokens, num_views=None):
        if len(tokens) == 0:
            raise EmptySceneError("scene has no detections")
        num_views = num_views or int(tokens.view_ids.max()) + 1
        counts = tokens.counts(num_views)
        ref = reference_view(counts)
        p_active = select_active_queries(self.cfg.max_queries, counts)
        ref_idx = np.flatnonzero(tokens.view_ids == ref)
        seeds = ref_idx[seed_order(tokens.pixels[ref_idx])][:p_active]

        if self.cfg.mode == "cosine":
            z = ad.l2_normalize(ad.as_var(tokens.features))
            h = z
            q = z[seeds]
            A = ad.softmax(ad.matmul(q, ad.transpose(z)) * (1.0 / self.cfg.cosine_tau), axis=-1)
            f_agg = ad.matmul(A, z)
        else:
            z = enhance_intra_view(tokens.features, tokens.view_ids, self.sa, self.ln_in)
            h = project_contrastive(z, self.contrast)
            q = self.queries[:p_active] + self.seed_proj(z[seeds])
            A = soft_assign(q, z, self.wq, self.wk, self.cfg.heads)
            f_agg = aggregate(A, z, self.ln_agg)
        ids, active = assign_identities(A)
        return AssocOutput(z, h, A, f_agg, ref, seeds, ids, active)

    __call__ = forward

    def losses(self, tokens, num_views=None):
        out = self.forward(tokens, num_views)
        G, _ = gt_assignment(tokens.labels)
        la, matched = loss_assign(out.A, G)
        lc, _ = loss_contrastive(out.h, tokens.labels, tokens.view_ids, self.cfg.tau)
        return out, {"assign": la, "contra": lc}
