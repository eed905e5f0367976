import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mvhuman import autodiff as ad
from mvhuman.association import (LOG_EPS, AssocConfig, AssociationModel, TokenSet, aggregate, assign_identities,
                                 enhance_intra_view, gt_assignment, loss_assign, loss_contrastive,
                                 positive_pairs, project_contrastive, reference_view, scene_tokens,
                                 select_active_queries, soft_assign)
from mvhuman.errors import EmptySceneError
from mvhuman.gradcheck import finite_diff_check
from mvhuman.nn import LayerNorm, Linear, MultiHeadAttention, make_rng
from mvhuman.simulator import SceneSpec, generate_scene

from conftest import rng_for


# -- scalar-loop oracles -------------------------------------------------------------

def loop_softmax(row):
    m = max(row)
    e = [math.exp(x - m) for x in row]
    s = sum(e)
    return [x / s for x in e]


def loop_scores(Q, K, wq, wk, H):
    P, D = Q.shape
    N = K.shape[0]
    dh = wq.shape[1] // H
    q = [[sum(Q[p, i] * wq[i, j] for i in range(D)) for j in range(wq.shape[1])] for p in range(P)]
    k = [[sum(K[n, i] * wk[i, j] for i in range(K.shape[1])) for j in range(wk.shape[1])] for n in range(N)]
    return [[[sum(q[p][h * dh + c] * k[n][h * dh + c] for c in range(dh)) / math.sqrt(dh)
              for n in range(N)] for p in range(P)] for h in range(H)]


def loop_soft_assign(Q, K, wq, wk, H):
    sc = loop_scores(Q, K, wq, wk, H)
    P, N = Q.shape[0], K.shape[0]
    A = np.zeros((P, N))
    for h in range(H):
        for p in range(P):
            A[p] += np.array(loop_softmax(sc[h][p])) / H
    return A


def loop_layer_norm(x, eps=1e-5):
    mu = sum(x) / len(x)
    var = sum((v - mu) ** 2 for v in x) / len(x)
    return [(v - mu) / math.sqrt(var + eps) for v in x]


def loop_mha(Z, mha):
    D, H = mha.dim, mha.heads
    dh = D // H
    sc = loop_scores(Z, Z, mha.wq.data, mha.wk.data, H)
    N = Z.shape[0]
    v = [[sum(Z[n, i] * mha.wv.data[i, j] for i in range(D)) for j in range(D)] for n in range(N)]
    out = np.zeros((N, D))
    for h in range(H):
        for p in range(N):
            a = loop_softmax(sc[h][p])
            for c in range(dh):
                out[p, h * dh + c] = sum(a[n] * v[n][h * dh + c] for n in range(N))
    return np.array([[sum(out[p, i] * mha.wo.data[i, j] for i in range(D)) for j in range(D)] for p in range(N)])


def toy_model(D=8, H=2, seed=0):
    r = make_rng(seed)
    return MultiHeadAttention(D, H, r), LayerNorm(D)


# -- enhance_intra_view ----------------------------------------------------------------

def test_enhance_single_detection_attends_to_itself():
    sa, ln = toy_model()
    z = rng_for(1).normal(size=(1, 8))
    out = enhance_intra_view(z, np.array([0]), sa, ln).data
    v_path = z @ sa.wv.data @ sa.wo.data
    assert np.max(np.abs(out - np.array([loop_layer_norm(list(z[0] + v_path[0]))]))) < 1e-12


def test_enhance_permutation_equivariant():
    sa, ln = toy_model()
    r = rng_for(2)
    z = r.normal(size=(5, 8))
    views = np.array([0, 1, 0, 1, 0])
    perm = r.permutation(5)
    a = enhance_intra_view(z, views, sa, ln).data
    b = enhance_intra_view(z[perm], views[perm], sa, ln).data
    assert np.max(np.abs(a[perm] - b)) < 1e-12


def test_enhance_views_do_not_mix():
    sa, ln = toy_model()
    r = rng_for(3)
    z = r.normal(size=(4, 8))
    views = np.array([0, 0, 1, 1])
    a = enhance_intra_view(z, views, sa, ln).data
    z2 = z.copy()
    z2[2:] = r.normal(size=(2, 8))
    b = enhance_intra_view(z2, views, sa, ln).data
    assert np.array_equal(a[:2], b[:2])


def test_enhance_matches_loop_oracle_seed19():
    sa, ln = toy_model(seed=19)
    z = rng_for(19).normal(size=(3, 8))
    out = enhance_intra_view(z, np.zeros(3, dtype=int), sa, ln).data
    attn = loop_mha(z, sa)
    ref = np.array([loop_layer_norm(list(z[i] + attn[i])) for i in range(3)])
    assert np.max(np.abs(out - ref)) < 1e-12


# -- project_contrastive -----------------------------------------------------------

def test_project_unit_norm_and_scale_invariance():
    layer = Linear(8, 4, make_rng(0), bias=False)
    x = rng_for(4).normal(size=(6, 8))
    h = project_contrastive(x, layer).data
    assert np.max(np.abs(np.linalg.norm(h, axis=1) - 1)) < 1e-9
    assert np.max(np.abs(project_contrastive(3.7 * x, layer).data - h)) < 1e-15


def test_project_matches_oracle_seed23():
    layer = Linear(8, 4, make_rng(23), bias=False)
    x = rng_for(23).normal(size=(5, 8))
    y = x @ layer.weight.data.T
    ref = y / np.linalg.norm(y, axis=1, keepdims=True)
    assert np.max(np.abs(project_contrastive(x, layer).data - ref)) < 1e-12


def test_project_zero_vector_is_finite():
    layer = Linear(8, 4, make_rng(0), bias=False)
    assert np.all(np.isfinite(project_contrastive(np.zeros((1, 8)), layer).data))


# -- soft_assign ----------------------------------------------------------------------

def test_soft_assign_single_token():
    r = rng_for(5)
    A = soft_assign(r.normal(size=(3, 8)), r.normal(size=(1, 8)), r.normal(size=(8, 8)), r.normal(size=(8, 8)), 2)
    assert np.array_equal(A.data, np.ones((3, 1)))


def test_soft_assign_duplicate_tokens_equal_attention():
    r = rng_for(6)
    K = r.normal(size=(3, 8))
    A = soft_assign(r.normal(size=(2, 8)), np.concatenate([K, K]), r.normal(size=(8, 8)),
                    r.normal(size=(8, 8)), 2).data
    assert np.max(np.abs(A[:, :3] - A[:, 3:])) < 1e-9


def test_soft_assign_matches_oracle_seed29():
    r = rng_for(29)
    Q, K, wq, wk = r.normal(size=(2, 8)), r.normal(size=(4, 8)), r.normal(size=(8, 8)), r.normal(size=(8, 8))
    A = soft_assign(Q, K, wq, wk, 2).data
    assert np.max(np.abs(A - loop_soft_assign(Q, K, wq, wk, 2))) < 1e-12
    assert np.max(np.abs(A.sum(axis=1) - 1)) < 1e-12


def test_soft_assign_empty():
    with pytest.raises(EmptySceneError):
        soft_assign(np.ones((1, 8)), np.zeros((0, 8)), np.eye(8), np.eye(8), 2)


@given(st.integers(0, 100_000), st.integers(1, 6), st.integers(1, 12))
def test_soft_assign_rows_stochastic(seed, P, N):
    r = rng_for(seed)
    A = soft_assign(r.normal(size=(P, 8)) * 5, r.normal(size=(N, 8)) * 5, r.normal(size=(8, 8)),
                    r.normal(size=(8, 8)), 4).data
    assert np.all(A >= 0) and np.max(np.abs(A.sum(axis=1) - 1)) < 1e-6


# -- select_active_queries ----------------------------------------------------------

def test_select_active_queries_dynamic_formula():
    assert select_active_queries(36, [3, 5, 2]) == 5


def test_select_active_queries_edge_cases():
    assert select_active_queries(36, [0, 0]) == 0
    assert select_active_queries(36, [40]) == 36


def test_reference_view_ties_lowest():
    assert reference_view([2, 5, 5, 1]) == 1


# -- aggregate ----------------------------------------------------------------------

def test_aggregate_one_hot_and_uniform():
    ln = LayerNorm(8)
    K = rng_for(7).normal(size=(3, 8))
    A = np.array([[0.0, 1.0, 0.0]])
    assert np.max(np.abs(aggregate(A, K, ln).data[0] - loop_layer_norm(list(K[1])))) < 1e-12
    same = np.tile(K[0], (3, 1))
    u = np.full((1, 3), 1 / 3)
    assert np.max(np.abs(aggregate(u, same, ln).data[0] - loop_layer_norm(list(K[0])))) < 1e-9


def test_aggregate_pre_ln_oracle_seed31():
    r = rng_for(31)
    A = r.uniform(size=(3, 5))
    A /= A.sum(axis=1, keepdims=True)
    K = r.normal(size=(5, 8))
    pre = np.array([[sum(A[p, n] * K[n, d] for n in range(5)) for d in range(8)] for p in range(3)])
    assert np.max(np.abs(ad.matmul(A, K).data - pre)) < 1e-12
    ref = np.array([loop_layer_norm(list(row)) for row in pre])
    assert np.max(np.abs(aggregate(A, K, LayerNorm(8)).data - ref)) < 1e-12


# -- assign_identities ----------------------------------------------------------------

def test_assign_identity_like():
    A = 0.1 + np.eye(4)
    ids, active = assign_identities(A / A.sum(axis=1, keepdims=True))
    assert np.array_equal(ids, np.arange(4)) and active == [0, 1, 2, 3]


def test_assign_all_to_query_zero():
    A = np.array([[0.9, 0.8, 0.7], [0.1, 0.2, 0.3]])
    ids, active = assign_identities(A)
    assert np.array_equal(ids, [0, 0, 0]) and active == [0]


def test_assign_matches_column_scan_seed37():
    r = rng_for(37)
    A = r.integers(0, 4, size=(5, 20)).astype(float)   # many ties
    ids, active = assign_identities(A)
    for n in range(20):
        best = 0
        for p in range(5):
            if A[p, n] > A[best, n]:
                best = p
        assert ids[n] == best
    assert active == sorted(set(ids.tolist()))


@given(st.integers(0, 100_000))
def test_assign_invariant_under_monotone_column_rescaling(seed):
    r = rng_for(seed)
    A = r.uniform(size=(4, 9))
    scale = r.uniform(0.1, 10, size=9)
    shift = r.normal(size=9)
    B = np.exp(3 * A) * scale + shift
    assert np.array_equal(assign_identities(A)[0], assign_identities(B)[0])


# -- loss_assign ---------------------------------------------------------------------

def test_loss_assign_at_gt_equals_entropy():
    labels = np.array([0, 0, 1, 1, 1, 2])
    G, _ = gt_assignment(labels)
    loss, matched = loss_assign(G, G)
    ent = -np.sum(G[G > 0] * np.log(G[G > 0])) / 3
    assert abs(loss.data - ent) < 1e-9
    assert np.array_equal(matched, [0, 1, 2])


def test_loss_assign_uniform_single_person():
    N = 7
    G, _ = gt_assignment(np.zeros(N, dtype=int))
    loss, _ = loss_assign(np.full((1, N), 1 / N), G)
    # the log carries the 1e-12 floor, which shifts the value by about N * 1e-12
    assert abs(loss.data + np.log(1 / N + LOG_EPS)) < 1e-15
    assert abs(loss.data - np.log(N)) < 1e-10


def test_loss_assign_skips_empty_gt_row():
    G = np.array([[0.5, 0.5], [0.0, 0.0]])
    with pytest.warns(UserWarning):
        loss, matched = loss_assign(np.array([[0.5, 0.5]]), G)
    assert abs(loss.data - np.log(2)) < 1e-10 and matched[1] == -1


def _toy_scene(seed, persons, views):
    return generate_scene(SceneSpec(seed=seed, num_persons=persons, num_views=views))


def test_loss_assign_toy_scene_seed43():
    tokens = scene_tokens(_toy_scene(43, 2, 2))
    model = AssociationModel(AssocConfig(seed=43))
    out = model(tokens, 2)
    G, _ = gt_assignment(tokens.labels)
    loss, matched = loss_assign(out.A, G)
    A = out.A.data
    direct = 0.0
    for p in range(G.shape[0]):
        for n in range(G.shape[1]):
            if G[p, n] > 0:
                direct -= G[p, n] * math.log(A[matched[p], n] + 1e-12)
    assert abs(loss.data - direct / G.shape[0]) < 1e-12

    def f():
        return model.losses(tokens, 2)[1]["assign"]

    assert finite_diff_check(f, model.parameters(), max_entries=6, rng=rng_for(43)) < 1e-4


def test_loss_assign_minimum_by_projected_gradient():
    labels = np.array([0, 0, 1, 1, 1, 2, 2])
    G, _ = gt_assignment(labels)
    ent = -np.sum(G[G > 0] * np.log(G[G > 0])) / 3
    logits = ad.parameter(rng_for(8).normal(size=(3, 7)) * 0.1)
    for _ in range(3000):
        logits.grad = None
        with ad.GradTape() as tape:
            loss, _ = loss_assign(ad.softmax(logits, axis=-1), G)
        tape.backward(loss)
        logits.data -= 2.0 * logits.grad
    assert loss.data - ent < 1e-3
    A = ad.softmax(logits, axis=-1).data
    assert np.max(np.abs(A[np.argsort(np.argmax(A, axis=1))] - G)) < 0.05


# -- loss_contrastive -------------------------------------------------------------------

def test_contrastive_no_pairs():
    loss, flag = loss_contrastive(np.eye(3), np.array([0, 1, 2]), np.array([0, 0, 1]))
    assert loss.data == 0.0 and flag is False


def test_contrastive_hand_formula():
    tau = 0.07
    h = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    loss, flag = loss_contrastive(h, np.array([0, 0, 1]), np.array([0, 1, 0]), tau)
    hand = -math.log(math.exp(1 / tau) / (math.exp(1 / tau) + math.exp(0.0)))
    assert flag and abs(loss.data - hand) < 1e-12


def _loop_infonce(h, labels, views, tau):
    n = len(labels)
    total, count = 0.0, 0
    for i in range(n):
        for j in range(n):
            if i == j or labels[i] != labels[j] or views[i] == views[j]:
                continue
            num = math.exp(float(h[i] @ h[j]) / tau)
            den = sum(math.exp(float(h[i] @ h[k]) / tau) for k in range(n) if k != i)
            total -= math.log(num / den)
            count += 1
    return total / count


def test_contrastive_oracle_seed47():
    r = rng_for(47)
    labels = np.repeat(np.arange(3), 3)
    views = np.tile(np.arange(3), 3)
    raw = ad.parameter(r.normal(size=(9, 6)))
    h = ad.l2_normalize(raw).data
    loss, _ = loss_contrastive(h, labels, views, 0.07)
    assert abs(loss.data - _loop_infonce(h, labels, views, 0.07)) / abs(loss.data) < 1e-10
    assert finite_diff_check(lambda: loss_contrastive(ad.l2_normalize(raw), labels, views, 0.07)[0], [raw]) < 1e-4


def test_contrastive_decreases_as_positive_similarity_grows():
    r = rng_for(48)
    labels = np.array([0, 0, 1, 1])
    views = np.array([0, 1, 0, 1])
    h = r.normal(size=(4, 5))
    h /= np.linalg.norm(h, axis=1, keepdims=True)
    base = loss_contrastive(h, labels, views)[0].data
    moved = h.copy()
    moved[1] = h[1] + 0.05 * (h[0] - (h[0] @ h[1]) * h[1])
    moved[1] /= np.linalg.norm(moved[1])
    assert moved[1] @ h[0] > h[1] @ h[0]
    assert loss_contrastive(moved, labels, views)[0].data < base


def test_positive_pairs_cross_view_only():
    pairs = positive_pairs(np.array([0, 0, 0, -1]), np.array([0, 0, 1, 1]))
    assert sorted(map(tuple, pairs.tolist())) == [(0, 2), (1, 2), (2, 0), (2, 1)]


# -- model-level -----------------------------------------------------------------------

def test_full_association_loss_gradcheck_two_views():
    tokens = scene_tokens(_toy_scene(44, 2, 2))
    model = AssociationModel(AssocConfig(seed=1))

    def f():
        terms = model.losses(tokens, 2)[1]
        return terms["assign"] + terms["contra"]

    assert finite_diff_check(f, model.parameters(), max_entries=4, rng=rng_for(44)) < 1e-4


def test_model_output_invariants(noisy_scene):
    tokens = scene_tokens(noisy_scene)
    out = AssociationModel()(tokens, noisy_scene.num_views)
    assert np.max(np.abs(out.A.data.sum(axis=1) - 1)) < 1e-6
    assert out.A.shape == (select_active_queries(8, tokens.counts(noisy_scene.num_views)), len(tokens))
    assert np.max(np.abs(np.linalg.norm(out.h.data, axis=1) - 1)) < 1e-9


def test_model_empty_scene():
    empty = TokenSet(np.zeros((0, 32)), np.zeros((0, 2)), np.zeros(0, int), np.zeros(0, int), np.zeros(0),
                     np.zeros(0, int))
    with pytest.raises(EmptySceneError):
        AssociationModel()(empty, 2)


def _permute(tokens, order, view_map=None):
    views = tokens.view_ids[order]
    if view_map is not None:
        views = np.asarray(view_map)[views]
    return TokenSet(tokens.features[order], tokens.pixels[order], views, tokens.indices[order],
                    tokens.confidence[order], tokens.labels[order])


def test_pipeline_permutation_equivariance():
    scene = _toy_scene(45, 3, 3)
    tokens = scene_tokens(scene)
    counts = tokens.counts(3)
    model = AssociationModel(AssocConfig(seed=2))
    out0, l0 = model.losses(tokens, 3)
    r = rng_for(45)
    order = r.permutation(len(tokens))
    out1, l1 = model.losses(_permute(tokens, order), 3)
    assert np.max(np.abs(out0.A.data[:, order] - out1.A.data)) < 1e-9
    for k in l0:
        assert abs(l0[k].data - l1[k].data) < 1e-9
    # relabel views; the reference view content is unchanged when its count is unique
    if (counts == counts.max()).sum() == 1:
        vmap = [2, 0, 1]
        out2, l2 = model.losses(_permute(tokens, np.arange(len(tokens)), vmap), 3)
        assert np.max(np.abs(out0.A.data - out2.A.data)) < 1e-9
        for k in l0:
            assert abs(l0[k].data - l2[k].data) < 1e-9


def test_cosine_mode_separates_clean_features():
    scene = generate_scene(SceneSpec.noiseless(seed=46, num_persons=4))
    tokens = scene_tokens(scene)
    out = AssociationModel(AssocConfig(mode="cosine"))(tokens, scene.num_views)
    # each active query collects exactly one person's detections
    for q in out.active:
        assert len(set(tokens.labels[out.identities == q].tolist())) == 1
