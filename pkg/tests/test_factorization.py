import numpy as np
import pytest

from matmat.blocktarget import BlockSpec, BlockTarget, ChannelBinding, SideChannel, build_targets, popularity_spec, scalar_spec
from matmat.dataset import split
from matmat.errors import ConfigError, DataError, DivergenceError
from matmat.factorization import (
    ClassicModel,
    MatMatModel,
    TrainConfig,
    block_gradients,
    block_objective,
    fit_classic,
    fit_matmat,
    init_matmat,
    load_model,
    matmat_residual,
    predict_classic,
    predict_many,
    predict_matmat,
    save_model,
    sgd_step,
    train_classic,
    train_matmat,
)


def block(values):
    values = np.asarray(values, dtype=np.float64)
    return BlockTarget(t=values.shape[0], values=values)


def planted_problem(rng, n_users, n_items, t, d, density, scale=0.5):
    """Targets produced exactly by hidden factor blocks, so loss 0 is feasible."""
    Ustar = rng.standard_normal((n_users, t, d)) * scale
    Vstar = rng.standard_normal((n_items, d, t)) * scale
    n_cells = n_users * n_items
    picked = rng.choice(n_cells, size=int(density * n_cells), replace=False)
    us = (picked // n_items).astype(np.int64)
    iis = (picked % n_items).astype(np.int64)
    targets = np.einsum("nak,nkb->nab", Ustar[us], Vstar[iis])
    return us, iis, targets


# --- config validation --------------------------------------------------------

@pytest.mark.parametrize(
    "kwargs",
    [
        dict(learning_rate=0.0),
        dict(learning_rate=-0.1),
        dict(epochs=0),
        dict(d=0),
        dict(init_std=0.0),
        dict(l2=-1e-9),
        dict(clamp=(5.0, 0.5)),
    ],
)
def test_config_rejects_bad_values(kwargs):
    base = dict(learning_rate=0.01, epochs=5, d=2, seed=0)
    base.update(kwargs)
    with pytest.raises(ConfigError):
        TrainConfig(**base)


# --- initialization -----------------------------------------------------------

def test_init_shapes():
    config = TrainConfig(learning_rate=0.01, epochs=1, d=2, seed=0)
    model = init_matmat(config, 2, 3, 2)
    assert model.U.shape == (2, 2, 2)
    assert model.V.shape == (3, 2, 2)


def test_init_deterministic():
    config = TrainConfig(learning_rate=0.01, epochs=1, d=4, seed=123)
    a = init_matmat(config, 5, 7, 2)
    b = init_matmat(config, 5, 7, 2)
    assert np.array_equal(a.U, b.U)
    assert np.array_equal(a.V, b.V)


# --- residual and single step ---------------------------------------------------

def test_residual_zero_on_exact_fit():
    rng = np.random.default_rng(0)
    model = init_matmat(TrainConfig(learning_rate=0.1, epochs=1, d=2, seed=1), 1, 1, 2)
    target = block(model.U[0] @ model.V[0])
    assert np.allclose(matmat_residual(model, 0, 0, target), 0.0, atol=1e-15)


def test_residual_scalar_case():
    model = MatMatModel(
        U=np.array([[[2.0]]]), V=np.array([[[3.0]]]), t=1, d=1, max_rating=1.0
    )
    res = matmat_residual(model, 0, 0, block([[5.0]]))
    assert res.shape == (1, 1)
    assert res[0, 0] == 1.0


def test_residual_matches_hand_multiplication():
    rng = np.random.default_rng(7)
    U = rng.standard_normal((1, 2, 2))
    V = rng.standard_normal((1, 2, 2))
    R = rng.standard_normal((2, 2))
    model = MatMatModel(U=U, V=V, t=2, d=2, max_rating=1.0)
    res = matmat_residual(model, 0, 0, block(R))
    for a in range(2):
        for b in range(2):
            expected = U[0, a, 0] * V[0, 0, b] + U[0, a, 1] * V[0, 1, b] - R[a, b]
            assert res[a, b] == pytest.approx(expected, abs=1e-15)


def test_sgd_step_zero_residual_is_identity():
    rng = np.random.default_rng(9)
    model = init_matmat(TrainConfig(learning_rate=0.5, epochs=1, d=3, seed=2), 1, 1, 2)
    target = block(model.U[0] @ model.V[0])
    before_U, before_V = model.U[0].copy(), model.V[0].copy()
    sgd_step(model, 0, 0, target, learning_rate=0.5, l2=0.0)
    assert np.allclose(model.U[0], before_U, atol=1e-15)
    assert np.allclose(model.V[0], before_V, atol=1e-15)


def test_sgd_step_reduces_to_textbook_scalar_update():
    p, q, r, lr = 0.7, -0.4, 0.9, 0.05
    model = MatMatModel(U=np.array([[[p]]]), V=np.array([[[q]]]), t=1, d=1, max_rating=1.0)
    sgd_step(model, 0, 0, block([[r]]), learning_rate=lr, l2=0.0)
    e = p * q - r
    assert model.U[0, 0, 0] == pytest.approx(p - lr * 2 * e * q, abs=1e-15)
    assert model.V[0, 0, 0] == pytest.approx(q - lr * 2 * e * p, abs=1e-15)


def test_sgd_step_uses_pre_update_factors_for_both_sides():
    rng = np.random.default_rng(10)
    Uu = rng.standard_normal((2, 3))
    Vi = rng.standard_normal((3, 2))
    R = rng.standard_normal((2, 2))
    lr, l2 = 0.03, 0.01
    model = MatMatModel(U=Uu[None].copy(), V=Vi[None].copy(), t=2, d=3, max_rating=1.0)
    sgd_step(model, 0, 0, block(R), learning_rate=lr, l2=l2)
    E = Uu @ Vi - R
    expected_U = Uu - lr * (2 * E @ Vi.T + 2 * l2 * Uu)
    expected_V = Vi - lr * (2 * Uu.T @ E + 2 * l2 * Vi)
    assert np.allclose(model.U[0], expected_U, atol=1e-15)
    assert np.allclose(model.V[0], expected_V, atol=1e-15)


def test_sgd_step_detects_divergence():
    model = MatMatModel(U=np.array([[[1e200]]]), V=np.array([[[1e200]]]), t=1, d=1, max_rating=1.0)
    with pytest.raises(DivergenceError, match=r"\(0, 0\)"):
        sgd_step(model, 0, 0, block([[0.0]]), learning_rate=1e200)


# --- gradients ------------------------------------------------------------------

def numeric_gradients(Uu, Vi, R, step=1e-5):
    def loss(A, B):
        return float(np.sum((A @ B - R) ** 2))

    gU = np.zeros_like(Uu)
    for idx in np.ndindex(Uu.shape):
        up, down = Uu.copy(), Uu.copy()
        up[idx] += step
        down[idx] -= step
        gU[idx] = (loss(up, Vi) - loss(down, Vi)) / (2 * step)
    gV = np.zeros_like(Vi)
    for idx in np.ndindex(Vi.shape):
        up, down = Vi.copy(), Vi.copy()
        up[idx] += step
        down[idx] -= step
        gV[idx] = (loss(Uu, up) - loss(Uu, down)) / (2 * step)
    return gU, gV


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(42)
    for _ in range(20):
        t = int(rng.integers(1, 3))
        d = int(rng.choice([1, 2, 5]))
        Uu = rng.standard_normal((t, d))
        Vi = rng.standard_normal((d, t))
        R = rng.standard_normal((t, t))
        gU, gV = block_gradients(Uu, Vi, R)
        nU, nV = numeric_gradients(Uu, Vi, R)
        assert np.linalg.norm(gU - nU) / max(np.linalg.norm(nU), 1e-12) < 1e-4
        assert np.linalg.norm(gV - nV) / max(np.linalg.norm(nV), 1e-12) < 1e-4


# --- training -------------------------------------------------------------------

def test_trainer_matches_single_steps():
    """The compiled epoch loop is the same math as the public single-step op."""
    rng = np.random.default_rng(3)
    n_users, n_items, t, d = 3, 4, 2, 2
    us, iis, targets = planted_problem(rng, n_users, n_items, t, d, density=0.8)
    config = TrainConfig(learning_rate=0.04, epochs=3, d=d, seed=17)

    model, trace = fit_matmat(n_users, n_items, us, iis, targets, config, t)

    ref_rng = np.random.default_rng(config.seed)
    U = ref_rng.standard_normal((n_users, t, d)) * config.init_std
    V = ref_rng.standard_normal((n_items, d, t)) * config.init_std
    ref = MatMatModel(U=U, V=V, t=t, d=d, max_rating=1.0)
    for _ in range(config.epochs):
        order = ref_rng.permutation(us.shape[0])
        for idx in order:
            sgd_step(ref, us[idx], iis[idx], block(targets[idx]),
                     config.learning_rate, config.l2)
    assert np.allclose(model.U, ref.U, rtol=1e-12, atol=1e-14)
    assert np.allclose(model.V, ref.V, rtol=1e-12, atol=1e-14)
    expected_loss = block_objective(ref.U, ref.V, us, iis, targets)
    assert trace.per_epoch[-1] == pytest.approx(expected_loss, rel=1e-10)


def test_training_is_deterministic():
    rng = np.random.default_rng(4)
    us, iis, targets = planted_problem(rng, 10, 12, 2, 2, density=0.5)
    config = TrainConfig(learning_rate=0.05, epochs=10, d=2, seed=5)
    m1, t1 = fit_matmat(10, 12, us, iis, targets, config, 2)
    m2, t2 = fit_matmat(10, 12, us, iis, targets, config, 2)
    assert t1.per_epoch == t2.per_epoch
    assert np.array_equal(m1.U, m2.U)
    assert np.array_equal(m1.V, m2.V)


def test_planted_factors_recovered():
    rng = np.random.default_rng(6)
    us, iis, targets = planted_problem(rng, 40, 60, 2, 2, density=0.3)
    config = TrainConfig(learning_rate=0.05, epochs=150, d=2, seed=8)
    model, trace = fit_matmat(40, 60, us, iis, targets, config, 2)
    per_entry_rmse = np.sqrt(trace.per_epoch[-1] / targets.size)
    assert per_entry_rmse < 1e-2


def test_loss_trace_length_and_descent():
    rng = np.random.default_rng(14)
    us, iis, targets = planted_problem(rng, 30, 40, 2, 2, density=0.3)
    config = TrainConfig(learning_rate=0.01, epochs=60, d=2, seed=9)
    _, trace = fit_matmat(30, 40, us, iis, targets, config, 2)
    assert len(trace.per_epoch) == 60
    for a, b in zip(trace.per_epoch[5:], trace.per_epoch[6:]):
        assert b <= a * (1 + 1e-9)


def test_empty_training_set_rejected():
    config = TrainConfig(learning_rate=0.01, epochs=1, d=2, seed=0)
    empty = np.array([], dtype=np.int64)
    with pytest.raises(ConfigError, match="empty"):
        fit_matmat(3, 3, empty, empty, np.zeros((0, 2, 2)), config, 2)


def test_divergence_raises_with_epoch(small_table, small_pop):
    sp = split(small_table, 0.2, 3)
    config = TrainConfig(learning_rate=80.0, epochs=5, d=2, seed=3)
    with pytest.raises(DivergenceError, match="epoch"):
        train_matmat(small_table, small_pop, popularity_spec(), sp, config)


def test_scalar_spec_equals_classic(small_table, small_pop):
    sp = split(small_table, 0.2, 12)
    config = TrainConfig(learning_rate=0.02, epochs=8, d=3, seed=11)
    mm, mm_trace = train_matmat(small_table, small_pop, scalar_spec(), sp, config)
    cl, cl_trace = train_classic(small_table, sp, config)
    assert mm_trace.per_epoch == pytest.approx(cl_trace.per_epoch, rel=1e-12)
    us, iis, _ = small_table.arrays()
    for idx in sp.test:
        a = predict_matmat(mm, us[idx], iis[idx])
        b = predict_classic(cl, us[idx], iis[idx])
        assert abs(a - b) < 1e-12


def test_classic_planted_recovery():
    rng = np.random.default_rng(15)
    Pstar = rng.standard_normal((30, 2)) * 0.5
    Qstar = rng.standard_normal((40, 2)) * 0.5
    picked = rng.choice(30 * 40, size=400, replace=False)
    us = (picked // 40).astype(np.int64)
    iis = (picked % 40).astype(np.int64)
    targets = np.einsum("nk,nk->n", Pstar[us], Qstar[iis])
    config = TrainConfig(learning_rate=0.05, epochs=200, d=2, seed=16)
    _, trace = fit_classic(30, 40, us, iis, targets, config)
    assert np.sqrt(trace.per_epoch[-1] / us.shape[0]) < 1e-2


def test_objective_invariant_under_transposed_roles(small_table, small_pop):
    """Transposing targets and swapping factor roles leaves the loss unchanged."""
    us, iis, rs = small_table.arrays()
    spec = popularity_spec()
    swapped = BlockSpec(
        t=2,
        channels=(
            ChannelBinding((0, 1), SideChannel.USER_POPULARITY),
            ChannelBinding((1, 0), SideChannel.ITEM_POPULARITY),
        ),
    )
    targets = build_targets(spec, us, iis, rs, small_table, small_pop)
    transposed = build_targets(swapped, us, iis, rs, small_table, small_pop)
    assert np.array_equal(transposed, np.transpose(targets, (0, 2, 1)))

    rng = np.random.default_rng(18)
    U = rng.standard_normal((small_table.n_users, 2, 3))
    V = rng.standard_normal((small_table.n_items, 3, 2))
    direct = block_objective(U, V, us, iis, targets)
    U_swapped = np.transpose(V, (0, 2, 1))  # item side becomes the row side
    V_swapped = np.transpose(U, (0, 2, 1))
    mirrored = block_objective(U_swapped, V_swapped, iis, us, transposed)
    assert mirrored == pytest.approx(direct, rel=1e-12)


# --- prediction -----------------------------------------------------------------

def _diag_model(d0, d1, max_rating=5.0, clamp=(0.5, 5.0)):
    U = np.eye(2)[None]
    V = np.diag([d0, d1]).astype(np.float64)[None]
    return MatMatModel(U=U, V=V, t=2, d=2, max_rating=max_rating, clamp=clamp)


def test_predict_matmat_averages_diagonal():
    assert predict_matmat(_diag_model(0.8, 0.6), 0, 0) == pytest.approx(3.5, abs=1e-12)


def test_predict_matmat_perfect_score():
    assert predict_matmat(_diag_model(1.0, 1.0), 0, 0) == 5.0


def test_predict_matmat_clamps():
    assert predict_matmat(_diag_model(2.0, 2.0), 0, 0) == 5.0
    assert predict_matmat(_diag_model(-2.0, -2.0), 0, 0) == 0.5


def test_predict_classic_zero_vectors_hit_clamp_floor():
    model = ClassicModel(P=np.zeros((1, 3)), Q=np.zeros((1, 3)), max_rating=5.0)
    assert predict_classic(model, 0, 0) == 0.5


def test_predict_classic_arithmetic():
    model = ClassicModel(P=np.array([[0.8]]), Q=np.array([[1.0]]), max_rating=5.0)
    assert predict_classic(model, 0, 0) == pytest.approx(4.0, abs=1e-12)


def test_predict_classic_hand_dot_product():
    model = ClassicModel(
        P=np.array([[0.1, 0.2, 0.3]]), Q=np.array([[0.4, 0.5, 0.6]]), max_rating=5.0
    )
    assert predict_classic(model, 0, 0) == pytest.approx(5.0 * 0.32, abs=1e-12)


def test_predict_many_matches_single(small_table, small_pop):
    sp = split(small_table, 0.2, 19)
    config = TrainConfig(learning_rate=0.02, epochs=5, d=2, seed=20)
    model, _ = train_matmat(small_table, small_pop, popularity_spec(), sp, config)
    us, iis, _ = small_table.arrays()
    test = np.asarray(sp.test[:50], dtype=np.int64)
    batch = predict_many(model, us[test], iis[test])
    for n, idx in enumerate(test):
        assert batch[n] == pytest.approx(predict_matmat(model, us[idx], iis[idx]), abs=1e-12)


# --- persistence -----------------------------------------------------------------

def test_model_round_trip_matmat(tmp_path, small_table, small_pop):
    sp = split(small_table, 0.2, 21)
    config = TrainConfig(learning_rate=0.02, epochs=3, d=2, seed=22)
    model, _ = train_matmat(small_table, small_pop, popularity_spec(), sp, config)
    path = str(tmp_path / "model.bin")
    save_model(model, path)
    loaded = load_model(path)
    assert isinstance(loaded, MatMatModel)
    assert np.array_equal(loaded.U, model.U)
    assert np.array_equal(loaded.V, model.V)
    assert (loaded.t, loaded.d) == (model.t, model.d)
    assert loaded.max_rating == model.max_rating
    assert loaded.clamp == model.clamp


def test_model_round_trip_classic(tmp_path, small_table):
    sp = split(small_table, 0.2, 23)
    config = TrainConfig(learning_rate=0.02, epochs=3, d=4, seed=24)
    model, _ = train_classic(small_table, sp, config)
    path = str(tmp_path / "model.bin")
    save_model(model, path)
    loaded = load_model(path)
    assert isinstance(loaded, ClassicModel)
    assert np.array_equal(loaded.P, model.P)
    assert np.array_equal(loaded.Q, model.Q)


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"not a model at all, definitely not " * 4)
    with pytest.raises(DataError, match="not a recognized"):
        load_model(str(path))
    path.write_bytes(b"xx")
    with pytest.raises(DataError, match="truncated"):
        load_model(str(path))
