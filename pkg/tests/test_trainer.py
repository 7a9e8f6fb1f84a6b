import numpy as np
import pytest

from phcle.datamodel import AttributeContext, HyperParams, VocabularyMaps
from phcle.descriptive import descriptive_objective
from phcle.errors import DivergenceError
from phcle.ingest import negative_bound_values
from phcle.relational import emf_objective
from phcle.trainer import full_objective, train, train_generalized


def small_instance(seed=0, labels=6, contexts=5, attrs=4):
    rng = np.random.default_rng(seed)
    D = rng.integers(0, 4, size=(contexts, labels)).astype(float)
    A = rng.standard_normal((labels, attrs))
    I = (rng.uniform(size=A.shape) > 0.3).astype(float)
    vocab = VocabularyMaps(
        labels=tuple(f"l{i}" for i in range(labels)),
        contexts=tuple(f"c{i}" for i in range(contexts)),
        attributes=tuple(f"a{i}" for i in range(attrs)),
    )
    return D, A, I, vocab


def small_hyper(**kw):
    base = dict(
        lambda1=1.0,
        lambda2=0.01,
        lambda3=0.01,
        negative_samples=3,
        step_size=1e-3,
        outer_iters=3,
        inner_steps_c=2,
        inner_steps_w=2,
        inner_max_iter=5,
        tolerance=1e-6,
        seed=7,
        dim=3,
    )
    base.update(kw)
    return HyperParams(**base)


def numeric_history(history):
    # every reproducible field; wall-clock seconds is excluded on purpose
    return [
        (
            r.iteration,
            r.objective,
            r.emf_term,
            r.descriptive_term,
            r.l1_term,
            r.l2_term_w,
            r.l2_term_u,
            r.fista_iterations,
        )
        for r in history.records
    ]


class TestFullObjective:
    def test_sum_of_hand_computed_terms(self):
        D, A, I, vocab = small_instance(1)
        hyper = small_hyper(lambda1=0.7, lambda2=0.2, lambda3=0.3)
        rng = np.random.default_rng(2)
        from phcle.datamodel import EmbeddingModel

        model = EmbeddingModel(
            W=rng.standard_normal((3, 6)),
            C=rng.standard_normal((3, 5)),
            U=rng.standard_normal((3, 4)),
            dim=3,
        )
        Q = negative_bound_values(D, hyper.negative_samples)
        expected = (
            emf_objective(D, Q, model.C, model.W)
            + descriptive_objective(A, I, model.W, model.U, 0.7)
            + 0.2 * np.sum(np.abs(model.U))
            + 0.5 * 0.3 * (np.sum(model.W**2) + np.sum(model.U**2))
        )
        assert full_objective(D, Q, A, I, model, hyper) == pytest.approx(expected, rel=1e-14)


class TestTrain:
    def test_history_layout(self):
        D, A, I, vocab = small_instance()
        hyper = small_hyper(outer_iters=4)
        model, history = train(D, A, I, hyper, vocab)
        assert [r.iteration for r in history.records] == [0, 1, 2, 3, 4]
        first = history.records[0]
        assert first.fista_iterations == 0 and first.seconds == 0.0
        assert all(r.seconds >= 0.0 for r in history.records)
        assert model.W.shape == (3, 6)
        assert model.C.shape == (3, 5)
        assert model.U.shape == (3, 4)

    def test_final_record_matches_full_objective(self):
        D, A, I, vocab = small_instance(3)
        hyper = small_hyper()
        model, history = train(D, A, I, hyper, vocab)
        Q = negative_bound_values(D, hyper.negative_samples)
        assert history.records[-1].objective == pytest.approx(
            full_objective(D, Q, A, I, model, hyper), rel=1e-12
        )

    def test_record_terms_sum_to_objective(self):
        D, A, I, vocab = small_instance(4)
        _, history = train(D, A, I, small_hyper(), vocab)
        for r in history.records:
            parts = r.emf_term + r.descriptive_term + r.l1_term + r.l2_term_w + r.l2_term_u
            assert r.objective == pytest.approx(parts, rel=1e-14)

    def test_objective_decreases_on_benign_instance(self):
        D, A, I, vocab = small_instance(5)
        _, history = train(D, A, I, small_hyper(outer_iters=5), vocab)
        objectives = history.objectives()
        assert objectives[-1] < objectives[0]

    def test_same_seed_is_bitwise_identical(self):
        D, A, I, vocab = small_instance(6)
        hyper = small_hyper(seed=11)
        model_a, hist_a = train(D, A, I, hyper, vocab)
        model_b, hist_b = train(D, A, I, hyper, vocab)
        assert np.array_equal(model_a.W, model_b.W)
        assert np.array_equal(model_a.C, model_b.C)
        assert np.array_equal(model_a.U, model_b.U)
        assert numeric_history(hist_a) == numeric_history(hist_b)

    def test_different_seed_differs(self):
        D, A, I, vocab = small_instance(6)
        model_a, _ = train(D, A, I, small_hyper(seed=11), vocab)
        model_b, _ = train(D, A, I, small_hyper(seed=12), vocab)
        assert not np.array_equal(model_a.W, model_b.W)

    def test_masked_cells_cannot_influence_any_bit(self):
        D, A, I, vocab = small_instance(7)
        A_dirty = A.copy()
        A_dirty[I == 0] = 9999.0
        A_dirty.flat[np.flatnonzero(I.flat == 0)[:2]] = np.nan
        hyper = small_hyper()
        model_a, hist_a = train(D, A, I, hyper, vocab)
        model_b, hist_b = train(D, A_dirty, I, hyper, vocab)
        assert np.array_equal(model_a.W, model_b.W)
        assert np.array_equal(model_a.C, model_b.C)
        assert np.array_equal(model_a.U, model_b.U)
        assert numeric_history(hist_a) == numeric_history(hist_b)

    def test_huge_step_raises_divergence(self):
        D, A, I, vocab = small_instance(8)
        with pytest.raises(DivergenceError) as err:
            train(D, A, I, small_hyper(step_size=1e6), vocab)
        assert err.value.iteration >= 1
        assert "step_size" in str(err.value)

    def test_shape_validation_against_vocabulary(self):
        D, A, I, vocab = small_instance()
        with pytest.raises(ValueError, match="cooccurrence"):
            train(D[:, :-1], A, I, small_hyper(), vocab)
        with pytest.raises(ValueError, match="attribute"):
            train(D, A[:-1], I[:-1], small_hyper(), vocab)

    def test_history_tsv_shape(self):
        D, A, I, vocab = small_instance()
        _, history = train(D, A, I, small_hyper(outer_iters=2), vocab)
        text = history.to_tsv()
        lines = text.splitlines()
        assert lines[0].startswith("iteration\tobjective\temf_term")
        assert len(lines) == 1 + 3
        assert text.endswith("\n")
        cells = lines[1].split("\t")
        assert float(cells[1]) == history.records[0].objective


class TestTrainGeneralized:
    def test_singleton_reduces_bitwise_to_train(self):
        D, A, I, vocab = small_instance(9)
        # lambda1 deliberately bogus: the generalized path must ignore it.
        hyper_g = small_hyper(lambda1=123.0, alpha=(1.0,), beta=(1.0,))
        gen_model, gen_hist = train_generalized([D], [(A, I)], hyper_g)
        base_model, base_hist = train(D, A, I, small_hyper(lambda1=1.0), vocab)
        assert np.array_equal(gen_model.W, base_model.W)
        assert np.array_equal(gen_model.Cs[0], base_model.C)
        assert np.array_equal(gen_model.Us[0], base_model.U)
        assert numeric_history(gen_hist) == numeric_history(base_hist)

    def test_accepts_attribute_context_objects(self):
        D, A, I, vocab = small_instance(9)
        hyper = small_hyper(alpha=(1.0,), beta=(1.0,))
        via_pair, _ = train_generalized([D], [(A, I)], hyper)
        via_ctx, _ = train_generalized([D], [AttributeContext(assoc=A, mask=I)], hyper)
        assert np.array_equal(via_pair.W, via_ctx.W)

    def test_split_weights_over_duplicated_context(self):
        # Two copies of one relational context at alpha 0.5 each walk the
        # exact same trajectory as the single copy: the per-block C updates
        # are unweighted and 0.5 g + 0.5 g == g in floating point.
        D, A, I, vocab = small_instance(10)
        hyper_two = small_hyper(alpha=(0.5, 0.5), beta=(1.0,), init_scheme="ones")
        hyper_one = small_hyper(alpha=(1.0,), beta=(1.0,), init_scheme="ones")
        two, hist_two = train_generalized([D, D], [(A, I)], hyper_two)
        one, hist_one = train_generalized([D], [(A, I)], hyper_one)
        assert np.array_equal(two.W, one.W)
        assert np.array_equal(two.Cs[0], two.Cs[1])
        assert np.array_equal(two.Cs[0], one.Cs[0])
        assert numeric_history(hist_two) == numeric_history(hist_one)

    def test_column_split_descriptive_matches_merged(self):
        # Splitting attribute columns into two contexts at beta 0.5 each is
        # the same subproblem as training the merged block at weight 0.5,
        # because the solver is separable per column. The inner solver keeps
        # its best iterate judged on the whole block, so the routes only
        # coincide once the subproblems converge; parameter agreement is
        # then limited by the sqrt-machine-epsilon gap bound, objectives
        # agree to second order.
        D, A, I, vocab = small_instance(11, attrs=6)
        common = dict(
            init_scheme="ones", lambda3=0.2, inner_max_iter=600, tolerance=1e-30, outer_iters=3
        )
        hyper_g = small_hyper(alpha=(1.0,), beta=(0.5, 0.5), **common)
        hyper_m = small_hyper(lambda1=0.5, **common)
        gen, hist_g = train_generalized(
            [D], [(A[:, :2], I[:, :2]), (A[:, 2:], I[:, 2:])], hyper_g
        )
        merged, hist_m = train(D, A, I, hyper_m, vocab)
        np.testing.assert_allclose(gen.W, merged.W, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(
            np.hstack(gen.Us), merged.U, rtol=1e-5, atol=1e-8
        )
        np.testing.assert_allclose(
            hist_g.objectives(), hist_m.objectives(), rtol=1e-10
        )

    def test_weight_length_mismatches_rejected(self):
        D, A, I, _ = small_instance()
        with pytest.raises(ValueError, match="alpha"):
            train_generalized([D, D], [(A, I)], small_hyper(alpha=(1.0,), beta=(1.0,)))
        with pytest.raises(ValueError, match="beta"):
            train_generalized([D], [(A, I), (A, I)], small_hyper(alpha=(1.0,), beta=(1.0,)))

    def test_empty_context_lists_rejected(self):
        D, A, I, _ = small_instance()
        with pytest.raises(ValueError, match="relational"):
            train_generalized([], [(A, I)], small_hyper())
        with pytest.raises(ValueError, match="descriptive"):
            train_generalized([D], [], small_hyper())
