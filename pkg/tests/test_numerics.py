import zlib

import numpy as np
import pytest
from hypothesis import given, strategies as st

from flexwave.errors import ContractError, DomainError, OracleInvalidError, ShapeError
from flexwave.numerics import Tape, Tensor, backward, finite_diff, ops

from conftest import crandn


def probe(out, w):
    """Real scalar that weights every output entry (re and im) independently."""
    if out.is_complex:
        return ops.sum(ops.real(out * w))
    return ops.sum(out * w.real)


def grads_of(fn, **values):
    tape = Tape()
    tensors = {k: tape.param(v, k) for k, v in values.items()}
    return backward(fn(tensors), tape)


class TestMatmul:
    def test_identity(self):
        v = np.array([1 + 1j, 2])
        np.testing.assert_array_equal(ops.matmul(np.eye(2), v).numpy(), v)

    def test_permutation(self):
        a, b = 0.3 - 2j, 1.5j
        out = ops.matmul(np.array([[0, 1], [1, 0]]), np.array([a, b])).numpy()
        np.testing.assert_array_equal(out, [b, a])

    def test_triple_loop_oracle(self, rng):
        A, B = crandn(rng, 4, 4), crandn(rng, 4, 4)
        ref = np.zeros((4, 4), complex)
        for i in range(4):
            for j in range(4):
                for k in range(4):
                    ref[i, j] += A[i, k] * B[k, j]
        out = ops.matmul(A, B).numpy()
        assert np.max(np.abs(out - ref) / np.abs(ref)) < 1e-12

    @pytest.mark.parametrize("a_shape,b_shape", [((3, 4), (3, 4)), ((2, 2), (3,)), ((4,), (4,))])
    def test_shape_mismatch(self, a_shape, b_shape):
        with pytest.raises(ShapeError):
            ops.matmul(np.ones(a_shape), np.ones(b_shape))


class TestBackward:
    def test_abs2_scalar(self):
        g = grads_of(lambda t: ops.abs2(t["x"]), x=np.array(1 + 2j))["x"]
        assert (g.re, g.im) == (2.0, 4.0)

    def test_trace_qqh(self):
        def f(t):
            Q = t["Q"]
            return ops.real(ops.trace(ops.matmul(Q, ops.conj(ops.transpose(Q)))))

        g = grads_of(f, Q=np.eye(2, dtype=complex))["Q"]
        np.testing.assert_array_equal(g.re, 2 * np.eye(2))
        np.testing.assert_array_equal(g.im, np.zeros((2, 2)))

    def test_nonscalar_loss_rejected(self):
        tape = Tape()
        x = tape.param(np.ones(3), "x")
        with pytest.raises(ContractError):
            backward(x * 2.0, tape)

    def test_complex_loss_rejected(self):
        tape = Tape()
        x = tape.param(np.array(1 + 1j), "x")
        with pytest.raises(ContractError):
            backward(x * 2.0, tape)

    def test_foreign_tape_rejected(self):
        t1, t2 = Tape(), Tape()
        x = t1.param(np.array(1.0), "x")
        t2.param(np.array(1.0), "y")
        with pytest.raises(ContractError):
            backward(x * x, t2)

    def test_unused_param_gets_zero_and_constants_absent(self):
        tape = Tape()
        x = tape.param(np.array([1.0, 2.0]), "x")
        tape.param(np.array(3 + 1j), "unused")
        c = Tensor(np.array([5.0, 6.0]))
        g = backward(ops.sum(x * c), tape)
        assert set(g) == {"x", "unused"}
        np.testing.assert_array_equal(g["x"].re, [5.0, 6.0])
        assert g["unused"].re == 0 and g["unused"].im == 0

    def test_gradient_shapes_match_params(self, rng):
        Q = crandn(rng, 3, 5)
        g = grads_of(lambda t: ops.sum(ops.abs2(t["Q"])) + ops.sum(t["s"]), Q=Q, s=np.zeros(4))
        assert g["Q"].shape == (3, 5) and g["s"].shape == (4,)

    def test_tape_topological_order(self, rng):
        tape = Tape()
        x = tape.param(crandn(rng, 3), "x")
        ops.sum(ops.abs2(ops.exp(x) * x))
        for i, node in enumerate(tape.nodes):
            assert all(p < i for p in node.parents)

    def test_linearity(self, rng):
        x0 = crandn(rng, 5)
        a, b = 1.7, -0.4

        def f(t):
            return ops.sum(ops.abs2(t["x"]) * ops.abs2(t["x"]))

        def g(t):
            return ops.sum(ops.real(ops.exp(t["x"])))

        gf = grads_of(f, x=x0)["x"].as_complex()
        gg = grads_of(g, x=x0)["x"].as_complex()
        gl = grads_of(lambda t: f(t) * a + g(t) * b, x=x0)["x"].as_complex()
        np.testing.assert_allclose(gl, a * gf + b * gg, rtol=0, atol=1e-12)

    def test_relu_subgradient_at_zero(self):
        g = grads_of(lambda t: ops.sum(ops.relu(t["u"])), u=np.array([-1.0, 0.0, 1.0]))["u"]
        np.testing.assert_array_equal(g.re, [0.0, 0.0, 1.0])

    def test_values_are_immutable(self):
        t = Tensor(np.ones(3))
        with pytest.raises(ValueError):
            t.data[0] = 2.0


class TestFiniteDiff:
    def test_real_part_exact(self):
        err = finite_diff(lambda t: ops.real(t["x"]), {"x": np.array(0.3 - 0.8j)})
        assert err < 1e-9

    def test_abs4(self):
        err = finite_diff(lambda t: ops.abs2(t["x"]) * ops.abs2(t["x"]),
                          {"x": np.array(0.5 + 0.5j)})
        assert err < 1e-6

    def test_abs4_analytic(self):
        x = 0.5 + 0.5j
        g = grads_of(lambda t: ops.abs2(t["x"]) * ops.abs2(t["x"]), x=np.array(x))["x"]
        expected = 4 * abs(x) ** 2 * np.array([x.real, x.imag])
        np.testing.assert_allclose([g.re, g.im], expected, rtol=1e-14)

    def test_nonpositive_step(self):
        with pytest.raises(DomainError):
            finite_diff(lambda t: ops.real(t["x"]), {"x": np.array(1j)}, step=0.0)

    def test_nondeterministic_loss_detected(self):
        noise = np.random.default_rng(0)

        def f(t):
            return ops.real(t["x"]) + noise.standard_normal()

        with pytest.raises(OracleInvalidError):
            finite_diff(f, {"x": np.array(1.0 + 0j)})

    def test_detects_wrong_gradient(self):
        # Pass the value through a constant so the tape sees no dependence.
        def f(t):
            x = t["x"]
            frozen = Tensor(x.data) if x.tracked else x
            return ops.sum(ops.abs2(frozen))

        assert finite_diff(f, {"x": np.array([1.0 + 1j])}) > 0.5


def _bounded(rng, *shape, lo=0.3):
    """Complex entries with magnitude at least ``lo``."""
    z = crandn(rng, *shape)
    return z + lo * z / np.abs(z)


PRIMITIVES = {
    "add": (lambda t, w: probe(t["a"] + t["b"], w), ("c", "c")),
    "sub": (lambda t, w: probe(t["a"] - t["b"], w), ("c", "r")),
    "mul": (lambda t, w: probe(t["a"] * t["b"], w), ("c", "c")),
    "div": (lambda t, w: probe(t["a"] / t["b"], w), ("c", "c")),
    "conj": (lambda t, w: probe(ops.conj(t["a"]), w), ("c",)),
    "abs2": (lambda t, w: probe(ops.abs2(t["a"]), w), ("c",)),
    "exp": (lambda t, w: probe(ops.exp(t["a"] * 0.5), w), ("c",)),
    "log": (lambda t, w: probe(ops.log(t["a"]), w), ("c",)),
    "sqrt": (lambda t, w: probe(ops.sqrt(ops.abs2(t["a"])), w), ("c",)),
    "relu": (lambda t, w: probe(ops.relu(t["b"]), w), ("c", "r")),
    "sigmoid": (lambda t, w: probe(ops.sigmoid(t["b"]), w), ("c", "r")),
    "softplus": (lambda t, w: probe(ops.softplus(t["b"]), w), ("c", "r")),
    "sum": (lambda t, w: ops.real(ops.sum(t["a"] * t["a"], axis=0)[0] * w[0, 0]), ("c",)),
    "mean": (lambda t, w: probe(ops.mean(ops.abs2(t["a"]), axis=1, keepdims=True), w), ("c",)),
    "logsumexp": (lambda t, w: probe(ops.logsumexp(t["b"], axis=1), w), ("c", "r")),
    "trace": (lambda t, w: ops.real(ops.trace(t["a"] * t["a"]) * w[0, 0]), ("c",)),
    "matmul": (lambda t, w: probe(ops.matmul(t["a"], t["a"]), w), ("c",)),
    "matvec": (lambda t, w: probe(ops.matmul(t["a"], t["a"][:, 0]), w[0]), ("c",)),
    "transpose": (lambda t, w: probe(ops.transpose(t["a"]) * t["a"], w), ("c",)),
    "reshape": (lambda t, w: probe(ops.reshape(t["a"], (-1,)) * t["a"][0, 0], w.reshape(-1)),
                ("c",)),
    "getitem": (lambda t, w: probe(ops.abs2(t["a"][1:, ::2]), w[1:, ::2]), ("c",)),
    "take": (lambda t, w: probe(ops.take(t["a"], [2, 0, 2], axis=0) * t["a"][0],
                                w[[2, 0, 2]]), ("c",)),
    "clip": (lambda t, w: probe(ops.clip(t["b"], -0.5, 0.5), w), ("c", "r")),
    "broadcast": (lambda t, w: probe(t["a"] * ops.reshape(t["a"][:, 0], (4, 1)), w), ("c",)),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients(name):
    fn, kinds = PRIMITIVES[name]
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    w = crandn(rng, 4, 4)
    params = {"a": _bounded(rng, 4, 4)}
    if len(kinds) > 1:
        b = rng.standard_normal((4, 4))
        # keep hinge/clip arguments away from their kinks
        b = np.where(np.abs(b) < 0.05, 0.2, b)
        b = np.where(np.abs(np.abs(b) - 0.5) < 0.05, 0.8 * np.sign(b), b)
        params["b"] = b if kinds[1] == "r" else _bounded(rng, 4, 4)
    assert finite_diff(lambda t: fn(t, w), params) < 1e-5


@given(re=st.floats(-3, 3), im=st.floats(-3, 3))
def test_abs2_gradient_property(re, im):
    g = grads_of(lambda t: ops.abs2(t["x"]), x=np.array(complex(re, im)))["x"]
    assert g.re == pytest.approx(2 * re) and g.im == pytest.approx(2 * im)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8))
def test_logsumexp_matches_scipy(values):
    from scipy.special import logsumexp

    x = np.array(values)
    assert ops.logsumexp(x).item() == pytest.approx(logsumexp(x), rel=1e-12, abs=1e-12)
