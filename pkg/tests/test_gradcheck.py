"""Finite-difference verification of every differentiable operation."""

import numpy as np
import pytest

from afrseg import gradcheck, ops
from afrseg.tensor import Param

CHECKS = gradcheck.standard_checks()


@pytest.mark.parametrize("name,make", CHECKS, ids=[n for n, _ in CHECKS])
def test_gradients_match_finite_differences(name, make):
    err = gradcheck.check(make)
    assert err < gradcheck.DEFAULT_TOL


def test_detects_a_wrong_gradient():
    # a deliberately broken vjp must trip the checker
    def make(rng):
        x = Param("x", rng.uniform(0.5, 1.5, (2, 3)))

        def fn():
            v = ops.read(x)
            out = ops.scale(v, 2.0)
            return ops.sum_all(ops.mul(out, out))

        return fn, [x]

    err = gradcheck.check(make)  # sanity: correct chain passes
    assert err < 1e-6

    def broken(rng):
        x = Param("x", rng.uniform(0.5, 1.5, (2, 3)))

        def fn():
            v = ops.read(x)
            out = ops.scale(v, 2.0)
            loss = ops.sum_all(ops.mul(out, ops.detach(out)))  # half the grad
            return loss

        return fn, [x]

    with pytest.raises(AssertionError):
        gradcheck.check(broken)


def test_restores_parameter_values():
    def make(rng):
        x = Param("x", rng.uniform(0.5, 1.5, (3, 3)))
        return (lambda: ops.sum_all(ops.mul(ops.read(x), ops.read(x)))), [x]

    rng = np.random.default_rng(0)
    fn, params = make(rng)
    before = params[0].value.data.copy()
    gradcheck.gradient_error(fn, params, rng, samples=9)
    assert np.array_equal(params[0].value.data, before)
