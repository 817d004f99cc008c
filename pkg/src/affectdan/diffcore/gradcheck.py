# Finite-difference verification of the engine's backward rules.

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from ..errors import ConfigError, RankError
from . import ops
from .tensor import CHECK_DTYPE, Tape, Tensor, default_dtype, no_grad, stack

logger = logging.getLogger(__name__)

REL_ERR_FLOOR = 1e-8


@dataclass
class GradCheckReport:
    max_rel_err: float
    passed: bool
    analytic: np.ndarray | None = field(default=None, repr=False)
    numeric: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"max_rel_err": self.max_rel_err, "pass": self.passed}


def relative_error(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), REL_ERR_FLOOR)


def finite_diff_check(f: Callable[[Tensor], Tensor], x: Tensor,
                      step: float = 1e-5, tolerance: float = 1e-4) -> GradCheckReport:
    """Compare backward's gradient of scalar ``f`` at ``x`` against central differences.

    ``x`` must hold 64-bit values. Failures are reported, not raised.
    """
    if x.dtype != np.float64:
        raise ConfigError(f"finite_diff_check needs 64-bit elements, got {x.dtype}")
    x.data = np.ascontiguousarray(x.data)
    x.requires_grad = True
    x.zero_grad()

    with Tape() as tape:
        y = f(x)
    if y.size != 1:
        raise RankError(f"finite_diff_check needs a scalar function, got shape {y.shape}")
    if y.node is not None:
        tape.backward(y)
    analytic = x.grad if x.grad is not None else np.zeros_like(x.data)

    numeric = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            f_plus = f(x).item()
            flat[i] = original - step
            f_minus = f(x).item()
            flat[i] = original
            numeric.flat[i] = (f_plus - f_minus) / (2.0 * step)

    err = float(relative_error(analytic, numeric).max()) if numeric.size else 0.0
    return GradCheckReport(max_rel_err=err, passed=err < tolerance, analytic=analytic, numeric=numeric)


# --- suites ------------------------------------------------------------------

# A case builds (f, x) from a generator: f is scalar-valued, x the checked input.
CaseBuilder = Callable[[np.random.Generator], tuple[Callable[[Tensor], Tensor], Tensor]]


@dataclass
class SuiteResult:
    name: str
    instances: int
    max_rel_err: float
    passed: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "instances": self.instances,
                "max_rel_err": self.max_rel_err, "pass": self.passed}


def _t(rng, *shape, low=-1.0, high=1.0) -> Tensor:
    return Tensor(rng.uniform(low, high, size=shape), dtype=CHECK_DTYPE)


def _weighted(out: Tensor, weights: np.ndarray) -> Tensor:
    # random projection so constant-sum outputs (softmax) still get a real check
    return (out * Tensor(weights, dtype=CHECK_DTYPE)).sum()


def _case_conv_input(rng):
    k, b = _t(rng, 4, 3, 3, 3), _t(rng, 4)
    w = rng.normal(size=(2, 4, 3, 3))
    return (lambda x: _weighted(ops.conv2d(x, k, b, stride=2, padding=1), w)), _t(rng, 2, 3, 5, 5)


def _case_conv_kernel(rng):
    x, b = _t(rng, 2, 3, 5, 5), _t(rng, 4)
    return (lambda k: ops.conv2d(x, k, b, stride=1, padding=0).sum()), _t(rng, 4, 3, 2, 2)


def _case_conv_bias(rng):
    x, k = _t(rng, 2, 3, 4, 4), _t(rng, 2, 3, 3, 3)
    w = rng.normal(size=(2, 2, 4, 4))
    return (lambda b: _weighted(ops.conv2d(x, k, b, padding=1), w)), _t(rng, 2)


def _case_dense_input(rng):
    wt, b = _t(rng, 7, 5), _t(rng, 5)
    w = rng.normal(size=(4, 5))
    return (lambda x: _weighted(ops.dense(x, wt, b), w)), _t(rng, 4, 7)


def _case_dense_weight(rng):
    x, b = _t(rng, 4, 7), _t(rng, 5)
    w = rng.normal(size=(4, 5))
    return (lambda wt: _weighted(ops.dense(x, wt, b), w)), _t(rng, 7, 5)


def _case_batchnorm(mode: ops.Mode, image: bool):
    def build(rng):
        shape = (4, 3, 2, 2) if image else (4, 3)
        gamma, beta = _t(rng, 3, low=0.5, high=1.5), _t(rng, 3)
        running = ops.RunningStats(rng.normal(size=3), rng.uniform(0.5, 2.0, size=3))
        w = rng.normal(size=shape)
        # fresh stats per call: train mode must not drift the reference between evaluations
        return (lambda x: _weighted(ops.batchnorm(x, gamma, beta, mode, running.copy()), w)), _t(rng, *shape)
    return build


def _case_unary(fn, low=-2.0, high=2.0, shape=(3, 4)):
    def build(rng):
        w = rng.normal(size=shape)
        return (lambda x: _weighted(fn(x), w)), _t(rng, *shape, low=low, high=high)
    return build


def _case_max_pool(rng):
    w = rng.normal(size=(2, 2, 2, 2))
    return (lambda x: _weighted(ops.max_pool(x, 2, 2), w)), _t(rng, 2, 2, 4, 4)


def _case_global_avg_pool(rng):
    w = rng.normal(size=(2, 2))
    return (lambda x: _weighted(ops.global_avg_pool(x), w)), _t(rng, 2, 2, 4, 4)


def _case_broadcast_arith(rng):
    other = _t(rng, 1, 4, low=0.5, high=1.5)
    w = rng.normal(size=(3, 4))
    return (lambda x: _weighted((x * other + x / other - other) ** 2.0, w)), _t(rng, 3, 4)


def _case_index_stack(rng):
    idx = (np.arange(4), rng.integers(0, 5, size=4))
    return (lambda x: (stack([x[idx], x[idx] * 2.0], axis=0) ** 2.0).mean()), _t(rng, 4, 5)


def _case_composite(rng):
    k, b = _t(rng, 3, 2, 3, 3), _t(rng, 3)
    wt, bd = _t(rng, 3 * 4 * 4, 5), _t(rng, 5)
    w = rng.normal(size=(2, 5))

    def f(x):
        h = ops.relu(ops.conv2d(x, k, b, padding=1))
        return _weighted(ops.softmax(ops.dense(h.reshape(2, 48), wt, bd), axis=1), w)
    return f, _t(rng, 2, 2, 4, 4)


DIFFCORE_CASES: dict[str, CaseBuilder] = {
    "conv2d/input": _case_conv_input,
    "conv2d/kernel": _case_conv_kernel,
    "conv2d/bias": _case_conv_bias,
    "dense/input": _case_dense_input,
    "dense/weight": _case_dense_weight,
    "batchnorm/train/features": _case_batchnorm(ops.Mode.TRAIN, False),
    "batchnorm/train/channels": _case_batchnorm(ops.Mode.TRAIN, True),
    "batchnorm/eval/features": _case_batchnorm(ops.Mode.EVAL, False),
    "relu": _case_unary(ops.relu),
    "sigmoid": _case_unary(ops.sigmoid),
    "tanh": _case_unary(ops.tanh_op),
    "softmax": _case_unary(lambda x: ops.softmax(x, axis=1)),
    "log_softmax": _case_unary(lambda x: ops.log_softmax(x, axis=0)),
    "exp/log": _case_unary(lambda x: x.exp() + x.log(), low=0.5, high=2.0),
    "max_pool": _case_max_pool,
    "global_avg_pool": _case_global_avg_pool,
    "arith/broadcast": _case_broadcast_arith,
    "index/stack": _case_index_stack,
    "composite/conv-relu-dense-softmax": _case_composite,
}


def run_cases(cases: dict[str, CaseBuilder], instances: int = 20, seed: int = 0,
              step: float = 1e-5, tolerance: float = 1e-4,
              progress: Callable[[str], None] | None = None) -> list[SuiteResult]:
    """Run every case on ``instances`` random draws; one SuiteResult per case."""
    results = []
    with default_dtype(CHECK_DTYPE):
        for case_index, (name, build) in enumerate(cases.items()):
            worst = 0.0
            for i in range(instances):
                rng = np.random.default_rng([seed, case_index, i])
                f, x = build(rng)
                report = finite_diff_check(f, x, step=step, tolerance=tolerance)
                worst = max(worst, report.max_rel_err)
            result = SuiteResult(name, instances, worst, worst < tolerance)
            logger.debug("gradcheck %s: max_rel_err=%.3e", name, worst)
            if progress is not None:
                progress(name)
            results.append(result)
    return results


def run_diffcore_suite(instances: int = 20, seed: int = 0, **kwargs) -> list[SuiteResult]:
    return run_cases(DIFFCORE_CASES, instances=instances, seed=seed, **kwargs)


def all_passed(results: Iterable[SuiteResult]) -> bool:
    return all(r.passed for r in results)
